//! Binary raster masks for sparse photometric guidance: a filled face hull,
//! disc erosion away from the contour, nose exclusion and a seeded keep-back
//! of a small fraction of the remaining pixels.
//!
//! Pixel `(x, y)` has its centre at integer coordinates `(x, y)`; landmark
//! coordinates use the same convention.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Error;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    /// Seed of the last sampling operation applied, 0 if none.
    pub seed: u64,
}

impl RasterMask {
    pub fn empty(width: usize, height: usize) -> Self {
        RasterMask { width, height, bits: vec![false; width * height], seed: 0 }
    }

    pub fn full(width: usize, height: usize) -> Self {
        RasterMask { width, height, bits: vec![true; width * height], seed: 0 }
    }

    /// Row-major bits, `bits[y * width + x]`.
    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::invalid(format!("mask has {} bits, expected {}x{}", bits.len(), width, height)));
        }
        Ok(RasterMask { width, height, bits, seed: 0 })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-bounds reads are background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// `(x, y)` of every set pixel in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(move |(i, _)| (i % w, i / w))
    }

    pub fn is_subset_of(&self, other: &RasterMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Bits set here and clear in `other`.
    pub fn difference(&self, other: &RasterMask) -> Result<RasterMask> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::invalid("mask dimensions differ"));
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect();
        Ok(RasterMask { width: self.width, height: self.height, bits, seed: self.seed })
    }
}

fn cross(o: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn polygon_area(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].x * poly[(i + 1) % n].y - poly[(i + 1) % n].x * poly[i].y).sum::<f64>() / 2.0
}

/// Tolerance for pixel centres lying exactly on a hull edge.
const EDGE_EPS: f64 = 1e-9;

/// Filled convex hull of the landmarks: every pixel whose centre lies inside
/// or on the hull.
pub fn face_mask_from_landmarks(landmarks: &[Vector2<f64>], width: usize, height: usize) -> Result<RasterMask> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("mask dimensions must be positive"));
    }
    for (i, p) in landmarks.iter().enumerate() {
        let inside = p.x >= 0.0 && p.y >= 0.0 && p.x <= (width - 1) as f64 && p.y <= (height - 1) as f64;
        if !inside {
            return Err(Error::invalid(format!("landmark {} at ({}, {}) is outside the {}x{} image", i, p.x, p.y, width, height)));
        }
    }
    let hull = convex_hull(landmarks);
    if hull.len() < 3 || polygon_area(&hull) <= EDGE_EPS {
        return Err(Error::invalid("landmark hull is degenerate (fewer than 3 non-collinear points)"));
    }
    let mut mask = RasterMask::empty(width, height);
    let n = hull.len();
    for y in 0..height {
        for x in 0..width {
            let p = Vector2::new(x as f64, y as f64);
            let inside = (0..n).all(|i| {
                let (a, b) = (hull[i], hull[(i + 1) % n]);
                cross(a, b, p) >= -EDGE_EPS * (b - a).norm()
            });
            if inside {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

/// Offsets of the disc structuring element `dx^2 + dy^2 <= r^2`.
pub fn disc_offsets(radius: f64) -> Vec<(i64, i64)> {
    let r = radius.floor() as i64;
    let r2 = radius * radius;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dx * dx + dy * dy) as f64) <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::invalid(format!("radius must be finite and >= 0, got {radius}")));
    }
    Ok(())
}

/// Erosion with an arbitrary structuring element; pixels outside the image
/// count as background.
pub fn erode_with(mask: &RasterMask, offsets: &[(i64, i64)]) -> RasterMask {
    let mut out = RasterMask::empty(mask.width, mask.height);
    out.seed = mask.seed;
    for (x, y) in mask.set_pixels() {
        let keep = offsets.iter().all(|&(dx, dy)| mask.get_signed(x as i64 + dx, y as i64 + dy));
        if keep {
            out.set(x, y, true);
        }
    }
    out
}

/// Morphological erosion with a disc of the given radius.
pub fn erode(mask: &RasterMask, radius: f64) -> Result<RasterMask> {
    check_radius(radius)?;
    Ok(erode_with(mask, &disc_offsets(radius)))
}

/// Clears every pixel within `radius` of any centre.
pub fn exclude_region(mask: &RasterMask, centers: &[Vector2<f64>], radius: f64) -> Result<RasterMask> {
    check_radius(radius)?;
    let mut out = mask.clone();
    let r2 = radius * radius;
    for c in centers {
        if !(c.x.is_finite() && c.y.is_finite()) {
            return Err(Error::invalid("exclusion centre is not finite"));
        }
        let x0 = (c.x - radius).floor().max(0.0) as usize;
        let y0 = (c.y - radius).floor().max(0.0) as usize;
        let x1 = ((c.x + radius).ceil().max(-1.0) as i64).min(mask.width as i64 - 1);
        let y1 = ((c.y + radius).ceil().max(-1.0) as i64).min(mask.height as i64 - 1);
        for y in y0 as i64..=y1 {
            for x in x0 as i64..=x1 {
                let (dx, dy) = (x as f64 - c.x, y as f64 - c.y);
                if dx * dx + dy * dy <= r2 {
                    out.set(x as usize, y as usize, false);
                }
            }
        }
    }
    Ok(out)
}

/// Uniform random subset of the set pixels with `round(fraction * popcount)`
/// members, drawn from a ChaCha8 stream seeded with `seed`.
pub fn keep_fraction(mask: &RasterMask, fraction: f64, seed: u64) -> Result<RasterMask> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("keep fraction must lie in [0, 1], got {fraction}")));
    }
    let set: Vec<usize> = mask.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    let k = (fraction * set.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = RasterMask::empty(mask.width, mask.height);
    for i in rand::seq::index::sample(&mut rng, set.len(), k) {
        out.bits[set[i]] = true;
    }
    out.seed = seed;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceParams {
    /// Erosion radius as a fraction of the hull bounding-box diagonal.
    pub contour_radius_frac: f64,
    /// Nose exclusion radius as a fraction of the same diagonal.
    pub nose_radius_frac: f64,
    pub keep_fraction: f64,
    pub seed: u64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        GuidanceParams { contour_radius_frac: 0.03, nose_radius_frac: 0.08, keep_fraction: 0.01, seed: 0 }
    }
}

/// Intermediate masks of the guidance pipeline.
#[derive(Debug, Clone)]
pub struct GuidanceStages {
    pub face: RasterMask,
    pub eroded: RasterMask,
    /// Eroded face minus the nose discs: the pool sampled from.
    pub eligible: RasterMask,
    pub guidance: RasterMask,
    pub contour_radius: f64,
    pub nose_radius: f64,
}

pub fn hull_bbox_diagonal(landmarks: &[Vector2<f64>]) -> f64 {
    let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
    for p in landmarks {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    if landmarks.is_empty() { 0.0 } else { (hi - lo).norm() }
}

pub fn smirk_guidance_stages(
    landmarks: &[Vector2<f64>],
    nose: &[Vector2<f64>],
    width: usize,
    height: usize,
    params: &GuidanceParams,
) -> Result<GuidanceStages> {
    let face = face_mask_from_landmarks(landmarks, width, height)?;
    let diag = hull_bbox_diagonal(landmarks);
    let contour_radius = params.contour_radius_frac * diag;
    let nose_radius = params.nose_radius_frac * diag;
    let eroded = erode(&face, contour_radius)?;
    let eligible = exclude_region(&eroded, nose, nose_radius)?;
    let guidance = keep_fraction(&eligible, params.keep_fraction, params.seed)?;
    Ok(GuidanceStages { face, eroded, eligible, guidance, contour_radius, nose_radius })
}

/// Face hull, eroded away from its contour, minus the nose discs, thinned to
/// the kept fraction.
pub fn smirk_guidance_mask(
    landmarks: &[Vector2<f64>],
    nose: &[Vector2<f64>],
    width: usize,
    height: usize,
    params: &GuidanceParams,
) -> Result<RasterMask> {
    Ok(smirk_guidance_stages(landmarks, nose, width, height, params)?.guidance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(x, y)
    }

    fn square(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> RasterMask {
        let mut m = RasterMask::empty(w, h);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                m.set(x, y, true);
            }
        }
        m
    }

    /// Erosion straight from the definition: every pixel within the radius
    /// must be foreground.
    fn erode_oracle(m: &RasterMask, r: f64) -> RasterMask {
        let mut out = RasterMask::empty(m.width(), m.height());
        let ri = r.ceil() as i64 + 1;
        for y in 0..m.height() as i64 {
            for x in 0..m.width() as i64 {
                let mut ok = true;
                for yy in y - ri..=y + ri {
                    for xx in x - ri..=x + ri {
                        let d2 = ((xx - x) * (xx - x) + (yy - y) * (yy - y)) as f64;
                        if d2 <= r * r && !m.get_signed(xx, yy) {
                            ok = false;
                        }
                    }
                }
                if ok {
                    out.set(x as usize, y as usize, true);
                }
            }
        }
        out
    }

    fn random_mask(w: usize, h: usize, seed: u64) -> RasterMask {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Blobs so erosion leaves something.
        let mut m = RasterMask::empty(w, h);
        for _ in 0..4 {
            let (cx, cy, r) = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64), rng.gen_range(3.0..12.0));
            for y in 0..h {
                for x in 0..w {
                    if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                        m.set(x, y, true);
                    }
                }
            }
        }
        m
    }

    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 { a.abs() } else { gcd(b, a % b) }
    }

    #[test]
    fn corner_landmarks_fill_the_image() {
        let m = face_mask_from_landmarks(&[v(0.0, 0.0), v(31.0, 0.0), v(31.0, 23.0), v(0.0, 23.0)], 32, 24).unwrap();
        assert_eq!(m, RasterMask::full(32, 24));
    }

    #[test]
    fn collinear_landmarks_are_rejected() {
        let err = face_mask_from_landmarks(&[v(1.0, 1.0), v(2.0, 2.0), v(5.0, 5.0)], 8, 8).unwrap_err();
        assert!(err.to_string().contains("degenerate"));
        assert!(face_mask_from_landmarks(&[v(1.0, 1.0), v(2.0, 2.0)], 8, 8).is_err());
    }

    #[test]
    fn landmarks_outside_the_image_are_rejected() {
        assert!(face_mask_from_landmarks(&[v(0.0, 0.0), v(8.0, 0.0), v(0.0, 5.0)], 8, 8).is_err());
    }

    #[test]
    fn lattice_triangle_count_matches_pick() {
        // Lattice points inside or on a lattice triangle: A + B/2 + 1.
        let tris: [[(i64, i64); 3]; 3] = [[(2, 3), (50, 7), (20, 40)], [(0, 0), (63, 0), (0, 63)], [(5, 60), (33, 2), (61, 45)]];
        for t in tris {
            let pts: Vec<_> = t.iter().map(|&(x, y)| v(x as f64, y as f64)).collect();
            let m = face_mask_from_landmarks(&pts, 64, 64).unwrap();
            let twice_area = ((t[1].0 - t[0].0) * (t[2].1 - t[0].1) - (t[2].0 - t[0].0) * (t[1].1 - t[0].1)).abs();
            let boundary: i64 = (0..3).map(|i| gcd(t[(i + 1) % 3].0 - t[i].0, t[(i + 1) % 3].1 - t[i].1)).sum();
            assert_eq!(2 * m.popcount() as i64, twice_area + boundary + 2, "{:?}", t);
        }
    }

    #[test]
    fn triangle_area_within_boundary_band() {
        let pts = [v(3.3, 4.7), v(57.1, 12.9), v(21.4, 55.2)];
        let m = face_mask_from_landmarks(&pts, 64, 64).unwrap();
        let area = polygon_area(&convex_hull(&pts)).abs();
        let perimeter: f64 = (0..3).map(|i| (pts[(i + 1) % 3] - pts[i]).norm()).sum();
        assert!((m.popcount() as f64 - area).abs() <= perimeter, "{} vs {}", m.popcount(), area);
    }

    #[test]
    fn interior_points_do_not_change_the_hull() {
        let outer = [v(1.0, 1.0), v(30.0, 2.0), v(28.0, 25.0), v(3.0, 20.0)];
        let mut all = outer.to_vec();
        all.extend([v(10.0, 10.0), v(15.0, 12.0), v(20.0, 8.0)]);
        assert_eq!(face_mask_from_landmarks(&outer, 32, 32).unwrap(), face_mask_from_landmarks(&all, 32, 32).unwrap());
    }

    #[test]
    fn erode_zero_radius_is_identity() {
        let m = random_mask(40, 30, 1);
        assert_eq!(erode(&m, 0.0).unwrap(), m);
    }

    #[test]
    fn erode_square_by_two() {
        let m = square(14, 14, 2, 2, 10);
        let e = erode(&m, 2.0).unwrap();
        assert_eq!(e, erode_oracle(&m, 2.0));
        assert_eq!(e, square(14, 14, 4, 4, 6));
    }

    #[test]
    fn erode_matches_oracle_on_blobs() {
        for (seed, r) in [(2, 1.0), (3, 2.5), (4, 3.0), (5, 4.2)] {
            let m = random_mask(48, 40, seed);
            assert_eq!(erode(&m, r).unwrap(), erode_oracle(&m, r), "seed {seed} r {r}");
        }
    }

    #[test]
    fn erode_treats_the_border_as_background() {
        let e = erode(&RasterMask::full(10, 10), 1.0).unwrap();
        assert_eq!(e, square(10, 10, 1, 1, 8));
    }

    #[test]
    fn negative_radius_is_rejected() {
        assert!(erode(&RasterMask::full(4, 4), -1.0).is_err());
        assert!(exclude_region(&RasterMask::full(4, 4), &[v(1.0, 1.0)], f64::NAN).is_err());
    }

    #[test]
    fn sequential_erosion_equals_minkowski_element() {
        // Eroding by a then b is erosion by the Minkowski sum of the two discs.
        let (a, b) = (2.0, 3.0);
        let mut sum: Vec<(i64, i64)> = Vec::new();
        for &(x1, y1) in &disc_offsets(a) {
            for &(x2, y2) in &disc_offsets(b) {
                sum.push((x1 + x2, y1 + y2));
            }
        }
        sum.sort_unstable();
        sum.dedup();
        let m = random_mask(60, 50, 7);
        let seq = erode(&erode(&m, a).unwrap(), b).unwrap();
        assert_eq!(seq, erode_with(&m, &sum));
    }

    #[test]
    fn sequential_erosion_is_bracketed_by_single_discs() {
        // disc(a + b - sqrt 2) is inside disc(a) + disc(b), which is inside
        // disc(a + b), so the composite lies between the two single erosions.
        for (seed, a, b) in [(8, 1.0, 2.0), (9, 2.0, 2.0), (10, 3.0, 1.0), (11, 2.0, 4.0)] {
            let m = random_mask(60, 50, seed);
            let seq = erode(&erode(&m, a).unwrap(), b).unwrap();
            let outer = erode(&m, a + b).unwrap();
            let inner = erode(&m, a + b - std::f64::consts::SQRT_2).unwrap();
            assert!(outer.is_subset_of(&seq));
            assert!(seq.is_subset_of(&inner));
        }
    }

    #[test]
    fn exclude_zero_radius_clears_only_centres() {
        let m = RasterMask::full(10, 10);
        let out = exclude_region(&m, &[v(3.0, 4.0), v(7.0, 7.0)], 0.0).unwrap();
        assert_eq!(out.popcount(), 98);
        assert!(!out.get(3, 4) && !out.get(7, 7));
    }

    #[test]
    fn exclude_huge_radius_clears_everything() {
        let out = exclude_region(&RasterMask::full(20, 15), &[v(10.0, 7.0)], 30.0).unwrap();
        assert_eq!(out.popcount(), 0);
    }

    #[test]
    fn exclude_popcount_matches_pixel_oracle() {
        let m = random_mask(50, 40, 12);
        let centers = [v(10.5, 12.25), v(30.0, 20.0), v(0.0, 39.0), v(49.0, 0.0)];
        let r = 6.3;
        let out = exclude_region(&m, &centers, r).unwrap();
        let hit = m
            .set_pixels()
            .filter(|&(x, y)| centers.iter().any(|c| (v(x as f64, y as f64) - c).norm() <= r))
            .count();
        assert_eq!(out.popcount(), m.popcount() - hit);
        assert!(out.is_subset_of(&m));
    }

    #[test]
    fn keep_fraction_trivial_cases() {
        let m = random_mask(40, 40, 13);
        assert_eq!(keep_fraction(&m, 0.0, 5).unwrap().popcount(), 0);
        let all = keep_fraction(&m, 1.0, 5).unwrap();
        assert_eq!(all.bits(), m.bits());
        assert!(keep_fraction(&m, 1.5, 0).is_err());
    }

    #[test]
    fn keep_one_percent_of_ten_thousand() {
        let m = RasterMask::full(100, 100);
        let k = keep_fraction(&m, 0.01, 42).unwrap();
        assert_eq!(k.popcount(), 100);
        assert!(k.is_subset_of(&m));
        assert_eq!(k, keep_fraction(&m, 0.01, 42).unwrap());
        assert_ne!(k, keep_fraction(&m, 0.01, 43).unwrap());
    }

    #[test]
    fn keep_fraction_is_uniform_over_seeds() {
        let m = square(20, 20, 0, 0, 20);
        let f = 0.1;
        let n = 1000;
        let mut counts = vec![0usize; 400];
        for seed in 0..n {
            let k = keep_fraction(&m, f, seed as u64).unwrap();
            for (x, y) in k.set_pixels() {
                counts[y * 20 + x] += 1;
            }
        }
        let sigma = (n as f64 * f * (1.0 - f)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * f).abs() <= 5.0 * sigma, "count {c}");
        }
    }

    fn face_points() -> (Vec<Vector2<f64>>, Vec<Vector2<f64>>) {
        let mut pts = Vec::new();
        for i in 0..24 {
            let t = i as f64 / 24.0 * std::f64::consts::TAU;
            pts.push(v(100.0 + 70.0 * t.cos(), 110.0 + 90.0 * t.sin()));
        }
        (pts, vec![v(100.0, 105.0), v(100.0, 125.0)])
    }

    #[test]
    fn guidance_pipeline_containment_and_count() {
        let (pts, nose) = face_points();
        let p = GuidanceParams { seed: 9, ..Default::default() };
        let s = smirk_guidance_stages(&pts, &nose, 200, 220, &p).unwrap();
        assert!(s.guidance.is_subset_of(&s.eligible));
        assert!(s.eligible.is_subset_of(&s.eroded));
        assert!(s.eroded.is_subset_of(&s.face));
        assert_eq!(s.guidance.popcount(), (0.01 * s.eligible.popcount() as f64).round() as usize);
        assert!(s.guidance.popcount() > 0);
        assert_eq!(s.guidance, smirk_guidance_mask(&pts, &nose, 200, 220, &p).unwrap());
    }

    #[test]
    fn guidance_pixels_avoid_contour_and_nose() {
        let (pts, nose) = face_points();
        let p = GuidanceParams { keep_fraction: 1.0, ..Default::default() };
        let s = smirk_guidance_stages(&pts, &nose, 200, 220, &p).unwrap();
        // Any pixel closer than the contour radius to a background pixel
        // (image border included) would have been eroded.
        let r = s.contour_radius;
        for (x, y) in s.guidance.set_pixels() {
            for n in &nose {
                assert!((v(x as f64, y as f64) - n).norm() > s.nose_radius);
            }
            let ri = r.floor() as i64;
            for dy in -ri..=ri {
                for dx in -ri..=ri {
                    if ((dx * dx + dy * dy) as f64) <= r * r {
                        assert!(s.face.get_signed(x as i64 + dx, y as i64 + dy));
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn operations_are_contained(seed in 0u64..500, r in 0.0f64..5.0, f in 0.0f64..1.0) {
            let m = random_mask(30, 30, seed);
            prop_assert!(erode(&m, r).unwrap().is_subset_of(&m));
            prop_assert!(exclude_region(&m, &[v(15.0, 15.0)], r).unwrap().is_subset_of(&m));
            let k = keep_fraction(&m, f, seed).unwrap();
            prop_assert!(k.is_subset_of(&m));
            prop_assert_eq!(k.popcount(), (f * m.popcount() as f64).round() as usize);
        }
    }
}
