//! Linear morphable face model.
//!
//! Geometry is `mean + shape·beta + expression·psi + pose_corrective·theta_c`,
//! stored as stacked `x, y, z` rows (`3·V` rows per basis). Articulated pose is
//! not skinned; the global rigid transform lives in the camera.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, JacobianBlock, Result};

/// Landmark region used for weighting and per-region reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Jawline,
    Nose,
    Other,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Jawline, Region::Nose, Region::Other];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Landmark {
    pub vertex: usize,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    mean_shape: Vec<Vector3<f64>>,
    shape_basis: DMatrix<f64>,
    expression_basis: DMatrix<f64>,
    pose_corrective_basis: DMatrix<f64>,
    landmarks: Vec<Landmark>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelCoefficients {
    pub beta: Vec<f64>,
    pub psi: Vec<f64>,
    pub theta_c: Vec<f64>,
}

impl ModelCoefficients {
    pub fn zeros(model: &MorphableModel) -> Self {
        let (nb, np, nt) = model.dims();
        ModelCoefficients {
            beta: vec![0.0; nb],
            psi: vec![0.0; np],
            theta_c: vec![0.0; nt],
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len() + self.psi.len() + self.theta_c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenated `[beta, psi, theta_c]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.psi);
        v.extend_from_slice(&self.theta_c);
        v
    }

    pub fn from_slice(model: &MorphableModel, values: &[f64]) -> Result<Self> {
        let (nb, np, nt) = model.dims();
        if values.len() != nb + np + nt {
            return Err(Error::invalid(format!(
                "coefficient vector has length {}, model expects {}",
                values.len(),
                nb + np + nt
            )));
        }
        Ok(ModelCoefficients {
            beta: values[..nb].to_vec(),
            psi: values[nb..nb + np].to_vec(),
            theta_c: values[nb + np..].to_vec(),
        })
    }
}

impl MorphableModel {
    pub fn new(
        mean_shape: Vec<Vector3<f64>>,
        shape_basis: DMatrix<f64>,
        expression_basis: DMatrix<f64>,
        pose_corrective_basis: DMatrix<f64>,
        landmarks: Vec<Landmark>,
    ) -> Result<Self> {
        let rows = 3 * mean_shape.len();
        for (name, basis) in [
            ("shape_basis", &shape_basis),
            ("expression_basis", &expression_basis),
            ("pose_corrective_basis", &pose_corrective_basis),
        ] {
            if basis.nrows() != rows {
                return Err(Error::invalid(format!(
                    "{name} has {} rows, expected 3·V = {rows}",
                    basis.nrows()
                )));
            }
        }
        let mut seen = vec![false; mean_shape.len()];
        for lm in &landmarks {
            if lm.vertex >= mean_shape.len() {
                return Err(Error::invalid(format!(
                    "landmark vertex {} out of range (V = {})",
                    lm.vertex,
                    mean_shape.len()
                )));
            }
            if std::mem::replace(&mut seen[lm.vertex], true) {
                return Err(Error::invalid(format!(
                    "landmark vertex {} listed twice",
                    lm.vertex
                )));
            }
        }
        Ok(MorphableModel {
            mean_shape,
            shape_basis,
            expression_basis,
            pose_corrective_basis,
            landmarks,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.mean_shape.len()
    }

    /// `(n_beta, n_psi, n_theta_c)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.shape_basis.ncols(),
            self.expression_basis.ncols(),
            self.pose_corrective_basis.ncols(),
        )
    }

    pub fn n_coefficients(&self) -> usize {
        let (a, b, c) = self.dims();
        a + b + c
    }

    pub fn mean_shape(&self) -> &[Vector3<f64>] {
        &self.mean_shape
    }

    pub fn shape_basis(&self) -> &DMatrix<f64> {
        &self.shape_basis
    }

    pub fn expression_basis(&self) -> &DMatrix<f64> {
        &self.expression_basis
    }

    pub fn pose_corrective_basis(&self) -> &DMatrix<f64> {
        &self.pose_corrective_basis
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn landmark(&self, vertex: usize) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.vertex == vertex)
    }

    pub fn region_vertices(&self, region: Region) -> Vec<usize> {
        self.landmarks
            .iter()
            .filter(|l| l.region == region)
            .map(|l| l.vertex)
            .collect()
    }

    /// Copy of the model with every length multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> MorphableModel {
        MorphableModel {
            mean_shape: self.mean_shape.iter().map(|p| p * factor).collect(),
            shape_basis: &self.shape_basis * factor,
            expression_basis: &self.expression_basis * factor,
            pose_corrective_basis: &self.pose_corrective_basis * factor,
            landmarks: self.landmarks.clone(),
        }
    }

    fn check_coefficients(&self, c: &ModelCoefficients) -> Result<()> {
        let (nb, np, nt) = self.dims();
        for (name, got, want) in [
            ("shape_basis", c.beta.len(), nb),
            ("expression_basis", c.psi.len(), np),
            ("pose_corrective_basis", c.theta_c.len(), nt),
        ] {
            if got != want {
                return Err(Error::invalid(format!(
                    "{name} expects {want} coefficients, got {got}"
                )));
            }
        }
        Ok(())
    }

    /// Vertex positions for the given coefficients.
    pub fn evaluate(&self, coeffs: &ModelCoefficients) -> Result<Vec<Vector3<f64>>> {
        self.check_coefficients(coeffs)?;
        let mut flat = DVector::from_iterator(
            3 * self.n_vertices(),
            self.mean_shape.iter().flat_map(|p| p.iter().copied()),
        );
        flat.gemv(1.0, &self.shape_basis, &DVector::from_column_slice(&coeffs.beta), 1.0);
        flat.gemv(1.0, &self.expression_basis, &DVector::from_column_slice(&coeffs.psi), 1.0);
        flat.gemv(
            1.0,
            &self.pose_corrective_basis,
            &DVector::from_column_slice(&coeffs.theta_c),
            1.0,
        );
        Ok(flat
            .as_slice()
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .collect())
    }

    /// Positions of a subset of vertices. Cheaper than a full evaluation when
    /// only landmarks are needed.
    pub fn evaluate_vertices(
        &self,
        coeffs: &ModelCoefficients,
        vertices: &[usize],
    ) -> Result<Vec<Vector3<f64>>> {
        self.check_coefficients(coeffs)?;
        let mut out = Vec::with_capacity(vertices.len());
        for &v in vertices {
            if v >= self.n_vertices() {
                return Err(Error::invalid(format!("vertex {v} out of range")));
            }
            let mut p = self.mean_shape[v];
            for axis in 0..3 {
                let row = 3 * v + axis;
                let mut acc = 0.0;
                for (basis, c) in [
                    (&self.shape_basis, &coeffs.beta),
                    (&self.expression_basis, &coeffs.psi),
                    (&self.pose_corrective_basis, &coeffs.theta_c),
                ] {
                    for (j, cj) in c.iter().enumerate() {
                        acc += basis[(row, j)] * cj;
                    }
                }
                p[axis] += acc;
            }
            out.push(p);
        }
        Ok(out)
    }

    /// `[shape | expression | pose_corrective]`, constant since the model is linear.
    pub fn evaluate_jacobian(&self) -> JacobianBlock {
        let rows = 3 * self.n_vertices();
        let n = self.n_coefficients();
        let mut j = DMatrix::zeros(rows, n);
        let (nb, np, _) = self.dims();
        j.columns_mut(0, nb).copy_from(&self.shape_basis);
        j.columns_mut(nb, np).copy_from(&self.expression_basis);
        j.columns_mut(nb + np, n - nb - np)
            .copy_from(&self.pose_corrective_basis);
        JacobianBlock(j)
    }
}

/// Width of the toy head in model units (centimetres).
pub const TOY_HEAD_WIDTH: f64 = 15.0;

const TOY_SEMI_X: f64 = TOY_HEAD_WIDTH / 2.0;
const TOY_SEMI_Y: f64 = 10.0;
const TOY_SEMI_DEPTH: f64 = 5.0;
const TOY_NOSE_PROTRUSION: f64 = 2.5;
/// Largest per-vertex displacement produced by a unit coefficient.
const TOY_BASIS_AMPLITUDE: f64 = 0.05 * TOY_HEAD_WIDTH;
const TOY_MAX_LANDMARKS: usize = 40;

/// Camera-facing surface of the ellipsoidal head. Negative depth is toward the camera.
fn toy_surface_depth(x: f64, y: f64) -> f64 {
    let r2 = (x / TOY_SEMI_X).powi(2) + (y / TOY_SEMI_Y).powi(2);
    -TOY_SEMI_DEPTH * (1.0 - r2).max(0.0).sqrt()
}

/// Seeded face-like model: a frontal ellipsoid patch with a protruding nose.
///
/// Landmarks are the first `min(n_vertices, 40)` vertices, split into jawline,
/// nose and other regions. The model is centred on the landmark centroid.
pub fn make_toy_model(
    n_vertices: usize,
    n_beta: usize,
    n_psi: usize,
    n_theta: usize,
    seed: u64,
) -> Result<MorphableModel> {
    if n_vertices < 8 {
        return Err(Error::invalid(format!(
            "toy model needs at least 8 vertices to cover all landmark regions, got {n_vertices}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_land = n_vertices.min(TOY_MAX_LANDMARKS);
    let n_nose = (n_land * 3 / 20).max(2);
    let n_jaw = (n_land * 7 / 20).max(3);
    let n_other = n_land - n_nose - n_jaw;

    let mut points = Vec::with_capacity(n_vertices);
    let mut landmarks = Vec::with_capacity(n_land);

    // Jawline: lower arc from ear to ear.
    for k in 0..n_jaw {
        let t = k as f64 / (n_jaw - 1) as f64;
        let angle = (200.0 + 140.0 * t).to_radians();
        let (x, y) = (0.92 * TOY_SEMI_X * angle.cos(), 0.92 * TOY_SEMI_Y * angle.sin());
        landmarks.push(Landmark { vertex: points.len(), region: Region::Jawline });
        points.push(Vector3::new(x, y, toy_surface_depth(x, y)));
    }
    // Nose: ridge from the bridge down to the tip.
    for k in 0..n_nose {
        let t = k as f64 / (n_nose - 1) as f64;
        let y = 1.5 - 4.0 * t;
        let x = if k % 2 == 0 { 0.0 } else { 0.6 * (t - 0.5) };
        let z = toy_surface_depth(x, y) - TOY_NOSE_PROTRUSION * (0.6 + 0.4 * t);
        landmarks.push(Landmark { vertex: points.len(), region: Region::Nose });
        points.push(Vector3::new(x, y, z));
    }
    // Eyes, brows and mouth.
    const FEATURES: [(f64, f64, f64, f64); 5] = [
        (-3.0, 3.0, 1.2, 0.5),
        (3.0, 3.0, 1.2, 0.5),
        (0.0, -5.0, 2.5, 0.8),
        (-3.0, 5.5, 1.5, 0.3),
        (3.0, 5.5, 1.5, 0.3),
    ];
    let per_feature = n_other.div_ceil(FEATURES.len()).max(1);
    for k in 0..n_other {
        let (cx, cy, rx, ry) = FEATURES[k % FEATURES.len()];
        let phi = std::f64::consts::TAU * (k / FEATURES.len()) as f64 / per_feature as f64;
        let (x, y) = (cx + rx * phi.cos(), cy + ry * phi.sin());
        landmarks.push(Landmark { vertex: points.len(), region: Region::Other });
        points.push(Vector3::new(x, y, toy_surface_depth(x, y)));
    }
    // Remaining surface vertices, kept clear of the nose ridge.
    while points.len() < n_vertices {
        let x: f64 = rng.gen_range(-0.95..0.95) * TOY_SEMI_X;
        let y: f64 = rng.gen_range(-0.95..0.95) * TOY_SEMI_Y;
        if (x / TOY_SEMI_X).powi(2) + (y / TOY_SEMI_Y).powi(2) > 0.9 {
            continue;
        }
        points.push(Vector3::new(x, y, toy_surface_depth(x, y)));
    }

    let centroid = landmarks
        .iter()
        .map(|l| points[l.vertex])
        .sum::<Vector3<f64>>()
        / n_land as f64;
    for p in &mut points {
        *p -= centroid;
    }

    let mut basis = |cols: usize| {
        let mut m = DMatrix::<f64>::from_fn(3 * n_vertices, cols, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        for mut col in m.column_iter_mut() {
            let max_disp = col
                .as_slice()
                .chunks_exact(3)
                .map(|c| (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt())
                .fold(0.0, f64::max);
            if max_disp > 0.0 {
                col *= TOY_BASIS_AMPLITUDE / max_disp;
            }
        }
        m
    };
    let shape = basis(n_beta);
    let expression = basis(n_psi);
    let pose = basis(n_theta);
    MorphableModel::new(points, shape, expression, pose, landmarks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy() -> MorphableModel {
        make_toy_model(10, 3, 2, 2, 7).unwrap()
    }

    fn random_coeffs(model: &MorphableModel, seed: u64) -> ModelCoefficients {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..model.n_coefficients())
            .map(|_| rng.gen_range(-1.5..1.5))
            .collect();
        ModelCoefficients::from_slice(model, &v).unwrap()
    }

    #[test]
    fn zero_coefficients_give_mean_shape() {
        let m = toy();
        let out = m.evaluate(&ModelCoefficients::zeros(&m)).unwrap();
        assert_eq!(out, m.mean_shape());
    }

    #[test]
    fn unit_beta_adds_first_shape_column() {
        let m = toy();
        let mut c = ModelCoefficients::zeros(&m);
        c.beta[0] = 1.0;
        let out = m.evaluate(&c).unwrap();
        for (v, p) in out.iter().enumerate() {
            for axis in 0..3 {
                assert_eq!(p[axis], m.mean_shape()[v][axis] + m.shape_basis()[(3 * v + axis, 0)]);
            }
        }
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let m = toy();
        let c = random_coeffs(&m, 11);
        let out = m.evaluate(&c).unwrap();
        let bases = [
            (m.shape_basis(), &c.beta),
            (m.expression_basis(), &c.psi),
            (m.pose_corrective_basis(), &c.theta_c),
        ];
        for v in 0..m.n_vertices() {
            for axis in 0..3 {
                let row = 3 * v + axis;
                let mut expect = m.mean_shape()[v][axis];
                for (basis, coeffs) in bases {
                    for (j, cj) in coeffs.iter().enumerate() {
                        expect += basis[(row, j)] * cj;
                    }
                }
                assert_relative_eq!(out[v][axis], expect, max_relative = 1e-13, epsilon = 1e-13);
            }
        }
        let subset = m.evaluate_vertices(&c, &[0, 3, 9]).unwrap();
        for (k, v) in [0, 3, 9].into_iter().enumerate() {
            assert_relative_eq!(subset[k], out[v], epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_names_the_basis() {
        let m = toy();
        let mut c = ModelCoefficients::zeros(&m);
        c.psi.push(0.0);
        match m.evaluate(&c) {
            Err(Error::InvalidArgument(msg)) => assert!(msg.contains("expression_basis")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn jacobian_columns_are_unit_responses() {
        let m = toy();
        let j = m.evaluate_jacobian();
        let base = m.evaluate(&ModelCoefficients::zeros(&m)).unwrap();
        for col in 0..m.n_coefficients() {
            let mut e = vec![0.0; m.n_coefficients()];
            e[col] = 1.0;
            let out = m.evaluate(&ModelCoefficients::from_slice(&m, &e).unwrap()).unwrap();
            for v in 0..m.n_vertices() {
                for axis in 0..3 {
                    assert_relative_eq!(j[(3 * v + axis, col)], out[v][axis] - base[v][axis], epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = toy();
        let c = random_coeffs(&m, 3).to_vec();
        let j = m.evaluate_jacobian();
        let h = 1e-5;
        for col in 0..c.len() {
            let (mut plus, mut minus) = (c.clone(), c.clone());
            plus[col] += h;
            minus[col] -= h;
            let fp = m.evaluate(&ModelCoefficients::from_slice(&m, &plus).unwrap()).unwrap();
            let fm = m.evaluate(&ModelCoefficients::from_slice(&m, &minus).unwrap()).unwrap();
            for v in 0..m.n_vertices() {
                for axis in 0..3 {
                    let fd = (fp[v][axis] - fm[v][axis]) / (2.0 * h);
                    let a = j[(3 * v + axis, col)];
                    assert!((fd - a).abs() <= 1e-10 * a.abs().max(1.0), "col {col}: {fd} vs {a}");
                }
            }
        }
    }

    #[test]
    fn zero_bases_give_zero_jacobian() {
        let m = toy();
        let z = MorphableModel::new(
            m.mean_shape().to_vec(),
            DMatrix::zeros(30, 2),
            DMatrix::zeros(30, 1),
            DMatrix::zeros(30, 0),
            m.landmarks().to_vec(),
        )
        .unwrap();
        assert!(z.evaluate_jacobian().matrix().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn toy_model_is_deterministic_and_valid() {
        let a = make_toy_model(64, 8, 8, 4, 0).unwrap();
        let b = make_toy_model(64, 8, 8, 4, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_vertices(), 64);
        assert_eq!(a.shape_basis().nrows(), 192);
        let total: usize = Region::ALL.iter().map(|r| a.region_vertices(*r).len()).sum();
        assert_eq!(total, a.landmarks().len());
        assert!(MorphableModel::new(
            a.mean_shape().to_vec(),
            a.shape_basis().clone(),
            a.expression_basis().clone(),
            a.pose_corrective_basis().clone(),
            a.landmarks().to_vec()
        )
        .is_ok());
    }

    #[test]
    fn toy_nose_is_closest_to_camera() {
        for seed in 0..5 {
            let m = make_toy_model(64, 8, 8, 4, seed).unwrap();
            let nose = m.region_vertices(Region::Nose);
            let max_nose = nose.iter().map(|&v| m.mean_shape()[v].z).fold(f64::MIN, f64::max);
            for (v, p) in m.mean_shape().iter().enumerate() {
                if !nose.contains(&v) {
                    assert!(max_nose < p.z, "vertex {v} closer than the nose");
                }
            }
        }
    }

    #[test]
    fn toy_basis_perturbation_is_bounded() {
        let m = make_toy_model(64, 8, 8, 4, 1).unwrap();
        let j = m.evaluate_jacobian();
        for col in 0..m.n_coefficients() {
            for v in 0..m.n_vertices() {
                let d = (0..3).map(|a| j[(3 * v + a, col)].powi(2)).sum::<f64>().sqrt();
                assert!(d <= 0.1 * TOY_HEAD_WIDTH + 1e-12);
            }
        }
    }

    #[test]
    fn too_few_vertices_rejected() {
        assert!(matches!(make_toy_model(7, 1, 1, 1, 0), Err(Error::InvalidArgument(_))));
        assert!(make_toy_model(8, 1, 1, 1, 0).is_ok());
    }

    #[test]
    fn invalid_models_rejected() {
        let m = toy();
        let mut lms = m.landmarks().to_vec();
        lms.push(lms[0]);
        assert!(MorphableModel::new(
            m.mean_shape().to_vec(),
            m.shape_basis().clone(),
            m.expression_basis().clone(),
            m.pose_corrective_basis().clone(),
            lms
        )
        .is_err());
        assert!(MorphableModel::new(
            m.mean_shape().to_vec(),
            DMatrix::zeros(29, 1),
            m.expression_basis().clone(),
            m.pose_corrective_basis().clone(),
            m.landmarks().to_vec()
        )
        .is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn evaluate_is_linear(a in proptest::collection::vec(-2.0f64..2.0, 7),
                                  b in proptest::collection::vec(-2.0f64..2.0, 7)) {
                let m = toy();
                let eval = |v: &[f64]| m.evaluate(&ModelCoefficients::from_slice(&m, v).unwrap()).unwrap();
                let zero = eval(&[0.0; 7]);
                let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
                let (fa, fb, fs) = (eval(&a), eval(&b), eval(&sum));
                for v in 0..m.n_vertices() {
                    let lhs = fs[v] - zero[v];
                    let rhs = (fa[v] - zero[v]) + (fb[v] - zero[v]);
                    prop_assert!((lhs - rhs).norm() < 1e-12);
                }
            }
        }
    }
}
