use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};

/// Rotation stored as an axis-angle vector (unit axis times angle in radians).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rotation {
    pub axis_angle: Vector3<f64>,
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation::default()
    }

    /// Builds a rotation, wrapping the angle into `[0, pi]`.
    pub fn from_axis_angle(axis_angle: Vector3<f64>) -> Self {
        Rotation { axis_angle: canonical(axis_angle) }
    }

    pub fn angle(&self) -> f64 {
        self.axis_angle.norm()
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Rotation3::from_scaled_axis(self.axis_angle).into_inner()
    }

    /// Right Jacobian of the exponential map, so that
    /// `d(R q)/d(omega) = -R [q]x J_r(omega)`.
    pub fn right_jacobian(&self) -> Matrix3<f64> {
        let w = self.axis_angle;
        let theta = w.norm();
        let k = skew(&w);
        let (a, b) = if theta < 1e-5 {
            let t2 = theta * theta;
            (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
        } else {
            let t2 = theta * theta;
            ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
        };
        Matrix3::identity() - k * a + k * k * b
    }

    /// `d(R q)/d(omega)` as a 3x3 matrix.
    pub fn point_derivative(&self, q: &Vector3<f64>) -> Matrix3<f64> {
        -self.matrix() * skew(q) * self.right_jacobian()
    }
}

fn canonical(w: Vector3<f64>) -> Vector3<f64> {
    let theta = w.norm();
    if theta <= PI {
        return w;
    }
    let wrapped = theta.rem_euclid(2.0 * PI);
    let axis = w / theta;
    if wrapped <= PI {
        axis * wrapped
    } else {
        -axis * (2.0 * PI - wrapped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
        let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            .normalize();
        Rotation::from_axis_angle(axis * rng.gen_range(0.0..PI))
    }

    #[test]
    fn matrices_are_proper_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let r = random_rotation(&mut rng).matrix();
            assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn half_turn_about_z() {
        let r = Rotation::from_axis_angle(Vector3::new(0.0, 0.0, PI));
        let p = r.matrix() * Vector3::x();
        assert!((p - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn canonicalisation_preserves_the_rotation() {
        let w = Vector3::new(0.3, -1.0, 2.0).normalize() * 5.0;
        let r = Rotation::from_axis_angle(w);
        assert!(r.angle() <= PI + 1e-6);
        let raw = Rotation { axis_angle: w };
        assert!((r.matrix() - raw.matrix()).amax() < 1e-12);
    }

    #[test]
    fn point_derivative_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-6;
        for i in 0..100 {
            // include near-identity rotations to exercise the series branch
            let rot = if i < 5 {
                Rotation { axis_angle: Vector3::new(1e-7, -2e-7, 3e-8) * i as f64 }
            } else {
                random_rotation(&mut rng)
            };
            let q = Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let d = rot.point_derivative(&q);
            for k in 0..3 {
                let mut wp = rot.axis_angle;
                let mut wm = rot.axis_angle;
                wp[k] += h;
                wm[k] -= h;
                let fd = (Rotation { axis_angle: wp }.matrix() * q - Rotation { axis_angle: wm }.matrix() * q) / (2.0 * h);
                let col = d.column(k);
                assert!((fd - col).norm() <= 1e-6 * col.norm().max(1.0), "{fd} vs {col}");
            }
        }
    }
}
