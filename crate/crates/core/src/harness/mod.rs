//! Synthetic captures with sealed perspective ground truth, a benchmark runner
//! comparing the three camera models, and focal/depth ambiguity scans.
//!
//! Ground truth is a pinhole camera in centimetres. Fitting problems see the
//! model in units of the magnification length `L = face_width /
//! (sensor_width · frame_fill)`, so that a unit-scale pseudo-perspective fit
//! of a face at standoff `T` lands on `rho ≈ L / T` and observations are
//! pixels on a nominal image of `image_width_px` across the sensor.

mod bench;
mod scan;

use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera::{
    focal_from_geometry, project_perspective, rho_from_perspective, rho_prior_analytic, CameraKind, CameraParams,
    CaptureGeometry, PerspectiveCamera, Rotation,
};
use crate::fitting::{FitProblem, FitState, Observation, SolverOptions};
use crate::io::ProblemDoc;
use crate::morphable::{make_toy_model, ModelCoefficients, MorphableModel};
use crate::{Error, Result};

pub use bench::{fit_frame, run_bench, AggregateRow, BenchOptions, BenchReport, FrameRow};
pub use scan::{ambiguity_scan, extent_ratio, AmbiguityScan, ScanGrid};

/// Per-frame randomisation scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseJitter {
    /// Standard deviation of each axis-angle component (rad).
    pub rotation: f64,
    /// Standard deviation of each translation component (cm).
    pub translation: f64,
    /// Multiplier on the per-frame expression and corrective coefficients.
    pub expression: f64,
}

impl Default for PoseJitter {
    fn default() -> Self {
        PoseJitter { rotation: 0.1, translation: 1.0, expression: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureScenario {
    pub name: String,
    pub geometry: CaptureGeometry,
    #[serde(default)]
    pub pose_jitter: PoseJitter,
    #[serde(default = "default_noise")]
    pub landmark_noise_px: f64,
    #[serde(default = "default_width")]
    pub image_width_px: f64,
    pub n_frames: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.5
}

fn default_width() -> f64 {
    512.0
}

impl CaptureScenario {
    pub fn new(name: &str, geometry: CaptureGeometry, n_frames: usize, seed: u64) -> Self {
        CaptureScenario {
            name: name.to_string(),
            geometry,
            pose_jitter: PoseJitter::default(),
            landmark_noise_px: default_noise(),
            image_width_px: default_width(),
            n_frames,
            seed,
        }
    }

    /// Head-mounted close-up at 15 cm.
    pub fn closeup(n_frames: usize, seed: u64) -> Self {
        Self::new("closeup", CaptureGeometry::head_mounted(15.0), n_frames, seed)
    }

    /// Far capture at 500 cm.
    pub fn far(n_frames: usize, seed: u64) -> Self {
        Self::new("far", CaptureGeometry::head_mounted(500.0), n_frames, seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let j = &self.pose_jitter;
        for (name, v) in [
            ("pose_jitter.rotation", j.rotation),
            ("pose_jitter.translation", j.translation),
            ("pose_jitter.expression", j.expression),
            ("landmark_noise_px", self.landmark_noise_px),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.image_width_px > 0.0 && self.image_width_px.is_finite()) {
            return Err(Error::invalid("image_width_px must be positive"));
        }
        if self.n_frames == 0 {
            return Err(Error::invalid(format!("scenario {:?} needs at least one frame", self.name)));
        }
        Ok(())
    }

    /// Model length unit seen by the fitter, in centimetres.
    pub fn model_unit(&self) -> f64 {
        magnification_length(&self.geometry)
    }

    /// Pixels per sensor centimetre.
    pub fn pixel_scale(&self) -> f64 {
        self.image_width_px / self.geometry.sensor_width
    }
}

/// `face_width / (sensor_width · frame_fill)`: the standoff at which the
/// geometry's focal length equals one.
pub fn magnification_length(g: &CaptureGeometry) -> f64 {
    g.face_width / (g.sensor_width * g.frame_fill)
}

/// Model used by the bundled scenarios: a 120-vertex toy head with 8 shape,
/// 8 expression and 4 corrective components.
pub fn default_capture_model() -> MorphableModel {
    make_toy_model(120, 8, 8, 4, 0).expect("fixed toy dimensions are valid")
}

/// Ground truth for one frame; kept out of the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame: usize,
    pub coefficients: ModelCoefficients,
    /// Pinhole camera in centimetres, sensor-plane output.
    pub rotation_axis_angle: [f64; 3],
    pub translation_cm: [f64; 3],
    pub focal_cm: f64,
    /// `rho_from_perspective(1, f, t_z)` for this frame.
    pub sealed_rho: f64,
    /// Noise-free observations (px).
    pub clean: Vec<[f64; 2]>,
    /// SHA-256 of the frame's problem JSON.
    pub problem_sha256: String,
}

impl FrameTruth {
    /// The true camera expressed in the units of the fitting problem.
    pub fn perspective_model_units(&self, scenario: &CaptureScenario) -> Result<PerspectiveCamera> {
        let [x, y, z] = self.rotation_axis_angle;
        let [tx, ty, tz] = self.translation_cm;
        let l = scenario.model_unit();
        PerspectiveCamera::new(
            Rotation::from_axis_angle(Vector3::new(x, y, z)),
            Vector3::new(tx, ty, tz) / l,
            scenario.pixel_scale() * self.focal_cm,
        )
    }

    pub fn state_model_units(&self, scenario: &CaptureScenario) -> Result<FitState> {
        Ok(FitState {
            coefficients: self.coefficients.clone(),
            camera: CameraParams::Perspective(self.perspective_model_units(scenario)?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    /// Pseudo-perspective problem; the other camera kinds reuse its data.
    pub problem: FitProblem,
    pub truth: FrameTruth,
}

impl Frame {
    pub fn problem_for(&self, kind: CameraKind) -> FitProblem {
        let mut p = self.problem.clone();
        p.camera_kind = kind;
        p
    }
}

#[derive(Debug, Clone)]
pub struct Capture {
    pub scenario: CaptureScenario,
    /// Model in fitting units (scaled by `1 / L`).
    pub model: Arc<MorphableModel>,
    pub frames: Vec<Frame>,
}

fn truncated_normal(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    loop {
        let x: f64 = rng.sample(StandardNormal);
        if x.abs() <= bound {
            return x;
        }
    }
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let x: f64 = rng.sample(StandardNormal);
    sigma * x
}

/// Hex SHA-256 of a problem's canonical JSON.
pub fn problem_checksum(problem: &FitProblem) -> Result<String> {
    let json = serde_json::to_string(&ProblemDoc::from_problem(problem, &SolverOptions::default(), None))?;
    Ok(hex(&Sha256::digest(json.as_bytes())))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Simulates `n_frames` pinhole captures of `model` (centimetres).
///
/// The subject's shape coefficients are drawn once per scenario; expression
/// and corrective coefficients and the pose are drawn per frame. Coefficients
/// are standard normal truncated at ±2.
pub fn generate_capture(scenario: &CaptureScenario, model: &MorphableModel) -> Result<Capture> {
    scenario.validate()?;
    let g = &scenario.geometry;
    let focal = focal_from_geometry(g);
    let l = scenario.model_unit();
    let px = scenario.pixel_scale();
    let fit_model = Arc::new(model.scaled(1.0 / l));
    let landmarks: Vec<usize> = model.landmarks().iter().map(|lm| lm.vertex).collect();
    let (nb, np, nt) = model.dims();

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let beta: Vec<f64> = (0..nb).map(|_| truncated_normal(&mut rng, 2.0)).collect();
    let j = scenario.pose_jitter;
    let mut frames = Vec::with_capacity(scenario.n_frames);
    for frame in 0..scenario.n_frames {
        let coefficients = ModelCoefficients {
            beta: beta.clone(),
            psi: (0..np).map(|_| j.expression * truncated_normal(&mut rng, 2.0)).collect(),
            theta_c: (0..nt).map(|_| j.expression * truncated_normal(&mut rng, 2.0)).collect(),
        };
        let omega = Vector3::new(
            normal(&mut rng, j.rotation),
            normal(&mut rng, j.rotation),
            normal(&mut rng, j.rotation),
        );
        let t = Vector3::new(
            normal(&mut rng, j.translation),
            normal(&mut rng, j.translation),
            g.standoff + normal(&mut rng, j.translation),
        );
        let camera = PerspectiveCamera::new(Rotation::from_axis_angle(omega), t, focal)
            .map_err(|e| Error::invalid(format!("frame {frame}: {e}")))?;
        let verts = model.evaluate_vertices(&coefficients, &landmarks)?;
        let sensor = project_perspective(&camera, &verts)?;
        let clean: Vec<Vector2<f64>> = sensor.iter().map(|p| p * px).collect();
        let observations = landmarks
            .iter()
            .zip(&clean)
            .map(|(&landmark, c)| Observation {
                landmark,
                u: c.x + normal(&mut rng, scenario.landmark_noise_px),
                v: c.y + normal(&mut rng, scenario.landmark_noise_px),
                weight: 1.0,
            })
            .collect();
        let mut problem = FitProblem::new(fit_model.clone(), observations, CameraKind::Pseudo);
        problem.priors.rho_prior = rho_prior_analytic(g);
        let w = camera.rotation.axis_angle;
        let truth = FrameTruth {
            frame,
            coefficients,
            rotation_axis_angle: [w.x, w.y, w.z],
            translation_cm: [t.x, t.y, t.z],
            focal_cm: focal,
            sealed_rho: rho_from_perspective(1.0, focal, t.z),
            clean: clean.iter().map(|c| [c.x, c.y]).collect(),
            problem_sha256: problem_checksum(&problem)?,
        };
        frames.push(Frame { problem, truth });
    }
    Ok(Capture { scenario: scenario.clone(), model: fit_model, frames })
}

/// Writes one problem file per frame plus a separate truth file that refers
/// to them by checksum.
pub fn write_capture(dir: &std::path::Path, capture: &Capture) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let model_name = format!("{}.model.json", capture.scenario.name);
    crate::io::write_model(dir.join(&model_name), &capture.model)?;
    for f in &capture.frames {
        let mut doc = ProblemDoc::from_problem(&f.problem, &SolverOptions::default(), None);
        doc.model = None;
        doc.model_ref = Some(model_name.clone());
        let name = format!("{}.frame{:03}.problem.json", capture.scenario.name, f.truth.frame);
        crate::io::write_atomic(dir.join(name), serde_json::to_string_pretty(&doc)?)?;
    }
    let truths: Vec<&FrameTruth> = capture.frames.iter().map(|f| &f.truth).collect();
    let doc = serde_json::json!({ "scenario": capture.scenario, "frames": truths });
    crate::io::write_atomic(dir.join(format!("{}.truth.json", capture.scenario.name)), serde_json::to_string_pretty(&doc)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still(name: &str, standoff: f64, n: usize) -> CaptureScenario {
        let mut s = CaptureScenario::new(name, CaptureGeometry::head_mounted(standoff), n, 3);
        s.pose_jitter = PoseJitter { rotation: 0.0, translation: 0.0, expression: 0.0 };
        s.landmark_noise_px = 0.0;
        s
    }

    #[test]
    fn still_frames_are_identical() {
        let c = generate_capture(&still("s", 15.0, 2), &default_capture_model()).unwrap();
        assert_eq!(c.frames[0].problem.observations, c.frames[1].problem.observations);
        assert_eq!(c.frames[0].truth.problem_sha256, c.frames[1].truth.problem_sha256);
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let m = default_capture_model();
        let a = generate_capture(&CaptureScenario::closeup(3, 11), &m).unwrap();
        let b = generate_capture(&CaptureScenario::closeup(3, 11), &m).unwrap();
        let c = generate_capture(&CaptureScenario::closeup(3, 12), &m).unwrap();
        for i in 0..3 {
            assert_eq!(a.frames[i].problem, b.frames[i].problem);
            assert_eq!(a.frames[i].truth, b.frames[i].truth);
        }
        assert_ne!(a.frames[0].problem.observations, c.frames[0].problem.observations);
    }

    #[test]
    fn closeup_sealed_rho_in_head_mounted_band() {
        let c = generate_capture(&CaptureScenario::closeup(50, 0), &default_capture_model()).unwrap();
        for f in &c.frames {
            assert!((2.1..=4.4).contains(&f.truth.sealed_rho), "{}", f.truth.sealed_rho);
        }
    }

    #[test]
    fn far_sealed_rho_is_small() {
        let c = generate_capture(&CaptureScenario::far(50, 0), &default_capture_model()).unwrap();
        for f in &c.frames {
            assert!(f.truth.sealed_rho > 0.0 && f.truth.sealed_rho < 0.15, "{}", f.truth.sealed_rho);
        }
    }

    #[test]
    fn truth_in_model_units_reproduces_clean_pixels() {
        let s = CaptureScenario::closeup(4, 5);
        let c = generate_capture(&s, &default_capture_model()).unwrap();
        for f in &c.frames {
            let cam = f.truth.perspective_model_units(&s).unwrap();
            let verts: Vec<usize> = f.problem.observations.iter().map(|o| o.landmark).collect();
            let pts = c.model.evaluate_vertices(&f.truth.coefficients, &verts).unwrap();
            let uv = project_perspective(&cam, &pts).unwrap();
            for (p, q) in uv.iter().zip(&f.truth.clean) {
                assert!((p.x - q[0]).abs() < 1e-9 && (p.y - q[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn face_spans_the_nominal_fill() {
        // With L scaling the face width maps to frame_fill of the image.
        let s = still("w", 15.0, 1);
        let c = generate_capture(&s, &default_capture_model()).unwrap();
        let us: Vec<f64> = c.frames[0].truth.clean.iter().map(|p| p[0]).collect();
        let width = us.iter().cloned().fold(f64::MIN, f64::max) - us.iter().cloned().fold(f64::MAX, f64::min);
        let nominal = s.geometry.frame_fill * s.image_width_px;
        assert!(width > 0.5 * nominal && width < 2.0 * nominal, "{width} vs {nominal}");
    }

    #[test]
    fn checksum_tracks_problem_content() {
        let c = generate_capture(&CaptureScenario::closeup(2, 1), &default_capture_model()).unwrap();
        let f = &c.frames[0];
        assert_eq!(problem_checksum(&f.problem).unwrap(), f.truth.problem_sha256);
        let mut p = f.problem.clone();
        p.observations[0].u += 1e-9;
        assert_ne!(problem_checksum(&p).unwrap(), f.truth.problem_sha256);
        assert_eq!(f.truth.problem_sha256.len(), 64);
    }

    #[test]
    fn written_problems_exclude_truth() {
        let dir = std::env::temp_dir().join(format!("pseudocam-capture-{}", std::process::id()));
        let c = generate_capture(&CaptureScenario::closeup(2, 1), &default_capture_model()).unwrap();
        write_capture(&dir, &c).unwrap();
        let text = std::fs::read_to_string(dir.join("closeup.frame000.problem.json")).unwrap();
        assert!(!text.contains("sealed_rho") && !text.contains("focal_cm"));
        let loaded = crate::io::read_problem(dir.join("closeup.frame000.problem.json")).unwrap();
        assert_eq!(problem_checksum(&loaded.problem).unwrap(), c.frames[0].truth.problem_sha256);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut s = CaptureScenario::closeup(0, 0);
        assert!(generate_capture(&s, &default_capture_model()).is_err());
        s.n_frames = 1;
        s.landmark_noise_px = -1.0;
        assert!(generate_capture(&s, &default_capture_model()).is_err());
    }

    #[test]
    fn scenario_json_defaults() {
        let s: CaptureScenario = serde_json::from_str(
            r#"{"name":"x","geometry":{"sensor_width":0.455,"face_width":15,"standoff":15,"frame_fill":0.5},"n_frames":3}"#,
        )
        .unwrap();
        assert_eq!(s.landmark_noise_px, 0.5);
        assert_eq!(s.image_width_px, 512.0);
        assert_eq!(s.pose_jitter, PoseJitter::default());
    }
}
