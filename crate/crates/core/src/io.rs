//! File formats: model, camera, problem and result JSON, point CSV/OBJ,
//! masks as PGM and run-length JSON. Writers go through a temp file and a
//! rename so readers never see partial output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{
    CameraKind, CameraParams, OrthographicCamera, PerspectiveCamera, PseudoPerspectiveCamera, Rotation,
};
use crate::fitting::{
    ActiveMask, FitProblem, FitResult, FitState, Observation, Priors, RegionWeights, SolverOptions, StageSummary,
    TerminationReason,
};
use crate::masking::RasterMask;
use crate::morphable::{Landmark, ModelCoefficients, MorphableModel, Region};
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Writes via a sibling temp file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = path.as_ref();
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::from(e)
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {}", path.display(), e)))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::Parse(format!("{}: {}", path.display(), m)),
        other => other,
    }
}

// ---------------------------------------------------------------- model

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

impl MatrixDoc {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        // nalgebra is column-major; the transpose's storage is row-major.
        MatrixDoc { rows: m.nrows(), cols: m.ncols(), data: m.transpose().as_slice().to_vec() }
    }

    pub fn to_matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Parse(format!(
                "basis {name}: declared {}x{} but has {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasesDoc {
    pub shape: MatrixDoc,
    pub expression: MatrixDoc,
    pub pose: MatrixDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarksDoc {
    pub indices: Vec<usize>,
    pub regions: Vec<Region>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub version: u32,
    pub n_vertices: usize,
    /// `x0, y0, z0, x1, ...`
    pub mean_shape: Vec<f64>,
    pub bases: BasesDoc,
    pub landmarks: LandmarksDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faces: Option<Vec<[usize; 3]>>,
}

impl ModelDoc {
    pub fn from_model(model: &MorphableModel) -> Self {
        ModelDoc {
            version: MODEL_FORMAT_VERSION,
            n_vertices: model.n_vertices(),
            mean_shape: model.mean_shape().iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
            bases: BasesDoc {
                shape: MatrixDoc::from_matrix(model.shape_basis()),
                expression: MatrixDoc::from_matrix(model.expression_basis()),
                pose: MatrixDoc::from_matrix(model.pose_corrective_basis()),
            },
            landmarks: LandmarksDoc {
                indices: model.landmarks().iter().map(|l| l.vertex).collect(),
                regions: model.landmarks().iter().map(|l| l.region).collect(),
            },
            faces: None,
        }
    }

    pub fn to_model(&self) -> Result<MorphableModel> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported model version {}", self.version)));
        }
        if self.mean_shape.len() != 3 * self.n_vertices {
            return Err(Error::Parse(format!(
                "mean_shape has {} values, expected 3 * n_vertices = {}",
                self.mean_shape.len(),
                3 * self.n_vertices
            )));
        }
        if self.landmarks.indices.len() != self.landmarks.regions.len() {
            return Err(Error::Parse("landmark indices and regions differ in length".into()));
        }
        if let Some(faces) = &self.faces {
            if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= self.n_vertices)) {
                return Err(Error::Parse(format!("face {:?} references a missing vertex", f)));
            }
        }
        let mean = self.mean_shape.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
        let landmarks = self
            .landmarks
            .indices
            .iter()
            .zip(&self.landmarks.regions)
            .map(|(&vertex, &region)| Landmark { vertex, region })
            .collect();
        MorphableModel::new(
            mean,
            self.bases.shape.to_matrix("shape")?,
            self.bases.expression.to_matrix("expression")?,
            self.bases.pose.to_matrix("pose")?,
            landmarks,
        )
    }
}

pub fn model_to_json(model: &MorphableModel) -> Result<String> {
    Ok(serde_json::to_string(&ModelDoc::from_model(model))?)
}

pub fn model_from_json(text: &str) -> Result<MorphableModel> {
    serde_json::from_str::<ModelDoc>(text)?.to_model()
}

pub fn read_model(path: impl AsRef<Path>) -> Result<MorphableModel> {
    let path = path.as_ref();
    model_from_json(&read_text(path)?).map_err(|e| with_path(path, e))
}

pub fn write_model(path: impl AsRef<Path>, model: &MorphableModel) -> Result<()> {
    write_atomic(path, model_to_json(model)?)
}

// ---------------------------------------------------------------- points

/// Wavefront OBJ with `v` lines and optional 1-based `f` lines.
pub fn points_to_obj(points: &[Vector3<f64>], faces: Option<&[[usize; 3]]>) -> String {
    let mut s = String::new();
    for p in points {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for f in faces.unwrap_or(&[]) {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("line {line}: invalid {what} {tok:?}")))
}

/// Vertices of an OBJ file; every other record is ignored.
pub fn points_from_obj(text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        if toks.next() != Some("v") {
            continue;
        }
        let xyz: Vec<&str> = toks.collect();
        if xyz.len() < 3 {
            return Err(Error::Parse(format!("line {}: vertex needs 3 coordinates", i + 1)));
        }
        out.push(Vector3::new(
            parse_f64(xyz[0], i + 1, "x")?,
            parse_f64(xyz[1], i + 1, "y")?,
            parse_f64(xyz[2], i + 1, "z")?,
        ));
    }
    Ok(out)
}

/// Rows of a CSV with a header line, checking the header and the row indices.
fn csv_rows<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((_, h)) => return Err(Error::Parse(format!("line 1: expected header {header:?}, got {h:?}"))),
        None => return Err(Error::Parse("empty CSV".into())),
    }
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (n, (i, line)) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != width {
            return Err(Error::Parse(format!("line {}: expected {} columns, got {}", i + 1, width, cols.len())));
        }
        let index: usize = cols[0]
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: invalid index {:?}", i + 1, cols[0])))?;
        if index != n {
            return Err(Error::Parse(format!("line {}: index {} out of sequence", i + 1, index)));
        }
        rows.push((i + 1, cols));
    }
    Ok(rows)
}

/// CSV `index,x,y,z`.
pub fn points_from_csv(text: &str) -> Result<Vec<Vector3<f64>>> {
    csv_rows(text, "index,x,y,z")?
        .into_iter()
        .map(|(line, c)| {
            Ok(Vector3::new(parse_f64(c[1], line, "x")?, parse_f64(c[2], line, "y")?, parse_f64(c[3], line, "z")?))
        })
        .collect()
}

/// 3D points from an `.obj` or `.csv` file, chosen by extension.
pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<Vector3<f64>>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let parsed = match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => points_from_obj(&text),
        Some("csv") => points_from_csv(&text),
        _ => Err(Error::invalid(format!("{}: expected a .obj or .csv point file", path.display()))),
    };
    parsed.map_err(|e| with_path(path, e))
}

/// CSV `index,u,v` with shortest round-trip float formatting.
pub fn uv_to_csv(points: &[Vector2<f64>]) -> String {
    let mut s = String::from("index,u,v\n");
    for (i, p) in points.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", i, p.x, p.y);
    }
    s
}

pub fn uv_from_csv(text: &str) -> Result<Vec<Vector2<f64>>> {
    csv_rows(text, "index,u,v")?
        .into_iter()
        .map(|(line, c)| Ok(Vector2::new(parse_f64(c[1], line, "u")?, parse_f64(c[2], line, "v")?)))
        .collect()
}

pub fn read_uv(path: impl AsRef<Path>) -> Result<Vec<Vector2<f64>>> {
    let path = path.as_ref();
    uv_from_csv(&read_text(path)?).map_err(|e| with_path(path, e))
}

// ---------------------------------------------------------------- camera

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraDoc {
    pub model: CameraKind,
    pub rotation_axis_angle: [f64; 3],
    /// Three components for perspective, two otherwise.
    pub translation: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl CameraDoc {
    pub fn from_camera(cam: &CameraParams) -> Self {
        let w = cam.rotation().axis_angle;
        let base = CameraDoc {
            model: cam.kind(),
            rotation_axis_angle: [w.x, w.y, w.z],
            translation: Vec::new(),
            f: None,
            scale: None,
            rho: None,
        };
        match cam {
            CameraParams::Perspective(c) => CameraDoc {
                translation: c.translation.iter().copied().collect(),
                f: Some(c.focal),
                ..base
            },
            CameraParams::Orthographic(c) => CameraDoc {
                translation: c.translation_xy.iter().copied().collect(),
                scale: Some(c.scale),
                ..base
            },
            CameraParams::Pseudo(c) => CameraDoc {
                translation: c.translation_xy.iter().copied().collect(),
                scale: Some(c.scale),
                rho: Some(c.rho),
                ..base
            },
        }
    }

    pub fn to_camera(&self) -> Result<CameraParams> {
        let [x, y, z] = self.rotation_axis_angle;
        let rotation = Rotation::from_axis_angle(Vector3::new(x, y, z));
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Parse(format!("{} camera needs field {:?}", self.model, name)))
        };
        let forbid = |v: Option<f64>, name: &str| match v {
            Some(_) => Err(Error::Parse(format!("{} camera does not take field {:?}", self.model, name))),
            None => Ok(()),
        };
        let t = &self.translation;
        let xy = |t: &[f64]| -> Result<Vector2<f64>> {
            if t.len() != 2 {
                return Err(Error::Parse(format!("{} camera translation needs 2 components, got {}", self.model, t.len())));
            }
            Ok(Vector2::new(t[0], t[1]))
        };
        Ok(match self.model {
            CameraKind::Perspective => {
                forbid(self.scale, "S")?;
                forbid(self.rho, "rho")?;
                if t.len() != 3 {
                    return Err(Error::Parse(format!("perspective camera translation needs 3 components, got {}", t.len())));
                }
                CameraParams::Perspective(PerspectiveCamera::new(rotation, Vector3::new(t[0], t[1], t[2]), need(self.f, "f")?)?)
            }
            CameraKind::Orthographic => {
                forbid(self.f, "f")?;
                forbid(self.rho, "rho")?;
                CameraParams::Orthographic(OrthographicCamera::new(rotation, xy(t)?, need(self.scale, "S")?)?)
            }
            CameraKind::Pseudo => {
                forbid(self.f, "f")?;
                CameraParams::Pseudo(PseudoPerspectiveCamera::new(rotation, xy(t)?, need(self.scale, "S")?, need(self.rho, "rho")?)?)
            }
        })
    }
}

pub fn camera_to_json(cam: &CameraParams) -> Result<String> {
    Ok(serde_json::to_string_pretty(&CameraDoc::from_camera(cam))?)
}

pub fn camera_from_json(text: &str) -> Result<CameraParams> {
    serde_json::from_str::<CameraDoc>(text)?.to_camera()
}

pub fn read_camera(path: impl AsRef<Path>) -> Result<CameraParams> {
    let path = path.as_ref();
    camera_from_json(&read_text(path)?).map_err(|e| with_path(path, e))
}

// ---------------------------------------------------------------- problems

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDoc {
    pub coefficients: ModelCoefficients,
    pub camera: CameraDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelDoc>,
    /// Model file, relative to the problem file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_ref: Option<String>,
    pub observations: Vec<Observation>,
    pub camera_kind: CameraKind,
    #[serde(default)]
    pub active: ActiveMask,
    #[serde(default)]
    pub priors: Priors,
    #[serde(default)]
    pub region_weights: RegionWeights,
    #[serde(default)]
    pub options: SolverOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialDoc>,
}

/// A problem file resolved into library types.
#[derive(Debug, Clone)]
pub struct LoadedProblem {
    pub problem: FitProblem,
    pub options: SolverOptions,
    pub initial: Option<FitState>,
}

impl ProblemDoc {
    /// Inline-model document for a problem.
    pub fn from_problem(problem: &FitProblem, options: &SolverOptions, initial: Option<&FitState>) -> Self {
        ProblemDoc {
            model: Some(ModelDoc::from_model(&problem.model)),
            model_ref: None,
            observations: problem.observations.clone(),
            camera_kind: problem.camera_kind,
            active: problem.active,
            priors: problem.priors,
            region_weights: problem.region_weights,
            options: *options,
            initial: initial.map(|s| InitialDoc {
                coefficients: s.coefficients.clone(),
                camera: CameraDoc::from_camera(&s.camera),
            }),
        }
    }

    /// `base_dir` resolves `model_ref`.
    pub fn resolve(self, base_dir: Option<&Path>) -> Result<LoadedProblem> {
        let model = match (&self.model, &self.model_ref) {
            (Some(m), None) => m.to_model()?,
            (None, Some(r)) => {
                let p: PathBuf = base_dir.map(|d| d.join(r)).unwrap_or_else(|| PathBuf::from(r));
                read_model(&p)?
            }
            (Some(_), Some(_)) => return Err(Error::Parse("give either model or model_ref, not both".into())),
            (None, None) => return Err(Error::Parse("problem needs a model or model_ref".into())),
        };
        let mut problem = FitProblem::new(Arc::new(model), self.observations, self.camera_kind);
        problem.active = self.active;
        problem.priors = self.priors;
        problem.region_weights = self.region_weights;
        problem.validate()?;
        let initial = match self.initial {
            Some(init) => {
                let camera = init.camera.to_camera()?;
                if camera.kind() != problem.camera_kind {
                    return Err(Error::Parse(format!(
                        "initial camera is {} but camera_kind is {}",
                        camera.kind(),
                        problem.camera_kind
                    )));
                }
                Some(FitState { coefficients: init.coefficients, camera })
            }
            None => None,
        };
        Ok(LoadedProblem { problem, options: self.options, initial })
    }
}

pub fn problem_from_json(text: &str, base_dir: Option<&Path>) -> Result<LoadedProblem> {
    serde_json::from_str::<ProblemDoc>(text)?.resolve(base_dir)
}

pub fn read_problem(path: impl AsRef<Path>) -> Result<LoadedProblem> {
    let path = path.as_ref();
    problem_from_json(&read_text(path)?, path.parent()).map_err(|e| with_path(path, e))
}

// ---------------------------------------------------------------- results

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDoc {
    pub coefficients: ModelCoefficients,
    pub camera: CameraDoc,
    pub final_cost: f64,
    pub costs: crate::fitting::CostBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub termination_reason: TerminationReason,
    pub landmark_rmse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1: Option<StageSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning: Option<f64>,
}

impl ResultDoc {
    pub fn from_result(r: &FitResult) -> Self {
        ResultDoc {
            coefficients: r.coefficients.clone(),
            camera: CameraDoc::from_camera(&r.camera),
            final_cost: r.final_cost,
            costs: r.costs,
            iterations: r.iterations,
            converged: r.converged,
            termination_reason: r.termination_reason,
            landmark_rmse: r.landmark_rmse,
            stage1: r.diagnostics.stage1,
            conditioning: r.diagnostics.conditioning,
        }
    }
}

pub fn result_to_json(r: &FitResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ResultDoc::from_result(r))?)
}

/// CSV `iteration,cost`.
pub fn cost_log_csv(costs: &[f64]) -> String {
    let mut s = String::from("iteration,cost\n");
    for (i, c) in costs.iter().enumerate() {
        let _ = writeln!(s, "{i},{c}");
    }
    s
}

// ---------------------------------------------------------------- masks

/// Binary PGM (P5), set pixels 255.
pub fn mask_to_pgm(mask: &RasterMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Reads an 8-bit P5 image; any non-zero sample is set.
pub fn mask_from_pgm(bytes: &[u8]) -> Result<RasterMask> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Parse("not a binary PGM (P5)".into()));
    }
    let num = |s: String, what: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("invalid PGM {what} {s:?}")));
    let width = num(token()?, "width")?;
    let height = num(token()?, "height")?;
    let maxval = num(token()?, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Parse(format!("unsupported PGM maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data = bytes.get(pos + 1..).unwrap_or(&[]);
    if data.len() != width * height {
        return Err(Error::Parse(format!("PGM raster has {} bytes, expected {}", data.len(), width * height)));
    }
    RasterMask::from_bits(width, height, data.iter().map(|&b| b != 0).collect())
}

/// Alternating run lengths over the row-major bits, starting with a
/// background run (possibly empty).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleDoc {
    pub width: usize,
    pub height: usize,
    pub runs: Vec<usize>,
}

impl RleDoc {
    pub fn from_mask(mask: &RasterMask) -> Self {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0;
        for &b in mask.bits() {
            if b != current {
                runs.push(len);
                current = b;
                len = 0;
            }
            len += 1;
        }
        runs.push(len);
        RleDoc { width: mask.width(), height: mask.height(), runs }
    }

    pub fn to_mask(&self) -> Result<RasterMask> {
        let total: usize = self.runs.iter().sum();
        if total != self.width * self.height {
            return Err(Error::Parse(format!("runs cover {} pixels, expected {}", total, self.width * self.height)));
        }
        let mut bits = Vec::with_capacity(total);
        for (i, &n) in self.runs.iter().enumerate() {
            bits.extend(std::iter::repeat(i % 2 == 1).take(n));
        }
        RasterMask::from_bits(self.width, self.height, bits)
    }
}

pub fn mask_to_rle_json(mask: &RasterMask) -> Result<String> {
    Ok(serde_json::to_string(&RleDoc::from_mask(mask))?)
}

pub fn mask_from_rle_json(text: &str) -> Result<RasterMask> {
    serde_json::from_str::<RleDoc>(text)?.to_mask()
}
