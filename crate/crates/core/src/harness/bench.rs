//! Per-frame fits of every camera model and the aggregated report.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_capture, CaptureScenario, Frame};
use crate::camera::CameraKind;
use crate::fitting::{
    camera_condition_ratio, fit_perspective_joint, initial_state, landmark_rmse, solve, staged_fit, FitProblem,
    FitResult, SolverOptions,
};
use crate::morphable::{MorphableModel, Region};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub solver: SolverOptions,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    pub kinds: Vec<CameraKind>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            solver: SolverOptions::default(),
            threads: None,
            kinds: vec![CameraKind::Pseudo, CameraKind::Orthographic, CameraKind::Perspective],
        }
    }
}

/// One fit of one frame. Region RMSEs are in pixels; "facial" is every
/// non-jawline landmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub scenario: String,
    pub frame: usize,
    pub camera: CameraKind,
    /// Empty when the fit succeeded.
    pub error: String,
    pub converged: bool,
    pub termination: String,
    pub iterations: usize,
    pub final_cost: f64,
    pub rmse: f64,
    pub rmse_jaw: f64,
    pub n_jaw: usize,
    pub rmse_facial: f64,
    pub n_facial: usize,
    /// Fitted shrinkage (pseudo only).
    pub rho: Option<f64>,
    pub sealed_rho: f64,
    /// Stage-1 objective of a staged fit (pseudo only).
    pub stage1_cost: Option<f64>,
    /// `sigma_min / sigma_max` of the scale/depth columns: `(S, rho)` or `(f, t_z)`.
    pub conditioning: Option<f64>,
}

pub const FRAME_CSV_HEADER: &str = "scenario,frame,camera,error,converged,termination,iterations,final_cost,rmse,rmse_jaw,n_jaw,rmse_facial,n_facial,rho,sealed_rho,stage1_cost,conditioning";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl FrameRow {
    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }

    /// Full-precision CSV line (shortest round-trip float formatting).
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.frame,
            self.camera,
            self.error.replace([',', '\n'], ";"),
            self.converged,
            self.termination,
            self.iterations,
            self.final_cost,
            self.rmse,
            self.rmse_jaw,
            self.n_jaw,
            self.rmse_facial,
            self.n_facial,
            opt(self.rho),
            self.sealed_rho,
            opt(self.stage1_cost),
            opt(self.conditioning),
        )
    }

    pub fn from_csv(line: &str) -> Result<FrameRow> {
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 17 {
            return Err(Error::Parse(format!("frame row needs 17 columns, got {}", c.len())));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("invalid number {s:?}")));
        let u = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("invalid count {s:?}")));
        let o = |s: &str| if s.is_empty() { Ok(None) } else { f(s).map(Some) };
        let camera = serde_json::from_value(serde_json::Value::String(c[2].to_string()))?;
        Ok(FrameRow {
            scenario: c[0].to_string(),
            frame: u(c[1])?,
            camera,
            error: c[3].to_string(),
            converged: c[4] == "true",
            termination: c[5].to_string(),
            iterations: u(c[6])?,
            final_cost: f(c[7])?,
            rmse: f(c[8])?,
            rmse_jaw: f(c[9])?,
            n_jaw: u(c[10])?,
            rmse_facial: f(c[11])?,
            n_facial: u(c[12])?,
            rho: o(c[13])?,
            sealed_rho: f(c[14])?,
            stage1_cost: o(c[15])?,
            conditioning: o(c[16])?,
        })
    }
}

/// Aggregate over the successful frames of one scenario and camera model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub camera: CameraKind,
    pub frames: usize,
    pub failed: usize,
    pub converged: usize,
    /// Pooled over landmarks: `sqrt(sum(rmse^2 · n) / sum(n))`.
    pub rmse: f64,
    pub rmse_jaw: f64,
    pub rmse_facial: f64,
    pub rho_mean: Option<f64>,
    /// Sample standard deviation.
    pub rho_std: Option<f64>,
    pub sealed_rho_mean: f64,
    pub conditioning_mean: Option<f64>,
    /// Frames whose final cost does not exceed the stage-1 cost (pseudo only).
    pub stage2_not_worse: Option<usize>,
}

fn pooled(pairs: impl Iterator<Item = (f64, usize)>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (r, k) in pairs {
        s += r * r * k as f64;
        n += k;
    }
    if n == 0 { f64::NAN } else { (s / n as f64).sqrt() }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sample_std(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

/// Aggregates in first-appearance order of `(scenario, camera)`.
pub fn aggregate(rows: &[FrameRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, CameraKind)> = Vec::new();
    for r in rows {
        let k = (r.scenario.clone(), r.camera);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(scenario, camera)| {
            let all: Vec<&FrameRow> = rows.iter().filter(|r| r.scenario == scenario && r.camera == camera).collect();
            let ok: Vec<&FrameRow> = all.iter().copied().filter(|r| r.ok()).collect();
            let rhos: Vec<f64> = ok.iter().filter_map(|r| r.rho).collect();
            let conds: Vec<f64> = ok.iter().filter_map(|r| r.conditioning).collect();
            let sealed: Vec<f64> = all.iter().map(|r| r.sealed_rho).collect();
            let stage = (camera == CameraKind::Pseudo)
                .then(|| ok.iter().filter(|r| r.stage1_cost.is_some_and(|c| r.final_cost <= c)).count());
            AggregateRow {
                frames: all.len(),
                failed: all.len() - ok.len(),
                converged: ok.iter().filter(|r| r.converged).count(),
                rmse: pooled(ok.iter().map(|r| (r.rmse, r.n_jaw + r.n_facial))),
                rmse_jaw: pooled(ok.iter().map(|r| (r.rmse_jaw, r.n_jaw))),
                rmse_facial: pooled(ok.iter().map(|r| (r.rmse_facial, r.n_facial))),
                rho_mean: mean(&rhos),
                rho_std: sample_std(&rhos),
                sealed_rho_mean: mean(&sealed).unwrap_or(f64::NAN),
                conditioning_mean: mean(&conds),
                stage2_not_worse: stage,
                scenario,
                camera,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<FrameRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl BenchReport {
    pub fn from_rows(rows: Vec<FrameRow>) -> Self {
        let aggregates = aggregate(&rows);
        BenchReport { rows, aggregates }
    }

    pub fn aggregate_for(&self, scenario: &str, camera: CameraKind) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.scenario == scenario && a.camera == camera)
    }

    pub fn frames_csv(&self) -> String {
        let mut s = format!("{FRAME_CSV_HEADER}\n");
        for r in &self.rows {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }

    pub fn parse_frames_csv(text: &str) -> Result<Vec<FrameRow>> {
        let mut lines = text.lines();
        if lines.next() != Some(FRAME_CSV_HEADER) {
            return Err(Error::Parse("unexpected frame CSV header".into()));
        }
        lines.filter(|l| !l.is_empty()).map(FrameRow::from_csv).collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "scenario,camera,frames,failed,converged,rmse,rmse_jaw,rmse_facial,rho_mean,rho_std,sealed_rho_mean,conditioning_mean,stage2_not_worse\n",
        );
        for a in &self.aggregates {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                a.scenario,
                a.camera,
                a.frames,
                a.failed,
                a.converged,
                a.rmse,
                a.rmse_jaw,
                a.rmse_facial,
                opt(a.rho_mean),
                opt(a.rho_std),
                a.sealed_rho_mean,
                opt(a.conditioning_mean),
                a.stage2_not_worse.map(|n| n.to_string()).unwrap_or_default(),
            );
        }
        s
    }

    /// Human-readable summary with 6-decimal numbers.
    pub fn markdown(&self) -> String {
        let f6 = |v: f64| format!("{v:.6}");
        let o6 = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
        let mut s = String::from("# Landmark fitting benchmark\n\n## Landmark RMSE (px)\n\n");
        s.push_str("| scenario | camera | frames | failed | converged | jaw line | facial | all |\n");
        s.push_str("|---|---|---:|---:|---:|---:|---:|---:|\n");
        for a in &self.aggregates {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                a.scenario,
                a.camera,
                a.frames,
                a.failed,
                a.converged,
                f6(a.rmse_jaw),
                f6(a.rmse_facial),
                f6(a.rmse)
            );
        }
        s.push_str("\n## Shrinkage estimates\n\n| scenario | fitted rho (mean ± std) | sealed rho (mean) | stage 2 <= stage 1 |\n|---|---|---:|---:|\n");
        for a in self.aggregates.iter().filter(|a| a.camera == CameraKind::Pseudo) {
            let _ = writeln!(
                s,
                "| {} | {} ± {} | {} | {}/{} |",
                a.scenario,
                o6(a.rho_mean),
                o6(a.rho_std),
                f6(a.sealed_rho_mean),
                a.stage2_not_worse.unwrap_or(0),
                a.frames - a.failed
            );
        }
        s.push_str("\n## Scale/depth conditioning (sigma_min / sigma_max, mean)\n\n| scenario | camera | columns | ratio |\n|---|---|---|---:|\n");
        for a in &self.aggregates {
            let cols = match a.camera {
                CameraKind::Pseudo => "S, rho",
                CameraKind::Perspective => "f, t_z",
                CameraKind::Orthographic => continue,
            };
            let _ = writeln!(s, "| {} | {} | {} | {} |", a.scenario, a.camera, cols, o6(a.conditioning_mean));
        }
        s
    }
}

fn region_rmse(problem: &FitProblem, r: &FitResult) -> Result<((f64, usize), (f64, usize))> {
    let state = r.state();
    Ok((
        landmark_rmse(problem, &state, Some(&[Region::Jawline]))?,
        landmark_rmse(problem, &state, Some(&[Region::Nose, Region::Other]))?,
    ))
}

/// Fits one frame with one camera model.
pub fn fit_frame(frame: &Frame, kind: CameraKind, solver: &SolverOptions) -> Result<(FitResult, Option<f64>)> {
    let problem = frame.problem_for(kind);
    match kind {
        CameraKind::Pseudo => {
            let r = staged_fit(&problem, solver)?;
            let cond = camera_condition_ratio(&problem, &r.state(), &[5, 6])?;
            Ok((r, Some(cond)))
        }
        CameraKind::Orthographic => Ok((solve(&problem, &initial_state(&problem)?, solver)?, None)),
        CameraKind::Perspective => {
            let r = fit_perspective_joint(&problem, &initial_state(&problem)?, solver)?;
            let cond = r.diagnostics.conditioning;
            Ok((r, cond))
        }
    }
}

fn frame_row(scenario: &str, frame: &Frame, kind: CameraKind, solver: &SolverOptions) -> FrameRow {
    let mut row = FrameRow {
        scenario: scenario.to_string(),
        frame: frame.truth.frame,
        camera: kind,
        error: String::new(),
        converged: false,
        termination: String::new(),
        iterations: 0,
        final_cost: f64::NAN,
        rmse: f64::NAN,
        rmse_jaw: f64::NAN,
        n_jaw: 0,
        rmse_facial: f64::NAN,
        n_facial: 0,
        rho: None,
        sealed_rho: frame.truth.sealed_rho,
        stage1_cost: None,
        conditioning: None,
    };
    let problem = frame.problem_for(kind);
    let outcome = fit_frame(frame, kind, solver).and_then(|(r, c)| Ok((region_rmse(&problem, &r)?, r, c)));
    match outcome {
        Ok((((jaw, nj), (fac, nf)), r, cond)) => {
            row.converged = r.converged;
            row.termination = r.termination_reason.name().to_string();
            row.iterations = r.iterations;
            row.final_cost = r.final_cost;
            row.rmse = r.landmark_rmse;
            row.rmse_jaw = jaw;
            row.n_jaw = nj;
            row.rmse_facial = fac;
            row.n_facial = nf;
            if kind == CameraKind::Pseudo {
                row.rho = Some(r.camera.params()[6]);
            }
            row.stage1_cost = r.diagnostics.stage1.map(|s| s.cost);
            row.conditioning = cond;
        }
        Err(e) => row.error = e.to_string(),
    }
    row
}

/// Generates every scenario from `model` and fits each frame with each
/// requested camera model. Frame failures become rows with an error message.
pub fn run_bench(scenarios: &[CaptureScenario], model: &MorphableModel, options: &BenchOptions) -> Result<BenchReport> {
    if scenarios.is_empty() {
        return Err(Error::invalid("no scenarios to run"));
    }
    if options.kinds.is_empty() {
        return Err(Error::invalid("no camera models requested"));
    }
    let captures = scenarios.iter().map(|s| generate_capture(s, model)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(&str, &Frame, CameraKind)> = captures
        .iter()
        .flat_map(|c| {
            options
                .kinds
                .iter()
                .flat_map(move |&k| c.frames.iter().map(move |f| (c.scenario.name.as_str(), f, k)))
        })
        .collect();
    let run = || -> Vec<FrameRow> {
        jobs.par_iter().map(|&(name, frame, kind)| frame_row(name, frame, kind, &options.solver)).collect()
    };
    let rows = match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    Ok(BenchReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::default_capture_model;

    fn small() -> BenchReport {
        let s = [CaptureScenario::closeup(3, 2), CaptureScenario::far(2, 2)];
        run_bench(&s, &default_capture_model(), &BenchOptions { threads: Some(2), ..Default::default() }).unwrap()
    }

    #[test]
    fn aggregates_recompute_exactly_from_csv() {
        let r = small();
        let rows = BenchReport::parse_frames_csv(&r.frames_csv()).unwrap();
        assert_eq!(aggregate(&rows), r.aggregates);
    }

    #[test]
    fn rows_are_ordered_and_complete() {
        let r = small();
        assert_eq!(r.rows.len(), 3 * 3 + 2 * 3);
        assert_eq!(r.aggregates.len(), 6);
        assert_eq!((r.rows[0].camera, r.rows[0].frame), (CameraKind::Pseudo, 0));
        assert!(r.rows.iter().all(|row| row.ok()), "{:?}", r.rows.iter().find(|x| !x.ok()));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let s = [CaptureScenario::closeup(3, 4)];
        let m = default_capture_model();
        let a = run_bench(&s, &m, &BenchOptions { threads: Some(1), ..Default::default() }).unwrap();
        let b = run_bench(&s, &m, &BenchOptions { threads: Some(3), ..Default::default() }).unwrap();
        assert_eq!(a.frames_csv(), b.frames_csv());
        assert_eq!(a.markdown(), b.markdown());
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let m = default_capture_model();
        assert!(run_bench(&[], &m, &BenchOptions::default()).is_err());
        let o = BenchOptions { kinds: vec![], ..Default::default() };
        assert!(run_bench(&[CaptureScenario::closeup(1, 0)], &m, &o).is_err());
    }

    #[test]
    fn pooled_rmse_weights_by_count() {
        assert!((pooled([(1.0, 1), (3.0, 3)].into_iter()) - (28.0f64 / 4.0).sqrt()).abs() < 1e-15);
        assert!(pooled(std::iter::empty()).is_nan());
    }

    #[test]
    fn failed_frames_are_excluded_from_aggregates() {
        let mut rows = small().rows;
        rows[0].error = "boom".into();
        rows[0].rmse = 1e9;
        let agg = aggregate(&rows);
        assert_eq!(agg[0].failed, 1);
        assert!(agg[0].rmse < 1e6);
    }

    #[test]
    fn markdown_uses_six_decimals() {
        let md = small().markdown();
        assert!(md.contains("| closeup | pseudo |"));
        assert!(md.contains(" ± "));
    }
}
