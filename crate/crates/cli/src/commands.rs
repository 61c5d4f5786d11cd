use std::path::{Path, PathBuf};
use std::process::ExitCode;

use pseudocam::camera::{project, rho_from_perspective, rho_prior_analytic, CameraKind, CaptureGeometry};
use pseudocam::fitting::{fit_perspective_joint, initial_state, solve, staged_fit_from, FitResult};
use pseudocam::harness::{
    ambiguity_scan, default_capture_model, generate_capture, run_bench, write_capture, BenchOptions,
    CaptureScenario, ScanGrid,
};
use pseudocam::io;
use pseudocam::masking::{smirk_guidance_stages, GuidanceParams};
use pseudocam::Error;

use crate::{BenchArgs, Cli, Command, ConvertRhoArgs, FitArgs, MaskArgs, ProjectArgs, ScanArgs};

pub const EXIT_INPUT: u8 = 1;
pub const EXIT_NUMERIC: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_numeric_domain() { EXIT_NUMERIC } else { EXIT_INPUT };
        CliError { code, message: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Error::from(e).into()
    }
}

fn input_error(message: impl Into<String>) -> CliError {
    CliError { code: EXIT_INPUT, message: message.into() }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> CliResult<ExitCode> {
    match &cli.command {
        Command::Project(a) => cmd_project(a),
        Command::ConvertRho(a) => cmd_convert_rho(a),
        Command::Fit(a) => cmd_fit(a, cli.verbose),
        Command::Bench(a) => cmd_bench(a, cli.seed, cli.verbose),
        Command::Mask(a) => cmd_mask(a, cli.seed),
        Command::AmbiguityScan(a) => cmd_scan(a),
    }
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(input_error(format!("{}: no such file", path.display())))
    }
}

fn cmd_project(a: &ProjectArgs) -> CliResult<ExitCode> {
    require_file(&a.camera)?;
    require_file(&a.points)?;
    let camera = io::read_camera(&a.camera)?;
    let points = io::read_points(&a.points)?;
    let csv = io::uv_to_csv(&project(&camera, &points)?);
    match &a.out {
        Some(p) => io::write_atomic(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn positive(name: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(input_error(format!("{name} must be positive, got {v}")))
    }
}

fn cmd_convert_rho(a: &ConvertRhoArgs) -> CliResult<ExitCode> {
    let rho = match (&a.geometry, a.scale, a.f, a.vz) {
        (Some(path), None, None, None) => {
            require_file(path)?;
            let text = std::fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
            let g: CaptureGeometry = serde_json::from_str(&text)
                .map_err(|e| input_error(format!("{}: {}", path.display(), Error::from(e))))?;
            g.validate()?;
            rho_prior_analytic(&g)
        }
        (None, Some(s), Some(f), Some(vz)) => {
            rho_from_perspective(positive("S", s)?, positive("f", f)?, positive("vz", vz)?)
        }
        _ => return Err(input_error("give either --S, --f and --vz, or --geometry")),
    };
    println!("{rho:.6}");
    Ok(ExitCode::SUCCESS)
}

fn fit(loaded: &io::LoadedProblem, staged: bool) -> pseudocam::Result<FitResult> {
    let problem = &loaded.problem;
    let init = match &loaded.initial {
        Some(s) => s.clone(),
        None => initial_state(problem)?,
    };
    if staged {
        return staged_fit_from(problem, &init, &loaded.options);
    }
    if problem.camera_kind == CameraKind::Perspective && problem.active.scale && problem.active.depth {
        return fit_perspective_joint(problem, &init, &loaded.options);
    }
    solve(problem, &init, &loaded.options)
}

fn default_cost_log(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "result".into());
    out.with_file_name(format!("{stem}.costs.csv"))
}

fn cmd_fit(a: &FitArgs, verbose: u8) -> CliResult<ExitCode> {
    require_file(&a.problem)?;
    let loaded = io::read_problem(&a.problem)?;
    if a.staged && loaded.problem.camera_kind != CameraKind::Pseudo {
        return Err(input_error("--staged needs a pseudo-perspective problem"));
    }
    let result = fit(&loaded, a.staged)?;
    io::write_atomic(&a.out, io::result_to_json(&result)?)?;
    let log = a.cost_log.clone().unwrap_or_else(|| default_cost_log(&a.out));
    io::write_atomic(&log, io::cost_log_csv(&result.diagnostics.cost_log))?;

    if let Some(s1) = &result.diagnostics.stage1 {
        println!(
            "stage 1 rmse {:.6}  stage 2 rmse {:.6}  ratio {:.6}",
            s1.landmark_rmse,
            result.landmark_rmse,
            result.landmark_rmse / s1.landmark_rmse
        );
    }
    println!(
        "{} after {} iterations: cost {:.6e}, rmse {:.6}",
        result.termination_reason.name(),
        result.iterations,
        result.final_cost,
        result.landmark_rmse
    );
    if verbose > 0 {
        eprintln!("wrote {} and {}", a.out.display(), log.display());
    }
    Ok(if result.converged { ExitCode::SUCCESS } else { ExitCode::from(EXIT_NOT_CONVERGED) })
}

fn read_scenarios(path: &Path) -> CliResult<Vec<CaptureScenario>> {
    require_file(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {}", path.display(), Error::from(e))))?;
    let parsed = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|s| vec![s])
    };
    parsed.map_err(|e| input_error(format!("{}: {}", path.display(), Error::from(e))))
}

fn cmd_bench(a: &BenchArgs, seed: u64, verbose: u8) -> CliResult<ExitCode> {
    let mut scenarios = Vec::new();
    for p in &a.scenario {
        scenarios.extend(read_scenarios(p)?);
    }
    if scenarios.is_empty() {
        return Err(input_error("no scenarios given"));
    }
    for s in &mut scenarios {
        s.seed = s.seed.wrapping_add(seed);
    }
    let model = match &a.model {
        Some(p) => {
            require_file(p)?;
            io::read_model(p)?
        }
        None => default_capture_model(),
    };
    std::fs::create_dir_all(&a.out_dir).map_err(|e| input_error(format!("{}: {e}", a.out_dir.display())))?;
    if a.emit_problems {
        for s in &scenarios {
            write_capture(&a.out_dir.join("problems"), &generate_capture(s, &model)?)?;
        }
    }
    let options = BenchOptions { threads: a.threads, ..Default::default() };
    let report = run_bench(&scenarios, &model, &options)?;
    io::write_atomic(a.out_dir.join("frames.csv"), report.frames_csv())?;
    io::write_atomic(a.out_dir.join("summary.csv"), report.summary_csv())?;
    let md = report.markdown();
    io::write_atomic(a.out_dir.join("report.md"), &md)?;
    print!("{md}");
    let failed = report.rows.iter().filter(|r| !r.ok()).count();
    if verbose > 0 {
        eprintln!("{} fits, {} failed; reports in {}", report.rows.len(), failed, a.out_dir.display());
    }
    if failed > 0 && failed == report.rows.len() {
        return Err(CliError { code: EXIT_NUMERIC, message: "every frame failed to fit".into() });
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_mask(a: &MaskArgs, seed: u64) -> CliResult<ExitCode> {
    require_file(&a.landmarks)?;
    let landmarks = io::read_uv(&a.landmarks)?;
    let nose = a
        .nose
        .iter()
        .map(|&i| {
            landmarks
                .get(i)
                .copied()
                .ok_or_else(|| input_error(format!("nose index {i} out of range ({} landmarks)", landmarks.len())))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let params = GuidanceParams { contour_radius_frac: a.contour_frac, nose_radius_frac: a.nose_frac, keep_fraction: a.keep, seed };
    let stages = smirk_guidance_stages(&landmarks, &nose, a.width, a.height, &params)?;
    io::write_atomic(&a.out, io::mask_to_pgm(&stages.guidance))?;
    if let Some(p) = &a.rle {
        io::write_atomic(p, io::mask_to_rle_json(&stages.guidance)?)?;
    }
    println!(
        "guidance {} of {} eligible pixels (face {}, contour radius {:.6}, nose radius {:.6})",
        stages.guidance.popcount(),
        stages.eligible.popcount(),
        stages.face.popcount(),
        stages.contour_radius,
        stages.nose_radius
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_scan(a: &ScanArgs) -> CliResult<ExitCode> {
    require_file(&a.problem)?;
    let loaded = io::read_problem(&a.problem)?;
    if loaded.problem.camera_kind != CameraKind::Perspective {
        return Err(input_error("ambiguity scans need a perspective problem"));
    }
    let center = match &loaded.initial {
        Some(s) => s.clone(),
        None => fit(&loaded, false)?.state(),
    };
    let scan = ambiguity_scan(&loaded.problem, &center, &ScanGrid { n: a.n, log_half_span: a.span })?;
    io::write_atomic(&a.out, scan.to_csv())?;
    if let Some(p) = &a.gnuplot {
        io::write_atomic(p, scan.to_gnuplot())?;
    }
    println!(
        "flatness ratio {:.6} (diagonal variation {:.6e}, f-axis variation {:.6e})",
        scan.flatness_ratio, scan.diagonal_variation, scan.f_axis_variation
    );
    Ok(ExitCode::SUCCESS)
}
