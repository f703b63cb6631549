//! Batch front end for the tomography library: ground states, training sweeps,
//! reconstruction, gradient checks and figure-reproduction presets.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use vqt_core::circuit::{AnsatzSpec, RotationScheme};
use vqt_core::spinchain::{ground_state_lanczos, GroundState, XxzParams};
use vqt_core::statevector::{reduced_density, stream_seed, StateVector};
use vqt_core::tomography::{
    gradient_parameter_shift, loss, reconstruct, reconstruction_fidelity, EstimatorConfig, GradientRoute, Objective, Reconstruction,
    Target, TargetKind, TrainRecord,
};
use vqt_core::Error;

pub use config::RunConfig;
use config::{Format, TargetSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_CAPACITY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "vqt", version, about = "Variational-circuit quantum state tomography")]
pub struct Cli {
    /// JSON configuration; keys not given keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides output.directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed (overrides seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lanczos ground state of the XXZ chain for every configured Delta.
    GroundState,
    /// Train circuits over the Delta x depth x seed sweep.
    Train,
    /// Rebuild the learned state from a run summary on the MPS simulator.
    Reconstruct {
        /// Run summary JSON written by `train`.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Compare parameter-shift gradients with central finite differences.
    Gradcheck,
    /// Run one of the preset figure-reproduction sweeps.
    #[command(name = "reproduce-fig3")]
    ReproduceFig3 {
        #[arg(value_enum)]
        panel: Panel,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Panel {
    A,
    B,
    C,
    D,
}

impl Panel {
    fn name(self) -> &'static str {
        match self {
            Panel::A => "a",
            Panel::B => "b",
            Panel::C => "c",
            Panel::D => "d",
        }
    }

    /// Preset configuration; a user config is overlaid on top of it.
    pub fn preset(self) -> Value {
        let seq = |n: usize| (1..=n).collect::<Vec<_>>();
        match self {
            Panel::A => json!({
                "spinchain": {"L": 15, "Delta": [0.5, 1.0, 1.5]},
                "ansatz": {"depth": seq(20), "rotation_scheme": "ry_only", "mode": "pure"},
                "estimator": {"mode": "exact"},
                "training": {"optimizer": "lbfgs", "iterations": 500, "seeds": [0, 1, 2]}
            }),
            Panel::B => json!({
                "spinchain": {"L": 15, "Delta": [0.5, 1.0, 1.5]},
                "ansatz": {"depth": [20], "rotation_scheme": "ry_only", "mode": "pure"},
                "estimator": {"mode": "exact"},
                "training": {"optimizer": "lbfgs", "iterations": 1000, "seeds": [0]}
            }),
            Panel::C => json!({
                "spinchain": {"L": 6, "Delta": [0.5, 1.0, 1.5]},
                "ansatz": {"depth": seq(8), "rotation_scheme": "ry_only", "mode": "pure"},
                "estimator": {"mode": "swap_test", "shots": 10000},
                "training": {"optimizer": "adam", "iterations": 100, "seeds": [0, 1, 2, 3, 4], "loss_tolerance": 0.0}
            }),
            Panel::D => json!({
                "spinchain": {"L": 6, "Delta": [0.5, 1.0, 1.5]},
                "ansatz": {"depth": [5], "rotation_scheme": "ry_only", "mode": "pure"},
                "estimator": {"mode": "swap_test", "shots": 10000},
                "training": {"optimizer": "adam", "iterations": 100, "seeds": [0], "loss_tolerance": 0.0}
            }),
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_CONFIG,
        Error::Convergence { .. } => EXIT_CONVERGENCE,
        Error::Capacity(_) => EXIT_CAPACITY,
        _ => EXIT_FAILURE,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Resolves the configuration for `cli`: preset (if any), then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut value = match &cli.command {
        Command::ReproduceFig3 { panel } => panel.preset(),
        _ => json!({}),
    };
    if let Some(path) = &cli.config {
        config::merge(&mut value, config::read_value(path)?);
    }
    let mut cfg = config::parse(value)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.directory = out.clone();
    }
    if let Command::ReproduceFig3 { panel } = &cli.command {
        if cli.out.is_none() {
            cfg.output.directory = cfg.output.directory.join(format!("fig3{}", panel.name()));
        }
    }
    if let Command::Reconstruct { summary: Some(s) } = &cli.command {
        cfg.reconstruction.summary = Some(s.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<(), Error> {
    let cfg = resolve_config(cli)?;
    let work = || match &cli.command {
        Command::GroundState => cmd_ground_state(&cfg).map(|_| ()),
        Command::Train => cmd_train(&cfg).map(|_| ()),
        Command::Reconstruct { .. } => cmd_reconstruct(&cfg).map(|_| ()),
        Command::Gradcheck => cmd_gradcheck(&cfg).map(|_| ()),
        Command::ReproduceFig3 { panel } => cmd_reproduce_fig3(&cfg, *panel).map(|_| ()),
    };
    match cli.jobs {
        Some(0) => Err(Error::Config { path: "--jobs".into(), message: "must be at least 1".into() }),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Error::Usage(e.to_string()))?.install(work),
        None => work(),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<(), Error> {
    write_file(path, serde_json::to_string_pretty(value)? + "\n")
}

fn unix_time() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn delta_label(delta: f64) -> String {
    format!("{delta}")
}

pub fn solve_chain(cfg: &RunConfig, delta: f64) -> Result<GroundState, Error> {
    let s = &cfg.spinchain;
    let params = XxzParams::new(s.l, s.j, delta, s.h)?;
    ground_state_lanczos(&params, s.lanczos_tol, s.lanczos_max_restarts, 0)
}

fn ground_state_meta(gs: &GroundState) -> Value {
    json!({
        "L": gs.params.l,
        "J": gs.params.j,
        "Delta": gs.params.delta,
        "h": gs.params.h,
        "energy": gs.energy,
        "residual": gs.residual,
        "next_energy": gs.next_energy,
        "gap": gs.gap(),
        "degenerate": gs.degenerate,
    })
}

/// Writes `<stem>.bin` and `<stem>.json` per Delta; returns the ground states.
pub fn cmd_ground_state(cfg: &RunConfig) -> Result<Vec<GroundState>, Error> {
    let dir = &cfg.output.directory;
    let mut out = Vec::new();
    for &delta in &cfg.spinchain.delta {
        let gs = solve_chain(cfg, delta)?;
        let stem = format!("ground_state_L{}_Delta{}", cfg.spinchain.l, delta_label(delta));
        if cfg.output.wants(Format::Binary) {
            let mut buf = Vec::new();
            gs.vector.write_binary(&mut buf)?;
            write_file(&dir.join(format!("{stem}.bin")), buf)?;
        }
        if cfg.output.wants(Format::Json) {
            let mut meta = ground_state_meta(&gs);
            meta["config"] = serde_json::to_value(cfg)?;
            write_json(&dir.join(format!("{stem}.json")), &meta)?;
        }
        if gs.degenerate {
            eprintln!("warning: Delta = {delta}: ground space is degenerate; the target is one state in it");
        }
        println!("Delta={} E0={:.12} residual={:.3e} degenerate={}", delta_label(delta), gs.energy, gs.residual, gs.degenerate);
        out.push(gs);
    }
    Ok(out)
}

/// One tomography target of a sweep.
#[derive(Debug, Clone)]
pub struct TargetCase {
    pub label: String,
    pub delta: Option<f64>,
    pub target: Target,
    pub meta: Value,
}

fn keep_count(cfg: &RunConfig, n: usize) -> Result<usize, Error> {
    let keep = cfg.target.keep.unwrap_or((n / 2).max(1));
    if keep > n {
        return Err(Error::Config { path: "target.keep".into(), message: format!("{keep} exceeds the {n}-qubit source state") });
    }
    Ok(keep)
}

fn make_target(cfg: &RunConfig, state: StateVector) -> Result<Target, Error> {
    match cfg.ansatz.mode {
        TargetKind::Pure => Ok(Target::Pure(state)),
        TargetKind::Mixed => {
            let keep = keep_count(cfg, state.n_qubits())?;
            Ok(Target::Mixed(reduced_density(&state, keep)?))
        }
    }
}

pub fn build_targets(cfg: &RunConfig) -> Result<Vec<TargetCase>, Error> {
    match cfg.target.source {
        TargetSource::GroundState => cfg
            .spinchain
            .delta
            .iter()
            .map(|&delta| {
                let gs = solve_chain(cfg, delta)?;
                if gs.degenerate {
                    eprintln!("warning: Delta = {delta}: ground space is degenerate; the target is one state in it");
                }
                let meta = ground_state_meta(&gs);
                Ok(TargetCase { label: delta_label(delta), delta: Some(delta), target: make_target(cfg, gs.vector)?, meta })
            })
            .collect(),
        TargetSource::File => {
            let path = cfg.target.path.as_ref().expect("validated");
            let state = StateVector::read_binary(fs::File::open(path)?)?;
            let meta = json!({"file": path, "n_qubits": state.n_qubits()});
            Ok(vec![TargetCase { label: "file".into(), delta: None, target: make_target(cfg, state)?, meta }])
        }
    }
}

/// Seed of one sweep cell, independent of scheduling.
pub fn job_seed(master: u64, delta_index: usize, depth: usize, seed: u64) -> u64 {
    stream_seed(stream_seed(stream_seed(master, delta_index as u64), depth as u64), seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub config: RunConfig,
    #[serde(rename = "Delta")]
    pub delta: Option<f64>,
    pub label: String,
    pub depth: usize,
    pub seed: u64,
    pub job_seed: u64,
    pub ansatz: AnsatzSpec,
    pub mode: TargetKind,
    pub target: Value,
    pub theta: Vec<f64>,
    pub termination: vqt_core::tomography::Termination,
    pub iterations: usize,
    pub evaluations: u64,
    pub final_loss: f64,
    pub final_fidelity: f64,
    pub lambda_max: Option<f64>,
    #[serde(rename = "iters_to_loss_0.05")]
    pub iters_to_loss_005: Option<usize>,
    #[serde(rename = "iters_to_loss_0.01")]
    pub iters_to_loss_001: Option<usize>,
    pub wall_time_s: f64,
    pub finished_unix: f64,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub summary: CellSummary,
    pub record: TrainRecord,
    pub stem: String,
}

pub fn ansatz_for(cfg: &RunConfig, target: &Target, depth: usize) -> AnsatzSpec {
    AnsatzSpec::new(target.circuit_width(), depth, cfg.ansatz.rotation_scheme)
}

fn run_cell(cfg: &RunConfig, case: &TargetCase, delta_index: usize, depth: usize, seed: u64) -> Result<CellResult, Error> {
    let js = job_seed(cfg.seed, delta_index, depth, seed);
    let spec = ansatz_for(cfg, &case.target, depth);
    let est = cfg.estimator_config(stream_seed(js, 2));
    let tc = cfg.train_config(stream_seed(js, 1));
    let start = Instant::now();
    let record = vqt_core::tomography::train(&case.target, &spec, &est, &tc)?;
    let wall = start.elapsed().as_secs_f64();
    let last = record.final_row().expect("training logs at least one row");
    let summary = CellSummary {
        config: cfg.clone(),
        delta: case.delta,
        label: case.label.clone(),
        depth,
        seed,
        job_seed: js,
        ansatz: spec,
        mode: case.target.kind(),
        target: case.meta.clone(),
        theta: record.final_theta.clone(),
        termination: record.termination,
        iterations: last.iteration,
        evaluations: last.evals,
        final_loss: last.exact_loss,
        final_fidelity: last.exact_fidelity,
        lambda_max: record.lambda_max,
        iters_to_loss_005: record.iterations_to_loss(0.05),
        iters_to_loss_001: record.iterations_to_loss(0.01),
        wall_time_s: wall,
        finished_unix: unix_time(),
    };
    let stem = format!("train_Delta{}_d{}_s{}", case.label, depth, seed);
    eprintln!(
        "Delta={} d={} seed={}: fidelity={:.6} loss={:.3e} iterations={} ({:?}, {:.1}s)",
        case.label, depth, seed, summary.final_fidelity, summary.final_loss, summary.iterations, summary.termination, wall
    );
    if let Some(l) = record.lambda_max {
        eprintln!("  mixed target: fidelity ceiling lambda_max = {l:.6}");
    }
    Ok(CellResult { summary, record, stem })
}

fn opt_usize(v: Option<usize>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn aggregate_csv(cells: &[CellResult]) -> String {
    let mut out = String::from("Delta,depth,seed,final_fidelity,iters_to_loss_0.05,iters_to_loss_0.01\n");
    for c in cells {
        let s = &c.summary;
        writeln!(
            out,
            "{},{},{},{:e},{},{}",
            s.label,
            s.depth,
            s.seed,
            s.final_fidelity,
            opt_usize(s.iters_to_loss_005),
            opt_usize(s.iters_to_loss_001)
        )
        .expect("writing to a String");
    }
    out
}

/// Highest final fidelity per (Delta, depth), first seed winning ties.
pub fn best_per_cell(cells: &[CellResult]) -> Vec<&CellResult> {
    let mut best: Vec<&CellResult> = Vec::new();
    for c in cells {
        match best.iter_mut().find(|b| b.summary.label == c.summary.label && b.summary.depth == c.summary.depth) {
            Some(b) if c.summary.final_fidelity > b.summary.final_fidelity => *b = c,
            Some(_) => {}
            None => best.push(c),
        }
    }
    best
}

fn best_csv(cells: &[CellResult]) -> String {
    let mut out = String::from("Delta,depth,best_seed,final_fidelity\n");
    for c in best_per_cell(cells) {
        writeln!(out, "{},{},{},{:e}", c.summary.label, c.summary.depth, c.summary.seed, c.summary.final_fidelity)
            .expect("writing to a String");
    }
    out
}

/// Runs every (Delta, depth, seed) cell and writes per-cell and aggregate files.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<CellResult>, Error> {
    let cases = build_targets(cfg)?;
    let mut jobs = Vec::new();
    for (di, case) in cases.iter().enumerate() {
        for &depth in &cfg.ansatz.depth {
            for &seed in &cfg.training.seeds {
                jobs.push((di, case, depth, seed));
            }
        }
    }
    let cells: Vec<CellResult> =
        jobs.par_iter().map(|&(di, case, depth, seed)| run_cell(cfg, case, di, depth, seed)).collect::<Result<_, Error>>()?;
    let dir = &cfg.output.directory;
    for c in &cells {
        if cfg.output.wants(Format::Csv) {
            write_file(&dir.join(format!("{}.csv", c.stem)), c.record.to_csv())?;
        }
        if cfg.output.wants(Format::Json) {
            write_json(&dir.join(format!("{}.json", c.stem)), &serde_json::to_value(&c.summary)?)?;
        }
    }
    if cfg.output.wants(Format::Csv) {
        write_file(&dir.join("aggregate.csv"), aggregate_csv(&cells))?;
        write_file(&dir.join("best.csv"), best_csv(&cells))?;
    }
    Ok(cells)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructReport {
    pub summary: PathBuf,
    pub n_sites: usize,
    pub depth: usize,
    pub mode: TargetKind,
    pub bond_dimension: usize,
    pub bond_bound: usize,
    pub fidelity: f64,
    pub training_fidelity: f64,
    pub dense_written: bool,
}

/// `2^ceil(d/2)`, saturating.
pub fn bond_bound(depth: usize) -> usize {
    1usize.checked_shl(depth.div_ceil(2) as u32).unwrap_or(usize::MAX)
}

pub fn cmd_reconstruct(cfg: &RunConfig) -> Result<ReconstructReport, Error> {
    let Some(path) = cfg.reconstruction.summary.clone() else {
        return Err(Error::Config {
            path: "reconstruction.summary".into(),
            message: "a run summary is required (or pass --summary)".into(),
        });
    };
    let text = fs::read_to_string(&path)?;
    let summary: CellSummary =
        serde_json::from_str(&text).map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })?;
    let spec = summary.ansatz;
    let rc = &cfg.reconstruction;
    let rec = reconstruct(&summary.theta, &spec, summary.mode, rc.chi_max, rc.svd_tol)?;

    // Recreate the target exactly as the training run saw it.
    let mut tcfg = summary.config.clone();
    if let Some(d) = summary.delta {
        tcfg.spinchain.delta = vec![d];
    }
    let case = build_targets(&tcfg)?.into_iter().next().expect("one target per Delta");
    let fidelity = reconstruction_fidelity(&rec, &case.target)?;

    let bound = bond_bound(spec.depth);
    let chi = rec.bond_dimension();
    println!("max bond dimension {chi} (bound 2^ceil(d/2) = {bound})");
    println!("fidelity vs target {fidelity:.9} (training {:.9})", summary.final_fidelity);

    let dir = &cfg.output.directory;
    let stem = path.file_stem().map_or_else(|| "reconstruction".into(), |s| s.to_string_lossy().into_owned());
    let width = match &rec {
        Reconstruction::Pure(m) => m.n_sites(),
        Reconstruction::Mixed(o) => o.n_sites(),
    };
    match &rec {
        Reconstruction::Pure(m) => write_file(&dir.join(format!("{stem}.mps.json")), m.to_json()?)?,
        Reconstruction::Mixed(o) => write_file(&dir.join(format!("{stem}.mpo.json")), o.to_json()?)?,
    }
    let dense_written = if width > rc.dense_max_qubits {
        eprintln!("warning: {width} qubits exceed reconstruction.dense_max_qubits = {}; dense dump skipped", rc.dense_max_qubits);
        false
    } else {
        match &rec {
            Reconstruction::Pure(m) => {
                let mut buf = Vec::new();
                m.to_statevector()?.write_binary(&mut buf)?;
                write_file(&dir.join(format!("{stem}.state.bin")), buf)?;
            }
            Reconstruction::Mixed(o) => {
                let dense = o.to_dense()?;
                let d = dense.dim();
                let rows: Vec<Vec<[f64; 2]>> = (0..d).map(|i| (0..d).map(|j| [dense.get(i, j).re, dense.get(i, j).im]).collect()).collect();
                write_json(&dir.join(format!("{stem}.density.json")), &json!({"n_qubits": o.n_sites(), "entries": rows}))?;
            }
        }
        true
    };
    let report = ReconstructReport {
        summary: path.clone(),
        n_sites: width,
        depth: spec.depth,
        mode: summary.mode,
        bond_dimension: chi,
        bond_bound: bound,
        fidelity,
        training_fidelity: summary.final_fidelity,
        dense_written,
    };
    write_json(&dir.join(format!("{stem}.reconstruct.json")), &serde_json::to_value(&report)?)?;
    if chi > bound {
        return Err(Error::Consistency(format!("bond dimension {chi} exceeds 2^ceil(d/2) = {bound}")));
    }
    if (fidelity - summary.final_fidelity).abs() > 1e-3 {
        return Err(Error::Consistency(format!(
            "reconstructed fidelity {fidelity} differs from the training value {} by more than 1e-3",
            summary.final_fidelity
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckTrial {
    pub n_qubits: usize,
    pub depth: usize,
    pub parameters: usize,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub trials: Vec<GradcheckTrial>,
    pub max_deviation: f64,
    /// Deviation of the single-qubit RY gradient from the closed form.
    pub single_qubit_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn exact_loss(theta: &[f64], obj: &Objective<'_>, kind: TargetKind) -> Result<f64, Error> {
    loss(obj.exact_fidelity(theta)?, kind)
}

/// Largest per-component gap between the parameter-shift gradient and central differences.
pub fn gradient_deviation(theta: &[f64], spec: &AnsatzSpec, target: &Target, step: f64) -> Result<f64, Error> {
    let est = EstimatorConfig::exact();
    let shift = gradient_parameter_shift(theta, spec, target, &est, 0)?;
    let adjoint = Objective::new(spec, target, &est)?.with_route(GradientRoute::Adjoint).evaluate(theta, 0)?.grad;
    let obj = Objective::new(spec, target, &est)?;
    let mut dev = 0.0f64;
    for i in 0..theta.len() {
        let mut p = theta.to_vec();
        let mut m = theta.to_vec();
        p[i] += step;
        m[i] -= step;
        let fd = (exact_loss(&p, &obj, target.kind())? - exact_loss(&m, &obj, target.kind())?) / (2.0 * step);
        dev = dev.max((shift[i] - fd).abs()).max((adjoint[i] - fd).abs());
    }
    Ok(dev)
}

fn random_state(n: usize, rng: &mut impl Rng) -> Result<StateVector, Error> {
    let amps = (0..1usize << n).map(|_| vqt_core::Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    StateVector::normalized(amps)
}

pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<GradcheckReport, Error> {
    use rand::SeedableRng;
    let g = &cfg.gradcheck;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trials = Vec::with_capacity(g.trials);
    for t in 0..g.trials {
        let n = rng.random_range(1..=g.max_qubits);
        let depth = rng.random_range(0..=g.max_depth);
        let scheme = if t % 2 == 0 { RotationScheme::AlternatingXy } else { RotationScheme::RyOnly };
        let spec = AnsatzSpec::new(n, depth, scheme);
        let target = Target::Pure(random_state(n, &mut rng)?);
        let theta: Vec<f64> = (0..spec.parameter_count()).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
        let dev = gradient_deviation(&theta, &spec, &target, g.step)?;
        println!("trial {t:>3}: n={n} d={depth} P={} max deviation {dev:.3e}", theta.len());
        trials.push(GradcheckTrial { n_qubits: n, depth, parameters: theta.len(), max_deviation: dev });
    }

    // Single qubit, RY(θ) against |0>: dF/dθ = -sin(θ)/2.
    let spec = AnsatzSpec::new(1, 0, RotationScheme::RyOnly);
    let target = Target::Pure(StateVector::basis_state(1, 0)?);
    let obj = Objective::new(&spec, &target, &EstimatorConfig::exact())?.with_route(GradientRoute::Shifted);
    let mut single = 0.0f64;
    for k in 0..16 {
        let th = -3.0 + 0.4 * k as f64;
        let ev = obj.evaluate(&[th], 0)?;
        single = single.max((ev.fidelity_grad[0] + th.sin() / 2.0).abs());
    }
    println!("single-qubit RY closed form: max deviation {single:.3e}");

    let max_deviation = trials.iter().fold(0.0f64, |m, t| m.max(t.max_deviation));
    let passed = max_deviation <= g.tolerance && single <= 1e-10;
    println!("max deviation {max_deviation:.3e} (tolerance {:.1e}): {}", g.tolerance, if passed { "PASS" } else { "FAIL" });
    let report = GradcheckReport { trials, max_deviation, single_qubit_deviation: single, tolerance: g.tolerance, passed };
    if cfg.output.wants(Format::Json) {
        write_json(&cfg.output.directory.join("gradcheck.json"), &serde_json::to_value(&report)?)?;
    }
    if !passed {
        return Err(Error::Consistency(format!("gradient deviation {max_deviation:e} exceeds {:e}", g.tolerance)));
    }
    Ok(report)
}

/// Iteration counts to reach loss 0.05 and 0.01 reported for L = 15, d = 20.
pub const REFERENCE_ITERATIONS: [(f64, usize, usize); 3] = [(0.5, 50, 240), (1.0, 44, 209), (1.5, 34, 206)];

fn reference_for(delta: Option<f64>) -> Option<(usize, usize)> {
    let d = delta?;
    REFERENCE_ITERATIONS.iter().find(|r| (r.0 - d).abs() < 1e-12).map(|r| (r.1, r.2))
}

pub fn cmd_reproduce_fig3(cfg: &RunConfig, panel: Panel) -> Result<Vec<CellResult>, Error> {
    let cells = cmd_train(cfg)?;
    let dir = &cfg.output.directory;
    match panel {
        Panel::A | Panel::C => {
            println!("Delta,depth,best_seed,final_fidelity");
            for c in best_per_cell(&cells) {
                println!("{},{},{},{:.6}", c.summary.label, c.summary.depth, c.summary.seed, c.summary.final_fidelity);
            }
        }
        Panel::B => {
            let mut out = String::from("Delta,seed,iters_to_loss_0.05,reference_0.05,iters_to_loss_0.01,reference_0.01\n");
            for c in &cells {
                let s = &c.summary;
                let (r5, r1) = reference_for(s.delta).map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
                writeln!(out, "{},{},{},{},{},{}", s.label, s.seed, opt_usize(s.iters_to_loss_005), r5, opt_usize(s.iters_to_loss_001), r1)
                    .expect("writing to a String");
            }
            print!("{out}");
            if cfg.output.wants(Format::Csv) {
                write_file(&dir.join("iterations_vs_reference.csv"), out)?;
            }
        }
        Panel::D => {
            let mut out = String::from("Delta,seed,iter,loss,exact_loss,abs_diff\n");
            for c in &cells {
                for r in &c.record.rows {
                    writeln!(
                        out,
                        "{},{},{},{:e},{:e},{:e}",
                        c.summary.label,
                        c.summary.seed,
                        r.iteration,
                        r.loss,
                        r.exact_loss,
                        (r.loss - r.exact_loss).abs()
                    )
                    .expect("writing to a String");
                }
            }
            if cfg.output.wants(Format::Csv) {
                write_file(&dir.join("loss_gap.csv"), out)?;
            }
            for c in &cells {
                println!("Delta={} seed={} final exact fidelity {:.6}", c.summary.label, c.summary.seed, c.summary.final_fidelity);
            }
        }
    }
    Ok(cells)
}
