//! Command-line front door: subcommand dispatch, output files and manifest.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::analysis::{
    contraction_experiment, estimate_constants, galerkin_convergence, hypothesis_audit, ito_order_study,
    moment_bound_study, monotonicity_suite, operator_identity_suite, Constants,
};
use crate::config::{parse_config, RunConfig};
use crate::dynamics::{CoefficientSpec, MarkSpace};
use crate::integrator::{par_map, simulate_path, LevelSpec, SimConfig};
use crate::noise::{compensated_integral_check, sample_noise};
use crate::report::{build_string, ReportDocument, VerificationReport};
use crate::rng::stream_id;
use crate::spectral::{ahat_symbol, Norm, WaveVector};
use crate::{Error, Result};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "secondgrade", version, about = "Stochastic second-grade fluid: Galerkin simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate `run.paths` paths and write their trajectories.
    Simulate(CommonArgs),
    /// Run the verification suite.
    Verify(CommonArgs),
    /// Moment bound across the configured Galerkin levels.
    Moments(CommonArgs),
    /// Twin runs from `initial` and `initial_b` on shared noise.
    Contraction(CommonArgs),
    /// Cross-level strong error across the configured levels.
    Convergence(CommonArgs),
    /// Unforced single-run decay checked mode by mode against the exact solution.
    Decay(CommonArgs),
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key (`key=value` or `section.key=value`).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed (TOML integers are signed, hence the range).
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

/// Subcommands of [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Simulate,
    Verify,
    Moments,
    Contraction,
    Convergence,
    Decay,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Verify => "verify",
            Task::Moments => "moments",
            Task::Contraction => "contraction",
            Task::Convergence => "convergence",
            Task::Decay => "decay",
        }
    }
}

/// Collects output files and their digests.
struct Output {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, data).map_err(|e| Error::io(&path, e))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(data)),
            bytes: data.len(),
        });
        Ok(())
    }

    fn finish(mut self, task: Task, cfg: &RunConfig) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            subcommand: &'static str,
            seed: u64,
            build: String,
            config: &'a RunConfig,
            files: &'a [FileEntry],
            /// Not covered by any digest.
            created_unix: u64,
        }
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let m = Manifest {
            subcommand: task.name(),
            seed: cfg.run.seed,
            build: build_string(),
            config: cfg,
            files: &self.files,
            created_unix,
        };
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&m)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Result of one subcommand.
#[derive(Debug)]
pub struct Outcome {
    pub document: ReportDocument,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.document.passed() {
            EXIT_PASS
        } else {
            EXIT_ASSERTION
        }
    }
}

/// Executes `task` and writes its outputs into `out`.
pub fn run(cfg: &RunConfig, task: Task, out: &Path) -> Result<Outcome> {
    let mut output = Output::new(out)?;
    output.write("config.toml", cfg.to_toml().as_bytes())?;
    let reports = match task {
        Task::Simulate => simulate(cfg, &mut output)?,
        Task::Verify => verify(cfg)?,
        Task::Moments => vec![moment_bound_study(
            &cfg.base_sim_config()?,
            &cfg.levels(),
            cfg.run.paths.max(2),
            cfg.run.seed,
            cfg.run.workers,
            cfg.tolerances.moment_spread,
        )?],
        Task::Contraction => contraction(cfg)?,
        Task::Convergence => vec![galerkin_convergence(
            &cfg.base_sim_config()?,
            &cfg.levels(),
            cfg.run.paths,
            cfg.run.seed,
            cfg.run.workers,
        )?],
        Task::Decay => vec![decay(cfg, &mut output)?],
    };
    let document = ReportDocument::new(cfg.run.seed, reports);
    output.write("report.json", document.to_json().as_bytes())?;
    output.finish(task, cfg)?;
    Ok(Outcome { document })
}

fn simulate(cfg: &RunConfig, output: &mut Output) -> Result<Vec<VerificationReport>> {
    let sim = cfg.base_sim_config()?;
    let prep = sim.prepare()?;
    let trajs = par_map(cfg.run.workers, cfg.run.paths, |p| {
        let noise = sample_noise(sim.horizon, prep.steps, &prep.model.marks, cfg.run.seed, stream_id(p, 0, 0))?;
        simulate_path(&prep, &noise)
    })?;
    let modes: Vec<WaveVector> = if cfg.time.mode_columns {
        prep.level.canonical_modes().collect()
    } else {
        Vec::new()
    };
    let mut rep = VerificationReport::new("simulate", "Galerkin trajectories").with_paths(cfg.run.paths);
    for (p, t) in trajs.iter().enumerate() {
        output.write(&format!("trajectory_{p:04}.csv"), t.to_csv(&modes).as_bytes())?;
        let last = t.points.last().expect("initial point");
        rep.record(format!("path{p}.final_norm_W"), last.norm_w);
        rep.record(format!("path{p}.sup_norm_W"), t.sup_norm(Norm::W));
        rep.record(format!("path{p}.jumps"), t.jumps.len() as f64);
        if let Some(tc) = t.truncated_at {
            rep.record(format!("path{p}.truncated_at"), tc);
        }
    }
    Ok(vec![rep])
}

fn constants(cfg: &RunConfig) -> Result<(Option<VerificationReport>, Constants)> {
    let level_cutoff = cfg.level().build(cfg.domain.alpha)?.cutoff();
    match (cfg.constants.ca, cfg.constants.cb) {
        (Some(ca), Some(cb)) => Ok((None, Constants { ca, cb })),
        (ca, cb) => {
            let mut cutoffs: Vec<usize> = vec![(level_cutoff / 2).max(1), level_cutoff];
            cutoffs.dedup();
            let (rep, measured) = estimate_constants(cfg.domain.alpha, &cutoffs, cfg.run.samples.min(200), cfg.run.seed)?;
            Ok((
                Some(rep),
                Constants {
                    ca: ca.unwrap_or(measured.ca),
                    cb: cb.unwrap_or(measured.cb),
                },
            ))
        }
    }
}

fn contraction(cfg: &RunConfig) -> Result<Vec<VerificationReport>> {
    let a = cfg.base_sim_config()?;
    let b = cfg.sim_config(cfg.level(), cfg.initial_b.as_ref().unwrap_or(&cfg.initial))?;
    let (crep, c) = constants(cfg)?;
    let mut out: Vec<VerificationReport> = crep.into_iter().collect();
    out.push(contraction_experiment(&a, &b, cfg.run.paths, cfg.run.seed, cfg.run.workers, c)?);
    Ok(out)
}

fn verify(cfg: &RunConfig) -> Result<Vec<VerificationReport>> {
    let alpha = cfg.domain.alpha;
    let samples = cfg.run.samples;
    let seed = cfg.run.seed;
    let mut reports = vec![operator_identity_suite(alpha, &cfg.tolerances.identity_cutoffs, samples, seed, cfg.tolerances.identity)?];
    let (crep, c) = constants(cfg)?;
    reports.extend(crep);
    let sim = cfg.base_sim_config()?;
    let prep = sim.prepare()?;
    let cutoff = prep.level.cutoff();
    reports.push(hypothesis_audit(alpha, cutoff, sim.horizon, samples, seed)?);
    reports.push(monotonicity_suite(&prep, cutoff, samples, seed, c, 0.5)?);
    reports.push(ito_order_study(&sim, seed, 3, cfg.tolerances.order_ratio, 1e-10)?);
    let marks = if prep.model.marks.is_empty() {
        MarkSpace::new(vec![1.0])?
    } else {
        prep.model.marks.clone()
    };
    let integrand: Vec<f64> = (0..marks.len()).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
    reports.push(compensated_integral_check(sim.horizon, &marks, &integrand, 100 * samples, seed)?);
    reports.push(decay_check(alpha, cfg.domain.mu, cfg.tolerances.decay)?);
    Ok(reports)
}

/// Unforced configuration derived from `cfg`: zero coefficients, no marks,
/// per-mode CSV columns.
pub fn decay_preset(cfg: &RunConfig) -> Result<SimConfig> {
    let mut c = cfg.clone();
    c.coefficients = CoefficientSpec::default();
    c.marks.weights.clear();
    c.base_sim_config()
}

fn decay(cfg: &RunConfig, output: &mut Output) -> Result<VerificationReport> {
    let sim = decay_preset(cfg)?;
    let prep = sim.prepare()?;
    let noise = sample_noise(sim.horizon, prep.steps, &MarkSpace::empty(), cfg.run.seed, stream_id(0, 0, 0))?;
    let traj = simulate_path(&prep, &noise)?;
    let modes: Vec<WaveVector> = prep.level.canonical_modes().collect();
    let csv = traj.to_csv(&modes);
    output.write("trajectory.csv", csv.as_bytes())?;
    let last: Vec<f64> = csv
        .lines()
        .last()
        .expect("csv has rows")
        .split(',')
        .map(|x| x.parse().map_err(|_| Error::invalid(format!("unparsable csv value {x}"))))
        .collect::<Result<_>>()?;
    let t = last[0];
    let mut rep = VerificationReport::new("decay", "exact per-mode decay of the unforced linear dynamics");
    let mut worst = 0.0f64;
    for (i, &k) in modes.iter().enumerate() {
        let a0 = prep.initial.get(k);
        let f = (-sim.mu * ahat_symbol(k.norm_sq(), sim.alpha) * t).exp();
        worst = worst.max((last[4 + 2 * i] - a0.re * f).abs()).max((last[5 + 2 * i] - a0.im * f).abs());
    }
    rep.record("final_time", t);
    rep.check_le("max_mode_error", worst, cfg.tolerances.decay);
    if modes.len() > 1 && prep.initial.nnz() > 1 {
        rep.note("several active modes: the nonlinearity may transfer energy between them");
    }
    Ok(rep)
}

/// `e_(1,0)` with `F = σ = f = 0` over `T = 2`: exponential Euler must hit
/// `e^{−μβT}` and explicit Euler must converge at first order.
pub fn decay_check(alpha: f64, mu: f64, tol: f64) -> Result<VerificationReport> {
    let mut rep = VerificationReport::new("decay_check", "single-mode exponential decay");
    let k = WaveVector::new(1, 0)?;
    let exact = (-mu * ahat_symbol(1.0, alpha) * 2.0).exp();
    let final_amp = |scheme: &str, dt: f64| -> Result<f64> {
        let mut sim = SimConfig::basic(alpha, mu, LevelSpec::Modes(8), 2.0, dt);
        sim.scheme = scheme.into();
        sim.record_every = usize::MAX;
        sim.initial = crate::spectral::SpectralField::single_mode(1, alpha, k, num_complex::Complex64::new(1.0, 0.0))?;
        let prep = sim.prepare()?;
        let noise = crate::noise::deterministic_path(2.0, prep.steps, vec![])?;
        let traj = simulate_path(&prep, &noise)?;
        Ok(traj.final_state().expect("final state kept").get(k).re)
    };
    rep.check_le("exp_euler.error", (final_amp("exp_euler", 0.01)? - exact).abs(), tol);
    let e1 = (final_amp("euler", 0.01)? - exact).abs();
    let e2 = (final_amp("euler", 0.005)? - exact).abs();
    rep.check_ge("euler.error_ratio", e1 / e2, 1.9);
    Ok(rep)
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    let (task, args) = match cli.command {
        Command::Simulate(a) => (Task::Simulate, a),
        Command::Verify(a) => (Task::Verify, a),
        Command::Moments(a) => (Task::Moments, a),
        Command::Contraction(a) => (Task::Contraction, a),
        Command::Convergence(a) => (Task::Convergence, a),
        Command::Decay(a) => (Task::Decay, a),
    };
    let mut overrides = args.set.clone();
    if let Some(s) = args.seed {
        overrides.push(format!("run.seed={s}"));
    }
    if let Some(w) = args.workers {
        overrides.push(format!("run.workers={w}"));
    }
    let cfg = match parse_config(args.config.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match run(&cfg, task, &args.out) {
        Ok(outcome) => {
            for r in &outcome.document.reports {
                eprintln!("{}: {:?}", r.name, r.status);
                for f in &r.failures {
                    eprintln!("  {f}");
                }
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::Parse { .. } | Error::UnknownName { .. } => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            }
        }
    }
}
