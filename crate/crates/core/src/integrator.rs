//! Jump-adapted time integration of the Galerkin system.
//!
//! Between jumps the continuous part is advanced by a registered [`Scheme`];
//! at each jump time the jump is applied to the left limit. Every increment
//! is projected onto the Galerkin level, so trajectories stay on it exactly.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    build_coefficients, compensator, eval_drift_masked, eval_f_hat, eval_sigma_hat, kernels,
    CoefficientSpec, DomainParams, MarkSpace, Model,
};
use crate::noise::{steps_for, BrownianIncrement, Jump, NoisePath};
use crate::registry::Registry;
use crate::spectral::{ahat_symbol, project_level, GalerkinLevel, Norm, SpectralField, WaveVector};
use crate::{Error, Result};

/// How the Galerkin level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelSpec {
    /// The `n` lowest modes by eigenvalue (`n` counts `k` and `−k`).
    Modes(usize),
    /// Every mode of the square box `max(|k1|,|k2|) ≤ N`.
    Cutoff(usize),
}

impl LevelSpec {
    pub fn build(self, alpha: f64) -> Result<GalerkinLevel> {
        match self {
            LevelSpec::Modes(n) => GalerkinLevel::by_count(n, alpha),
            LevelSpec::Cutoff(n) => GalerkinLevel::full_box(n, alpha),
        }
    }
}

/// Full description of one Galerkin run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub alpha: f64,
    pub mu: f64,
    pub level: LevelSpec,
    pub coefficients: CoefficientSpec,
    pub marks: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub scheme: String,
    pub kernel: String,
    pub record_every: usize,
    /// Stop when `|u|_W` exceeds this value.
    pub w_cap: Option<f64>,
    pub initial: SpectralField,
}

impl SimConfig {
    /// Zero-coefficient configuration with a single-mode initial state.
    pub fn basic(alpha: f64, mu: f64, level: LevelSpec, horizon: f64, dt: f64) -> Self {
        SimConfig {
            alpha,
            mu,
            level,
            coefficients: CoefficientSpec::default(),
            marks: Vec::new(),
            horizon,
            dt,
            scheme: "exp_euler".into(),
            kernel: "auto".into(),
            record_every: 1,
            w_cap: None,
            initial: SpectralField::zeros(1, alpha),
        }
    }

    pub fn prepare(&self) -> Result<Prepared> {
        let params = DomainParams::new(self.alpha, self.mu)?;
        let level = self.level.build(self.alpha)?;
        let steps = steps_for(self.horizon, self.dt)?;
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be positive"));
        }
        if let Some(cap) = self.w_cap {
            if !(cap > 0.0) {
                return Err(Error::invalid(format!("w_cap must be positive, got {cap}")));
            }
        }
        if self.initial.alpha() != self.alpha {
            return Err(Error::ParameterMismatch("initial state α differs from the domain α".into()));
        }
        if !self.initial.is_finite() {
            return Err(Error::invalid("initial state is not finite"));
        }
        let marks = MarkSpace::new(self.marks.clone())?;
        let coeffs = build_coefficients(&self.coefficients, self.alpha, &marks)?;
        let kernel = kernels().get(&self.kernel)?;
        let model = Model::new(params, coeffs, marks).with_kernel(kernel);
        let scheme = schemes().get(&self.scheme)?;
        let initial = project_level(&self.initial, &level).with_cutoff(level.cutoff());
        Ok(Prepared {
            cfg: self.clone(),
            level,
            model,
            scheme,
            steps,
            initial,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_json().as_bytes()).into()
    }
}

/// A validated configuration with its runtime objects.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cfg: SimConfig,
    pub level: GalerkinLevel,
    pub model: Model,
    pub scheme: Arc<dyn Scheme>,
    pub steps: usize,
    /// `Π_n ξ` on the level's cutoff.
    pub initial: SpectralField,
}

/// Time-stepping scheme for the continuous part.
pub trait Scheme: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// Advances `u` over `[t, t + h]` with Brownian increment `dw`.
    fn step(&self, model: &Model, level: &GalerkinLevel, u: &SpectralField, t: f64, h: f64, dw: f64) -> Result<SpectralField>;

    /// Deterministic interpolant of the scheme inside a step, `s ∈ [0, h]`,
    /// used for quadrature of time integrals along a trajectory.
    fn flow(&self, model: &Model, u: &SpectralField, s: f64) -> SpectralField;
}

/// `Π_n` of the drift (with the compensator subtracted) and of `σ̂`.
fn projected_terms(model: &Model, level: &GalerkinLevel, u: &SpectralField, t: f64) -> Result<(SpectralField, SpectralField, SpectralField)> {
    let d = eval_drift_masked(model, u, t, Some(level.mask()))?;
    let mut rest = d.nonlinear;
    rest.axpy(1.0, &d.forcing);
    rest.axpy(-1.0, &compensator(model, u, t)?);
    let mut visc = d.viscous;
    let mut sig = eval_sigma_hat(model, u, t)?;
    level.project_in_place(&mut rest);
    level.project_in_place(&mut visc);
    level.project_in_place(&mut sig);
    Ok((visc, rest, sig))
}

/// Explicit Euler–Maruyama.
#[derive(Debug)]
pub struct EulerMaruyama;

impl Scheme for EulerMaruyama {
    fn name(&self) -> &'static str {
        "euler"
    }

    fn step(&self, model: &Model, level: &GalerkinLevel, u: &SpectralField, t: f64, h: f64, dw: f64) -> Result<SpectralField> {
        let (visc, rest, sig) = projected_terms(model, level, u, t)?;
        let mut out = u.clone();
        out.axpy(h, &visc);
        out.axpy(h, &rest);
        out.axpy(dw, &sig);
        Ok(out)
    }

    fn flow(&self, _model: &Model, u: &SpectralField, _s: f64) -> SpectralField {
        u.clone()
    }
}

/// Exponential (Lawson) Euler: the viscous part is integrated exactly per
/// mode, the rest explicitly.
#[derive(Debug)]
pub struct ExponentialEuler;

fn decay(model: &Model, u: &SpectralField, s: f64) -> SpectralField {
    let (alpha, mu) = (model.params.alpha, model.params.mu);
    u.map_multiplier(|k2| (-mu * ahat_symbol(k2, alpha) * s).exp())
}

impl Scheme for ExponentialEuler {
    fn name(&self) -> &'static str {
        "exp_euler"
    }

    fn step(&self, model: &Model, level: &GalerkinLevel, u: &SpectralField, t: f64, h: f64, dw: f64) -> Result<SpectralField> {
        let (_, rest, sig) = projected_terms(model, level, u, t)?;
        let mut out = u.clone();
        out.axpy(h, &rest);
        out.axpy(dw, &sig);
        Ok(decay(model, &out, h))
    }

    fn flow(&self, model: &Model, u: &SpectralField, s: f64) -> SpectralField {
        decay(model, u, s)
    }
}

/// Registry of the shipped schemes.
pub fn schemes() -> &'static Registry<dyn Scheme> {
    static REG: OnceLock<Registry<dyn Scheme>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn Scheme> = Registry::new("scheme");
        r.register("euler", Arc::new(EulerMaruyama));
        r.register("exp_euler", Arc::new(ExponentialEuler));
        r
    })
}

/// One continuous step with blow-up detection.
pub fn step_continuous(prep: &Prepared, u: &SpectralField, t: f64, h: f64, dw: f64) -> Result<SpectralField> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step length must be positive, got {h}")));
    }
    let out = prep.scheme.step(&prep.model, &prep.level, u, t, h, dw)?;
    if !out.is_finite() {
        return Err(Error::BlowUp {
            time: t + h,
            last_finite: Box::new(u.clone()),
        });
    }
    Ok(out)
}

/// `u(t) = u(t−) + Π_n f̂(u(t−), t, z)`.
pub fn apply_jump(prep: &Prepared, u_minus: &SpectralField, t: f64, mark: usize) -> Result<SpectralField> {
    let mut f = eval_f_hat(&prep.model, u_minus, t, mark)?;
    prep.level.project_in_place(&mut f);
    let out = u_minus + &f;
    if !out.is_finite() {
        return Err(Error::BlowUp {
            time: t,
            last_finite: Box::new(u_minus.clone()),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub norm_v: f64,
    pub norm_w: f64,
    /// Jumps applied up to and including `t`.
    pub jumps: usize,
    /// Index of the uniform grid point, when `t` is one.
    pub grid: Option<usize>,
    pub state: Option<SpectralField>,
}

/// A jump together with the left limit it acted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: usize,
    pub pre: SpectralField,
}

/// Recorded path: one point per integration piece (plus the initial point),
/// with post-jump values at jump times.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub jumps: Vec<JumpEvent>,
    /// Time at which the W-norm cap stopped the run.
    pub truncated_at: Option<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&SpectralField> {
        self.points.last().and_then(|p| p.state.as_ref())
    }

    pub fn has_full_states(&self) -> bool {
        self.points.iter().all(|p| p.state.is_some())
    }

    pub fn sup_norm(&self, which: Norm) -> f64 {
        self.points
            .iter()
            .map(|p| match which {
                Norm::V => p.norm_v,
                Norm::W => p.norm_w,
                other => p.state.as_ref().map_or(0.0, |s| s.norm(other)),
            })
            .fold(0.0, f64::max)
    }

    /// Points carrying a state at uniform grid times, keyed by grid index.
    pub fn grid_states(&self) -> impl Iterator<Item = (usize, &TrajectoryPoint)> {
        self.points
            .iter()
            .filter_map(|p| p.grid.filter(|_| p.state.is_some()).map(|g| (g, p)))
    }

    /// CSV export: `t,norm_V,norm_W,jumps`, plus real and imaginary parts of
    /// the listed modes. With mode columns only points carrying a state are
    /// written.
    pub fn to_csv(&self, modes: &[WaveVector]) -> String {
        let mut out = String::from("t,norm_V,norm_W,jumps");
        for k in modes {
            out.push_str(&format!(",re_{}_{},im_{}_{}", k.k1, k.k2, k.k1, k.k2));
        }
        out.push('\n');
        for p in &self.points {
            if !modes.is_empty() && p.state.is_none() {
                continue;
            }
            out.push_str(&format!("{:e},{:e},{:e},{}", p.t, p.norm_v, p.norm_w, p.jumps));
            if let Some(s) = &p.state {
                for &k in modes {
                    let a = s.get(k);
                    out.push_str(&format!(",{:e},{:e}", a.re, a.im));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Resumable integration of one path.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    prep: &'a Prepared,
    pieces: Vec<BrownianIncrement>,
    jumps: Vec<Jump>,
    noise_meta: NoiseMeta,
    piece: usize,
    next_jump: usize,
    u: SpectralField,
    t: f64,
    cells_done: usize,
    jumps_done: usize,
    stopped: bool,
    traj: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct NoiseMeta {
    horizon: f64,
    steps: usize,
    refinement: u64,
    seed: u64,
    stream_id: u64,
}

fn point(u: &SpectralField, t: f64, jumps: usize, grid: Option<usize>, keep: bool) -> TrajectoryPoint {
    TrajectoryPoint {
        t,
        norm_v: u.norm(Norm::V),
        norm_w: u.norm(Norm::W),
        jumps,
        grid,
        state: keep.then(|| u.clone()),
    }
}

impl<'a> Simulation<'a> {
    pub fn new(prep: &'a Prepared, noise: &NoisePath) -> Result<Self> {
        if noise.horizon < prep.cfg.horizon || noise.steps != prep.steps {
            return Err(Error::ParameterMismatch(format!(
                "noise grid (T={}, {} steps) does not match the run (T={}, {} steps)",
                noise.horizon, noise.steps, prep.cfg.horizon, prep.steps
            )));
        }
        if let Some(j) = noise.jumps.iter().find(|j| j.mark >= prep.model.marks.len()) {
            return Err(Error::invalid(format!("noise carries unknown mark {}", j.mark)));
        }
        let u = prep.initial.clone();
        let mut traj = Trajectory::default();
        traj.points.push(point(&u, 0.0, 0, Some(0), true));
        Ok(Simulation {
            prep,
            pieces: noise.brownian.clone(),
            jumps: noise.jumps.clone(),
            noise_meta: NoiseMeta {
                horizon: noise.horizon,
                steps: noise.steps,
                refinement: noise.refinement,
                seed: noise.seed,
                stream_id: noise.stream_id,
            },
            piece: 0,
            next_jump: 0,
            u,
            t: 0.0,
            cells_done: 0,
            jumps_done: 0,
            stopped: false,
            traj,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &SpectralField {
        &self.u
    }

    pub fn is_finished(&self) -> bool {
        self.stopped || self.piece >= self.pieces.len()
    }

    /// Integrates one piece of the jump-adapted grid, then applies the jumps
    /// at its right end. Returns `false` once the run is over.
    pub fn advance(&mut self) -> Result<bool> {
        if self.is_finished() {
            return Ok(false);
        }
        let p = self.pieces[self.piece];
        self.u = step_continuous(self.prep, &self.u, p.t0, p.t1 - p.t0, p.dw)?;
        self.t = p.t1;
        self.piece += 1;
        while self.next_jump < self.jumps.len() && self.jumps[self.next_jump].time <= p.t1 {
            let j = self.jumps[self.next_jump];
            let post = apply_jump(self.prep, &self.u, j.time, j.mark)?;
            self.traj.jumps.push(JumpEvent {
                time: j.time,
                mark: j.mark,
                pre: std::mem::replace(&mut self.u, post),
            });
            self.next_jump += 1;
            self.jumps_done += 1;
        }
        let grid = if p.closes_cell {
            self.cells_done += 1;
            Some(self.cells_done)
        } else {
            None
        };
        let last = self.piece == self.pieces.len();
        let keep = self.prep.cfg.record_every == 1
            || last
            || grid.is_some_and(|g| g % self.prep.cfg.record_every == 0);
        let pt = point(&self.u, self.t, self.jumps_done, grid, keep);
        let capped = self.prep.cfg.w_cap.is_some_and(|cap| pt.norm_w > cap);
        self.traj.points.push(pt);
        if capped {
            self.traj.truncated_at = Some(self.t);
            if let Some(last) = self.traj.points.last_mut() {
                last.state.get_or_insert_with(|| self.u.clone());
            }
            self.stopped = true;
        }
        Ok(!self.is_finished())
    }

    /// Advances until the time reaches `t_stop` (or the run ends).
    pub fn run_until(&mut self, t_stop: f64) -> Result<()> {
        while !self.is_finished() && self.pieces[self.piece].t1 <= t_stop {
            self.advance()?;
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<Trajectory> {
        while self.advance()? {}
        Ok(self.traj)
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn into_trajectory(self) -> Trajectory {
        self.traj
    }

    /// Serialises the resumable state.
    pub fn checkpoint(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(CHECKPOINT_MAGIC);
        w.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let cfg = self.prep.cfg.to_json();
        w.extend_from_slice(&Sha256::digest(cfg.as_bytes()));
        w.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
        w.extend_from_slice(cfg.as_bytes());
        put_f64(&mut w, self.t);
        put_u64(&mut w, self.cells_done as u64);
        put_u64(&mut w, self.jumps_done as u64);
        w.push(self.stopped as u8);
        put_u64(&mut w, self.u.cutoff() as u64);
        put_u64(&mut w, self.u.amps().len() as u64);
        for (k, _) in self.u.iter() {
            w.extend_from_slice(&k.k1.to_le_bytes());
            w.extend_from_slice(&k.k2.to_le_bytes());
        }
        for a in self.u.amps() {
            put_f64(&mut w, a.re);
            put_f64(&mut w, a.im);
        }
        let m = self.noise_meta;
        put_f64(&mut w, m.horizon);
        put_u64(&mut w, m.steps as u64);
        put_u64(&mut w, m.refinement);
        put_u64(&mut w, m.seed);
        put_u64(&mut w, m.stream_id);
        let rest = &self.pieces[self.piece..];
        put_u64(&mut w, rest.len() as u64);
        for p in rest {
            put_f64(&mut w, p.t0);
            put_f64(&mut w, p.t1);
            put_f64(&mut w, p.dw);
            put_u64(&mut w, p.cell as u64);
            w.push(p.closes_cell as u8);
        }
        let jumps = &self.jumps[self.next_jump..];
        put_u64(&mut w, jumps.len() as u64);
        for j in jumps {
            put_f64(&mut w, j.time);
            put_u64(&mut w, j.mark as u64);
        }
        let sum = Sha256::digest(&w);
        w.extend_from_slice(&sum);
        w
    }

    /// Rebuilds a simulation from [`Simulation::checkpoint`] bytes. The
    /// trajectory of the restored run starts at the checkpoint time.
    pub fn restore(prep: &'a Prepared, bytes: &[u8]) -> Result<Self> {
        let ck = Checkpoint::decode(bytes)?;
        if ck.config_digest != prep.cfg.digest() {
            return Err(Error::ParameterMismatch(
                "checkpoint was written for a different configuration".into(),
            ));
        }
        let u = ck.state;
        if u.cutoff() != prep.level.cutoff() {
            return Err(Error::CorruptCheckpoint("state cutoff does not match the level".into()));
        }
        let mut traj = Trajectory::default();
        traj.points.push(point(&u, ck.time, ck.jumps_done, None, true));
        Ok(Simulation {
            prep,
            pieces: ck.pieces,
            jumps: ck.jumps,
            noise_meta: ck.noise,
            piece: 0,
            next_jump: 0,
            u,
            t: ck.time,
            cells_done: ck.cells_done,
            jumps_done: ck.jumps_done,
            stopped: ck.stopped,
            traj,
        })
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"SGFCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_f64(w: &mut Vec<u8>, x: f64) {
    w.extend_from_slice(&x.to_le_bytes());
}

fn put_u64(w: &mut Vec<u8>, x: u64) {
    w.extend_from_slice(&x.to_le_bytes());
}

struct Reader<'b> {
    buf: &'b [u8],
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        if self.buf.len() < n {
            return Err(Error::CorruptCheckpoint("truncated".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn len(&mut self, max: usize) -> Result<usize> {
        let n = self.u64()?;
        if n > max as u64 {
            return Err(Error::CorruptCheckpoint(format!("length {n} exceeds the payload")));
        }
        Ok(n as usize)
    }
}

struct Checkpoint {
    config_digest: [u8; 32],
    time: f64,
    cells_done: usize,
    jumps_done: usize,
    stopped: bool,
    state: SpectralField,
    noise: NoiseMeta,
    pieces: Vec<BrownianIncrement>,
    jumps: Vec<Jump>,
}

impl Checkpoint {
    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::VersionMismatch("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch(format!(
                "checkpoint format {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        if bytes.len() < 12 + 32 {
            return Err(Error::CorruptCheckpoint("truncated".into()));
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
        }
        let mut r = Reader { buf: &body[12..] };
        let config_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let cfg_len = r.len(body.len())?;
        let cfg_json = r.take(cfg_len)?;
        if Sha256::digest(cfg_json).as_slice() != config_digest {
            return Err(Error::CorruptCheckpoint("config digest mismatch".into()));
        }
        let cfg: SimConfig = serde_json::from_slice(cfg_json)?;
        let time = r.f64()?;
        let cells_done = r.u64()? as usize;
        let jumps_done = r.u64()? as usize;
        let stopped = r.u8()? != 0;
        let cutoff = r.u64()? as usize;
        let count = r.len(body.len())?;
        let mut modes = Vec::with_capacity(count);
        for _ in 0..count {
            let k1 = r.i32()?;
            let k2 = r.i32()?;
            modes.push(WaveVector::new(k1, k2).map_err(|_| Error::CorruptCheckpoint("zero mode".into()))?);
        }
        let mut state = SpectralField::zeros(cutoff, cfg.alpha);
        if state.amps().len() != count {
            return Err(Error::CorruptCheckpoint("mode count does not match the cutoff".into()));
        }
        for k in modes {
            let re = r.f64()?;
            let im = r.f64()?;
            state
                .set(k, num_complex::Complex64::new(re, im))
                .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        }
        let noise = NoiseMeta {
            horizon: r.f64()?,
            steps: r.u64()? as usize,
            refinement: r.u64()?,
            seed: r.u64()?,
            stream_id: r.u64()?,
        };
        let n = r.len(body.len())?;
        let mut pieces = Vec::with_capacity(n);
        for _ in 0..n {
            pieces.push(BrownianIncrement {
                t0: r.f64()?,
                t1: r.f64()?,
                dw: r.f64()?,
                cell: r.u64()? as usize,
                closes_cell: r.u8()? != 0,
            });
        }
        let n = r.len(body.len())?;
        let mut jumps = Vec::with_capacity(n);
        for _ in 0..n {
            jumps.push(Jump {
                time: r.f64()?,
                mark: r.u64()? as usize,
            });
        }
        if !r.buf.is_empty() {
            return Err(Error::CorruptCheckpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            config_digest,
            time,
            cells_done,
            jumps_done,
            stopped,
            state,
            noise,
            pieces,
            jumps,
        })
    }
}

pub fn write_checkpoint(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<u8>> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

/// Integrates one path.
pub fn simulate_path(prep: &Prepared, noise: &NoisePath) -> Result<Trajectory> {
    Simulation::new(prep, noise)?.run()
}

/// Integrates two configurations on the same noise. They must agree on
/// everything except the initial state and the Galerkin level.
pub fn simulate_coupled(a: &Prepared, b: &Prepared, noise: &NoisePath) -> Result<(Trajectory, Trajectory)> {
    let (ca, cb) = (&a.cfg, &b.cfg);
    if ca.alpha != cb.alpha
        || ca.mu != cb.mu
        || ca.horizon != cb.horizon
        || ca.dt != cb.dt
        || ca.scheme != cb.scheme
        || ca.coefficients != cb.coefficients
        || ca.marks != cb.marks
    {
        return Err(Error::invalid(
            "coupled runs must share α, μ, T, dt, scheme, coefficients and marks",
        ));
    }
    Ok((simulate_path(a, noise)?, simulate_path(b, noise)?))
}

/// `|u − v|` at every common point, embedding both states in the larger box.
pub fn difference_norms(a: &Trajectory, b: &Trajectory, which: Norm) -> Result<Vec<(f64, f64)>> {
    if a.points.len() != b.points.len() {
        return Err(Error::InsufficientData("trajectories have different lengths".into()));
    }
    a.points
        .iter()
        .zip(&b.points)
        .filter_map(|(p, q)| match (&p.state, &q.state) {
            (Some(x), Some(y)) => Some((p.t, x, y)),
            _ => None,
        })
        .map(|(t, x, y)| {
            let n = x.cutoff().max(y.cutoff());
            Ok((t, (&x.with_cutoff(n) - &y.with_cutoff(n)).norm(which)))
        })
        .collect()
}

/// Runs `f` on `0..count` in a pool of `workers` threads (0 = all cores),
/// collecting results in index order.
pub fn par_map<T, F>(workers: usize, count: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| (0..count).into_par_iter().map(&f).collect())
}

/// Ensemble of independent paths of one configuration.
pub fn simulate_ensemble(prep: &Prepared, paths: u64, seed: u64, level_tag: u16, workers: usize) -> Result<Vec<Trajectory>> {
    par_map(workers, paths, |p| {
        let noise = crate::noise::sample_noise(
            prep.cfg.horizon,
            prep.steps,
            &prep.model.marks,
            seed,
            crate::rng::stream_id(p, level_tag, 0),
        )?;
        simulate_path(prep, &noise)
    })
}
