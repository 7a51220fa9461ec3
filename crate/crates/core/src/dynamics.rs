//! Nonlinearity, drift, and the coefficient triple `(F, σ, f)`.
//!
//! `B̂(u, v) = (I+αA)⁻¹ Π (curl(u − αΔu) × v)` is evaluated by one of two
//! interchangeable product kernels: an exact triad sum over wavevector pairs,
//! or a pseudo-spectral transform with full zero padding. Both are exact on
//! retained modes up to rounding; the triad kernel also preserves exact zeros,
//! which keeps single-mode runs bit-identical across levels.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::registry::Registry;
use crate::report::VerificationReport;
use crate::rng::{counter_normals, derive};
use crate::spectral::{
    apply_ahat, apply_inv_stokes, box_index, box_mode, box_modes, pairing, random_field,
    GalerkinLevel, Norm, SpectralField, WaveVector,
};
use crate::{Error, Result};

/// `√2 · 2π`, the normalisation of a unit complex mode.
const MODE_NORM: f64 = std::f64::consts::SQRT_2 * 2.0 * PI;

/// Strategy for the bilinear term `B̂(u, v)`.
pub trait ProductKernel: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    /// `B̂(u, v)` on the common cutoff of `u` and `v`. When `mask` is given,
    /// only modes with a `true` flag (indexed like the output field) are
    /// computed; the rest are zero.
    fn bhat(&self, u: &SpectralField, v: &SpectralField, mask: Option<&[bool]>) -> SpectralField;
}

/// Own-orientation amplitude `ã_k`: `a_k` for canonical `k`, `−conj(a_{−k})`
/// otherwise, so that `u = Σ_{all k} ã_k k⊥/|k| e^{ik·x} / (√2·2π)`.
#[inline]
fn tilde(u: &SpectralField, k: WaveVector) -> Complex64 {
    if k.is_canonical() {
        u.get(k)
    } else {
        -u.get(k)
    }
}

/// Exact triad sum
/// `B̂_p = −i / (√2·2π |p| (1+α|p|²)) Σ_{k+m=p} |k|(1+α|k|²) (k⊥·m)/|m| ã_k b̃_m`.
#[derive(Debug, Default)]
pub struct TriadKernel;

impl ProductKernel for TriadKernel {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn bhat(&self, u: &SpectralField, v: &SpectralField, mask: Option<&[bool]>) -> SpectralField {
        let n = u.cutoff();
        let alpha = u.alpha();
        let mut out = SpectralField::zeros(n, alpha);
        let mut left = Vec::new();
        for (k, a) in u.iter().filter(|(_, a)| a.norm_sqr() != 0.0) {
            let s = k.norm_sq();
            let w = k.norm() * (1.0 + alpha * s);
            left.push((k, a * w));
            left.push((-k, -a.conj() * w));
        }
        if left.is_empty() || v.nnz() == 0 {
            return out;
        }
        let amps = out.amps_mut();
        for (i, slot) in amps.iter_mut().enumerate() {
            if mask.is_some_and(|m| !m[i]) {
                continue;
            }
            let p = box_mode(i, n);
            let mut acc = Complex64::new(0.0, 0.0);
            for &(k, wa) in &left {
                let m = WaveVector {
                    k1: p.k1 - k.k1,
                    k2: p.k2 - k.k2,
                };
                if m.is_zero() || m.max_abs() > n {
                    continue;
                }
                let cross = k.perp_dot(m);
                if cross == 0 {
                    continue;
                }
                let b = tilde(v, m);
                acc += wa * b * (cross as f64 / m.norm());
            }
            let s = p.norm_sq();
            let scale = 1.0 / (MODE_NORM * p.norm() * (1.0 + alpha * s));
            *slot = Complex64::new(acc.im * scale, -acc.re * scale);
        }
        out
    }
}

/// Pseudo-spectral evaluation on an `M × M` grid with `M ≥ 4N + 1`, so the
/// quadratic product is alias-free on every mode up to `2N`.
type FftPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

#[derive(Default)]
pub struct PseudoSpectralKernel {
    plans: Mutex<HashMap<usize, FftPair>>,
}

impl Debug for PseudoSpectralKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PseudoSpectralKernel")
    }
}

/// Smallest 5-smooth integer `≥ n`.
fn smooth_size(n: usize) -> usize {
    (n..)
        .find(|&m| {
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            r == 1
        })
        .expect("5-smooth numbers are unbounded")
}

impl PseudoSpectralKernel {
    pub fn grid_size(cutoff: usize) -> usize {
        smooth_size(4 * cutoff + 1)
    }

    fn plans(&self, m: usize) -> FftPair {
        let mut cache = self.plans.lock().expect("fft plan cache poisoned");
        cache
            .entry(m)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                (planner.plan_fft_forward(m), planner.plan_fft_inverse(m))
            })
            .clone()
    }
}

fn transpose(buf: &mut [Complex64], m: usize) {
    for r in 0..m {
        for c in (r + 1)..m {
            buf.swap(r * m + c, c * m + r);
        }
    }
}

fn wrap(k: i32, m: usize) -> usize {
    k.rem_euclid(m as i32) as usize
}

impl ProductKernel for PseudoSpectralKernel {
    fn name(&self) -> &'static str {
        "pseudo-spectral"
    }

    fn bhat(&self, u: &SpectralField, v: &SpectralField, mask: Option<&[bool]>) -> SpectralField {
        let n = u.cutoff();
        let alpha = u.alpha();
        let m = Self::grid_size(n);
        let (fwd, inv) = self.plans(m);
        let zero = Complex64::new(0.0, 0.0);
        let mut q = vec![zero; m * m];
        let mut v1 = vec![zero; m * m];
        let mut v2 = vec![zero; m * m];
        for (k, a) in u.iter() {
            let s = k.norm_sq();
            let c = Complex64::new(0.0, k.norm() * (1.0 + alpha * s) / MODE_NORM) * a;
            q[wrap(k.k1, m) * m + wrap(k.k2, m)] = c;
            q[wrap(-k.k1, m) * m + wrap(-k.k2, m)] = c.conj();
        }
        for (k, b) in v.iter() {
            let r = k.norm() * MODE_NORM;
            let c1 = b * (-(k.k2 as f64) / r);
            let c2 = b * (k.k1 as f64 / r);
            let (i, j) = (wrap(k.k1, m) * m + wrap(k.k2, m), wrap(-k.k1, m) * m + wrap(-k.k2, m));
            v1[i] = c1;
            v1[j] = c1.conj();
            v2[i] = c2;
            v2[j] = c2.conj();
        }
        for buf in [&mut q, &mut v1, &mut v2] {
            inv.process(buf);
            transpose(buf, m);
            inv.process(buf);
        }
        // (q e₃) × v = (−q v₂, q v₁); grid values are real up to rounding
        let mut p1 = v2;
        let mut p2 = v1;
        for ((qv, x), y) in q.iter().zip(p1.iter_mut()).zip(p2.iter_mut()) {
            let (qr, v2r, v1r) = (qv.re, x.re, y.re);
            *x = Complex64::new(-qr * v2r, 0.0);
            *y = Complex64::new(qr * v1r, 0.0);
        }
        for buf in [&mut p1, &mut p2] {
            fwd.process(buf);
            transpose(buf, m);
            fwd.process(buf);
        }
        let inv_m2 = 1.0 / (m * m) as f64;
        let mut out = SpectralField::zeros(n, alpha);
        for (i, slot) in out.amps_mut().iter_mut().enumerate() {
            if mask.is_some_and(|mk| !mk[i]) {
                continue;
            }
            let p = box_mode(i, n);
            let idx = wrap(p.k1, m) * m + wrap(p.k2, m);
            let proj = p1[idx] * (-(p.k2 as f64)) + p2[idx] * p.k1 as f64;
            let s = p.norm_sq();
            *slot = proj * (MODE_NORM * inv_m2 / (p.norm() * (1.0 + alpha * s)));
        }
        out
    }
}

/// Picks the triad kernel for sparse inputs and the transform otherwise.
#[derive(Debug, Default)]
pub struct AutoKernel {
    direct: TriadKernel,
    spectral: PseudoSpectralKernel,
}

/// Work bound (sparse terms × output modes) below which the triad sum wins.
const AUTO_DIRECT_LIMIT: usize = 8192;

impl ProductKernel for AutoKernel {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn bhat(&self, u: &SpectralField, v: &SpectralField, mask: Option<&[bool]>) -> SpectralField {
        let outputs = match mask {
            Some(m) => m.iter().filter(|&&b| b).count(),
            None => u.amps().len(),
        };
        if 2 * u.nnz() * outputs <= AUTO_DIRECT_LIMIT {
            self.direct.bhat(u, v, mask)
        } else {
            self.spectral.bhat(u, v, mask)
        }
    }
}

/// Registry of the shipped product kernels.
pub fn kernels() -> &'static Registry<dyn ProductKernel> {
    static REG: OnceLock<Registry<dyn ProductKernel>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn ProductKernel> = Registry::new("product kernel");
        r.register("direct", Arc::new(TriadKernel));
        r.register("pseudo-spectral", Arc::new(PseudoSpectralKernel::default()));
        r.register("auto", Arc::new(AutoKernel::default()));
        r
    })
}

/// `B̂(u, v)` with the automatic kernel choice.
pub fn eval_bhat(u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
    u.check_compatible(v)?;
    static AUTO: OnceLock<AutoKernel> = OnceLock::new();
    Ok(AUTO.get_or_init(AutoKernel::default).bhat(u, v, None))
}

/// Second-grade parameter and viscosity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    pub alpha: f64,
    pub mu: f64,
}

impl DomainParams {
    pub fn new(alpha: f64, mu: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::invalid(format!("mu must be positive, got {mu}")));
        }
        Ok(DomainParams { alpha, mu })
    }
}

/// Finite mark space: marks are the indices `0..len`, with intensities `ν_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkSpace {
    weights: Vec<f64>,
}

impl MarkSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid(format!("mark intensities must be positive, got {w}")));
        }
        Ok(MarkSpace { weights })
    }

    pub fn empty() -> Self {
        MarkSpace { weights: Vec::new() }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Total intensity `Λ = Σ ν_j`.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn check(&self, mark: usize) -> Result<()> {
        if mark >= self.weights.len() {
            return Err(Error::invalid(format!(
                "unknown mark {mark} (mark space has {})",
                self.weights.len()
            )));
        }
        Ok(())
    }
}

/// The coefficient triple together with its declared Lipschitz and growth
/// constants.
pub trait Coefficients: Send + Sync + Debug {
    fn family(&self) -> &str;

    /// `F(u, t)`.
    fn forcing(&self, u: &SpectralField, t: f64) -> SpectralField;

    /// `σ(u, t)`.
    fn sigma(&self, u: &SpectralField, t: f64) -> SpectralField;

    /// `f(u, t, z)`.
    fn jump(&self, u: &SpectralField, t: f64, mark: usize) -> Result<SpectralField>;

    /// Declared `ρ̃(t)` of the Lipschitz condition.
    fn rho_tilde(&self, t: f64) -> f64;

    /// Declared `K(t)` of the growth conditions.
    fn growth_k(&self, t: f64) -> f64;

    /// Declared `C` of the growth conditions.
    fn growth_c(&self) -> f64;

    /// True when `F`, `σ`, `f` do not depend on the state.
    fn state_independent(&self) -> bool {
        false
    }
}

/// Parameters of the shipped coefficient families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientSpec {
    pub family: String,
    pub forcing_mode: [i32; 2],
    pub forcing_amp: f64,
    pub sigma_mode: [i32; 2],
    pub sigma_amp: f64,
    /// One mode per mark, or a single mode shared by all marks.
    pub jump_modes: Vec<[i32; 2]>,
    /// One amplitude per mark, or a single amplitude shared by all marks.
    pub jump_amps: Vec<f64>,
    pub kappa_forcing: f64,
    pub kappa_sigma: f64,
    pub kappa_jump: f64,
    /// Radius `R` of the low-pass projection `P_{≤R}` onto `|k| ≤ R`.
    pub lowpass_radius: f64,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        CoefficientSpec {
            family: "zero".into(),
            forcing_mode: [1, 0],
            forcing_amp: 0.0,
            sigma_mode: [1, 0],
            sigma_amp: 0.0,
            jump_modes: vec![[0, 1]],
            jump_amps: vec![0.0],
            kappa_forcing: 0.0,
            kappa_sigma: 0.0,
            kappa_jump: 0.0,
            lowpass_radius: 2.0,
        }
    }
}

/// Builder of a coefficient family from its parameters.
pub trait CoefficientFamily: Send + Sync {
    fn build(&self, spec: &CoefficientSpec, alpha: f64, marks: &MarkSpace) -> Result<Arc<dyn Coefficients>>;
}

#[derive(Debug, Clone)]
struct Term {
    mode: WaveVector,
    amp: f64,
    kappa: f64,
}

impl Term {
    fn eval(&self, u: &SpectralField, radius_sq: f64) -> SpectralField {
        let mut out = if self.kappa != 0.0 {
            u.map_multiplier(|s| if s <= radius_sq { self.kappa } else { 0.0 })
        } else {
            SpectralField::zeros(u.cutoff(), u.alpha())
        };
        if self.amp != 0.0 {
            let kc = if self.mode.is_canonical() { self.mode } else { -self.mode };
            if let Some(i) = box_index(kc, u.cutoff()) {
                out.amps_mut()[i] += Complex64::new(self.amp, 0.0);
            }
        }
        out
    }

    /// `|amp · e_k|_V²`.
    fn const_v_sq(&self, alpha: f64) -> f64 {
        self.amp * self.amp * (1.0 + alpha * self.mode.norm_sq())
    }
}

/// `F = g e_{k₀} + κ_F P_{≤R}u`, `σ = s e_{k₁} + κ_σ P_{≤R}u`,
/// `f(·, ·, z_j) = h_j e_{k_j} + κ_f P_{≤R}u`. The `zero` and `additive`
/// families are the special cases with every amplitude, respectively every
/// `κ`, set to zero.
#[derive(Debug, Clone)]
pub struct AffineLowpass {
    family: String,
    forcing: Term,
    sigma: Term,
    jumps: Vec<Term>,
    radius_sq: f64,
    rho_tilde: f64,
    growth_k: f64,
    growth_c: f64,
}

impl AffineLowpass {
    fn new(family: &str, forcing: Term, sigma: Term, jumps: Vec<Term>, radius: f64, alpha: f64, marks: &MarkSpace) -> Self {
        let nu = marks.weights();
        let rho_tilde = forcing.kappa.powi(2)
            + sigma.kappa.powi(2)
            + jumps.iter().zip(nu).map(|(j, w)| w * j.kappa.powi(2)).sum::<f64>();
        let const_sq = forcing.const_v_sq(alpha)
            + sigma.const_v_sq(alpha)
            + jumps.iter().zip(nu).map(|(j, w)| w * j.const_v_sq(alpha)).sum::<f64>();
        // |c + κPu|² ≤ 2|c|² + 2κ²|u|², and its square ≤ 8|c|⁴ + 8κ⁴|u|⁴
        let (k_a, c_a) = if rho_tilde == 0.0 {
            (const_sq, 0.0)
        } else {
            (2.0 * const_sq, 2.0 * rho_tilde)
        };
        let fourth: f64 = jumps.iter().zip(nu).map(|(j, w)| w * j.const_v_sq(alpha).powi(2)).sum();
        let kappa4: f64 = jumps.iter().zip(nu).map(|(j, w)| w * j.kappa.powi(4)).sum();
        let (k_b, c_b) = if kappa4 == 0.0 {
            (fourth, 0.0)
        } else {
            (8.0 * fourth, 8.0 * kappa4)
        };
        AffineLowpass {
            family: family.to_string(),
            forcing,
            sigma,
            jumps,
            radius_sq: radius * radius,
            rho_tilde,
            growth_k: k_a.max(k_b.sqrt()),
            growth_c: c_a.max(c_b),
        }
    }
}

impl Coefficients for AffineLowpass {
    fn family(&self) -> &str {
        &self.family
    }

    fn forcing(&self, u: &SpectralField, _t: f64) -> SpectralField {
        self.forcing.eval(u, self.radius_sq)
    }

    fn sigma(&self, u: &SpectralField, _t: f64) -> SpectralField {
        self.sigma.eval(u, self.radius_sq)
    }

    fn jump(&self, u: &SpectralField, _t: f64, mark: usize) -> Result<SpectralField> {
        let term = self.jumps.get(mark).ok_or_else(|| {
            Error::invalid(format!("unknown mark {mark} (mark space has {})", self.jumps.len()))
        })?;
        Ok(term.eval(u, self.radius_sq))
    }

    fn rho_tilde(&self, _t: f64) -> f64 {
        self.rho_tilde
    }

    fn growth_k(&self, _t: f64) -> f64 {
        self.growth_k
    }

    fn growth_c(&self) -> f64 {
        self.growth_c
    }

    fn state_independent(&self) -> bool {
        self.rho_tilde == 0.0
    }
}

fn wave(m: [i32; 2], key: &str) -> Result<WaveVector> {
    WaveVector::new(m[0], m[1]).map_err(|_| Error::Config {
        key: key.into(),
        message: "mode must be nonzero".into(),
    })
}

fn per_mark<T: Clone>(values: &[T], marks: &MarkSpace, key: &str) -> Result<Vec<T>> {
    match values.len() {
        _ if marks.is_empty() => Ok(Vec::new()),
        1 => Ok(vec![values[0].clone(); marks.len()]),
        n if n == marks.len() => Ok(values.to_vec()),
        n => Err(Error::Config {
            key: key.into(),
            message: format!("expected 1 or {} entries, got {n}", marks.len()),
        }),
    }
}

fn finite(x: f64, key: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Config {
            key: key.into(),
            message: format!("must be finite, got {x}"),
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Zero,
    Additive,
    Affine,
}

struct AffineFamily(Shape);

impl CoefficientFamily for AffineFamily {
    fn build(&self, spec: &CoefficientSpec, alpha: f64, marks: &MarkSpace) -> Result<Arc<dyn Coefficients>> {
        let (amps, kappas) = match self.0 {
            Shape::Zero => (false, false),
            Shape::Additive => (true, false),
            Shape::Affine => (true, true),
        };
        let amp = |x: f64, key: &str| -> Result<f64> { Ok(if amps { finite(x, key)? } else { 0.0 }) };
        let kap = |x: f64, key: &str| -> Result<f64> {
            if !kappas {
                return Ok(0.0);
            }
            let x = finite(x, key)?;
            if x < 0.0 {
                return Err(Error::Config {
                    key: key.into(),
                    message: format!("must be non-negative, got {x}"),
                });
            }
            Ok(x)
        };
        if kappas && !(spec.lowpass_radius.is_finite() && spec.lowpass_radius >= 1.0) {
            return Err(Error::Config {
                key: "coefficients.lowpass_radius".into(),
                message: format!("must be at least 1, got {}", spec.lowpass_radius),
            });
        }
        let forcing = Term {
            mode: wave(spec.forcing_mode, "coefficients.forcing_mode")?,
            amp: amp(spec.forcing_amp, "coefficients.forcing_amp")?,
            kappa: kap(spec.kappa_forcing, "coefficients.kappa_forcing")?,
        };
        let sigma = Term {
            mode: wave(spec.sigma_mode, "coefficients.sigma_mode")?,
            amp: amp(spec.sigma_amp, "coefficients.sigma_amp")?,
            kappa: kap(spec.kappa_sigma, "coefficients.kappa_sigma")?,
        };
        let modes = per_mark(&spec.jump_modes, marks, "coefficients.jump_modes")?;
        let hs = per_mark(&spec.jump_amps, marks, "coefficients.jump_amps")?;
        let kappa_f = kap(spec.kappa_jump, "coefficients.kappa_jump")?;
        let jumps = modes
            .iter()
            .zip(&hs)
            .map(|(m, &h)| {
                Ok(Term {
                    mode: wave(*m, "coefficients.jump_modes")?,
                    amp: amp(h, "coefficients.jump_amps")?,
                    kappa: kappa_f,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let name = match self.0 {
            Shape::Zero => "zero",
            Shape::Additive => "additive",
            Shape::Affine => "affine-lowpass",
        };
        Ok(Arc::new(AffineLowpass::new(
            name,
            forcing,
            sigma,
            jumps,
            spec.lowpass_radius,
            alpha,
            marks,
        )))
    }
}

/// Registry of the shipped coefficient families.
pub fn coefficient_families() -> &'static Registry<dyn CoefficientFamily> {
    static REG: OnceLock<Registry<dyn CoefficientFamily>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn CoefficientFamily> = Registry::new("coefficient family");
        r.register("zero", Arc::new(AffineFamily(Shape::Zero)));
        r.register("additive", Arc::new(AffineFamily(Shape::Additive)));
        r.register("affine-lowpass", Arc::new(AffineFamily(Shape::Affine)));
        r
    })
}

pub fn build_coefficients(spec: &CoefficientSpec, alpha: f64, marks: &MarkSpace) -> Result<Arc<dyn Coefficients>> {
    coefficient_families().get(&spec.family)?.build(spec, alpha, marks)
}

/// Wraps a coefficient set and rescales its declared constants, leaving the
/// maps untouched. Used to exercise the hypothesis audit on wrong
/// declarations.
#[derive(Debug)]
pub struct MisDeclared {
    pub inner: Arc<dyn Coefficients>,
    pub rho_scale: f64,
    pub growth_scale: f64,
}

impl Coefficients for MisDeclared {
    fn family(&self) -> &str {
        self.inner.family()
    }
    fn forcing(&self, u: &SpectralField, t: f64) -> SpectralField {
        self.inner.forcing(u, t)
    }
    fn sigma(&self, u: &SpectralField, t: f64) -> SpectralField {
        self.inner.sigma(u, t)
    }
    fn jump(&self, u: &SpectralField, t: f64, mark: usize) -> Result<SpectralField> {
        self.inner.jump(u, t, mark)
    }
    fn rho_tilde(&self, t: f64) -> f64 {
        self.rho_scale * self.inner.rho_tilde(t)
    }
    fn growth_k(&self, t: f64) -> f64 {
        self.growth_scale * self.inner.growth_k(t)
    }
    fn growth_c(&self) -> f64 {
        self.growth_scale * self.inner.growth_c()
    }
}

/// Everything needed to evaluate the right-hand side of the Galerkin system.
#[derive(Debug, Clone)]
pub struct Model {
    pub params: DomainParams,
    pub coeffs: Arc<dyn Coefficients>,
    pub marks: MarkSpace,
    pub kernel: Arc<dyn ProductKernel>,
}

impl Model {
    pub fn new(params: DomainParams, coeffs: Arc<dyn Coefficients>, marks: MarkSpace) -> Self {
        Model {
            params,
            coeffs,
            marks,
            kernel: kernels().get("auto").expect("auto kernel registered"),
        }
    }

    pub fn with_kernel(mut self, kernel: Arc<dyn ProductKernel>) -> Self {
        self.kernel = kernel;
        self
    }
}

/// Drift `𝒜̂(u,t) = −μÂu − B̂(u,u) + F̂(u,t)` with its three summands.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftEval {
    pub value: SpectralField,
    pub viscous: SpectralField,
    pub nonlinear: SpectralField,
    pub forcing: SpectralField,
}

fn check_time(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::invalid(format!("time must be finite and non-negative, got {t}")));
    }
    Ok(())
}

/// Evaluates the drift; `mask` restricts `B̂` to the modes that will be kept.
pub fn eval_drift_masked(model: &Model, u: &SpectralField, t: f64, mask: Option<&[bool]>) -> Result<DriftEval> {
    check_time(t)?;
    if u.alpha() != model.params.alpha {
        return Err(Error::ParameterMismatch(format!(
            "field α = {} but model α = {}",
            u.alpha(),
            model.params.alpha
        )));
    }
    let viscous = apply_ahat(u).scaled(-model.params.mu);
    let nonlinear = model.kernel.bhat(u, u, mask).scaled(-1.0);
    let forcing = apply_inv_stokes(&model.coeffs.forcing(u, t));
    let mut value = viscous.clone();
    value.axpy(1.0, &nonlinear);
    value.axpy(1.0, &forcing);
    Ok(DriftEval {
        value,
        viscous,
        nonlinear,
        forcing,
    })
}

pub fn eval_drift(model: &Model, u: &SpectralField, t: f64) -> Result<DriftEval> {
    eval_drift_masked(model, u, t, None)
}

/// `σ̂(u,t) = (I+αA)⁻¹σ(u,t)`.
pub fn eval_sigma_hat(model: &Model, u: &SpectralField, t: f64) -> Result<SpectralField> {
    check_time(t)?;
    Ok(apply_inv_stokes(&model.coeffs.sigma(u, t)))
}

/// `f̂(u,t,z) = (I+αA)⁻¹f(u,t,z)`.
pub fn eval_f_hat(model: &Model, u: &SpectralField, t: f64, mark: usize) -> Result<SpectralField> {
    check_time(t)?;
    model.marks.check(mark)?;
    Ok(apply_inv_stokes(&model.coeffs.jump(u, t, mark)?))
}

/// `Σ_j ν_j f̂(u,t,z_j)`, the drift correction of the compensated measure.
pub fn compensator(model: &Model, u: &SpectralField, t: f64) -> Result<SpectralField> {
    let mut out = SpectralField::zeros(u.cutoff(), u.alpha());
    for (j, &nu) in model.marks.weights().iter().enumerate() {
        out.axpy(nu, &eval_f_hat(model, u, t, j)?);
    }
    Ok(out)
}

/// Monotonicity weight `ρ(u,t) = 1 + 2 C_B |u|_W + C_A² ρ̃(t)`.
pub fn rho_weight(u: &SpectralField, t: f64, coeffs: &dyn Coefficients, cb: f64, ca: f64) -> f64 {
    rho_from_w_norm(u.norm(Norm::W), t, coeffs, cb, ca)
}

/// [`rho_weight`] from a precomputed `|u|_W`.
pub fn rho_from_w_norm(norm_w: f64, t: f64, coeffs: &dyn Coefficients, cb: f64, ca: f64) -> f64 {
    1.0 + 2.0 * cb * norm_w + ca * ca * coeffs.rho_tilde(t)
}

/// Sampling distribution for hypothesis audits: smooth random fields with a
/// log-uniform amplitude, and every other sample confined to the low modes.
pub(crate) fn audit_field(cutoff: usize, alpha: f64, seed: u64, sample: u64, role: u64) -> SpectralField {
    let h = derive(seed, &[sample, role]);
    let decay = [0.0, 2.0, 4.0, 6.0][(h % 4) as usize];
    let (g, _) = counter_normals(seed, &[sample, role, 1]);
    let scale = 10f64.powf(g.clamp(-3.0, 3.0));
    let mut u = random_field(cutoff, alpha, seed ^ role, sample, decay);
    if (h >> 8) % 2 == 1 {
        let lowpass = GalerkinLevel::by_count(4, alpha).expect("valid level");
        u = crate::spectral::project_level(&u.with_cutoff(cutoff.max(1)), &lowpass).with_cutoff(cutoff);
    }
    let norm = u.norm(Norm::V);
    if norm > 0.0 {
        u.scaled(scale / norm)
    } else {
        u
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs <= 1e-300 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Audits the declared Lipschitz and growth constants on sampled fields.
///
/// Reports the worst ratio `LHS / RHS` for the Lipschitz display and the two
/// growth displays. The conditions are required on the whole space; here
/// they are only checked on finite-dimensional random samples.
pub fn check_hypotheses(
    coeffs: &dyn Coefficients,
    marks: &MarkSpace,
    alpha: f64,
    cutoff: usize,
    horizon: f64,
    samples: u64,
    seed: u64,
) -> Result<VerificationReport> {
    let mut rep = VerificationReport::new(
        format!("hypotheses[{}]", coeffs.family()),
        "Lipschitz and growth conditions on the coefficients",
    )
    .with_samples(samples);
    let nu = marks.weights();
    let mut worst = [0.0f64; 3];
    for s in 0..samples {
        let u1 = audit_field(cutoff, alpha, seed, s, 11);
        let u2 = audit_field(cutoff, alpha, seed, s, 12);
        let t = horizon * (derive(seed, &[s, 13]) >> 11) as f64 / (1u64 << 53) as f64;
        let w = &u1 - &u2;
        let mut lip = (&coeffs.forcing(&u1, t) - &coeffs.forcing(&u2, t)).norm_sq(Norm::V)
            + (&coeffs.sigma(&u1, t) - &coeffs.sigma(&u2, t)).norm_sq(Norm::V);
        let mut grow = coeffs.forcing(&u1, t).norm_sq(Norm::V) + coeffs.sigma(&u1, t).norm_sq(Norm::V);
        let mut grow4 = 0.0;
        for (j, &n) in nu.iter().enumerate() {
            let f1 = coeffs.jump(&u1, t, j)?;
            let f2 = coeffs.jump(&u2, t, j)?;
            lip += n * (&f1 - &f2).norm_sq(Norm::V);
            let v = f1.norm_sq(Norm::V);
            grow += n * v;
            grow4 += n * v * v;
        }
        let v2 = u1.norm_sq(Norm::V);
        let k = coeffs.growth_k(t);
        let c = coeffs.growth_c();
        worst[0] = worst[0].max(ratio(lip, coeffs.rho_tilde(t) * w.norm_sq(Norm::V)));
        worst[1] = worst[1].max(ratio(grow, k + c * v2));
        worst[2] = worst[2].max(ratio(grow4, k * k + c * v2 * v2));
    }
    let tol = 1.0 + 1e-12;
    rep.check_le("lipschitz.worst_ratio", worst[0], tol);
    rep.check_le("growth.worst_ratio", worst[1], tol);
    rep.check_le("growth4.worst_ratio", worst[2], tol);
    rep.record("rho_tilde", coeffs.rho_tilde(0.0));
    rep.record("growth_k", coeffs.growth_k(0.0));
    rep.record("growth_c", coeffs.growth_c());
    rep.note("constants audited on sampled finite-dimensional fields only");
    Ok(rep)
}

/// Pairing `⟨B̂(u,v), w⟩`.
pub fn trilinear(kernel: &dyn ProductKernel, u: &SpectralField, v: &SpectralField, w: &SpectralField) -> Result<f64> {
    u.check_compatible(v)?;
    pairing(&kernel.bhat(u, v, None), w)
}

/// Canonical box modes with `|k| ≤ radius`.
pub fn lowpass_modes(cutoff: usize, radius: f64) -> Vec<WaveVector> {
    box_modes(cutoff).filter(|k| k.norm_sq() <= radius * radius).collect()
}
