//! Divergence-free Fourier fields on the 2π-periodic torus and the per-mode
//! operator calculus.
//!
//! A velocity field is stored as one complex amplitude `a_k` per canonical
//! wavevector `k` (upper half-plane, `k2 > 0` or `k2 = 0, k1 > 0`) inside the
//! square box `max(|k1|,|k2|) ≤ N`. The amplitude at `-k` is `conj(a_k)`, and
//! the pair `(k, -k)` spans the real, L²-orthonormal divergence-free modes
//!
//! ```text
//!   u(x) = Σ_k √2 · Re( a_k · k⊥/|k| · e^{ik·x} / 2π ),   k⊥ = (-k2, k1).
//! ```
//!
//! With this normalisation every norm is a Parseval sum `Σ_k w(|k|²) |a_k|²`
//! and every operator of the calculus is a real multiplier per mode. The mean
//! mode is never stored.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::rng::counter_normals;
use crate::{Error, Result};

/// Integer wavevector on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WaveVector {
    pub k1: i32,
    pub k2: i32,
}

impl WaveVector {
    pub fn new(k1: i32, k2: i32) -> Result<Self> {
        if k1 == 0 && k2 == 0 {
            return Err(Error::invalid("the zero wavevector carries the mean mode"));
        }
        Ok(WaveVector { k1, k2 })
    }

    pub(crate) const fn raw(k1: i32, k2: i32) -> Self {
        WaveVector { k1, k2 }
    }

    pub fn is_zero(self) -> bool {
        self.k1 == 0 && self.k2 == 0
    }

    pub fn norm_sq(self) -> f64 {
        let (a, b) = (self.k1 as i64, self.k2 as i64);
        (a * a + b * b) as f64
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Box radius `max(|k1|, |k2|)`.
    pub fn max_abs(self) -> usize {
        self.k1.unsigned_abs().max(self.k2.unsigned_abs()) as usize
    }

    /// Canonical representatives live in the upper half-plane.
    pub fn is_canonical(self) -> bool {
        self.k2 > 0 || (self.k2 == 0 && self.k1 > 0)
    }

    /// `k⊥·m = k1·m2 − k2·m1`, exact in integers.
    pub fn perp_dot(self, m: WaveVector) -> i64 {
        self.k1 as i64 * m.k2 as i64 - self.k2 as i64 * m.k1 as i64
    }
}

impl Neg for WaveVector {
    type Output = WaveVector;
    fn neg(self) -> WaveVector {
        WaveVector::raw(-self.k1, -self.k2)
    }
}

impl Add for WaveVector {
    type Output = WaveVector;
    fn add(self, o: WaveVector) -> WaveVector {
        WaveVector::raw(self.k1 + o.k1, self.k2 + o.k2)
    }
}

impl fmt::Display for WaveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k1, self.k2)
    }
}

/// Eigenvalue `λ_k = |k|²(1+α|k|²)` relating the W and V inner products on
/// the mode `k`.
pub fn lambda_of(k: WaveVector, alpha: f64) -> Result<f64> {
    if k.is_zero() {
        return Err(Error::invalid("lambda_of: zero wavevector"));
    }
    let s = k.norm_sq();
    Ok(s * (1.0 + alpha * s))
}

/// Number of canonical modes in the box of radius `cutoff`.
pub const fn box_len(cutoff: usize) -> usize {
    2 * cutoff * (cutoff + 1)
}

/// Storage index of a canonical wavevector inside the box, if it fits.
pub fn box_index(k: WaveVector, cutoff: usize) -> Option<usize> {
    if !k.is_canonical() || k.max_abs() > cutoff {
        return None;
    }
    let n = cutoff as i64;
    let (k1, k2) = (k.k1 as i64, k.k2 as i64);
    let idx = if k2 == 0 {
        k1 - 1
    } else {
        n + (k2 - 1) * (2 * n + 1) + (k1 + n)
    };
    Some(idx as usize)
}

/// Inverse of [`box_index`].
pub fn box_mode(idx: usize, cutoff: usize) -> WaveVector {
    let n = cutoff;
    if idx < n {
        WaveVector::raw(idx as i32 + 1, 0)
    } else {
        let r = idx - n;
        let row = 2 * n + 1;
        let k2 = r / row + 1;
        let k1 = (r % row) as i64 - n as i64;
        WaveVector::raw(k1 as i32, k2 as i32)
    }
}

/// Canonical modes of the box in storage order.
pub fn box_modes(cutoff: usize) -> impl Iterator<Item = WaveVector> {
    (0..box_len(cutoff)).map(move |i| box_mode(i, cutoff))
}

/// Norms of the function-space chain `𝕎 ⊂ 𝕍 ⊂ 𝕎*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    /// `|u|`, the L² norm.
    L2,
    /// `‖u‖ = |∇u|`.
    H1,
    /// `|u|_V² = |u|² + α‖u‖²`.
    V,
    /// `|u|_W = |curl(u − αΔu)|`.
    W,
    /// Dual norm of 𝕎 through the pairing `⟨f, v⟩ = (f, v)_V`.
    WStar,
}

impl Norm {
    /// Parseval weight for a mode with `|k|² = s`.
    #[inline]
    pub fn weight(self, s: f64, alpha: f64) -> f64 {
        let g = 1.0 + alpha * s;
        match self {
            Norm::L2 => 1.0,
            Norm::H1 => s,
            Norm::V => g,
            Norm::W => s * g * g,
            Norm::WStar => 1.0 / s,
        }
    }
}

/// Divergence-free velocity field with square cutoff `N` and second-grade
/// parameter `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    cutoff: usize,
    alpha: f64,
    amps: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(cutoff: usize, alpha: f64) -> Self {
        SpectralField {
            cutoff,
            alpha,
            amps: vec![Complex64::new(0.0, 0.0); box_len(cutoff)],
        }
    }

    /// Builds a field from `(k, a_k)` pairs. Non-canonical entries are folded
    /// onto their canonical partner via `a_{-k} = conj(a_k)`.
    pub fn from_modes(
        cutoff: usize,
        alpha: f64,
        modes: &[(WaveVector, Complex64)],
    ) -> Result<Self> {
        let mut u = Self::zeros(cutoff, alpha);
        for &(k, a) in modes {
            u.set(k, a)?;
        }
        Ok(u)
    }

    pub fn single_mode(cutoff: usize, alpha: f64, k: WaveVector, a: Complex64) -> Result<Self> {
        Self::from_modes(cutoff, alpha, &[(k, a)])
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Canonical amplitudes in storage order.
    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    /// Amplitude at any wavevector; zero outside the box and at `k = 0`.
    pub fn get(&self, k: WaveVector) -> Complex64 {
        if k.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        if k.is_canonical() {
            box_index(k, self.cutoff)
                .map(|i| self.amps[i])
                .unwrap_or_default()
        } else {
            box_index(-k, self.cutoff)
                .map(|i| self.amps[i].conj())
                .unwrap_or_default()
        }
    }

    pub fn set(&mut self, k: WaveVector, a: Complex64) -> Result<()> {
        if k.is_zero() {
            return Err(Error::invalid("cannot set the mean mode"));
        }
        let (kc, ac) = if k.is_canonical() { (k, a) } else { (-k, a.conj()) };
        let i = box_index(kc, self.cutoff).ok_or_else(|| {
            Error::invalid(format!("mode {k} outside cutoff {}", self.cutoff))
        })?;
        self.amps[i] = ac;
        Ok(())
    }

    /// `(k, a_k)` over canonical modes.
    pub fn iter(&self) -> impl Iterator<Item = (WaveVector, Complex64)> + '_ {
        let n = self.cutoff;
        self.amps
            .iter()
            .enumerate()
            .map(move |(i, &a)| (box_mode(i, n), a))
    }

    pub fn nnz(&self) -> usize {
        self.amps.iter().filter(|a| a.re != 0.0 || a.im != 0.0).count()
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Extends by zeros or truncates to a new cutoff.
    pub fn with_cutoff(&self, cutoff: usize) -> SpectralField {
        if cutoff == self.cutoff {
            return self.clone();
        }
        let mut out = SpectralField::zeros(cutoff, self.alpha);
        for (i, k) in box_modes(cutoff).enumerate() {
            out.amps[i] = self.get(k);
        }
        out
    }

    pub fn check_compatible(&self, other: &SpectralField) -> Result<()> {
        if self.cutoff != other.cutoff || self.alpha != other.alpha {
            return Err(Error::ParameterMismatch(format!(
                "fields differ: (N={}, α={}) vs (N={}, α={})",
                self.cutoff, self.alpha, other.cutoff, other.alpha
            )));
        }
        Ok(())
    }

    /// Applies the real multiplier `m(|k|²)` to every mode.
    pub fn map_multiplier(&self, m: impl Fn(f64) -> f64) -> SpectralField {
        let mut out = self.clone();
        for (i, a) in out.amps.iter_mut().enumerate() {
            let s = box_mode(i, self.cutoff).norm_sq();
            *a *= m(s);
        }
        out
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &SpectralField) {
        debug_assert_eq!(self.cutoff, other.cutoff);
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += b * c;
        }
    }

    pub fn scaled(&self, c: f64) -> SpectralField {
        let mut out = self.clone();
        out.amps.iter_mut().for_each(|a| *a *= c);
        out
    }

    pub fn norm(&self, which: Norm) -> f64 {
        self.norm_sq(which).sqrt()
    }

    pub fn norm_sq(&self, which: Norm) -> f64 {
        let alpha = self.alpha;
        self.iter()
            .map(|(k, a)| which.weight(k.norm_sq(), alpha) * a.norm_sqr())
            .sum()
    }

    /// Weighted real inner product `Σ_k w(|k|²) Re(conj(a_k) b_k)`.
    pub fn inner(&self, other: &SpectralField, which: Norm) -> Result<f64> {
        self.check_compatible(other)?;
        let alpha = self.alpha;
        Ok(self
            .iter()
            .zip(&other.amps)
            .map(|((k, a), b)| which.weight(k.norm_sq(), alpha) * (a.conj() * b).re)
            .sum())
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        assert_eq!(self.cutoff, rhs.cutoff, "cutoff mismatch");
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        assert_eq!(self.cutoff, rhs.cutoff, "cutoff mismatch");
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, c: f64) -> SpectralField {
        self.scaled(c)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}

/// Real scalar field stored like [`SpectralField`]: amplitude `b_k` of
/// `√2 Re(b_k e^{ik·x} / 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSpectralField {
    cutoff: usize,
    amps: Vec<Complex64>,
}

impl ScalarSpectralField {
    pub fn zeros(cutoff: usize) -> Self {
        ScalarSpectralField {
            cutoff,
            amps: vec![Complex64::new(0.0, 0.0); box_len(cutoff)],
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn get(&self, k: WaveVector) -> Complex64 {
        if k.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        if k.is_canonical() {
            box_index(k, self.cutoff)
                .map(|i| self.amps[i])
                .unwrap_or_default()
        } else {
            box_index(-k, self.cutoff)
                .map(|i| self.amps[i].conj())
                .unwrap_or_default()
        }
    }

    pub fn set(&mut self, k: WaveVector, b: Complex64) -> Result<()> {
        if k.is_zero() {
            return Err(Error::invalid("cannot set the mean mode"));
        }
        let (kc, bc) = if k.is_canonical() { (k, b) } else { (-k, b.conj()) };
        let i = box_index(kc, self.cutoff).ok_or_else(|| {
            Error::invalid(format!("mode {k} outside cutoff {}", self.cutoff))
        })?;
        self.amps[i] = bc;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (WaveVector, Complex64)> + '_ {
        let n = self.cutoff;
        self.amps
            .iter()
            .enumerate()
            .map(move |(i, &a)| (box_mode(i, n), a))
    }

    pub fn norm_l2(&self) -> f64 {
        self.amps.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner_l2(&self, other: &ScalarSpectralField) -> Result<f64> {
        if self.cutoff != other.cutoff {
            return Err(Error::ParameterMismatch("scalar field cutoffs differ".into()));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a.conj() * b).re)
            .sum())
    }
}

/// `|u|` in the requested norm.
pub fn norm(u: &SpectralField, which: Norm) -> f64 {
    u.norm(which)
}

pub fn inner_l2(u: &SpectralField, v: &SpectralField) -> Result<f64> {
    u.inner(v, Norm::L2)
}

/// `((u, v)) = (∇u, ∇v)`.
pub fn inner_h1(u: &SpectralField, v: &SpectralField) -> Result<f64> {
    u.inner(v, Norm::H1)
}

/// `(u, v)_V = (u, v) + α((u, v))`.
pub fn inner_v(u: &SpectralField, v: &SpectralField) -> Result<f64> {
    u.inner(v, Norm::V)
}

/// `(u, v)_W = (curl(u − αΔu), curl(v − αΔv))`.
pub fn inner_w(u: &SpectralField, v: &SpectralField) -> Result<f64> {
    u.inner(v, Norm::W)
}

/// Duality pairing `⟨f, v⟩` of 𝕎* and 𝕎, which coincides with `(f, v)_V`
/// for `f ∈ 𝕍`.
pub fn pairing(f: &SpectralField, v: &SpectralField) -> Result<f64> {
    f.inner(v, Norm::V)
}

/// Vorticity `curl u = ∂₁u₂ − ∂₂u₁`; the amplitude of mode `k` is `i|k|a_k`.
pub fn curl(u: &SpectralField) -> ScalarSpectralField {
    let mut out = ScalarSpectralField::zeros(u.cutoff);
    for (i, (k, a)) in u.iter().enumerate() {
        out.amps[i] = Complex64::new(0.0, k.norm()) * a;
    }
    out
}

/// `curl(u − αΔu)`, the second-grade vorticity.
pub fn curl_second_grade(u: &SpectralField) -> ScalarSpectralField {
    let mut out = ScalarSpectralField::zeros(u.cutoff);
    let alpha = u.alpha;
    for (i, (k, a)) in u.iter().enumerate() {
        let s = k.norm_sq();
        out.amps[i] = Complex64::new(0.0, k.norm() * (1.0 + alpha * s)) * a;
    }
    out
}

/// Curl of a general (not necessarily solenoidal) vector field given by its
/// components.
pub fn curl_components(vx: &ScalarSpectralField, vy: &ScalarSpectralField) -> Result<ScalarSpectralField> {
    if vx.cutoff != vy.cutoff {
        return Err(Error::ParameterMismatch("component cutoffs differ".into()));
    }
    let mut out = ScalarSpectralField::zeros(vx.cutoff);
    for (i, (k, bx)) in vx.iter().enumerate() {
        let by = vy.amps[i];
        let d = by * k.k1 as f64 - bx * k.k2 as f64;
        out.amps[i] = Complex64::new(0.0, 1.0) * d;
    }
    Ok(out)
}

/// Helmholtz–Leray projection of the vector field `(vx, vy)` onto its
/// divergence-free part: per mode, the component along `k⊥/|k|`.
pub fn leray_project(
    vx: &ScalarSpectralField,
    vy: &ScalarSpectralField,
    alpha: f64,
) -> Result<SpectralField> {
    if vx.cutoff != vy.cutoff {
        return Err(Error::ParameterMismatch("component cutoffs differ".into()));
    }
    let mut out = SpectralField::zeros(vx.cutoff, alpha);
    for (i, (k, bx)) in vx.iter().enumerate() {
        let by = vy.amps[i];
        out.amps[i] = (bx * (-k.k2 as f64) + by * k.k1 as f64) / k.norm();
    }
    Ok(out)
}

/// Stokes operator `A = −ΠΔ`: multiplies mode `k` by `|k|²`.
pub fn apply_a(u: &SpectralField) -> SpectralField {
    u.map_multiplier(|s| s)
}

/// Solution operator `(I + αA)⁻¹` of the generalised Stokes problem.
pub fn apply_inv_stokes(u: &SpectralField) -> SpectralField {
    let alpha = u.alpha;
    u.map_multiplier(|s| 1.0 / (1.0 + alpha * s))
}

/// `(I + αA)`, the inverse of [`apply_inv_stokes`].
pub fn apply_stokes(u: &SpectralField) -> SpectralField {
    let alpha = u.alpha;
    u.map_multiplier(|s| 1.0 + alpha * s)
}

/// `β_k = |k|² / (1 + α|k|²)`, the symbol of `Â`.
#[inline]
pub fn ahat_symbol(s: f64, alpha: f64) -> f64 {
    s / (1.0 + alpha * s)
}

/// `Â = (I + αA)⁻¹A`.
pub fn apply_ahat(u: &SpectralField) -> SpectralField {
    let alpha = u.alpha;
    u.map_multiplier(|s| ahat_symbol(s, alpha))
}

/// Galerkin level: the `n` lowest modes by `λ_k`, closed under `k ↦ −k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinLevel {
    alpha: f64,
    cutoff: usize,
    modes: Vec<WaveVector>,
    lambdas: Vec<f64>,
    mask: Vec<bool>,
}

impl GalerkinLevel {
    /// The `n` lowest modes (`n` counts both `k` and `−k`, so it equals the
    /// real dimension of the level and must be even). Ties in `λ` are broken
    /// lexicographically on `(k1, k2)` of the canonical representative.
    pub fn by_count(n: usize, alpha: f64) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "level size must be a positive even number of modes, got {n}"
            )));
        }
        check_alpha(alpha)?;
        let pairs = n / 2;
        let radius = ((n as f64).sqrt().ceil() as usize) + 1;
        let mut cands: Vec<(f64, WaveVector)> = box_modes(radius)
            .map(|k| (k.norm_sq() * (1.0 + alpha * k.norm_sq()), k))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let chosen: Vec<WaveVector> = cands[..pairs].iter().map(|c| c.1).collect();
        let s_out = ((radius + 1) * (radius + 1)) as f64;
        debug_assert!(cands[pairs - 1].0 <= s_out * (1.0 + alpha * s_out));
        Self::from_canonical(chosen, alpha)
    }

    /// Every mode of the box `max(|k1|,|k2|) ≤ cutoff`.
    pub fn full_box(cutoff: usize, alpha: f64) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::invalid("cutoff must be at least 1"));
        }
        check_alpha(alpha)?;
        Self::from_canonical(box_modes(cutoff).collect(), alpha)
    }

    fn from_canonical(canon: Vec<WaveVector>, alpha: f64) -> Result<Self> {
        let cutoff = canon.iter().map(|k| k.max_abs()).max().unwrap_or(1);
        let mut mask = vec![false; box_len(cutoff)];
        let mut all = Vec::with_capacity(2 * canon.len());
        for &k in &canon {
            mask[box_index(k, cutoff).expect("canonical in box")] = true;
            all.push(k);
            all.push(-k);
        }
        all.sort_by(|a, b| {
            let la = a.norm_sq() * (1.0 + alpha * a.norm_sq());
            let lb = b.norm_sq() * (1.0 + alpha * b.norm_sq());
            la.total_cmp(&lb).then(a.cmp(b))
        });
        let lambdas = all
            .iter()
            .map(|&k| lambda_of(k, alpha))
            .collect::<Result<Vec<_>>>()?;
        Ok(GalerkinLevel {
            alpha,
            cutoff,
            modes: all,
            lambdas,
            mask,
        })
    }

    /// Real dimension `n` (number of listed modes).
    pub fn n(&self) -> usize {
        self.modes.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Smallest box containing the level.
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn modes(&self) -> &[WaveVector] {
        &self.modes
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambdas.last().copied().unwrap_or(0.0)
    }

    /// Membership flags indexed like a field of cutoff [`Self::cutoff`].
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, k: WaveVector) -> bool {
        let kc = if k.is_canonical() { k } else { -k };
        box_index(kc, self.cutoff).is_some_and(|i| self.mask[i])
    }

    pub fn canonical_modes(&self) -> impl Iterator<Item = WaveVector> + '_ {
        self.modes.iter().copied().filter(|k| k.is_canonical())
    }

    pub fn zeros(&self) -> SpectralField {
        SpectralField::zeros(self.cutoff, self.alpha)
    }

    /// True when every nonzero amplitude of `u` sits on a level mode.
    pub fn supports(&self, u: &SpectralField) -> bool {
        u.iter()
            .all(|(k, a)| (a.re == 0.0 && a.im == 0.0) || self.contains(k))
    }

    /// `Π_n` applied in place to a field whose cutoff equals the level's.
    pub(crate) fn project_in_place(&self, u: &mut SpectralField) {
        debug_assert_eq!(u.cutoff, self.cutoff);
        for (a, &keep) in u.amps.iter_mut().zip(&self.mask) {
            if !keep {
                *a = Complex64::new(0.0, 0.0);
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("α must be positive, got {alpha}")));
    }
    Ok(())
}

/// Orthogonal projection `Π_n` onto the span of a Galerkin level. The result
/// lives on the larger of the two cutoffs.
pub fn project_level(u: &SpectralField, level: &GalerkinLevel) -> SpectralField {
    let cutoff = u.cutoff.max(level.cutoff);
    let mut out = u.with_cutoff(cutoff);
    for (i, a) in out.amps.iter_mut().enumerate() {
        if !level.contains(box_mode(i, cutoff)) {
            *a = Complex64::new(0.0, 0.0);
        }
    }
    out
}

/// Random field with amplitudes `(g₁ + i g₂)/√2 · (1+|k|²)^{-decay/2}`.
///
/// Each amplitude is a pure function of `(seed, sample, k)`, so the fields
/// drawn at two cutoffs agree on their common modes.
pub fn random_field(cutoff: usize, alpha: f64, seed: u64, sample: u64, decay: f64) -> SpectralField {
    let mut u = SpectralField::zeros(cutoff, alpha);
    for (i, k) in box_modes(cutoff).enumerate() {
        let (g1, g2) = counter_normals(seed, &[sample, k.k1 as i64 as u64, k.k2 as i64 as u64]);
        let env = (1.0 + k.norm_sq()).powf(-0.5 * decay);
        u.amps[i] = Complex64::new(g1, g2) * (env * std::f64::consts::FRAC_1_SQRT_2);
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn wv(k1: i32, k2: i32) -> WaveVector {
        WaveVector::new(k1, k2).unwrap()
    }

    #[test]
    fn box_index_roundtrip() {
        for n in 1..6 {
            let modes: Vec<_> = box_modes(n).collect();
            assert_eq!(modes.len(), box_len(n));
            for (i, k) in modes.iter().enumerate() {
                assert!(k.is_canonical());
                assert!(k.max_abs() <= n);
                assert_eq!(box_index(*k, n), Some(i));
            }
        }
        assert_eq!(box_index(wv(-1, 0), 3), None);
        assert_eq!(box_index(wv(4, 0), 3), None);
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_of(wv(1, 0), 1.0).unwrap(), 2.0);
        assert_eq!(lambda_of(wv(1, 1), 0.5).unwrap(), 4.0);
        assert!(lambda_of(WaveVector::raw(0, 0), 1.0).is_err());
        assert!(WaveVector::new(0, 0).is_err());
    }

    #[test]
    fn single_mode_norms() {
        let u = SpectralField::single_mode(4, 1.0, wv(1, 0), c(1.0, 0.0)).unwrap();
        assert_relative_eq!(u.norm(Norm::L2), 1.0);
        assert_relative_eq!(u.norm(Norm::H1), 1.0);
        assert_relative_eq!(u.norm(Norm::V), 2f64.sqrt());
        assert_relative_eq!(u.norm(Norm::W), 2.0);
        assert_relative_eq!(u.norm(Norm::WStar), 1.0);
        let z = SpectralField::zeros(4, 1.0);
        for n in [Norm::L2, Norm::H1, Norm::V, Norm::W, Norm::WStar] {
            assert_eq!(z.norm(n), 0.0);
        }
    }

    #[test]
    fn reality_of_negative_modes() {
        let mut u = SpectralField::zeros(3, 1.0);
        u.set(wv(-2, -1), c(1.0, 2.0)).unwrap();
        assert_eq!(u.get(wv(2, 1)), c(1.0, -2.0));
        assert_eq!(u.get(wv(-2, -1)), c(1.0, 2.0));
        assert!(u.set(wv(4, 0), c(1.0, 0.0)).is_err());
        assert_eq!(u.get(wv(7, 7)), c(0.0, 0.0));
    }

    #[test]
    fn inner_v_examples() {
        let u = SpectralField::single_mode(3, 1.0, wv(1, 0), c(1.0, 0.0)).unwrap();
        let v = SpectralField::single_mode(3, 1.0, wv(0, 1), c(1.0, 0.0)).unwrap();
        assert_relative_eq!(inner_v(&u, &u).unwrap(), 2.0);
        assert_eq!(inner_v(&u, &v).unwrap(), 0.0);
        assert_eq!(inner_v(&u, &SpectralField::zeros(3, 1.0)).unwrap(), 0.0);
        let other = SpectralField::zeros(3, 0.5);
        assert!(matches!(inner_v(&u, &other), Err(Error::ParameterMismatch(_))));
    }

    #[test]
    fn curl_examples() {
        let u = SpectralField::single_mode(3, 1.0, wv(1, 0), c(1.0, 0.0)).unwrap();
        assert_eq!(curl(&u).get(wv(1, 0)), c(0.0, 1.0));
        let u = SpectralField::single_mode(3, 1.0, wv(2, 1), c(1.0, 0.0)).unwrap();
        assert_relative_eq!(curl(&u).get(wv(2, 1)).im, 5f64.sqrt());
        assert_eq!(curl(&SpectralField::zeros(3, 1.0)).norm_l2(), 0.0);
    }

    #[test]
    fn curl_norm_is_h1_norm() {
        let u = random_field(5, 0.7, 1, 0, 2.0);
        assert_relative_eq!(curl(&u).norm_l2(), u.norm(Norm::H1), max_relative = 1e-14);
    }

    #[test]
    fn leray_examples() {
        // gradient of e^{ik·x}: vector amplitude i·k
        let k = wv(2, 1);
        let mut gx = ScalarSpectralField::zeros(3);
        let mut gy = ScalarSpectralField::zeros(3);
        gx.set(k, c(0.0, 2.0)).unwrap();
        gy.set(k, c(0.0, 1.0)).unwrap();
        assert_eq!(leray_project(&gx, &gy, 1.0).unwrap().norm(Norm::L2), 0.0);

        // v = (0,1) e^{i(0,1)·x} is parallel to k
        let mut vx = ScalarSpectralField::zeros(2);
        let mut vy = ScalarSpectralField::zeros(2);
        vy.set(wv(0, 1), c(1.0, 0.0)).unwrap();
        assert_eq!(leray_project(&vx, &vy, 1.0).unwrap().norm(Norm::L2), 0.0);

        // k⊥/|k| direction is left unchanged
        vx.set(wv(0, 1), c(-1.0, 0.0)).unwrap();
        vy.set(wv(0, 1), c(0.0, 0.0)).unwrap();
        let p = leray_project(&vx, &vy, 1.0).unwrap();
        assert_eq!(p.get(wv(0, 1)), c(1.0, 0.0));
    }

    #[test]
    fn operator_examples() {
        let e10 = SpectralField::single_mode(3, 1.0, wv(1, 0), c(1.0, 0.0)).unwrap();
        let e21 = SpectralField::single_mode(3, 1.0, wv(2, 1), c(1.0, 0.0)).unwrap();
        assert_eq!(apply_a(&e10).get(wv(1, 0)), c(1.0, 0.0));
        assert_eq!(apply_a(&e21).get(wv(2, 1)), c(5.0, 0.0));
        assert_eq!(apply_inv_stokes(&e10).get(wv(1, 0)), c(0.5, 0.0));
        assert_eq!(apply_ahat(&e10).get(wv(1, 0)), c(0.5, 0.0));
        let e21h = SpectralField::single_mode(3, 0.5, wv(2, 1), c(1.0, 0.0)).unwrap();
        assert_relative_eq!(apply_ahat(&e21h).get(wv(2, 1)).re, 5.0 / 3.5, max_relative = 1e-15);
        for s in 1..10_000 {
            assert!(ahat_symbol(s as f64, 0.3) < 1.0 / 0.3);
        }
    }

    #[test]
    fn galerkin_level_counts() {
        let l = GalerkinLevel::by_count(8, 1.0).unwrap();
        assert_eq!(l.n(), 8);
        assert_eq!(l.cutoff(), 1);
        for w in l.lambdas().windows(2) {
            assert!(w[0] <= w[1]);
        }
        for &k in l.modes() {
            assert!(l.contains(-k));
            assert_eq!(lambda_of(k, 1.0).unwrap(), l.lambdas()[l.modes().iter().position(|m| *m == k).unwrap()]);
        }
        let l16 = GalerkinLevel::by_count(16, 1.0).unwrap();
        assert!(l.modes().iter().all(|k| l16.contains(*k)));
        // the |k|²=5 shell is split by the lexicographic tie-break
        assert!(l16.contains(wv(-2, 1)) && l16.contains(wv(-1, 2)));
        assert!(!l16.contains(wv(1, 2)));
        assert!(GalerkinLevel::by_count(7, 1.0).is_err());
        assert_eq!(GalerkinLevel::full_box(3, 1.0).unwrap().n(), 2 * box_len(3));
    }

    #[test]
    fn projection_examples() {
        let level = GalerkinLevel::by_count(8, 1.0).unwrap();
        let inside = SpectralField::single_mode(1, 1.0, wv(1, 1), c(0.3, -0.2)).unwrap();
        assert_eq!(project_level(&inside, &level), inside);
        let outside = SpectralField::single_mode(3, 1.0, wv(3, 1), c(1.0, 0.0)).unwrap();
        assert_eq!(project_level(&outside, &level).norm(Norm::L2), 0.0);
    }

    #[test]
    fn random_fields_agree_across_cutoffs() {
        let a = random_field(4, 1.0, 9, 3, 3.0);
        let b = random_field(8, 1.0, 9, 3, 3.0);
        for (k, v) in a.iter() {
            assert_eq!(v, b.get(k));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field() -> impl Strategy<Value = SpectralField> {
            (1usize..7, 0.05f64..5.0, any::<u64>(), 0.0f64..4.0)
                .prop_map(|(n, alpha, seed, decay)| random_field(n, alpha, seed, 0, decay))
        }

        fn pair() -> impl Strategy<Value = (SpectralField, SpectralField)> {
            (1usize..7, 0.05f64..5.0, any::<u64>(), 0.0f64..4.0).prop_map(|(n, alpha, seed, decay)| {
                (
                    random_field(n, alpha, seed, 0, decay),
                    random_field(n, alpha, seed, 1, decay),
                )
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn poincare_chain(u in field()) {
                let a = u.alpha();
                let v2 = u.norm_sq(Norm::V);
                let h2 = u.norm_sq(Norm::H1);
                prop_assert!(v2 / (1.0 + a) <= h2 * (1.0 + 1e-12));
                prop_assert!(h2 <= v2 / a * (1.0 + 1e-12));
            }
        }

        proptest! {
            #[test]
            fn eigenrelation((u, v) in pair(), pick in any::<prop::sample::Index>()) {
                let n = u.cutoff();
                let k = box_mode(pick.index(box_len(n)), n);
                let e = SpectralField::single_mode(n, u.alpha(), k, Complex64::new(1.0, 0.0)).unwrap();
                let lhs = inner_w(&e, &v).unwrap();
                let rhs = lambda_of(k, u.alpha()).unwrap() * inner_v(&e, &v).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
            }

            #[test]
            fn dual_norm_bound((f, v) in pair()) {
                let lhs = pairing(&f, &v).unwrap().abs();
                prop_assert!(lhs <= f.norm(Norm::WStar) * v.norm(Norm::W) * (1.0 + 1e-12));
                // maximiser: v_k = f_k (1+α|k|²)/(|k|²(1+α|k|²)²)
                let a = f.alpha();
                let vstar = f.map_multiplier(|s| (1.0 + a * s) / (s * (1.0 + a * s).powi(2)));
                let ratio = pairing(&f, &vstar).unwrap() / vstar.norm(Norm::W);
                prop_assert!((ratio - f.norm(Norm::WStar)).abs() <= 1e-10 * f.norm(Norm::WStar));
            }

            #[test]
            fn curl_of_projection_is_curl((u, v) in pair()) {
                let n = u.cutoff();
                let mut vx = ScalarSpectralField::zeros(n);
                let mut vy = ScalarSpectralField::zeros(n);
                for (k, a) in u.iter() {
                    vx.set(k, a).unwrap();
                    vy.set(k, v.get(k)).unwrap();
                }
                let p = leray_project(&vx, &vy, u.alpha()).unwrap();
                let lhs = curl(&p);
                let rhs = curl_components(&vx, &vy).unwrap();
                for (x, y) in lhs.amps().iter().zip(rhs.amps()) {
                    prop_assert!((x - y).norm() <= 1e-12 * y.norm().max(1e-300));
                }
            }

            #[test]
            fn ahat_composition(u in field()) {
                let a = apply_ahat(&u);
                let b = apply_inv_stokes(&apply_a(&u));
                let c = apply_a(&apply_inv_stokes(&u));
                for ((x, y), z) in a.amps().iter().zip(b.amps()).zip(c.amps()) {
                    prop_assert!((x - y).norm() <= 1e-15 * x.norm());
                    prop_assert!((x - z).norm() <= 1e-15 * x.norm());
                }
            }

            #[test]
            fn ahat_and_inv_stokes_pairings((u, v) in pair()) {
                let l = inner_v(&apply_ahat(&u), &v).unwrap();
                let r = inner_h1(&u, &v).unwrap();
                prop_assert!((l - r).abs() <= 1e-12 * (1.0 + r.abs()));
                let l = inner_v(&apply_inv_stokes(&u), &v).unwrap();
                let r = inner_l2(&u, &v).unwrap();
                prop_assert!((l - r).abs() <= 1e-12 * (1.0 + r.abs()));
                let uu = inner_v(&apply_ahat(&u), &u).unwrap();
                prop_assert!((uu - u.norm_sq(Norm::H1)).abs() <= 1e-12 * uu.abs().max(1e-300));
            }

            #[test]
            fn projection_is_self_adjoint((u, v) in pair(), size in 1usize..20) {
                let level = GalerkinLevel::by_count(2 * size, u.alpha()).unwrap();
                let n = u.cutoff().max(level.cutoff());
                let (u, v) = (u.with_cutoff(n), v.with_cutoff(n));
                let pu = project_level(&u, &level);
                prop_assert_eq!(project_level(&pu, &level), pu.clone());
                let pv = project_level(&v, &level);
                for w in [Norm::V, Norm::W] {
                    let l = pu.inner(&v, w).unwrap();
                    let r = u.inner(&pv, w).unwrap();
                    prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
                }
            }
        }
    }
}
