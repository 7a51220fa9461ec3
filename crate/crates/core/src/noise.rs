//! Brownian and Poisson drivers.
//!
//! A path is generated on a uniform grid of `steps` cells. Cell increments
//! are quantised to multiples of 2⁻⁴⁸, so sums of sub-increments produced by
//! Brownian-bridge refinement reproduce the parent increment exactly. Jumps
//! are stored with exact times; every cell containing jumps is split at them
//! (again by bridge sampling) into the pieces the integrator steps over.

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::MarkSpace;
use crate::report::{Estimate, VerificationReport};
use crate::rng::{compensated_sum, mean_and_se, stream_rng};
use crate::{Error, Result};

const ROLE_BROWNIAN: u64 = 1;
const ROLE_JUMPS: u64 = 2;
const ROLE_REFINE: u64 = 3;
const ROLE_SPLIT: u64 = 4;

const QUANTUM: f64 = 1.0 / (1u64 << 48) as f64;

#[inline]
fn quantize(x: f64) -> f64 {
    (x / QUANTUM).round() * QUANTUM
}

/// Brownian increment over `[t0, t1]`, a piece of grid cell `cell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownianIncrement {
    pub t0: f64,
    pub t1: f64,
    pub dw: f64,
    pub cell: usize,
    /// True when `t1` is the right end of the cell.
    pub closes_cell: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub mark: usize,
}

/// One realisation of the driving noise on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub horizon: f64,
    pub steps: usize,
    /// Product of all refinement factors applied since sampling.
    pub refinement: u64,
    pub seed: u64,
    pub stream_id: u64,
    /// Increment of every uniform grid cell.
    pub cells: Vec<f64>,
    /// Jump-adapted pieces, in time order.
    pub brownian: Vec<BrownianIncrement>,
    pub jumps: Vec<Jump>,
}

/// Time of grid point `j` out of `n` cells on `[0, horizon]`. Refined grids
/// reproduce the coarse grid points exactly.
#[inline]
pub fn grid_time(horizon: f64, j: usize, n: usize) -> f64 {
    horizon * (j as f64 / n as f64)
}

/// Number of cells of width `dt` in `[0, horizon]`; `dt` must divide the
/// horizon up to rounding.
pub fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let n = (horizon / dt).round();
    if n < 1.0 || ((n * dt - horizon).abs() > 1e-9 * horizon) {
        return Err(Error::invalid(format!("dt = {dt} does not divide the horizon {horizon}")));
    }
    Ok(n as usize)
}

/// Splits `total` over consecutive sub-intervals of `[a, b]` ending at
/// `ends` (the last end must be `b`) by sequential bridge sampling.
fn bridge(total: f64, a: f64, b: f64, ends: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(ends.len());
    let mut rest = total;
    let mut t = a;
    for (i, &e) in ends.iter().enumerate() {
        if i + 1 == ends.len() {
            out.push(rest);
            break;
        }
        let span = b - t;
        let frac = (e - t) / span;
        let var = (e - t) * (b - e) / span;
        let z: f64 = StandardNormal.sample(rng);
        let piece = quantize(rest * frac + var.max(0.0).sqrt() * z);
        out.push(piece);
        rest -= piece;
        t = e;
    }
    out
}

fn split_cells(path: &mut NoisePath) {
    let n = path.steps;
    let mut pieces = Vec::with_capacity(n + 2 * path.jumps.len());
    let mut next_jump = 0;
    for (c, &dw) in path.cells.iter().enumerate() {
        let t0 = grid_time(path.horizon, c, n);
        let t1 = grid_time(path.horizon, c + 1, n);
        while next_jump < path.jumps.len() && path.jumps[next_jump].time <= t0 {
            next_jump += 1;
        }
        let mut ends = Vec::new();
        let mut j = next_jump;
        while j < path.jumps.len() && path.jumps[j].time < t1 {
            let s = path.jumps[j].time;
            if ends.last() != Some(&s) {
                ends.push(s);
            }
            j += 1;
        }
        if ends.is_empty() {
            pieces.push(BrownianIncrement { t0, t1, dw, cell: c, closes_cell: true });
            continue;
        }
        ends.push(t1);
        let mut rng = stream_rng(path.seed, &[path.stream_id, ROLE_SPLIT, path.refinement, c as u64]);
        let parts = bridge(dw, t0, t1, &ends, &mut rng);
        let mut a = t0;
        for (i, (&e, &d)) in ends.iter().zip(&parts).enumerate() {
            pieces.push(BrownianIncrement {
                t0: a,
                t1: e,
                dw: d,
                cell: c,
                closes_cell: i + 1 == ends.len(),
            });
            a = e;
        }
    }
    path.brownian = pieces;
}

/// Jump times and marks of a Poisson random measure with intensity `dt × ν`.
pub fn sample_jumps(horizon: f64, marks: &MarkSpace, seed: u64, stream_id: u64) -> Result<Vec<Jump>> {
    if marks.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = stream_rng(seed, &[stream_id, ROLE_JUMPS]);
    let lam = marks.total_mass() * horizon;
    let count = Poisson::new(lam)
        .map_err(|e| Error::invalid(format!("Poisson intensity {lam}: {e}")))?
        .sample(&mut rng) as usize;
    let mut times: Vec<f64> = (0..count)
        .map(|_| horizon * (1.0 - rng.random::<f64>()))
        .collect();
    times.sort_by(f64::total_cmp);
    let pick = WeightedIndex::new(marks.weights()).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(times
        .into_iter()
        .map(|time| Jump { time, mark: pick.sample(&mut rng) })
        .collect())
}

/// Samples a path with `steps` uniform cells.
pub fn sample_noise(horizon: f64, steps: usize, marks: &MarkSpace, seed: u64, stream_id: u64) -> Result<NoisePath> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if steps == 0 {
        return Err(Error::invalid("at least one time step is required"));
    }
    let h = horizon / steps as f64;
    let sd = h.sqrt();
    let mut rng = stream_rng(seed, &[stream_id, ROLE_BROWNIAN]);
    let cells = (0..steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            quantize(sd * z)
        })
        .collect();
    let jumps = sample_jumps(horizon, marks, seed, stream_id)?;
    let mut path = NoisePath {
        horizon,
        steps,
        refinement: 1,
        seed,
        stream_id,
        cells,
        brownian: Vec::new(),
        jumps,
    };
    split_cells(&mut path);
    Ok(path)
}

/// Path without Brownian motion (all increments zero) but with the given
/// jumps.
pub fn deterministic_path(horizon: f64, steps: usize, jumps: Vec<Jump>) -> Result<NoisePath> {
    if !(horizon.is_finite() && horizon > 0.0) || steps == 0 {
        return Err(Error::invalid("horizon and steps must be positive"));
    }
    let mut path = NoisePath {
        horizon,
        steps,
        refinement: 1,
        seed: 0,
        stream_id: 0,
        cells: vec![0.0; steps],
        brownian: Vec::new(),
        jumps,
    };
    split_cells(&mut path);
    Ok(path)
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        while n.is_multiple_of(p) {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Subdivides every cell into `factor` cells whose increments sum exactly to
/// the parent increment; jumps are unchanged.
///
/// Factors are applied prime by prime in ascending order, each stage seeded
/// by the accumulated refinement, so refining by 2 twice equals refining by 4.
/// A factor of one returns the path unchanged.
pub fn refine_noise(path: &NoisePath, factor: usize) -> Result<NoisePath> {
    if factor == 0 {
        return Err(Error::invalid("refinement factor must be positive"));
    }
    let mut cells = path.cells.clone();
    let mut refinement = path.refinement;
    let mut steps = path.steps;
    for p in prime_factors(factor as u64) {
        let fine_steps = steps * p as usize;
        let h = path.horizon / fine_steps as f64;
        let ends: Vec<f64> = (1..=p).map(|j| j as f64 * h).collect();
        let mut fine = Vec::with_capacity(fine_steps);
        for (i, &dw) in cells.iter().enumerate() {
            let mut rng = stream_rng(path.seed, &[path.stream_id, ROLE_REFINE, refinement, p, i as u64]);
            fine.extend(bridge(dw, 0.0, p as f64 * h, &ends, &mut rng));
        }
        cells = fine;
        refinement *= p;
        steps = fine_steps;
    }
    let mut out = NoisePath {
        horizon: path.horizon,
        steps,
        refinement,
        seed: path.seed,
        stream_id: path.stream_id,
        cells,
        brownian: Vec::new(),
        jumps: path.jumps.clone(),
    };
    split_cells(&mut out);
    Ok(out)
}

/// Monte Carlo check of the compensated Poisson integral
/// `∫₀ᵀ∫_Z g(z) Ñ(dz ds)` for a constant-in-time integrand `g` given per mark:
/// its mean is zero and its variance is `T Σ_j ν_j g_j²`. Also checks that
/// the mean jump count is `ΛT`.
pub fn compensated_integral_check(
    horizon: f64,
    marks: &MarkSpace,
    integrand: &[f64],
    samples: u64,
    seed: u64,
) -> Result<VerificationReport> {
    if integrand.len() != marks.len() {
        return Err(Error::invalid("integrand needs one value per mark"));
    }
    if samples < 2 {
        return Err(Error::InsufficientData("at least two samples are required".into()));
    }
    let nu = marks.weights();
    let comp = horizon * compensated_sum(nu.iter().zip(integrand).map(|(n, g)| n * g));
    let draws: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let jumps = sample_jumps(horizon, marks, seed, s).expect("validated mark space");
            let raw = compensated_sum(jumps.iter().map(|j| integrand[j.mark]));
            (raw - comp, jumps.len() as f64)
        })
        .collect();
    let ints: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let counts: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let mut rep = VerificationReport::new(
        "compensated_integral",
        "compensated Poisson random measure: zero mean and isometry",
    )
    .with_samples(samples);
    let (m, se) = mean_and_se(&ints);
    rep.check_ci("integral", Estimate { mean: m, se }, 0.0, 3.0);
    let target_var = horizon * compensated_sum(nu.iter().zip(integrand).map(|(n, g)| n * g * g));
    let var = se * se * samples as f64;
    rep.record("variance.target", target_var);
    let rel = if target_var > 0.0 {
        (var - target_var).abs() / target_var
    } else {
        var
    };
    rep.check_le("variance.relative_error", rel, 0.05);
    let (cm, cse) = mean_and_se(&counts);
    let lam = marks.total_mass() * horizon;
    rep.record("count.target", lam);
    let mut count_rep = VerificationReport::new("count", "");
    count_rep.check_ci("count", Estimate { mean: cm, se: cse }, lam, 3.0);
    rep.absorb("jumps", count_rep);
    rep.confidence = Some(Estimate { mean: m, se });
    Ok(rep)
}
