//! Counter-based seed derivation.
//!
//! Every random quantity in the crate is a pure function of a master seed and
//! a structured counter, so coupled runs (twin initial conditions, nested
//! Galerkin levels, refined time grids) see exactly the same noise and
//! ensembles are independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of the splitmix64 finaliser.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with an arbitrary list of counters into a new 64-bit seed.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x5347_465F_5345_4544);
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    h
}

pub fn stream_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}

/// Uniform in the open interval (0, 1) from 53 random bits.
#[inline]
fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// A pair of independent standard normals determined by `(seed, parts)`.
pub fn counter_normals(seed: u64, parts: &[u64]) -> (f64, f64) {
    let h = derive(seed, parts);
    let u1 = unit_open(splitmix64(h));
    let u2 = unit_open(splitmix64(h ^ 0xD6E8_FEB8_6659_FD93));
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Packs a structured stream identifier: path index, level index and role.
pub fn stream_id(path: u64, level: u16, role: u8) -> u64 {
    (path << 24) | ((level as u64) << 8) | role as u64
}

/// Neumaier-compensated summation in iteration order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
