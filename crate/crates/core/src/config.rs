//! Run configuration: a sectioned TOML file plus `key=value` overrides.
//!
//! ```toml
//! [domain]
//! alpha = 1.0
//! mu = 1.0
//!
//! [galerkin]
//! cutoff = 16          # or: modes = 32
//!
//! [time]
//! horizon = 1.0
//! dt = 1e-3
//!
//! [coefficients]
//! family = "zero"
//! ```
//!
//! Unknown keys are errors. Overrides use either `section.key=value` or a
//! bare `key=value` when the key name occurs in exactly one section.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{build_coefficients, coefficient_families, kernels, CoefficientSpec, MarkSpace};
use crate::integrator::{schemes, LevelSpec, SimConfig};
use crate::rng::derive;
use crate::spectral::{random_field, GalerkinLevel, Norm, SpectralField, WaveVector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSection {
    pub alpha: f64,
    pub mu: f64,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection { alpha: 1.0, mu: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GalerkinSection {
    /// Full square box `max(|k1|,|k2|) ≤ cutoff`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    /// The `modes` lowest modes by eigenvalue.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    /// Mode counts for the multi-level studies.
    pub levels: Vec<usize>,
}

impl Default for GalerkinSection {
    fn default() -> Self {
        GalerkinSection {
            cutoff: None,
            modes: None,
            levels: vec![8, 16, 32, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub horizon: f64,
    pub dt: f64,
    pub scheme: String,
    pub kernel: String,
    pub record_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_cap: Option<f64>,
    /// Write per-mode amplitude columns to trajectory CSVs.
    pub mode_columns: bool,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            horizon: 1.0,
            dt: 1e-3,
            scheme: "exp_euler".into(),
            kernel: "auto".into(),
            record_every: 1,
            w_cap: None,
            mode_columns: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarksSection {
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    /// `amplitude · e_mode`.
    Mode,
    /// Random amplitudes damped by `e^{−decay·|k|}`.
    Smooth,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    pub kind: InitialKind,
    pub mode: [i32; 2],
    pub amplitude: f64,
    pub decay: f64,
    /// Rescale the field to this W-norm (before Galerkin projection).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_norm: Option<f64>,
    /// Stream of the random amplitudes of a smooth field.
    pub stream: u64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec {
            kind: InitialKind::Mode,
            mode: [1, 0],
            amplitude: 1.0,
            decay: 1.0,
            w_norm: None,
            stream: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub paths: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Random samples for the property suites.
    pub samples: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            paths: 1,
            workers: 0,
            samples: 1000,
        }
    }
}

/// Optional fixed values of the constants in the weight `ρ`; measured when
/// absent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ca: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cb: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolerancesSection {
    /// Exact algebraic identities.
    pub identity: f64,
    /// Minimal residual ratio per time-step halving.
    pub order_ratio: f64,
    /// Maximal max/min ratio of moment estimates across levels.
    pub moment_spread: f64,
    /// Exact single-mode decay.
    pub decay: f64,
    /// Cutoffs of the operator-identity suite.
    pub identity_cutoffs: Vec<usize>,
}

impl Default for TolerancesSection {
    fn default() -> Self {
        TolerancesSection {
            identity: 1e-12,
            order_ratio: 1.8,
            moment_spread: 2.0,
            decay: 1e-9,
            identity_cutoffs: vec![8, 16, 32],
        }
    }
}

/// Everything one CLI invocation needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub galerkin: GalerkinSection,
    pub time: TimeSection,
    pub coefficients: CoefficientSpec,
    pub marks: MarksSection,
    pub initial: InitialSpec,
    /// Second initial state for the contraction experiment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_b: Option<InitialSpec>,
    pub run: RunSection,
    pub constants: ConstantsSection,
    pub tolerances: TolerancesSection,
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Reads `path` (if any), applies the overrides and validates.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            text.parse::<toml::Table>().map_err(|e| Error::Parse {
                path: p.to_path_buf(),
                message: e.to_string(),
            })?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: RunConfig = RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| {
        let msg = e.to_string();
        Error::Config {
            key: unknown_field(&msg).unwrap_or_else(|| "config".into()),
            message: msg.trim().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn unknown_field(msg: &str) -> Option<String> {
    let start = msg.find("unknown field `")? + "unknown field `".len();
    let end = msg[start..].find('`')?;
    Some(msg[start..start + end].to_string())
}

/// `(section, key)` pairs of the documented key set.
fn known_keys() -> Vec<(String, String)> {
    let mut defaults = RunConfig::default();
    defaults.galerkin.cutoff = Some(0);
    defaults.galerkin.modes = Some(0);
    defaults.time.w_cap = Some(0.0);
    defaults.constants = ConstantsSection { ca: Some(0.0), cb: Some(0.0) };
    defaults.initial.w_norm = Some(0.0);
    defaults.initial_b = Some(defaults.initial.clone());
    let value = toml::Value::try_from(&defaults).expect("defaults serialize");
    let mut out = Vec::new();
    if let toml::Value::Table(t) = value {
        for (section, inner) in t {
            if let toml::Value::Table(fields) = inner {
                for key in fields.keys() {
                    out.push((section.clone(), key.clone()));
                }
            }
        }
    }
    out
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| config_err(item, "override must have the form key=value"))?;
    let key = key.trim();
    let known = known_keys();
    let (section, field) = match key.split_once('.') {
        Some((s, f)) => {
            if !known.iter().any(|(ks, kf)| ks == s && kf == f) {
                return Err(config_err(key, "unknown key"));
            }
            (s.to_string(), f.to_string())
        }
        None => {
            let hits: Vec<_> = known.iter().filter(|(_, kf)| kf == key).collect();
            match hits.as_slice() {
                [] => return Err(config_err(key, "unknown key")),
                [(s, f)] => (s.clone(), f.clone()),
                _ => {
                    let options: Vec<String> = hits.iter().map(|(s, f)| format!("{s}.{f}")).collect();
                    return Err(config_err(key, format!("ambiguous key, use one of {}", options.join(", "))));
                }
            }
        }
    };
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let entry = table
        .entry(section.clone())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(field, value);
            Ok(())
        }
        _ => Err(config_err(&section, "expected a section")),
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_err(key, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(config_err(key, format!("must be non-negative and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        positive("domain.alpha", self.domain.alpha)?;
        positive("domain.mu", self.domain.mu)?;
        positive("time.horizon", self.time.horizon)?;
        positive("time.dt", self.time.dt)?;
        crate::noise::steps_for(self.time.horizon, self.time.dt)
            .map_err(|e| config_err("time.dt", e.to_string()))?;
        if self.time.record_every == 0 {
            return Err(config_err("time.record_every", "must be at least 1"));
        }
        if let Some(cap) = self.time.w_cap {
            positive("time.w_cap", cap)?;
        }
        if !schemes().contains(&self.time.scheme) {
            return Err(config_err("time.scheme", format!("unknown scheme, known: {}", schemes().names().join(", "))));
        }
        if !kernels().contains(&self.time.kernel) {
            return Err(config_err("time.kernel", format!("unknown kernel, known: {}", kernels().names().join(", "))));
        }
        match (self.galerkin.cutoff, self.galerkin.modes) {
            (Some(_), Some(_)) => return Err(config_err("galerkin", "set either cutoff or modes, not both")),
            (Some(0), _) => return Err(config_err("galerkin.cutoff", "must be at least 1")),
            (_, Some(m)) => {
                GalerkinLevel::by_count(m, self.domain.alpha).map_err(|e| config_err("galerkin.modes", e.to_string()))?;
            }
            _ => {}
        }
        for &m in &self.galerkin.levels {
            GalerkinLevel::by_count(m, self.domain.alpha).map_err(|e| config_err("galerkin.levels", e.to_string()))?;
        }
        if self.run.paths == 0 {
            return Err(config_err("run.paths", "must be at least 1"));
        }
        if self.run.samples == 0 {
            return Err(config_err("run.samples", "must be at least 1"));
        }
        let c = &self.coefficients;
        if !coefficient_families().contains(&c.family) {
            return Err(config_err(
                "coefficients.family",
                format!("unknown family, known: {}", coefficient_families().names().join(", ")),
            ));
        }
        for (k, v) in [("coefficients.kappa_forcing", c.kappa_forcing), ("coefficients.kappa_sigma", c.kappa_sigma), ("coefficients.kappa_jump", c.kappa_jump)] {
            non_negative(k, v)?;
        }
        positive("coefficients.lowpass_radius", c.lowpass_radius)?;
        let marks = MarkSpace::new(self.marks.weights.clone()).map_err(|e| config_err("marks.weights", e.to_string()))?;
        build_coefficients(c, self.domain.alpha, &marks).map_err(|e| config_err("coefficients", e.to_string()))?;
        for (key, init) in [("initial", Some(&self.initial)), ("initial_b", self.initial_b.as_ref())] {
            let Some(init) = init else { continue };
            if init.kind == InitialKind::Mode {
                WaveVector::new(init.mode[0], init.mode[1]).map_err(|e| config_err(&format!("{key}.mode"), e.to_string()))?;
            }
            if !init.amplitude.is_finite() {
                return Err(config_err(&format!("{key}.amplitude"), "must be finite"));
            }
            non_negative(&format!("{key}.decay"), init.decay)?;
            if let Some(w) = init.w_norm {
                non_negative(&format!("{key}.w_norm"), w)?;
            }
        }
        if let Some(v) = self.constants.ca {
            positive("constants.ca", v)?;
        }
        if let Some(v) = self.constants.cb {
            positive("constants.cb", v)?;
        }
        positive("tolerances.identity", self.tolerances.identity)?;
        positive("tolerances.order_ratio", self.tolerances.order_ratio)?;
        positive("tolerances.moment_spread", self.tolerances.moment_spread)?;
        positive("tolerances.decay", self.tolerances.decay)?;
        if self.tolerances.identity_cutoffs.contains(&0) {
            return Err(config_err("tolerances.identity_cutoffs", "cutoffs must be at least 1"));
        }
        Ok(())
    }

    pub fn level(&self) -> LevelSpec {
        match (self.galerkin.cutoff, self.galerkin.modes) {
            (_, Some(m)) => LevelSpec::Modes(m),
            (Some(n), None) => LevelSpec::Cutoff(n),
            (None, None) => LevelSpec::Cutoff(16),
        }
    }

    pub fn levels(&self) -> Vec<LevelSpec> {
        self.galerkin.levels.iter().map(|&m| LevelSpec::Modes(m)).collect()
    }

    /// Cutoff large enough for the configured level and every study level;
    /// initial states are generated there so all levels see the same data.
    fn generation_cutoff(&self) -> Result<usize> {
        let alpha = self.domain.alpha;
        let mut n = self.level().build(alpha)?.cutoff();
        for l in self.levels() {
            n = n.max(l.build(alpha)?.cutoff());
        }
        Ok(n)
    }

    pub fn initial_field(&self, spec: &InitialSpec) -> Result<SpectralField> {
        let alpha = self.domain.alpha;
        let n = self.generation_cutoff()?;
        let mut u = match spec.kind {
            InitialKind::Zero => SpectralField::zeros(n, alpha),
            InitialKind::Mode => {
                let k = WaveVector::new(spec.mode[0], spec.mode[1])?;
                let n = n.max(k.max_abs());
                SpectralField::single_mode(n, alpha, k, num_complex::Complex64::new(spec.amplitude, 0.0))?
            }
            InitialKind::Smooth => {
                let seed = derive(self.run.seed, &[0x1417, spec.stream]);
                let decay = spec.decay;
                random_field(n, alpha, seed, 0, 0.0)
                    .map_multiplier(|s| (-decay * s.sqrt()).exp())
                    .scaled(spec.amplitude)
            }
        };
        if let Some(w) = spec.w_norm {
            let norm = u.norm(Norm::W);
            if norm > 0.0 {
                u = u.scaled(w / norm);
            }
        }
        Ok(u)
    }

    /// Simulation configuration for a level and initial state.
    pub fn sim_config(&self, level: LevelSpec, initial: &InitialSpec) -> Result<SimConfig> {
        Ok(SimConfig {
            alpha: self.domain.alpha,
            mu: self.domain.mu,
            level,
            coefficients: self.coefficients.clone(),
            marks: self.marks.weights.clone(),
            horizon: self.time.horizon,
            dt: self.time.dt,
            scheme: self.time.scheme.clone(),
            kernel: self.time.kernel.clone(),
            record_every: self.time.record_every,
            w_cap: self.time.w_cap,
            initial: self.initial_field(initial)?,
        })
    }

    pub fn base_sim_config(&self) -> Result<SimConfig> {
        self.sim_config(self.level(), &self.initial)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    const MINIMAL: &str = "[domain]\nalpha = 1.0\nmu = 1.0\n[galerkin]\ncutoff = 16\n[time]\nhorizon = 1.0\ndt = 1e-3\n[coefficients]\nfamily = \"zero\"\n";

    #[test]
    fn minimal_config_is_valid() {
        let f = write(MINIMAL);
        let cfg = parse_config(Some(f.path()), &[]).unwrap();
        assert_eq!(cfg.level(), LevelSpec::Cutoff(16));
        assert_eq!(cfg.time.dt, 1e-3);
        let sim = cfg.base_sim_config().unwrap();
        assert!(sim.prepare().is_ok());
    }

    #[test]
    fn zero_dt_names_the_key() {
        let f = write(MINIMAL);
        match parse_config(Some(f.path()), &["dt=0".into()]) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "time.dt"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_take_precedence() {
        let f = write(MINIMAL);
        let cfg = parse_config(Some(f.path()), &["mu=2".into()]).unwrap();
        assert_eq!(cfg.domain.mu, 2.0);
        let cfg = parse_config(Some(f.path()), &["coefficients.family=additive".into(), "time.scheme=euler".into()]).unwrap();
        assert_eq!(cfg.coefficients.family, "additive");
        assert_eq!(cfg.time.scheme, "euler");
        let cfg = parse_config(None, &["weights=[1.0, 2.0]".into(), "levels=[8, 16]".into()]).unwrap();
        assert_eq!(cfg.marks.weights, vec![1.0, 2.0]);
        assert_eq!(cfg.galerkin.levels, vec![8, 16]);
    }

    #[test]
    fn unknown_and_ambiguous_keys() {
        let f = write("[domain]\nalpha = 1.0\nbeta = 2.0\n");
        match parse_config(Some(f.path()), &[]) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "beta"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config(None, &["nope=1".into()]), Err(Error::Config { .. })));
        // `mode` exists in both initial sections
        assert!(matches!(parse_config(None, &["mode=[1,1]".into()]), Err(Error::Config { .. })));
        assert!(parse_config(None, &["initial.mode=[1,1]".into()]).is_ok());
    }

    #[test]
    fn parse_errors_carry_position() {
        let f = write("[domain\nalpha = 1");
        match parse_config(Some(f.path()), &[]) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("line 1"), "{message}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config(Some(Path::new("/nonexistent/x.toml")), &[]), Err(Error::Io { .. })));
    }

    #[test]
    fn range_checks() {
        for bad in ["alpha=-1", "horizon=0", "dt=0.3", "cutoff=0", "family=\"bogus\"", "scheme=rk4", "paths=0", "weights=[-1.0]", "kappa_sigma=-0.5"] {
            assert!(matches!(parse_config(None, &[bad.into()]), Err(Error::Config { .. })), "{bad}");
        }
        assert!(parse_config(None, &["cutoff=4".into(), "modes=8".into()]).is_err());
    }

    #[test]
    fn initial_fields() {
        let mut cfg = parse_config(None, &["initial.kind=smooth".into(), "initial.w_norm=1.0".into()]).unwrap();
        let u = cfg.initial_field(&cfg.initial).unwrap();
        assert!((u.norm(Norm::W) - 1.0).abs() < 1e-12);
        cfg.run.seed = 1;
        assert_ne!(cfg.initial_field(&cfg.initial).unwrap(), u);
        let z = InitialSpec { kind: InitialKind::Zero, ..Default::default() };
        assert_eq!(cfg.initial_field(&z).unwrap().nnz(), 0);
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn overrides_win_and_survive_roundtrip(mu in 1e-3f64..1e3, alpha in 1e-3f64..1e3, seed in 0..=i64::MAX as u64, cutoff in 1usize..64) {
                let sets = vec![
                    format!("mu={mu:?}"),
                    format!("domain.alpha={alpha:?}"),
                    format!("run.seed={seed}"),
                    format!("galerkin.cutoff={cutoff}"),
                ];
                let cfg = parse_config(None, &sets).unwrap();
                prop_assert_eq!(cfg.domain.mu, mu);
                prop_assert_eq!(cfg.domain.alpha, alpha);
                prop_assert_eq!(cfg.galerkin.cutoff, Some(cutoff));
                let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
                prop_assert_eq!(back, cfg);
            }
        }
    }
}
