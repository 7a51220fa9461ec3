//! Verification records shared by every check in the crate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Informational,
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// Outcome of one verification: measured metrics against tolerances.
///
/// The status is derived: a report passes iff every asserted check passed.
/// Metrics recorded with [`VerificationReport::record`] are informational
/// and never affect the status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub status: Status,
    pub metrics: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub provenance: String,
    pub samples: u64,
    pub paths: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Estimate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(name: impl Into<String>, provenance: impl Into<String>) -> Self {
        VerificationReport {
            name: name.into(),
            status: Status::Informational,
            metrics: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            provenance: provenance.into(),
            samples: 0,
            paths: 0,
            confidence: None,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn with_samples(mut self, samples: u64) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_paths(mut self, paths: u64) -> Self {
        self.paths = paths;
        self
    }

    /// Records an informational metric.
    pub fn record(&mut self, metric: impl Into<String>, value: f64) {
        self.metrics.insert(metric.into(), value);
    }

    /// Asserts `value ≤ tolerance`. NaN always fails.
    pub fn check_le(&mut self, metric: impl Into<String>, value: f64, tolerance: f64) -> bool {
        let metric = metric.into();
        let ok = value <= tolerance;
        self.metrics.insert(metric.clone(), value);
        self.tolerances.insert(metric.clone(), tolerance);
        self.assert(ok, || format!("{metric} = {value:e} exceeds {tolerance:e}"))
    }

    /// Asserts `value ≥ threshold`.
    pub fn check_ge(&mut self, metric: impl Into<String>, value: f64, threshold: f64) -> bool {
        let metric = metric.into();
        let ok = value >= threshold;
        self.metrics.insert(metric.clone(), value);
        self.tolerances.insert(metric.clone(), threshold);
        self.assert(ok, || format!("{metric} = {value:e} below {threshold:e}"))
    }

    /// Asserts a boolean condition under a metric name (stored as 1 or 0).
    pub fn check(&mut self, metric: impl Into<String>, ok: bool) -> bool {
        let metric = metric.into();
        self.metrics.insert(metric.clone(), if ok { 1.0 } else { 0.0 });
        self.tolerances.insert(metric.clone(), 1.0);
        self.assert(ok, || format!("{metric} does not hold"))
    }

    /// Asserts that `target` lies inside `mean ± z·se`.
    pub fn check_ci(&mut self, metric: impl Into<String>, est: Estimate, target: f64, z: f64) -> bool {
        let metric = metric.into();
        let dev = (est.mean - target).abs();
        let ok = dev <= z * est.se || dev == 0.0;
        self.metrics.insert(format!("{metric}.mean"), est.mean);
        self.metrics.insert(format!("{metric}.se"), est.se);
        self.tolerances.insert(format!("{metric}.sigmas"), z);
        self.confidence = Some(est);
        self.assert(ok, || {
            format!("{metric}: {} ± {} misses {target} at {z}σ", est.mean, est.se)
        })
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    fn assert(&mut self, ok: bool, msg: impl FnOnce() -> String) -> bool {
        if !ok {
            self.failures.push(msg());
            self.status = Status::Fail;
        } else if self.status != Status::Fail {
            self.status = Status::Pass;
        }
        ok
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// Folds another report in as a sub-report under a prefix.
    pub fn absorb(&mut self, prefix: &str, other: VerificationReport) {
        for (k, v) in other.metrics {
            self.metrics.insert(format!("{prefix}.{k}"), v);
        }
        for (k, v) in other.tolerances {
            self.tolerances.insert(format!("{prefix}.{k}"), v);
        }
        for f in other.failures {
            self.failures.push(format!("{prefix}: {f}"));
        }
        self.notes.extend(other.notes.into_iter().map(|n| format!("{prefix}: {n}")));
        self.samples += other.samples;
        self.paths += other.paths;
        match other.status {
            Status::Fail => self.status = Status::Fail,
            Status::Pass if self.status != Status::Fail => self.status = Status::Pass,
            _ => {}
        }
    }
}

/// JSON document wrapping a set of reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDocument {
    pub seed: u64,
    pub build: String,
    pub status: Status,
    pub reports: Vec<VerificationReport>,
}

impl ReportDocument {
    pub fn new(seed: u64, reports: Vec<VerificationReport>) -> Self {
        let status = if reports.iter().any(|r| r.status == Status::Fail) {
            Status::Fail
        } else if reports.iter().any(|r| r.status == Status::Pass) {
            Status::Pass
        } else {
            Status::Informational
        };
        ReportDocument {
            seed,
            build: build_string(),
            status,
            reports,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Version string of this build, with the git revision when it was known at
/// compile time.
pub fn build_string() -> String {
    match option_env!("SECONDGRADE_GIT_DESCRIBE") {
        Some(g) => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}
