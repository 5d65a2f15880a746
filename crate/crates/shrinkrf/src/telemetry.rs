//! Run telemetry: per-round records, counters, and run summaries shared by
//! the main learner and every baseline so the benchmark harness can compare
//! them uniformly.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Version stamp written into every summary and checked when parsing
/// emitted files.
pub const SCHEMA_VERSION: u32 = 1;

/// Header of the per-round CSV emitted for every run.
pub const ROUND_CSV_HEADER: &str = "t,E_t,shrink,l1,surrogate_loss,exact_loss";

/// Exact work counters. `weight_samples` and `feature_evals` account the
/// estimator budget (m draws and 2m evaluations per estimation call), which
/// is the complexity currency of the algorithm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub weight_samples: u64,
    pub feature_evals: u64,
    pub shrink_events: u64,
}

impl Counters {
    pub fn add(&mut self, other: &Counters) {
        self.weight_samples += other.weight_samples;
        self.feature_evals += other.feature_evals;
        self.shrink_events += other.shrink_events;
    }
}

/// Telemetry for one online round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub t: usize,
    /// Estimated (or, for exact baselines, computed) scalar product at x_t.
    pub e_t: f64,
    /// Whether this round took the multiplicative shrink branch.
    pub shrink: bool,
    pub y_t: f64,
    /// L1 norm of the coefficient vector after the round's update.
    pub l1_after: f64,
    /// Loss measured with the estimated prediction: 0.5 (E_t - y_t)^2.
    pub surrogate_loss: f64,
    /// Loss of the pre-update hypothesis under the closed-form kernel,
    /// when the family has one.
    pub exact_loss: Option<f64>,
}

/// Summary of one run: all round records plus cumulative metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub algorithm: String,
    pub seed: u64,
    pub rounds: usize,
    pub records: Vec<RoundRecord>,
    pub cum_surrogate_loss: f64,
    /// Present only when the family admits a closed-form kernel.
    pub cum_exact_loss: Option<f64>,
    /// Best-in-hindsight comparator loss, when computed by the harness.
    pub comparator_loss: Option<f64>,
    /// cum_exact_loss - comparator_loss, when both are available.
    pub regret: Option<f64>,
    pub counters: Counters,
    /// Mean wall time per weight sample (the cost constant the quadratic
    /// run-time estimate scales by), measured over the estimation calls of
    /// the run. Absent when no samples were drawn.
    pub rho_seconds_per_weight_sample: Option<f64>,
    pub wall_time_seconds: f64,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn new(algorithm: &str, seed: u64) -> Self {
        RunSummary {
            schema_version: SCHEMA_VERSION,
            algorithm: algorithm.to_string(),
            seed,
            rounds: 0,
            records: Vec::new(),
            cum_surrogate_loss: 0.0,
            cum_exact_loss: None,
            comparator_loss: None,
            regret: None,
            counters: Counters::default(),
            rho_seconds_per_weight_sample: None,
            wall_time_seconds: 0.0,
            warnings: Vec::new(),
        }
    }

    pub fn push_record(&mut self, record: RoundRecord) {
        self.cum_surrogate_loss += record.surrogate_loss;
        if let Some(exact) = record.exact_loss {
            *self.cum_exact_loss.get_or_insert(0.0) += exact;
        }
        self.rounds += 1;
        self.records.push(record);
    }

    pub fn set_comparator(&mut self, comparator_loss: f64) {
        self.comparator_loss = Some(comparator_loss);
        if let Some(exact) = self.cum_exact_loss {
            self.regret = Some(exact - comparator_loss);
        }
    }

    /// Write the per-round CSV. Reals are printed with shortest round-trip
    /// precision; a missing exact loss is an empty cell.
    pub fn write_rounds_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.records.len() * 48 + 64);
        out.push_str(ROUND_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let exact = match r.exact_loss {
                Some(v) => v.to_string(),
                None => String::new(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.t, r.e_t, r.shrink, r.l1_after, r.surrogate_loss, exact
            ));
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| crate::error::Error::Io(std::io::Error::other(e)))?;
        std::fs::write(path, body)?;
        Ok(())
    }
}
