//! The shrinking-gradient online learner.
//!
//! Each round estimates the current prediction `E_t ~ <f_t, psi_{x_t}>` with
//! the two-stage estimator, then either takes a gradient step — appending the
//! observed example with coefficient `-eta (E_t - y_t)` — or, when `|E_t|`
//! reaches `16 B`, multiplies all coefficients by 1/4 instead of projecting
//! onto the norm ball. The coefficient L1 norm therefore never exceeds
//! `(16 B + 1) eta t`, which is the invariant everything else leans on:
//! estimator variance, tail bounds, and test-time sample counts.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{est_scalar_prod, required_test_samples, Coefficients, Hypothesis};
use crate::feature_space::{Example, FeatureFamily};
use crate::rng::RngStream;
use crate::synthetic::DataStream;
use crate::telemetry::{Counters, RoundRecord, RunSummary};

/// Exact L1 cache refresh period, in rounds.
const L1_REFRESH_PERIOD: usize = 256;

/// Relative slack for the runtime L1-bound assertion, covering cache drift.
const L1_ASSERT_SLACK: f64 = 1e-9;

/// Parameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Horizon T.
    pub horizon: usize,
    /// Comparator norm bound B; must exceed 1.
    pub norm_bound: f64,
    /// Step size eta.
    pub eta: f64,
    /// Estimator samples per training round.
    pub m_train: usize,
    /// Shrink when |E_t| >= shrink_threshold_factor * B. The analysis fixes 16.
    pub shrink_threshold_factor: f64,
    /// Multiplier applied on a shrink round. The analysis fixes 1/4.
    pub shrink_ratio: f64,
    pub seed: u64,
    /// Schedule scaling knobs; see [`theorem_schedule`].
    pub c_eta: f64,
    pub c_m: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            horizon: 1000,
            norm_bound: 2.0,
            eta: 0.05,
            m_train: 64,
            shrink_threshold_factor: 16.0,
            shrink_ratio: 0.25,
            seed: 0,
            c_eta: 1.0,
            c_m: 1.0,
        }
    }
}

impl LearnerConfig {
    /// Fill `eta` and `m_train` from the theorem schedule.
    pub fn with_schedule(mut self, schedule: &Schedule) -> Self {
        self.eta = schedule.eta;
        self.m_train = schedule.m_train;
        self
    }

    /// Hard validation plus soft warnings (returned, not logged).
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.norm_bound > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "norm bound B must exceed 1, got {}",
                self.norm_bound
            )));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if self.m_train == 0 {
            return Err(Error::InvalidParameter("m_train must be >= 1".into()));
        }
        if !(self.shrink_ratio > 0.0 && self.shrink_ratio < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "shrink ratio must lie in (0, 1), got {}",
                self.shrink_ratio
            )));
        }
        if !(self.shrink_threshold_factor > 0.0) {
            return Err(Error::InvalidParameter("shrink threshold factor must be positive".into()));
        }
        let mut warnings = Vec::new();
        if self.eta >= 0.125 {
            warnings.push(format!(
                "eta = {} >= 1/8; the regret analysis assumes eta < 1/8",
                self.eta
            ));
        }
        Ok(warnings)
    }
}

/// Parameter schedule from the regret analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eta: f64,
    pub m_train: usize,
    /// The log factor's argument, reported for logging.
    pub gamma: f64,
}

/// Step size and per-round sample count achieving the `O(B sqrt(T))` regret:
/// `eta = c_eta * B / (2 sqrt(T))` and
/// `m = ceil(c_m * ((16B+1) B)^2 * T * ln(gamma))` with
/// `gamma = max(((16B+1) eta T + B)^2 / eta^2, e)`.
///
/// `c_eta` and `c_m` scale the two knobs without changing the shape; the
/// unscaled `m` is astronomically large at small scales, so experiments run
/// with `c_m << 1`.
pub fn theorem_schedule(norm_bound: f64, horizon: usize, c_eta: f64, c_m: f64) -> Schedule {
    assert!(norm_bound > 1.0, "theorem_schedule needs B > 1");
    assert!(horizon >= 1, "theorem_schedule needs T >= 1");
    assert!(c_eta > 0.0 && c_m > 0.0, "schedule knobs must be positive");
    let t = horizon as f64;
    let b = norm_bound;
    let eta = c_eta * b / (2.0 * t.sqrt());
    let gamma = (((16.0 * b + 1.0) * eta * t + b).powi(2) / (eta * eta)).max(std::f64::consts::E);
    let m_raw = c_m * ((16.0 * b + 1.0) * b).powi(2) * t * gamma.ln();
    Schedule {
        eta,
        m_train: (m_raw.ceil() as usize).max(1),
        gamma,
    }
}

/// The L1-norm guarantee for the coefficients after `t` rounds:
/// `|alpha|_1 <= (16 B + 1) eta t`.
pub fn l1_norm_bound(norm_bound: f64, eta: f64, t: usize) -> f64 {
    (16.0 * norm_bound + 1.0) * eta * t as f64
}

fn l1_bound_with_factor(factor: f64, norm_bound: f64, eta: f64, t: usize) -> f64 {
    (factor * norm_bound + 1.0) * eta * t as f64
}

/// Mutable learner state across rounds.
#[derive(Debug, Clone)]
pub struct LearnerState {
    hypothesis: Hypothesis,
    rounds_done: usize,
    /// Running per-index sum of post-update coefficients; divided by T this
    /// is the averaged predictor's coefficient vector.
    avg_accumulator: Vec<f64>,
    rng: RngStream,
    counters: Counters,
    /// Wall time spent inside estimation calls, for the rho estimate.
    estimation_seconds: f64,
}

impl LearnerState {
    pub fn new(family: FeatureFamily, config: &LearnerConfig) -> Self {
        LearnerState {
            hypothesis: Hypothesis::empty(family),
            rounds_done: 0,
            avg_accumulator: Vec::new(),
            rng: RngStream::derive(config.seed, &[0x1e42]),
            counters: Counters::default(),
            estimation_seconds: 0.0,
        }
    }

    pub fn hypothesis(&self) -> &Hypothesis {
        &self.hypothesis
    }

    pub fn rounds_done(&self) -> usize {
        self.rounds_done
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn rng(&self) -> &RngStream {
        &self.rng
    }

    /// One online round: estimate, update or shrink, maintain the average.
    pub fn step(&mut self, x_t: &Example, y_t: f64, config: &LearnerConfig) -> Result<RoundRecord> {
        if self.rounds_done >= config.horizon {
            return Err(Error::InvalidParameter(format!(
                "horizon {} already completed",
                config.horizon
            )));
        }
        if !(y_t.is_finite() && y_t.abs() <= 1.0) {
            return Err(Error::LabelOutOfRange { value: y_t });
        }

        // Exact loss of the pre-update hypothesis, when an oracle kernel exists.
        let exact_loss = if self.hypothesis.family().has_exact_kernel() {
            let p = self.hypothesis.exact_value(x_t)?;
            Some(0.5 * (p - y_t) * (p - y_t))
        } else {
            None
        };

        let est_started = Instant::now();
        let estimate = est_scalar_prod(&self.hypothesis, x_t, config.m_train, &mut self.rng, &mut self.counters)?;
        self.estimation_seconds += est_started.elapsed().as_secs_f64();

        self.apply_update(x_t, y_t, estimate.value, exact_loss, config)
    }

    /// The round body after the estimate is in hand: branch on the threshold,
    /// update or shrink, maintain the average, enforce the L1 invariant.
    fn apply_update(
        &mut self,
        x_t: &Example,
        y_t: f64,
        e_t: f64,
        exact_loss: Option<f64>,
        config: &LearnerConfig,
    ) -> Result<RoundRecord> {
        let threshold = config.shrink_threshold_factor * config.norm_bound;
        let shrink = e_t.abs() >= threshold;
        if shrink {
            self.hypothesis.coeffs_mut().shrink(config.shrink_ratio);
            self.counters.shrink_events += 1;
            // The observed pair is discarded; the round still counts.
        } else {
            // Descent direction for the squared loss: gradient is
            // (E_t - y_t) psi_{x_t}, so the appended coefficient is its negative.
            self.hypothesis.append(x_t.clone(), -config.eta * (e_t - y_t));
        }

        self.rounds_done += 1;
        if self.rounds_done.is_multiple_of(L1_REFRESH_PERIOD) {
            self.hypothesis.coeffs_mut().refresh_l1_cache();
        }

        self.avg_accumulator.resize(self.hypothesis.len(), 0.0);
        for (i, acc) in self.avg_accumulator.iter_mut().enumerate() {
            *acc += self.hypothesis.coeffs().effective(i);
        }

        let l1_after = self.hypothesis.coeffs().l1();
        let bound = l1_bound_with_factor(
            config.shrink_threshold_factor,
            config.norm_bound,
            config.eta,
            self.rounds_done,
        );
        if l1_after > bound * (1.0 + L1_ASSERT_SLACK) {
            return Err(Error::InvariantViolation(format!(
                "|alpha|_1 = {l1_after} exceeds ({} B + 1) eta t = {bound} at round {}",
                config.shrink_threshold_factor, self.rounds_done
            )));
        }

        Ok(RoundRecord {
            t: self.rounds_done,
            e_t,
            shrink,
            y_t,
            l1_after,
            surrogate_loss: 0.5 * (e_t - y_t) * (e_t - y_t),
            exact_loss,
        })
    }

    /// The averaged predictor `f_S`: coefficients are the per-index means of
    /// the post-update states over all completed rounds.
    pub fn averaged_hypothesis(&self) -> Result<Hypothesis> {
        if self.rounds_done == 0 {
            return Ok(Hypothesis::empty(self.hypothesis.family().clone()));
        }
        let t = self.rounds_done as f64;
        let coeffs = Coefficients::from_parts(self.avg_accumulator.iter().map(|a| a / t).collect(), 1.0)?;
        Hypothesis::from_parts(
            self.hypothesis.family().clone(),
            self.hypothesis.support().to_vec(),
            coeffs,
        )
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: 1,
            family: self.hypothesis.family().to_spec(),
            support: self.hypothesis.support().iter().map(|x| x.features().to_vec()).collect(),
            raw_coefficients: self.hypothesis.coeffs().raw().to_vec(),
            scale: self.hypothesis.coeffs().scale(),
            rounds_done: self.rounds_done,
            counters: self.counters,
            rng_key_hex: hex_encode(&self.rng.key()),
            rng_word_pos: self.rng.word_pos().to_string(),
            avg_accumulator: self.avg_accumulator.clone(),
        }
    }
}

/// Run the learner for `config.horizon` rounds over a stream.
pub fn run(config: &LearnerConfig, family: FeatureFamily, stream: &mut DataStream) -> Result<(LearnerState, RunSummary)> {
    let warnings = config.validate()?;
    let mut state = LearnerState::new(family, config);
    let mut summary = RunSummary::new("shrink", config.seed);
    summary.warnings = warnings;
    let started = Instant::now();
    for t in 0..config.horizon {
        let (x, y) = stream.next_pair().map_err(|e| match e {
            Error::StreamExhausted { emitted, .. } => Error::StreamExhausted {
                emitted,
                needed: config.horizon,
            },
            other => other,
        })?;
        let record = state.step(&x, y, config)?;
        debug_assert_eq!(record.t, t + 1);
        summary.push_record(record);
    }
    summary.counters = state.counters;
    summary.wall_time_seconds = started.elapsed().as_secs_f64();
    if state.counters.weight_samples > 0 {
        summary.rho_seconds_per_weight_sample =
            Some(state.estimation_seconds / state.counters.weight_samples as f64);
    }
    Ok((state, summary))
}

/// Resume a checkpointed run: replays the data stream to the checkpoint
/// position and continues with the restored estimator stream, bit-exactly.
pub fn resume(
    config: &LearnerConfig,
    checkpoint: Checkpoint,
    stream: &mut DataStream,
) -> Result<(LearnerState, RunSummary)> {
    let warnings = config.validate()?;
    let mut state = checkpoint.restore()?;
    let start_round = state.rounds_done;
    if start_round > config.horizon {
        return Err(Error::Checkpoint(format!(
            "checkpoint is at round {start_round}, beyond horizon {}",
            config.horizon
        )));
    }
    for _ in 0..start_round {
        stream.next_pair()?;
    }
    let mut summary = RunSummary::new("shrink", config.seed);
    summary.warnings = warnings;
    let started = Instant::now();
    for _ in start_round..config.horizon {
        let (x, y) = stream.next_pair()?;
        let record = state.step(&x, y, config)?;
        summary.push_record(record);
    }
    summary.counters = state.counters;
    summary.wall_time_seconds = started.elapsed().as_secs_f64();
    if state.counters.weight_samples > 0 {
        summary.rho_seconds_per_weight_sample =
            Some(state.estimation_seconds / state.counters.weight_samples as f64);
    }
    Ok((state, summary))
}

/// Estimate `<h, psi_x>` at test time with the sample count needed for
/// accuracy `eps0` at confidence `1 - delta` given the hypothesis's actual
/// L1 norm. An empty or all-zero hypothesis returns 0 and consumes nothing.
pub fn predict(
    h: &Hypothesis,
    x: &Example,
    eps0: f64,
    delta: f64,
    rng: &mut RngStream,
    counters: &mut Counters,
) -> Result<f64> {
    if h.is_empty() || h.coeffs().all_zero() {
        return Ok(0.0);
    }
    let m = required_test_samples(h.coeffs().l1_exact(), eps0, delta);
    Ok(est_scalar_prod(h, x, m, rng, counters)?.value)
}

/// [`predict`], clamped to the label range `[-1, 1]` for evaluation.
pub fn predict_clamped(
    h: &Hypothesis,
    x: &Example,
    eps0: f64,
    delta: f64,
    rng: &mut RngStream,
    counters: &mut Counters,
) -> Result<f64> {
    Ok(predict(h, x, eps0, delta, rng, counters)?.clamp(-1.0, 1.0))
}

/// Self-describing snapshot of a learner, sufficient for bit-exact resume.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub family: crate::feature_space::FamilySpec,
    pub support: Vec<Vec<f64>>,
    pub raw_coefficients: Vec<f64>,
    pub scale: f64,
    pub rounds_done: usize,
    pub counters: Counters,
    pub rng_key_hex: String,
    /// ChaCha word position, decimal u128.
    pub rng_word_pos: String,
    pub avg_accumulator: Vec<f64>,
}

impl Checkpoint {
    pub fn restore(self) -> Result<LearnerState> {
        if self.format_version != 1 {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format version {}",
                self.format_version
            )));
        }
        if self.support.len() != self.raw_coefficients.len() {
            return Err(Error::Checkpoint("support / coefficient length mismatch".into()));
        }
        if self.avg_accumulator.len() != self.support.len() {
            return Err(Error::Checkpoint("accumulator length mismatch".into()));
        }
        let family = FeatureFamily::from_spec(&self.family)?;
        let support: Result<Vec<Example>> = self.support.into_iter().map(Example::new).collect();
        let coeffs = Coefficients::from_parts(self.raw_coefficients, self.scale)?;
        let hypothesis = Hypothesis::from_parts(family, support?, coeffs)?;
        let key = hex_decode(&self.rng_key_hex)?;
        let pos: u128 = self
            .rng_word_pos
            .parse()
            .map_err(|_| Error::Checkpoint("bad rng word position".into()))?;
        Ok(LearnerState {
            hypothesis,
            rounds_done: self.rounds_done,
            avg_accumulator: self.avg_accumulator,
            rng: RngStream::from_key_and_pos(key, pos),
            counters: self.counters,
            estimation_seconds: 0.0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)?;
        serde_json::from_str(&body).map_err(|e| Error::Checkpoint(format!("parse: {e}")))
    }
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hex_decode(s: &str) -> Result<[u8; 32]> {
    if s.len() != 64 {
        return Err(Error::Checkpoint("rng key must be 32 hex bytes".into()));
    }
    let mut out = [0u8; 32];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let hi = (chunk[0] as char).to_digit(16);
        let lo = (chunk[1] as char).to_digit(16);
        match (hi, lo) {
            (Some(h), Some(l)) => out[i] = (h * 16 + l) as u8,
            _ => return Err(Error::Checkpoint("bad hex in rng key".into())),
        }
    }
    Ok(out)
}
