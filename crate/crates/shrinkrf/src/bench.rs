//! The benchmark harness behind the CLI subcommands: seeded repeat runs,
//! horizon sweeps with regret accounting, training-size comparisons against
//! the baselines, and one-off estimation on a checkpoint.
//!
//! Repeats and sweep points execute in a small worker pool (one run per
//! worker, each internally single-threaded); results are written on the main
//! thread in job order, so artifacts are byte-identical regardless of the
//! worker count.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::baselines::{self, comparator_loss, DsgdConfig};
use crate::config::{Algorithm, DataKind, ExperimentConfig};
use crate::error::{Error, Result};
use crate::estimator::{est_scalar_prod, required_test_samples, Hypothesis};
use crate::feature_space::Example;
use crate::learner::{self, Checkpoint, LearnerConfig};
use crate::rng::RngStream;
use crate::synthetic::StreamRole;
use crate::telemetry::{RunSummary, SCHEMA_VERSION};

pub const SWEEP_CSV_HEADER: &str = "T,regret,regret_over_b_sqrt_t,weight_samples,wall_time";
pub const COMPARE_CSV_HEADER: &str = "train_size,algorithm,test_mse,test_mse_sd";

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "SHRINKRF_OUT";

/// Files written by a harness invocation.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct MeanSd {
    mean: f64,
    sd: f64,
}

fn mean_sd(values: &[f64]) -> MeanSd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanSd { mean, sd }
}

/// Run `count` jobs over at most `workers` threads, preserving job order in
/// the returned vector.
pub fn run_jobs<T, F>(count: usize, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if count == 0 {
        return Vec::new();
    }
    let workers = workers.clamp(1, count);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..count).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let result = job(i);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("result slot").expect("job completed"))
        .collect()
}

fn ensure_kernel_for(cfg: &ExperimentConfig, why: &str) -> Result<()> {
    if !cfg.family()?.has_exact_kernel() {
        return Err(Error::Config(format!(
            "{why} requires a family with a closed-form kernel; {} has none",
            cfg.family.id
        )));
    }
    Ok(())
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

fn write_resolved_config(cfg: &ExperimentConfig, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = out_dir.join("resolved.toml");
    write_text(&path, &cfg.to_toml()?)?;
    files.push(path);
    Ok(())
}

struct RepeatOutput {
    summaries: Vec<(Algorithm, RunSummary)>,
    checkpoint: Option<Checkpoint>,
}

fn run_one_repeat(cfg: &ExperimentConfig, repeat: usize) -> Result<RepeatOutput> {
    let family = cfg.family()?;
    let horizon = cfg.learner.horizon;
    let seed = cfg.learner.seed.wrapping_add(repeat as u64);
    let learner_config = cfg.learner_config_for(horizon, seed)?;

    let comparator = if cfg.run.compute_regret {
        let mut stream = cfg.stream(repeat, StreamRole::Train)?;
        let dataset = stream.take_pairs(horizon)?;
        Some(comparator_loss(&dataset, &family, cfg.learner.norm_bound)?)
    } else {
        None
    };

    let mut summaries = Vec::new();
    let mut checkpoint = None;
    for alg in &cfg.run.algorithms {
        let mut stream = cfg.stream(repeat, StreamRole::Train)?;
        let mut summary = match alg {
            Algorithm::Shrink => {
                let (state, summary) = learner::run(&learner_config, family.clone(), &mut stream)?;
                checkpoint = Some(state.checkpoint());
                summary
            }
            Algorithm::ExactOgd => {
                baselines::exact_ogd_run(&learner_config, family.clone(), &mut stream)?.summary
            }
            Algorithm::Dsgd => {
                let dsgd_config = DsgdConfig {
                    horizon,
                    schedule: cfg.dsgd.schedule(),
                    reg_gamma: cfg.dsgd.gamma,
                    seed,
                };
                baselines::dsgd_run(&dsgd_config, family.clone(), &mut stream)?.summary
            }
        };
        if let Some(fit) = &comparator {
            summary.set_comparator(fit.loss);
        }
        summaries.push((*alg, summary));
    }
    Ok(RepeatOutput {
        summaries,
        checkpoint,
    })
}

/// Execute the configured algorithms over `repeats` seeded repetitions,
/// writing per-run CSV + JSON artifacts, shrink checkpoints, and an
/// aggregate with mean/sd per metric.
pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Artifacts> {
    cfg.validate()?;
    if cfg.run.algorithms.is_empty() {
        return Err(Error::Config("no algorithms selected".into()));
    }
    if cfg.run.algorithms.contains(&Algorithm::ExactOgd) {
        ensure_kernel_for(cfg, "exact-ogd")?;
    }
    if cfg.run.compute_regret {
        ensure_kernel_for(cfg, "regret accounting")?;
    }
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    write_resolved_config(cfg, out_dir, &mut files)?;

    let outputs = run_jobs(cfg.run.repeats, cfg.run.workers, |repeat| run_one_repeat(cfg, repeat));
    let mut per_alg: BTreeMap<&'static str, Vec<&RunSummary>> = BTreeMap::new();
    let mut collected = Vec::with_capacity(outputs.len());
    for output in outputs {
        collected.push(output?);
    }
    for (repeat, output) in collected.iter().enumerate() {
        for (alg, summary) in &output.summaries {
            let stem = format!("{}_rep{:03}", alg.name(), repeat);
            let csv_path = out_dir.join(format!("{stem}.rounds.csv"));
            summary.write_rounds_csv(&csv_path)?;
            files.push(csv_path);
            let json_path = out_dir.join(format!("{stem}.summary.json"));
            summary.write_json(&json_path)?;
            files.push(json_path);
            per_alg.entry(alg.name()).or_default().push(summary);
        }
        if let Some(ckpt) = &output.checkpoint {
            let path = out_dir.join(format!("shrink_rep{repeat:03}.checkpoint.json"));
            ckpt.save(&path)?;
            files.push(path);
        }
    }

    let mut metrics: BTreeMap<String, BTreeMap<String, MeanSd>> = BTreeMap::new();
    for (alg, summaries) in &per_alg {
        let mut table = BTreeMap::new();
        let collect = |f: &dyn Fn(&RunSummary) -> Option<f64>| -> Option<MeanSd> {
            let values: Vec<f64> = summaries.iter().filter_map(|s| f(s)).collect();
            (values.len() == summaries.len()).then(|| mean_sd(&values))
        };
        type Getter<'a> = &'a dyn Fn(&RunSummary) -> Option<f64>;
        let entries: [(&str, Getter); 7] = [
            ("cum_surrogate_loss", &|s| Some(s.cum_surrogate_loss)),
            ("cum_exact_loss", &|s| s.cum_exact_loss),
            ("regret", &|s| s.regret),
            ("wall_time_seconds", &|s| Some(s.wall_time_seconds)),
            ("weight_samples", &|s| Some(s.counters.weight_samples as f64)),
            ("feature_evals", &|s| Some(s.counters.feature_evals as f64)),
            ("shrink_events", &|s| Some(s.counters.shrink_events as f64)),
        ];
        for (name, getter) in entries {
            if let Some(stat) = collect(getter) {
                table.insert(name.to_string(), stat);
            }
        }
        metrics.insert(alg.to_string(), table);
    }
    #[derive(Serialize)]
    struct Aggregate {
        schema_version: u32,
        repeats: usize,
        metrics: BTreeMap<String, BTreeMap<String, MeanSd>>,
    }
    let aggregate = Aggregate {
        schema_version: SCHEMA_VERSION,
        repeats: cfg.run.repeats,
        metrics,
    };
    let path = out_dir.join("aggregate.json");
    write_text(
        &path,
        &serde_json::to_string_pretty(&aggregate).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    files.push(path);

    Ok(Artifacts {
        out_dir: out_dir.to_path_buf(),
        files,
    })
}

/// One sweep point: averaged regret against the comparator at a horizon.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub horizon: usize,
    pub regret: f64,
    pub regret_over_b_sqrt_t: f64,
    pub weight_samples: u64,
    pub wall_time: f64,
}

/// Sweep the horizon list with theorem-schedule parameters, computing the
/// regret against the kernel-ridge comparator at every point.
pub fn cmd_sweep(cfg: &ExperimentConfig, horizons: &[usize], out_dir: &Path) -> Result<(Vec<SweepRow>, Artifacts)> {
    cfg.validate()?;
    if horizons.is_empty() {
        return Err(Error::Config("sweep needs a nonempty horizon list".into()));
    }
    if horizons.contains(&0) {
        return Err(Error::Config("sweep horizons must be >= 1".into()));
    }
    ensure_kernel_for(cfg, "sweep regret accounting")?;
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    write_resolved_config(cfg, out_dir, &mut files)?;

    let family = cfg.family()?;
    let b = cfg.learner.norm_bound;
    let jobs: Vec<(usize, usize)> = horizons
        .iter()
        .flat_map(|&t| (0..cfg.run.repeats).map(move |r| (t, r)))
        .collect();
    struct SweepRun {
        horizon: usize,
        repeat: usize,
        seed: u64,
        regret: f64,
        cum_exact_loss: f64,
        comparator_loss: f64,
        weight_samples: u64,
        wall_time: f64,
    }
    let results = run_jobs(jobs.len(), cfg.run.workers, |idx| -> Result<SweepRun> {
        let (horizon, repeat) = jobs[idx];
        let seed = cfg.learner.seed.wrapping_add(repeat as u64);
        let learner_config = sweep_learner_config(cfg, horizon, repeat)?;
        let mut stream = cfg.stream(repeat, StreamRole::Train)?;
        let (_, summary) = learner::run(&learner_config, family.clone(), &mut stream)?;
        let mut replay = cfg.stream(repeat, StreamRole::Train)?;
        let dataset = replay.take_pairs(horizon)?;
        let fit = comparator_loss(&dataset, &family, b)?;
        let cum_exact = summary
            .cum_exact_loss
            .ok_or_else(|| Error::Config("sweep requires exact losses".into()))?;
        Ok(SweepRun {
            horizon,
            repeat,
            seed,
            regret: cum_exact - fit.loss,
            cum_exact_loss: cum_exact,
            comparator_loss: fit.loss,
            weight_samples: summary.counters.weight_samples,
            wall_time: summary.wall_time_seconds,
        })
    });
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }

    let mut detail = String::from("T,repeat,seed,regret,cum_exact_loss,comparator_loss,weight_samples,wall_time\n");
    for r in &runs {
        detail.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.horizon, r.repeat, r.seed, r.regret, r.cum_exact_loss, r.comparator_loss, r.weight_samples, r.wall_time
        ));
    }
    let detail_path = out_dir.join("sweep_runs.csv");
    write_text(&detail_path, &detail)?;
    files.push(detail_path);

    let mut rows = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let of_t: Vec<&SweepRun> = runs.iter().filter(|r| r.horizon == t).collect();
        let regret = of_t.iter().map(|r| r.regret).sum::<f64>() / of_t.len() as f64;
        let wall = of_t.iter().map(|r| r.wall_time).sum::<f64>() / of_t.len() as f64;
        let weight_samples = of_t[0].weight_samples;
        debug_assert!(of_t.iter().all(|r| r.weight_samples == weight_samples));
        rows.push(SweepRow {
            horizon: t,
            regret,
            regret_over_b_sqrt_t: regret / (b * (t as f64).sqrt()),
            weight_samples,
            wall_time: wall,
        });
    }
    let mut table = String::from(SWEEP_CSV_HEADER);
    table.push('\n');
    for row in &rows {
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            row.horizon, row.regret, row.regret_over_b_sqrt_t, row.weight_samples, row.wall_time
        ));
    }
    let table_path = out_dir.join("sweep.csv");
    write_text(&table_path, &table)?;
    files.push(table_path);

    Ok((
        rows,
        Artifacts {
            out_dir: out_dir.to_path_buf(),
            files,
        },
    ))
}

/// One comparison cell: an algorithm's held-out MSE at a training size.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub train_size: usize,
    pub algorithm: &'static str,
    pub test_mse: f64,
    pub test_mse_sd: f64,
}

fn mse_exact(h: &Hypothesis, test: &[(Example, f64)]) -> Result<f64> {
    let mut acc = 0.0;
    for (x, y) in test {
        let p = h.exact_value(x)?;
        acc += (p - y) * (p - y);
    }
    Ok(acc / test.len() as f64)
}

fn mse_estimated(
    h: &Hypothesis,
    test: &[(Example, f64)],
    eps0: f64,
    delta: f64,
    clamp: bool,
    seed: u64,
) -> Result<f64> {
    let mut rng = RngStream::derive(seed, &[0x7e57]);
    let mut counters = crate::telemetry::Counters::default();
    let mut acc = 0.0;
    for (x, y) in test {
        let p = if clamp {
            learner::predict_clamped(h, x, eps0, delta, &mut rng, &mut counters)?
        } else {
            learner::predict(h, x, eps0, delta, &mut rng, &mut counters)?
        };
        acc += (p - y) * (p - y);
    }
    Ok(acc / test.len() as f64)
}

/// Train every configured algorithm at each training size on identical
/// streams and evaluate the averaged predictors on a shared held-out set.
/// The shrinking-gradient predictor is evaluated through its sampling-based
/// `predict`, the baselines exactly.
pub fn cmd_compare(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(Vec<CompareRow>, Artifacts)> {
    cfg.validate()?;
    let sizes = &cfg.run.train_sizes;
    if sizes.is_empty() {
        return Err(Error::Config("compare needs run.train_sizes".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::Config("train sizes must be >= 1".into()));
    }
    if cfg.data.kind == DataKind::File {
        return Err(Error::Config("compare needs a generated stream with a test split".into()));
    }
    if cfg.run.algorithms.contains(&Algorithm::ExactOgd) {
        ensure_kernel_for(cfg, "exact-ogd")?;
    }
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    write_resolved_config(cfg, out_dir, &mut files)?;

    let family = cfg.family()?;
    let jobs: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&n| (0..cfg.run.repeats).map(move |r| (n, r)))
        .collect();
    type Cell = (usize, usize, Vec<(Algorithm, f64)>);
    let results = run_jobs(jobs.len(), cfg.run.workers, |idx| -> Result<Cell> {
        let (size, repeat) = jobs[idx];
        let seed = cfg.learner.seed.wrapping_add(repeat as u64);
        let mut test_stream = cfg.stream(repeat, StreamRole::Test)?;
        let test = test_stream.take_pairs(cfg.data.test_size)?;
        let mut cells = Vec::new();
        for alg in &cfg.run.algorithms {
            let mut train = cfg.stream(repeat, StreamRole::Train)?;
            let mse = match alg {
                Algorithm::Shrink => {
                    let learner_config = cfg.learner_config_for(size, seed)?;
                    let (state, _) = learner::run(&learner_config, family.clone(), &mut train)?;
                    let avg = state.averaged_hypothesis()?;
                    mse_estimated(
                        &avg,
                        &test,
                        cfg.estimator.eps0,
                        cfg.estimator.delta,
                        cfg.estimator.clamp_predictions,
                        seed.wrapping_add(size as u64),
                    )?
                }
                Algorithm::ExactOgd => {
                    let learner_config = cfg.learner_config_for(size, seed)?;
                    let outcome = baselines::exact_ogd_run(&learner_config, family.clone(), &mut train)?;
                    mse_exact(&outcome.averaged, &test)?
                }
                Algorithm::Dsgd => {
                    let dsgd_config = DsgdConfig {
                        horizon: size,
                        schedule: cfg.dsgd.schedule(),
                        reg_gamma: cfg.dsgd.gamma,
                        seed,
                    };
                    let outcome = baselines::dsgd_run(&dsgd_config, family.clone(), &mut train)?;
                    let mut acc = 0.0;
                    for (x, y) in &test {
                        let p = outcome.averaged.value(x)?;
                        acc += (p - y) * (p - y);
                    }
                    acc / test.len() as f64
                }
            };
            cells.push((*alg, mse));
        }
        Ok((size, repeat, cells))
    });
    let mut cells = Vec::with_capacity(results.len());
    for r in results {
        cells.push(r?);
    }

    let mut detail = String::from("train_size,repeat,algorithm,test_mse\n");
    for (size, repeat, row) in &cells {
        for (alg, mse) in row {
            detail.push_str(&format!("{},{},{},{}\n", size, repeat, alg.name(), mse));
        }
    }
    let detail_path = out_dir.join("compare_runs.csv");
    write_text(&detail_path, &detail)?;
    files.push(detail_path);

    let mut rows = Vec::new();
    for &size in sizes {
        for alg in &cfg.run.algorithms {
            let values: Vec<f64> = cells
                .iter()
                .filter(|(s, _, _)| *s == size)
                .flat_map(|(_, _, row)| row.iter().filter(|(a, _)| a == alg).map(|(_, m)| *m))
                .collect();
            let stat = mean_sd(&values);
            rows.push(CompareRow {
                train_size: size,
                algorithm: alg.name(),
                test_mse: stat.mean,
                test_mse_sd: stat.sd,
            });
        }
    }
    let mut table = String::from(COMPARE_CSV_HEADER);
    table.push('\n');
    for row in &rows {
        table.push_str(&format!(
            "{},{},{},{}\n",
            row.train_size, row.algorithm, row.test_mse, row.test_mse_sd
        ));
    }
    let table_path = out_dir.join("compare.csv");
    write_text(&table_path, &table)?;
    files.push(table_path);

    Ok((
        rows,
        Artifacts {
            out_dir: out_dir.to_path_buf(),
            files,
        },
    ))
}

/// Outcome of a one-off estimation on a checkpointed hypothesis.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub value: f64,
    pub m_used: usize,
    pub l1: f64,
    pub eps0: f64,
    pub delta: f64,
    pub clamped: bool,
}

/// Estimate the checkpointed hypothesis at one point, using the sample
/// count dictated by the accuracy contract.
pub fn cmd_estimate(
    checkpoint_path: &Path,
    point: &[f64],
    eps0: f64,
    delta: f64,
    clamp: bool,
    seed: u64,
) -> Result<EstimateReport> {
    if !(eps0 > 0.0) {
        return Err(Error::Config("eps0 must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config("delta must lie in (0, 1)".into()));
    }
    let state = Checkpoint::load(checkpoint_path)?.restore()?;
    let h = state.hypothesis();
    let x = Example::new(point.to_vec())?;
    if x.dim() != h.family().input_dim() {
        return Err(Error::Config(format!(
            "point has dimension {}, family expects {}",
            x.dim(),
            h.family().input_dim()
        )));
    }
    let l1 = h.coeffs().l1_exact();
    if h.is_empty() || h.coeffs().all_zero() {
        return Ok(EstimateReport {
            value: 0.0,
            m_used: 0,
            l1,
            eps0,
            delta,
            clamped: clamp,
        });
    }
    let m = required_test_samples(l1, eps0, delta);
    let mut rng = RngStream::derive(seed, &[0xe57]);
    let mut counters = crate::telemetry::Counters::default();
    let estimate = est_scalar_prod(h, &x, m, &mut rng, &mut counters)?;
    let value = if clamp { estimate.value.clamp(-1.0, 1.0) } else { estimate.value };
    Ok(EstimateReport {
        value,
        m_used: m,
        l1,
        eps0,
        delta,
        clamped: clamp,
    })
}

/// Resolve the output directory: explicit flag, then the environment
/// override, then the config value.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Ok(env_dir) = std::env::var(OUT_DIR_ENV) {
        if !env_dir.is_empty() {
            return PathBuf::from(env_dir);
        }
    }
    cfg.run.out_dir.clone()
}

/// Learner parameters a sweep point uses: always the theorem schedule at the
/// sweep horizon (scaled by c_eta / c_m, clamped by m_min / m_max), whatever
/// the run-mode settings say.
pub fn sweep_learner_config(cfg: &ExperimentConfig, horizon: usize, repeat: usize) -> Result<LearnerConfig> {
    let ls = &cfg.learner;
    if !(ls.norm_bound > 1.0) {
        return Err(Error::Config(format!(
            "sweep needs norm bound B > 1, got {}",
            ls.norm_bound
        )));
    }
    let schedule = crate::learner::theorem_schedule(ls.norm_bound, horizon.max(1), ls.c_eta, ls.c_m);
    Ok(LearnerConfig {
        horizon,
        norm_bound: ls.norm_bound,
        eta: schedule.eta,
        m_train: schedule.m_train.clamp(ls.m_min, ls.m_max),
        shrink_threshold_factor: ls.shrink_threshold_factor,
        shrink_ratio: ls.shrink_ratio,
        seed: ls.seed.wrapping_add(repeat as u64),
        c_eta: ls.c_eta,
        c_m: ls.c_m,
    })
}
