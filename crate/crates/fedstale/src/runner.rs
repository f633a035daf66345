//! Experiment runner: sweeps every (metric, scenario) cell over N seeded
//! repetitions, writes per-tick curves and a per-cell summary as CSV.
//!
//! Runs within a sweep are independent, so cells execute on a thread pool;
//! results are collected in declaration order and all output is formatted
//! deterministically, making reruns of the same config byte-identical on a
//! given platform.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::config::{DataSource, ExperimentConfig, ModelKind};
use crate::data::{dirichlet_partition, load_idx, synth_blobs, Dataset};
use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::model::ModelSpec;
use crate::rng::{self, Domain};
use crate::sim::{run_simulation, AsynchronyScenario, EvalPoint, RunConfig};
use crate::staleness::StalenessConfig;

/// Paths of the files an experiment produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentOutput {
    pub curves_path: PathBuf,
    pub summary_path: PathBuf,
    pub config_path: PathBuf,
}

/// One completed run: the evaluation curve plus its seed for labeling.
#[derive(Debug, Clone)]
struct CellRun {
    seed: u64,
    evals: Vec<EvalPoint>,
}

impl CellRun {
    /// Accuracy at the last evaluation tick.
    fn final_accuracy(&self) -> f64 {
        self.evals.last().map(|e| e.accuracy).unwrap_or(0.0)
    }
}

/// Mean and population standard deviation (divide by N, not N-1).
pub fn summarize(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Consistency("cannot summarize zero values".into()));
    }
    let n = values.len() as f64;
    let mut sum = 0.0;
    for v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite { context: "summary input".into() });
        }
        sum += v;
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for v in values {
        sq += (v - mean) * (v - mean);
    }
    Ok((mean, (sq / n).sqrt()))
}

/// Formats a value with nine significant digits in plain decimal notation.
/// Fixed width per magnitude keeps CSV output byte-stable across reruns.
pub fn fmt9(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000000".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).clamp(0, 17) as usize;
    format!("{x:.decimals$}")
}

/// Builds the model and data for one seeded run and simulates it.
fn execute_run(
    cfg: &ExperimentConfig,
    metric: MetricKind,
    scenario: &AsynchronyScenario,
    seed: u64,
    idx_data: Option<&(Dataset, Dataset)>,
) -> Result<CellRun> {
    let (train, test) = match (&cfg.data, idx_data) {
        (DataSource::Synthetic { n_per_class, d, n_classes, spread, test_per_class }, _) => {
            let test_seed = rng::mix(seed, Domain::TestData, 0, 0);
            let train = synth_blobs(*n_per_class, *d, *n_classes, *spread, seed)?;
            let test = synth_blobs(*test_per_class, *d, *n_classes, *spread, test_seed)?;
            (train, test)
        }
        (DataSource::Idx { .. }, Some((train, test))) => (train.clone(), test.clone()),
        (DataSource::Idx { .. }, None) => {
            return Err(Error::Consistency("idx data was not preloaded".into()));
        }
    };

    let spec = match cfg.model_kind {
        ModelKind::Logistic => {
            ModelSpec::Logistic { d_in: train.width(), n_classes: train.n_classes() }
        }
        ModelKind::Mlp => ModelSpec::Mlp {
            d_in: train.width(),
            d_hidden: cfg.hidden,
            n_classes: train.n_classes(),
        },
    };

    let partition =
        dirichlet_partition(train.labels(), cfg.n_clients, cfg.alpha, seed, cfg.min_per_client)?;

    let mut staleness = StalenessConfig::new(metric, cfg.lambda, cfg.epsilon)?;
    staleness.delta = cfg.delta;
    staleness.generator = cfg.generator;
    staleness.epoch_rule = cfg.epoch_rule;
    staleness.validate()?;

    let run = RunConfig {
        spec,
        train,
        test,
        partition,
        scenario: scenario.clone(),
        staleness,
        budget: cfg.budget,
        eval_interval: cfg.eval_interval,
        batch_size: cfg.batch_size,
        local_lr: cfg.local_lr,
        seed,
    };
    let trace = run_simulation(&run)?;
    Ok(CellRun { seed, evals: trace.evals })
}

/// Runs the full sweep and writes `curves.csv`, `summary.csv`, and the
/// resolved config into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;

    let idx_data = match &cfg.data {
        DataSource::Idx { train_images, train_labels, test_images, test_labels } => {
            let train = load_idx(train_images, train_labels)?;
            let test = load_idx(test_images, test_labels)?;
            if train.n_classes() != test.n_classes() || train.width() != test.width() {
                return Err(Error::Consistency(format!(
                    "train data has {} classes and width {}, test has {} and {}",
                    train.n_classes(),
                    train.width(),
                    test.n_classes(),
                    test.width()
                )));
            }
            Some((train, test))
        }
        DataSource::Synthetic { .. } => None,
    };

    let scenarios: Vec<AsynchronyScenario> = cfg
        .scenarios
        .iter()
        .map(|name| AsynchronyScenario::named(*name))
        .collect();

    // Cells in config order, metric outer and scenario inner; each job is one
    // (cell, seed) run so the pool stays busy on small sweeps too.
    let mut jobs: Vec<(usize, MetricKind, &AsynchronyScenario, u64)> = Vec::new();
    for (mi, metric) in cfg.metrics.iter().enumerate() {
        for (si, scenario) in scenarios.iter().enumerate() {
            let cell = mi * scenarios.len() + si;
            for k in 0..cfg.n_seeds {
                jobs.push((cell, *metric, scenario, cfg.root_seed + u64::from(k)));
            }
        }
    }

    let results: Vec<Result<CellRun>> = jobs
        .par_iter()
        .map(|(_, metric, scenario, seed)| {
            execute_run(cfg, *metric, scenario, *seed, idx_data.as_ref()).map_err(|e| {
                Error::Simulation(format!("{metric}/{}/seed {seed}: {e}", scenario.name))
            })
        })
        .collect();

    let n_cells = cfg.metrics.len() * scenarios.len();
    let mut cells: Vec<Vec<CellRun>> = vec![Vec::new(); n_cells];
    for ((cell, ..), result) in jobs.iter().zip(results) {
        cells[*cell].push(result?);
    }

    let curves_path = cfg.out_dir.join("curves.csv");
    let summary_path = cfg.out_dir.join("summary.csv");
    let config_path = cfg.out_dir.join("config.resolved");

    std::fs::write(&config_path, cfg.resolved_text())?;
    std::fs::write(&curves_path, render_curves(cfg, &scenarios, &cells))?;
    std::fs::write(&summary_path, render_summary(cfg, &scenarios, &cells)?)?;

    Ok(ExperimentOutput { curves_path, summary_path, config_path })
}

fn render_curves(
    cfg: &ExperimentConfig,
    scenarios: &[AsynchronyScenario],
    cells: &[Vec<CellRun>],
) -> String {
    let mut out = String::new();
    out.push_str("metric,scenario,seed,vtime,version,tau,gamma,eta,test_accuracy,test_loss\n");
    for (mi, metric) in cfg.metrics.iter().enumerate() {
        for (si, scenario) in scenarios.iter().enumerate() {
            let cell = &cells[mi * scenarios.len() + si];
            for run in cell {
                for e in &run.evals {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{}\n",
                        metric.token(),
                        scenario.name.token(),
                        run.seed,
                        fmt9(e.vtime),
                        e.version,
                        e.tau,
                        fmt9(e.gamma),
                        fmt9(e.eta),
                        fmt9(e.accuracy),
                        fmt9(e.loss),
                    ));
                }
            }
        }
    }
    out
}

fn render_summary(
    cfg: &ExperimentConfig,
    scenarios: &[AsynchronyScenario],
    cells: &[Vec<CellRun>],
) -> Result<String> {
    let mut out = String::new();
    out.push_str("# final_acc_std is the population standard deviation (divisor N)\n");
    out.push_str("metric,scenario,n_seeds,final_acc_mean,final_acc_std\n");
    for (mi, metric) in cfg.metrics.iter().enumerate() {
        for (si, scenario) in scenarios.iter().enumerate() {
            let cell = &cells[mi * scenarios.len() + si];
            let finals: Vec<f64> = cell.iter().map(|r| r.final_accuracy()).collect();
            let (mean, std) = summarize(&finals)?;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                metric.token(),
                scenario.name.token(),
                cell.len(),
                fmt9(mean),
                fmt9(std),
            ));
        }
    }
    Ok(out)
}

/// Reads the curve rows for one (metric, scenario, seed), used by tests and
/// downstream tooling to slice a sweep without a CSV dependency.
pub fn filter_curved_rows(csv: &str, metric: &str, scenario: &str, seed: u64) -> Vec<String> {
    let want = format!("{metric},{scenario},{seed},");
    csv.lines()
        .skip(1)
        .filter(|l| l.starts_with(&want))
        .map(|l| l.to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;
    use crate::sim::ScenarioName;
    use std::path::Path;

    fn small_config(out: &Path) -> ExperimentConfig {
        let text = format!(
            "metrics = euclidean,cosine\nscenarios = low,high\nseeds = 2\n\
             n_clients = 3\nbudget = 30\neval_interval = 10\n\
             data.n_per_class = 10\ndata.d = 4\ndata.n_classes = 2\ndata.test_per_class = 5\n\
             staleness.lambda = 1.0\nstaleness.epsilon = 0.5\nstaleness.k = 1\n\
             model.batch_size = 4\npartition.min_per_client = 2\n\
             out = {}\n",
            out.display()
        );
        parse_config_str(&text).unwrap()
    }

    #[test]
    fn summarize_matches_hand_computed_values() {
        let (mean, std) = summarize(&[0.7, 0.8, 0.9]).unwrap();
        assert!((mean - 0.8).abs() < 1e-12);
        assert!((std - 0.081649658092772603).abs() < 1e-12);

        let (mean, std) = summarize(&[0.25]).unwrap();
        assert_eq!(mean, 0.25);
        assert_eq!(std, 0.0);

        assert!(summarize(&[]).is_err());
        assert!(summarize(&[f64::NAN]).is_err());
    }

    #[test]
    fn fmt9_keeps_nine_significant_digits() {
        assert_eq!(fmt9(0.0), "0.00000000");
        assert_eq!(fmt9(1.0), "1.00000000");
        assert_eq!(fmt9(-2.5), "-2.50000000");
        assert_eq!(fmt9(0.000123456789), "0.000123456789");
        assert_eq!(fmt9(123.456789123), "123.456789");
        assert_eq!(fmt9(50_000_000.0), "50000000.0");
        assert_eq!(fmt9(1e12), "1000000000000");
    }

    #[test]
    fn experiment_produces_complete_labeled_output() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let out = run_experiment(&cfg).unwrap();

        let curves = std::fs::read_to_string(&out.curves_path).unwrap();
        let header = curves.lines().next().unwrap();
        assert_eq!(
            header,
            "metric,scenario,seed,vtime,version,tau,gamma,eta,test_accuracy,test_loss"
        );
        // 2 metrics x 2 scenarios x 2 seeds x 4 ticks (0, 10, 20, 30).
        assert_eq!(curves.lines().count(), 1 + 2 * 2 * 2 * 4);
        for (metric, scenario, seed) in
            [("euclidean", "low", 42), ("cosine", "high", 43), ("euclidean", "high", 42)]
        {
            assert_eq!(filter_curved_rows(&curves, metric, scenario, seed).len(), 4);
        }

        let summary = std::fs::read_to_string(&out.summary_path).unwrap();
        let mut lines = summary.lines();
        assert!(lines.next().unwrap().starts_with('#'));
        assert_eq!(lines.next().unwrap(), "metric,scenario,n_seeds,final_acc_mean,final_acc_std");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 4);
        assert!(rows[0].starts_with("euclidean,low,2,"));
        assert!(rows[3].starts_with("cosine,high,2,"));

        let echoed = std::fs::read_to_string(&out.config_path).unwrap();
        let reparsed = parse_config_str(&echoed).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut cfg_a = small_config(dir_a.path());
        cfg_a.metrics = vec![MetricKind::Hellinger];
        cfg_a.scenarios = vec![ScenarioName::Medium];
        let mut cfg_b = cfg_a.clone();
        cfg_b.out_dir = dir_b.path().to_path_buf();

        let out_a = run_experiment(&cfg_a).unwrap();
        let out_b = run_experiment(&cfg_b).unwrap();
        assert_eq!(
            std::fs::read(&out_a.curves_path).unwrap(),
            std::fs::read(&out_b.curves_path).unwrap()
        );
        assert_eq!(
            std::fs::read(&out_a.summary_path).unwrap(),
            std::fs::read(&out_b.summary_path).unwrap()
        );
    }

    #[test]
    fn infeasible_configs_are_rejected_before_any_run() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        // 3 clients each needing 8 samples from 20 cannot be satisfied.
        cfg.min_per_client = 8;
        let err = run_experiment(&cfg).unwrap_err().to_string();
        assert!(err.contains("minimum"), "{err}");
        assert!(!dir.path().join("curves.csv").exists());
    }

    #[test]
    fn missing_idx_files_fail_with_the_path_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.data = DataSource::Idx {
            train_images: dir.path().join("absent-images"),
            train_labels: dir.path().join("absent-labels"),
            test_images: dir.path().join("absent-images"),
            test_labels: dir.path().join("absent-labels"),
        };
        assert!(run_experiment(&cfg).is_err());
    }
}
