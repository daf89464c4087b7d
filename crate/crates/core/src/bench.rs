//! Benchmark campaigns: every (stone size, ablation, weights) cell is run on
//! the same seeded environments and aggregated into one report row.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{generate_environment, GridConfig};
use crate::mcts::{plan, Models, PlanResult, SearchConfig};
use crate::nn::{
    accuracy, roc_auc, train, EpochMetrics, Loss, MlpModel, NnError, TrainConfig,
};
use crate::oracle::{classifier_set, dynamics_set, Controller, Gait, GaitSpec, OracleError, TransitionRecord};
use crate::robot::{ReducedRobotState, RobotConfig};

/// Environment variable capping the number of campaign workers.
pub const THREADS_VAR: &str = "STEPSTONE_THREADS";

pub const CSV_HEADER: &str =
    "size,ablation,alpha,beta,success_rate,oracle_calls,time_s,iterations,contact_error_cm,rollout_time_s";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid campaign: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: NnError },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Which network `train_network` fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Network {
    Classifier,
    /// Two-head next-state predictor and target adjuster.
    PredictorAdjuster,
}

impl std::str::FromStr for Network {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classifier" => Ok(Network::Classifier),
            "predictor_adjuster" => Ok(Network::PredictorAdjuster),
            _ => Err(format!("unknown network {s:?}, expected classifier or predictor_adjuster")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub network: Network,
    pub n_train: usize,
    pub n_val: usize,
    pub epochs: Vec<EpochMetrics>,
    pub val_roc_auc: Option<f64>,
    pub val_accuracy: Option<f64>,
    /// Mean squared error on standardized targets.
    pub val_mse: Option<f64>,
}

/// Fits a fresh network on `train_records`; `config.loss` is set by the
/// network kind. Validation metrics are reported when `val_records` is not
/// empty.
pub fn train_network(
    network: Network,
    train_records: &[TransitionRecord],
    val_records: &[TransitionRecord],
    config: &TrainConfig,
    init_seed: u64,
) -> Result<(MlpModel, TrainMetrics), BenchError> {
    let n_e = train_records
        .first()
        .map(|r| r.e_cur.len())
        .ok_or(NnError::EmptyDataset)?;
    let (data, val, mut model, loss) = match network {
        Network::Classifier => (
            classifier_set(train_records)?,
            (!val_records.is_empty()).then(|| classifier_set(val_records)).transpose()?,
            MlpModel::classifier(train_records[0].x.len(), init_seed),
            Loss::Bce,
        ),
        Network::PredictorAdjuster => (
            dynamics_set(train_records)?,
            val_records
                .iter()
                .any(|r| r.feasible())
                .then(|| dynamics_set(val_records))
                .transpose()?,
            MlpModel::dynamics(
                train_records[0].x.len(),
                ReducedRobotState::encoded_len(n_e),
                3 * n_e,
                init_seed,
            ),
            Loss::Mse,
        ),
    };
    let cfg = TrainConfig { loss, ..config.clone() };
    let report = train(&mut model, &data, val.as_ref(), &cfg)?;
    let mut metrics = TrainMetrics {
        network,
        n_train: data.len(),
        n_val: val.as_ref().map_or(0, |v| v.len()),
        epochs: report.epochs,
        val_roc_auc: None,
        val_accuracy: None,
        val_mse: None,
    };
    if let Some(v) = &val {
        match network {
            Network::Classifier => {
                let logits = model.forward(&v.inputs)?.into_data();
                let labels: Vec<bool> = v.targets.data().iter().map(|&y| y > 0.5).collect();
                let probs: Vec<f64> = logits.iter().map(|&l| crate::heuristics::sigmoid(l)).collect();
                metrics.val_roc_auc = roc_auc(&logits, &labels);
                metrics.val_accuracy = Some(accuracy(&probs, &labels, 0.5));
            }
            Network::PredictorAdjuster => {
                metrics.val_mse = Some(model.loss(&v.inputs, &v.targets, Loss::Mse, None)?);
            }
        }
    }
    Ok((model, metrics))
}

/// Pruning and adjustment switches of one campaign arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub name: String,
    pub dynamic_pruning: bool,
    pub target_adjustment: bool,
}

impl Ablation {
    pub fn new(name: &str, dynamic_pruning: bool, target_adjustment: bool) -> Ablation {
        Ablation {
            name: name.to_string(),
            dynamic_pruning,
            target_adjustment,
        }
    }

    /// `kin`, `kin_adjust`, `dyn` and `dyn_adjust`.
    pub fn all() -> Vec<Ablation> {
        vec![
            Ablation::new("kin", false, false),
            Ablation::new("kin_adjust", false, true),
            Ablation::new("dyn", true, false),
            Ablation::new("dyn_adjust", true, true),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub gait: Gait,
    /// Stone side lengths in meters.
    pub sizes: Vec<f64>,
    pub n_envs: usize,
    /// Environment `i` of every cell uses seed `seed + i`, also as its search seed.
    pub seed: u64,
    pub ablations: Vec<Ablation>,
    /// `(alpha, beta)` pairs.
    pub weights: Vec<[f64; 2]>,
    /// Template for every run; weights, switches and seed are overridden.
    pub search: SearchConfig,
    /// Template grid; the side length is overridden.
    pub grid: GridConfig,
    /// Controller error model; the gait's default when absent.
    pub controller: Option<GaitSpec>,
    /// Model files, relative to the configuration file.
    pub classifier: Option<PathBuf>,
    pub dynamics: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            gait: Gait::Jump,
            sizes: vec![0.07, 0.079, 0.088, 0.097],
            n_envs: 100,
            seed: 0,
            ablations: Ablation::all(),
            weights: vec![[0.0, 0.0]],
            search: SearchConfig::default(),
            grid: GridConfig::default(),
            controller: None,
            classifier: None,
            dynamics: None,
        }
    }
}

/// Grid-search weights: alpha and beta each in {0, 0.2, 0.4, 0.6}.
pub fn default_weight_grid() -> Vec<[f64; 2]> {
    let v = [0.0, 0.2, 0.4, 0.6];
    v.iter().flat_map(|&a| v.iter().map(move |&b| [a, b])).collect()
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.n_envs == 0 {
            return bad("n_envs must be at least 1".into());
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|s| !(*s > 0.0)) {
            return bad("sizes must be a non-empty list of positive side lengths".into());
        }
        if self.ablations.is_empty() || self.weights.is_empty() {
            return bad("at least one ablation and one weight pair are required".into());
        }
        if self.weights.iter().flatten().any(|w| !(*w >= 0.0)) {
            return bad("weights must be non-negative".into());
        }
        if let Some(g) = &self.controller {
            if g.gait != self.gait {
                return bad(format!("controller is for {}, campaign is {}", g.gait, self.gait));
            }
        }
        self.search
            .validate()
            .or_else(|e| bad(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<CampaignConfig, BenchError> {
        let c: CampaignConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<CampaignConfig, BenchError> {
        CampaignConfig::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn controller(&self) -> Controller {
        let spec = self.controller.unwrap_or_else(|| GaitSpec::for_gait(self.gait));
        Controller::new(spec, RobotConfig::default())
    }

    /// Loads the referenced models, resolving relative paths against `base`.
    pub fn load_models(&self, base: &Path) -> Result<LoadedModels, BenchError> {
        let load = |p: &Option<PathBuf>| -> Result<Option<MlpModel>, BenchError> {
            p.as_ref()
                .map(|p| {
                    let path = base.join(p);
                    MlpModel::load(&path).map_err(|source| BenchError::Model { path, source })
                })
                .transpose()
        };
        Ok(LoadedModels {
            classifier: load(&self.classifier)?,
            dynamics: load(&self.dynamics)?,
        })
    }
}

/// Owned models of a campaign.
#[derive(Debug, Clone, Default)]
pub struct LoadedModels {
    pub classifier: Option<MlpModel>,
    pub dynamics: Option<MlpModel>,
}

impl LoadedModels {
    pub fn models(&self) -> Models<'_> {
        Models {
            classifier: self.classifier.as_ref(),
            dynamics: self.dynamics.as_ref(),
        }
    }
}

/// Outcome of one search in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub size: f64,
    pub ablation: String,
    pub alpha: f64,
    pub beta: f64,
    pub env_seed: u64,
    pub result: Option<PlanResult>,
    pub error: Option<String>,
}

/// Aggregates of one cell. Means run over every completed search, except the
/// contact error, which averages the successful rollouts only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub size: f64,
    pub ablation: String,
    pub alpha: f64,
    pub beta: f64,
    pub runs: usize,
    pub errors: usize,
    pub success_rate: f64,
    pub oracle_calls: f64,
    pub time_s: f64,
    pub iterations: f64,
    pub contact_error_cm: Option<f64>,
    pub rollout_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub cells: Vec<CellSummary>,
    pub runs: Vec<RunRecord>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn summarize(runs: &[RunRecord]) -> CellSummary {
    let first = &runs[0];
    let done: Vec<&PlanResult> = runs.iter().filter_map(|r| r.result.as_ref()).collect();
    let m = |f: fn(&PlanResult) -> f64| mean(done.iter().map(|r| f(r))).unwrap_or(0.0);
    CellSummary {
        size: first.size,
        ablation: first.ablation.clone(),
        alpha: first.alpha,
        beta: first.beta,
        runs: runs.len(),
        errors: runs.len() - done.len(),
        success_rate: done.iter().filter(|r| r.success).count() as f64 / runs.len() as f64,
        oracle_calls: m(|r| r.oracle_calls as f64),
        time_s: m(|r| r.wall_time_s),
        iterations: m(|r| r.iterations as f64),
        contact_error_cm: mean(done.iter().filter_map(|r| r.mean_contact_error_m)).map(|e| e * 100.0),
        rollout_time_s: m(|r| r.rollout_time_s),
    }
}

impl CampaignReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            let err = c.contact_error_cm.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                c.size, c.ablation, c.alpha, c.beta, c.success_rate, c.oracle_calls, c.time_s, c.iterations, err, c.rollout_time_s
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn cell(&self, size: f64, ablation: &str, alpha: f64, beta: f64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.size == size && c.ablation == ablation && c.alpha == alpha && c.beta == beta)
    }

    /// Runs of one cell, ordered by environment seed.
    pub fn runs_of(&self, size: f64, ablation: &str, alpha: f64, beta: f64) -> Vec<&RunRecord> {
        self.runs
            .iter()
            .filter(|r| r.size == size && r.ablation == ablation && r.alpha == alpha && r.beta == beta)
            .collect()
    }
}

/// Worker count from [`THREADS_VAR`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

fn run_one(
    config: &CampaignConfig,
    controller: &Controller,
    models: Models<'_>,
    size: f64,
    ablation: &Ablation,
    [alpha, beta]: [f64; 2],
    env_seed: u64,
) -> RunRecord {
    let search = SearchConfig {
        alpha,
        beta,
        rng_seed: env_seed,
        dynamic_pruning: ablation.dynamic_pruning,
        target_adjustment: ablation.target_adjustment,
        ..config.search.clone()
    };
    let outcome = generate_environment(env_seed, &config.grid.clone().with_side(size))
        .map_err(|e| e.to_string())
        .and_then(|env| plan(&env, controller, models, &search).map_err(|e| e.to_string()));
    let (result, error) = match outcome {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e)),
    };
    RunRecord {
        size,
        ablation: ablation.name.clone(),
        alpha,
        beta,
        env_seed,
        result,
        error,
    }
}

/// Runs every cell. Failed runs are recorded and the campaign continues.
/// `threads` caps the worker pool (all cores when `None`); the report does
/// not depend on it.
pub fn run_campaign(
    config: &CampaignConfig,
    models: Models<'_>,
    threads: Option<usize>,
) -> Result<CampaignReport, BenchError> {
    config.validate()?;
    let controller = config.controller();
    let mut jobs = Vec::new();
    for &size in &config.sizes {
        for ablation in &config.ablations {
            for &w in &config.weights {
                for i in 0..config.n_envs as u64 {
                    jobs.push((size, ablation, w, config.seed.wrapping_add(i)));
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))?;
    let runs: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(size, ablation, w, seed)| run_one(config, &controller, models, size, ablation, w, seed))
            .collect()
    });
    let cells = runs.chunks(config.n_envs).map(summarize).collect();
    Ok(CampaignReport {
        config: config.clone(),
        cells,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CampaignConfig {
        CampaignConfig {
            sizes: vec![0.09],
            n_envs: 2,
            ablations: vec![Ablation::new("kin", false, false)],
            search: SearchConfig {
                max_iterations: 50,
                timing: false,
                ..SearchConfig::default()
            },
            ..CampaignConfig::default()
        }
    }

    #[test]
    fn single_cell_report() {
        let r = run_campaign(&small(), Models::default(), Some(1)).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.runs.len(), 2);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with(CSV_HEADER));
    }

    #[test]
    fn weight_rows_share_environments() {
        let c = CampaignConfig {
            weights: vec![[0.0, 0.0], [0.2, 0.4]],
            ablations: vec![Ablation::new("dyn_adjust", true, true)],
            ..small()
        };
        // no models: every run errors, yet the campaign completes
        let r = run_campaign(&c, Models::default(), Some(1)).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert!(r.cells.iter().all(|c| c.errors == 2 && c.success_rate == 0.0));
        let seeds = |a: f64| r.runs_of(0.09, "dyn_adjust", a, if a > 0.0 { 0.4 } else { 0.0 }).iter().map(|x| x.env_seed).collect::<Vec<_>>();
        assert_eq!(seeds(0.0), seeds(0.2));
    }

    #[test]
    fn thread_count_does_not_change_the_report() {
        let c = CampaignConfig {
            n_envs: 3,
            ..small()
        };
        let a = run_campaign(&c, Models::default(), Some(1)).unwrap();
        let b = run_campaign(&c, Models::default(), Some(2)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn invalid_configs() {
        for c in [
            CampaignConfig { n_envs: 0, ..small() },
            CampaignConfig { sizes: vec![], ..small() },
            CampaignConfig { sizes: vec![-0.1], ..small() },
            CampaignConfig { weights: vec![[-1.0, 0.0]], ..small() },
        ] {
            assert!(c.validate().is_err());
        }
        let partial = r#"{"gait": "trot", "n_envs": 5}"#;
        let c = CampaignConfig::from_json(partial).unwrap();
        assert_eq!((c.gait, c.n_envs, c.sizes.len()), (Gait::Trot, 5, 4));
    }

    #[test]
    fn default_grid_has_sixteen_cells() {
        let g = default_weight_grid();
        assert_eq!(g.len(), 16);
        assert!(g.contains(&[0.2, 0.4]) && g.contains(&[0.0, 0.0]));
    }
}
