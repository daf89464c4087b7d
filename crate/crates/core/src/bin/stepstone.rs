use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use stepstone::bench::{run_campaign, threads_from_env, train_network, CampaignConfig, Network};
use stepstone::env::{generate_environment, Environment, GridConfig};
use stepstone::mcts::{plan, Models, SearchConfig};
use stepstone::nn::{MlpModel, TrainConfig};
use stepstone::oracle::{collect_dataset, read_jsonl, write_jsonl, Controller, Gait, GaitSpec};
use stepstone::robot::RobotConfig;

#[derive(Parser)]
#[command(name = "stepstone", version, about = "Stepping-stone contact planning with learned pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect labeled transitions from the surrogate controller (JSONL).
    GenData {
        #[arg(long)]
        gait: Gait,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Move the last `val_n` of the `n` records to `--val-out`.
        #[arg(long, requires = "val_out")]
        val_n: Option<usize>,
        #[arg(long)]
        val_out: Option<PathBuf>,
    },
    /// Train the feasibility classifier or the predictor/adjuster network.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// classifier | predictor_adjuster
        #[arg(long)]
        network: Network,
        #[arg(long)]
        out: PathBuf,
        /// Validation records; otherwise the last 1/11 of the dataset is held out.
        #[arg(long)]
        val_dataset: Option<PathBuf>,
        /// Metrics JSON; defaults to `<out>.metrics.json`.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        sigma_aug_sq: Option<f64>,
    },
    /// Plan on one environment and print the result as JSON.
    Plan {
        #[arg(long)]
        env_file: PathBuf,
        #[arg(long)]
        gait: Gait,
        /// Directory holding `classifier.json` and `dynamics.json`.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        dynamics: Option<PathBuf>,
        /// Kinematic pruning only.
        #[arg(long)]
        no_dyn: bool,
        /// Send the planned footholds unadjusted.
        #[arg(long)]
        no_adjust: bool,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Report zero times, making the output a pure function of the inputs.
        #[arg(long)]
        no_timing: bool,
    },
    /// Run a benchmark campaign; writes a CSV summary and a JSON report.
    Campaign {
        #[arg(long)]
        config: PathBuf,
        /// CSV path; the JSON report goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded stepping-stone environment as JSON.
    GenEnv {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        side: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData {
            gait,
            n,
            seed,
            out,
            val_n,
            val_out,
        } => gen_data(gait, n, seed, &out, val_n.zip(val_out)),
        Command::Train {
            dataset,
            network,
            out,
            val_dataset,
            metrics,
            epochs,
            seed,
            sigma_aug_sq,
        } => {
            let mut cfg = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(s) = sigma_aug_sq {
                cfg.sigma_aug_sq = s;
            }
            let metrics = metrics.unwrap_or_else(|| out.with_extension("metrics.json"));
            train_cmd(&dataset, val_dataset.as_deref(), network, &out, &metrics, &cfg)
        }
        Command::Plan {
            env_file,
            gait,
            models,
            classifier,
            dynamics,
            no_dyn,
            no_adjust,
            alpha,
            beta,
            seed,
            max_iterations,
            no_timing,
        } => {
            let env = Environment::load(&env_file).with_context(|| format!("loading {}", env_file.display()))?;
            let pick = |explicit: Option<PathBuf>, name: &str| match explicit {
                Some(p) => load_model(&p).map(Some),
                // files missing from the directory only matter if a flag needs them
                None => match models.as_ref().map(|d| d.join(name)).filter(|p| p.exists()) {
                    Some(p) => load_model(&p).map(Some),
                    None => Ok(None),
                },
            };
            let classifier = pick(classifier, "classifier.json")?;
            let dynamics = pick(dynamics, "dynamics.json")?;
            let mut cfg = SearchConfig {
                alpha,
                beta,
                rng_seed: seed,
                dynamic_pruning: !no_dyn,
                target_adjustment: !no_adjust,
                timing: !no_timing,
                ..SearchConfig::default()
            };
            if let Some(m) = max_iterations {
                cfg.max_iterations = m;
            }
            let controller = Controller::new(GaitSpec::for_gait(gait), RobotConfig::default());
            let models = Models {
                classifier: classifier.as_ref(),
                dynamics: dynamics.as_ref(),
            };
            let result = plan(&env, &controller, models, &cfg)?;
            println!("{}", result.to_json());
            Ok(())
        }
        Command::Campaign { config, out } => {
            let cfg = CampaignConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            let base = config.parent().unwrap_or(Path::new("."));
            let models = cfg.load_models(base)?;
            let report = run_campaign(&cfg, models.models(), threads_from_env())?;
            std::fs::write(&out, report.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            std::fs::write(out.with_extension("json"), report.to_json())?;
            print!("{}", report.to_csv());
            Ok(())
        }
        Command::GenEnv { seed, side, out } => {
            let mut grid = GridConfig::default();
            if let Some(s) = side {
                grid = grid.with_side(s);
            }
            generate_environment(seed, &grid)?.save(&out)?;
            Ok(())
        }
    }
}

fn load_model(path: &Path) -> Result<MlpModel> {
    MlpModel::load(path).with_context(|| format!("loading {}", path.display()))
}

fn gen_data(gait: Gait, n: usize, seed: u64, out: &Path, split: Option<(usize, PathBuf)>) -> Result<()> {
    let controller = Controller::new(GaitSpec::for_gait(gait), RobotConfig::default());
    let records = collect_dataset(&controller, n, seed)?;
    let n_val = split.as_ref().map_or(0, |s| s.0);
    if n_val >= n {
        bail!("--val-n {n_val} leaves no training records out of {n}");
    }
    let (train, val) = records.split_at(n - n_val);
    let write = |path: &Path, recs| -> Result<()> {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_jsonl(recs, BufWriter::new(f))?;
        Ok(())
    };
    write(out, train)?;
    if let Some((_, path)) = &split {
        write(path, val)?;
    }
    Ok(())
}

fn read_records(path: &Path) -> Result<Vec<stepstone::oracle::TransitionRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let recs = read_jsonl(BufReader::new(f), 4).with_context(|| format!("reading {}", path.display()))?;
    if recs.is_empty() {
        bail!("{} holds no records", path.display());
    }
    Ok(recs)
}

fn train_cmd(
    dataset: &Path,
    val_dataset: Option<&Path>,
    network: Network,
    out: &Path,
    metrics_path: &Path,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut train = read_records(dataset)?;
    let val = match val_dataset {
        Some(p) => read_records(p)?,
        None => {
            let k = train.len() / 11;
            train.split_off(train.len() - k)
        }
    };
    let (model, metrics) = train_network(network, &train, &val, cfg, cfg.seed)?;
    model.save(out)?;
    let mut f = BufWriter::new(File::create(metrics_path)?);
    serde_json::to_writer_pretty(&mut f, &metrics)?;
    f.write_all(b"\n")?;
    match (metrics.val_roc_auc, metrics.val_mse) {
        (Some(auc), _) => eprintln!(
            "validation ROC AUC {auc:.4}, accuracy {:.4}",
            metrics.val_accuracy.unwrap_or(f64::NAN)
        ),
        (_, Some(mse)) => eprintln!("validation MSE {mse:.6}"),
        _ => {}
    }
    Ok(())
}
