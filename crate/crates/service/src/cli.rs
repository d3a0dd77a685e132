//! Command-line interface. Every subcommand reads its inputs from files,
//! writes a JSON artifact and prints a short human summary to stdout.

use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use vdpt_core::artifact::{load_model, model_to_json};
use vdpt_core::data::{generate_synthetic_cohort, load_csv, write_csv, Cohort, ShiftSpec, SyntheticConfig, LABEL_COLUMN};
use vdpt_core::drift::{drift_report, DriftOptions, DriftReport};
use vdpt_core::eval::{
    cross_validate, metrics, paired_t_test, random_search, render_cv_table, render_metrics_table, CvConfig, CvReport,
    PairedTTest, SearchSpace,
};
use vdpt_core::influence::{fi_local, InfluenceConfig, InfluenceReport, Objective};
use vdpt_core::model::{FittedModel, ModelConfig, ModelKind};
use vdpt_core::numeric::SeededRng;

use crate::api::{router, AppState, ServiceConfig, TOKEN_ENV};
use crate::error::{Result, ServiceError};
use crate::models::Models;
use crate::store::Store;

pub const DATA_DIR_ENV: &str = "VDPT_DATA_DIR";
pub const EVALUATION_FORMAT: &str = "vdpt.evaluation.v1";
pub const EXPLANATIONS_FORMAT: &str = "vdpt.explanations.v1";

#[derive(Debug, Parser)]
#[command(name = "vdpt", version, about = "Mortality risk models with uncertainty and explanations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort CSV.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Rows; defaults to the shipped reference cohort size.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        prevalence: Option<f64>,
        #[arg(long)]
        missing_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Mean shift as `feature=sigmas`; repeatable.
        #[arg(long = "shift", value_parser = parse_shift)]
        shifts: Vec<(String, f64)>,
    },
    /// Fit a model on a CSV and write its artifact.
    Train {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        data: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// JSON model configuration; defaults to the shipped profile.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate models on a CSV, or score trained artifacts on a
    /// held-out CSV when `--artifact` is given.
    Evaluate {
        /// Repeatable; defaults to both models.
        #[arg(long)]
        model: Vec<ModelKind>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Fold assignment seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON model configuration, only with a single `--model`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trained artifact; repeatable.
        #[arg(long)]
        artifact: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random hyperparameter search ranked by cross-validated LR+.
    Search {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// JSON search space; defaults to ranges around the shipped profile.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Influence-function explanations for rows of a CSV.
    Explain {
        #[arg(long)]
        artifact: PathBuf,
        /// Raw training CSV the model was fitted on.
        #[arg(long)]
        reference: PathBuf,
        /// CSV holding the rows to explain.
        #[arg(long)]
        data: PathBuf,
        /// Row index; repeatable, defaults to the first row.
        #[arg(long)]
        row: Vec<usize>,
        /// JSON influence configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dataset-shift report of one CSV against another.
    Drift {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        current: PathBuf,
        /// VDP artifact for the confidence comparison.
        #[arg(long)]
        artifact: Option<PathBuf>,
        /// Skip the label prevalence test.
        #[arg(long)]
        no_labels: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        /// Holds vdp.json, mlp.json, reference.csv and ranges.json.
        #[arg(long)]
        artifacts_dir: PathBuf,
        /// Record log and snapshot; falls back to $VDPT_DATA_DIR.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// JSON service configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_shift(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, sigmas) = s.split_once('=').ok_or("expected feature=sigmas")?;
    let sigmas: f64 = sigmas.parse().map_err(|e| format!("bad shift `{sigmas}`: {e}"))?;
    Ok((name.to_string(), sigmas))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load(path: &Path) -> Result<Cohort> {
    Ok(load_csv(path, LABEL_COLUMN)?)
}

/// Runs one command and returns the stdout summary. `serve` blocks until
/// shutdown.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Simulate {
            out,
            n,
            prevalence,
            missing_rate,
            seed,
            shifts,
        } => {
            let d = SyntheticConfig::default().default_cohort;
            let mut shift = ShiftSpec::none();
            for (name, sigmas) in &shifts {
                shift = shift.shift(name, *sigmas);
            }
            let cohort = generate_synthetic_cohort(
                n.unwrap_or(d.n),
                prevalence.unwrap_or(d.prevalence),
                &shift,
                missing_rate.unwrap_or(d.missing_rate),
                &mut SeededRng::new(seed.unwrap_or(d.seed)),
            )?;
            write_csv(&cohort, &out)?;
            Ok(format!(
                "wrote {} rows ({} positive) to {}\n",
                cohort.n_rows(),
                cohort.positives(),
                out.display()
            ))
        }
        Command::Train {
            model,
            data,
            seed,
            config,
            out,
        } => {
            let mut config = match config {
                Some(p) => read_json::<ModelConfig>(&p)?,
                None => ModelConfig::default_for(model),
            };
            if config.kind() != model {
                return Err(ServiceError::BadRequest(format!("configuration is for {}, not {model}", config.kind())));
            }
            if let Some(s) = seed {
                config = config.with_seed(s);
            }
            let fitted = FittedModel::fit(&load(&data)?, &config)?;
            fs::write(&out, model_to_json(&fitted)?)?;
            Ok(format!(
                "trained {model}: loss {:.4} -> {:.4}; wrote {}\n",
                fitted.initial_loss,
                fitted.loss_curve.last().copied().unwrap_or(f64::NAN),
                out.display()
            ))
        }
        Command::Evaluate {
            model,
            data,
            k,
            seed,
            config,
            artifact,
            threshold,
            out,
        } => {
            let cohort = load(&data)?;
            if !artifact.is_empty() {
                return evaluate_artifacts(&artifact, &cohort, threshold, out.as_deref());
            }
            let kinds = if model.is_empty() { vec![ModelKind::Vdp, ModelKind::Mlp] } else { model };
            if config.is_some() && kinds.len() != 1 {
                return Err(ServiceError::BadRequest("--config needs exactly one --model".into()));
            }
            let cv = CvConfig { k, seed, threshold };
            let mut reports = Vec::new();
            for kind in &kinds {
                let c = match &config {
                    Some(p) => read_json::<ModelConfig>(p)?,
                    None => ModelConfig::default_for(*kind),
                };
                reports.push(cross_validate(&c, &cohort, &cv)?);
            }
            let mut summary = render_cv_table(&reports);
            let t_test = if reports.len() == 2 {
                let t = paired_t_test(&reports[0].fold_values("roc_auc"), &reports[1].fold_values("roc_auc"))?;
                let _ = writeln!(
                    summary,
                    "paired t-test on fold ROC AUC ({} - {}): t = {:.3}, p = {:.4}",
                    reports[0].model, reports[1].model, t.t, t.p_value
                );
                Some(t)
            } else {
                None
            };
            if let Some(path) = out {
                write_json(&path, &Evaluation {
                    format: EVALUATION_FORMAT,
                    reports,
                    roc_auc_t_test: t_test,
                })?;
            }
            Ok(summary)
        }
        Command::Search {
            model,
            data,
            budget,
            seed,
            k,
            config,
            out,
        } => {
            let space = match config {
                Some(p) => read_json::<SearchSpace>(&p)?,
                None => SearchSpace::default_for(model),
            };
            let cv = CvConfig { k, ..CvConfig::default() };
            let board = random_search(model, &load(&data)?, &space, budget, seed, &cv)?;
            write_json(&out, &board)?;
            let mut summary = String::new();
            for e in &board.entries {
                let _ = writeln!(summary, "{:>3}  candidate {:>3}  {}", e.rank, e.candidate, serde_json::to_string(&e.outcome)?);
            }
            Ok(summary)
        }
        Command::Explain {
            artifact,
            reference,
            data,
            row,
            config,
            seed,
            out,
        } => {
            let model = load_model(&artifact)?;
            let mut influence = match config {
                Some(p) => read_json::<InfluenceConfig>(&p)?,
                None => InfluenceConfig::default(),
            };
            if let Some(s) = seed {
                influence.seed = s;
            }
            let training = model.prepare(&load(&reference)?)?;
            let instances = model.prepare(&load(&data)?)?;
            let objective = Objective::from_model(&model, training.n_rows());
            let rows = if row.is_empty() { vec![0] } else { row };
            let mut reports = Vec::with_capacity(rows.len());
            let mut summary = String::new();
            for r in rows {
                if r >= instances.n_rows() {
                    return Err(ServiceError::BadRequest(format!("row {r} out of range ({} rows)", instances.n_rows())));
                }
                let report = fi_local(&objective, instances.x.row(r), &training, &influence, Some(format!("row{r}")))?;
                let _ = writeln!(summary, "row {r}: label {} top {:?}", report.test_label, top_features(&report));
                reports.push(report);
            }
            write_json(&out, &Explanations {
                format: EXPLANATIONS_FORMAT,
                reports,
            })?;
            Ok(summary)
        }
        Command::Drift {
            reference,
            current,
            artifact,
            no_labels,
            out,
        } => {
            let model = artifact.as_deref().map(load_model).transpose()?;
            let options = DriftOptions {
                labels: !no_labels,
                ..DriftOptions::default()
            };
            let report = drift_report(&load(&reference)?, &load(&current)?, model.as_ref(), &options)?;
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            Ok(render_drift(&report))
        }
        Command::Serve {
            artifacts_dir,
            data_dir,
            port,
            host,
            config,
        } => {
            let mut service = match config {
                Some(p) => read_json::<ServiceConfig>(&p)?,
                None => ServiceConfig::default(),
            };
            service.token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
            let data_dir = data_dir
                .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("vdpt-data"));
            let models = match Models::load(&artifacts_dir) {
                Ok(m) => Some(m),
                Err(e) => {
                    eprintln!("models not loaded: {e}");
                    None
                }
            };
            let store = Store::open(&data_dir, service.snapshot_every)?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| ServiceError::BadRequest(format!("bad address: {e}")))?;
            let state = AppState::new(models, store, service);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, router(state.clone()))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                state.store.lock().unwrap_or_else(|e| e.into_inner()).snapshot()
            })?;
            Ok(String::new())
        }
    }
}

#[derive(Serialize)]
struct Evaluation {
    format: &'static str,
    reports: Vec<CvReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    roc_auc_t_test: Option<PairedTTest>,
}

#[derive(Serialize)]
struct Explanations {
    format: &'static str,
    reports: Vec<InfluenceReport>,
}

fn top_features(report: &InfluenceReport) -> Vec<String> {
    vdpt_core::influence::top_k_by_magnitude(&report.values, vdpt_core::influence::TOP_K)
        .into_iter()
        .map(|j| format!("{}={:+.3}", report.feature_names[j], report.values[j]))
        .collect()
}

fn evaluate_artifacts(paths: &[PathBuf], cohort: &Cohort, threshold: f64, out: Option<&Path>) -> Result<String> {
    let mut rows = Vec::new();
    for p in paths {
        let model = load_model(p)?;
        let scores = model.scores(cohort)?;
        rows.push((model.kind().to_string(), metrics(&scores, &cohort.y, threshold)?));
    }
    if let Some(path) = out {
        #[derive(Serialize)]
        struct Holdout<'a> {
            format: &'static str,
            n: usize,
            metrics: &'a [(String, vdpt_core::eval::MetricSet)],
        }
        write_json(path, &Holdout {
            format: EVALUATION_FORMAT,
            n: cohort.n_rows(),
            metrics: &rows,
        })?;
    }
    Ok(render_metrics_table(&rows))
}

pub fn render_drift(report: &DriftReport) -> String {
    let mut s = format!(
        "{} reference vs {} current rows; {} feature tests at alpha/m = {:.2e}\n",
        report.n_reference, report.n_current, report.tests, report.threshold
    );
    for f in &report.features {
        let stat = f.statistic.map_or("-".into(), |v| format!("{v:.4}"));
        let p = f.p_value.map_or("-".into(), |v| format!("{v:.3e}"));
        let _ = writeln!(
            s,
            "{:<12} {:<5} stat {:>9}  p {:>10}  {}",
            f.feature,
            format!("{:?}", f.test).to_lowercase(),
            stat,
            p,
            if f.flagged { "FLAGGED" } else { "" }
        );
    }
    if let Some(l) = &report.label {
        let _ = writeln!(
            s,
            "label        chi2  stat {:>9.4}  p {:>10.3e}  {}",
            l.statistic,
            l.p_value,
            if l.flagged { "FLAGGED" } else { "" }
        );
    }
    if let Some(c) = &report.confidence {
        let _ = writeln!(
            s,
            "confidence   ks    stat {:>9.4}  p {:>10.3e}  {}",
            c.d,
            c.p_value,
            if c.flagged { "FLAGGED" } else { "" }
        );
    }
    s
}
