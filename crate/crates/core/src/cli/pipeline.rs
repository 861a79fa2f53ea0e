//! Pipeline stages behind the subcommands. Every stage reads and writes
//! inside one run directory.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, ModelKind, RunConfig};
use super::synth::synth_data;
use crate::arima::{fit_arima, order_search, HOLDOUT_FRACTION};
use crate::data::{
    add_calendar_features, add_lag_features, chronological_split, clean, make_windows, parse_dataset,
    write_frame_file, CleaningConfig, MinMaxScaler, Schema, TimeSeriesFrame, WindowMode, WindowSpec,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_all, exog_matrix, render_report, ArimaForecaster, DirectHead, Evaluation, Forecaster, MetricsTable,
    ModelFailure, NeuralForecaster, ReportFormat, TabularDirect, TabularModel,
};
use crate::linear::{fit_elasticnet, fit_lasso, fit_ols, fit_ridge, fit_svr_linear, kfold_search, LinearOptions};
use crate::model::{checkpoint_kind, from_checkpoint, to_checkpoint};
use crate::neural::{train_model, TrainingReport};
use crate::numcore::{SeededRng, Tensor};
use crate::stats::{analyze, write_analysis, DEFAULT_HISTOGRAM_BINS};
use crate::trees::{fit_gradient_boosting, fit_random_forest, grid_search_boosting, grid_search_forest};

/// File layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn input(&self) -> PathBuf {
        self.root.join("input.csv")
    }

    pub fn clean(&self) -> PathBuf {
        self.root.join("clean.csv")
    }

    pub fn outliers(&self) -> PathBuf {
        self.root.join("outliers.csv")
    }

    pub fn analysis(&self) -> PathBuf {
        self.root.join("analysis")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn checkpoint(&self, model: &str) -> PathBuf {
        self.checkpoints().join(format!("{model}.json"))
    }

    pub fn curve(&self, model: &str) -> PathBuf {
        self.root.join("curves").join(format!("{model}.csv"))
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.json")
    }

    pub fn report(&self, format: ReportFormat) -> PathBuf {
        self.root.join(format!("report.{format}"))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStatus {
    pub model: String,
    pub stage: String,
    pub error: Option<String>,
}

/// Provenance of a run directory, rewritten after every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub stages: Vec<String>,
    pub models: Vec<ModelStatus>,
}

impl Manifest {
    pub fn load_or_new(paths: &RunPaths) -> Self {
        read(&paths.manifest())
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_else(|| Self {
                tool: env!("CARGO_PKG_NAME").into(),
                version: env!("CARGO_PKG_VERSION").into(),
                seed: None,
                stages: Vec::new(),
                models: Vec::new(),
            })
    }

    pub fn record_stage(&mut self, stage: &str) {
        self.stages.retain(|s| s != stage);
        self.stages.push(stage.into());
    }

    pub fn record_model(&mut self, model: &str, stage: &str, error: Option<String>) {
        self.models.retain(|m| !(m.model == model && m.stage == stage));
        self.models.push(ModelStatus {
            model: model.into(),
            stage: stage.into(),
            error,
        });
    }

    pub fn save(&self, paths: &RunPaths) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        write(&paths.manifest(), &(text + "\n"))
    }
}

pub fn read_frame(path: &Path) -> Result<TimeSeriesFrame> {
    parse_dataset(path, &Schema::air_quality())
}

/// The configured input file, or generated data saved as the run's input.
pub fn load_raw(cfg: &RunConfig, paths: &RunPaths) -> Result<TimeSeriesFrame> {
    match (&cfg.input, &cfg.synth) {
        (Some(p), _) => read_frame(p),
        (None, Some(s)) => {
            let data = synth_data(cfg.seed()?, s.hours)?;
            std::fs::create_dir_all(&paths.root).map_err(|e| Error::io(&paths.root, e))?;
            write_frame_file(&data.frame, &paths.input(), "timestamp", true)?;
            Ok(data.frame)
        }
        (None, None) => Err(Error::Config("either `input` or a [synth] table is required".into())),
    }
}

/// Cleans `raw` and writes `clean.csv` plus per-column outlier counts.
pub fn clean_stage(raw: &TimeSeriesFrame, cleaning: &CleaningConfig, paths: &RunPaths) -> Result<TimeSeriesFrame> {
    let (cleaned, counts) = clean(raw, cleaning)?;
    std::fs::create_dir_all(&paths.root).map_err(|e| Error::io(&paths.root, e))?;
    write_frame_file(&cleaned, &paths.clean(), "timestamp", false)?;
    let mut report = String::from("column,replaced\n");
    for (col, n) in &counts {
        report.push_str(&format!("{col},{n}\n"));
    }
    write(&paths.outliers(), &report)?;
    Ok(cleaned)
}

pub fn analyze_stage(frame: &TimeSeriesFrame, dir: &Path) -> Result<Vec<PathBuf>> {
    write_analysis(&analyze(frame, DEFAULT_HISTOGRAM_BINS)?, dir)
}

/// The cleaned frame with lag and calendar columns, split point and the
/// scaler fitted on the training block.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub frame: TimeSeriesFrame,
    pub train: TimeSeriesFrame,
    pub test_start: usize,
    pub scaler: MinMaxScaler,
}

pub fn prepare(cleaned: &TimeSeriesFrame, cfg: &RunConfig) -> Result<Prepared> {
    let mut frame = add_lag_features(cleaned, &cfg.features.lags)?;
    if cfg.features.calendar {
        frame = add_calendar_features(&frame)?;
    }
    let (train, _) = chronological_split(&frame, cfg.split)?;
    let scaler = MinMaxScaler::fit(&train)?;
    Ok(Prepared {
        test_start: train.n_rows(),
        frame,
        train,
        scaler,
    })
}

/// Per-model seed derived from the run seed and the model name, so adding
/// or reordering models leaves the others unchanged.
pub fn model_seed(run_seed: u64, name: &str) -> u64 {
    let id = name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3));
    SeededRng::new(run_seed).fork(id).next_u64()
}

pub enum Trained {
    Tabular(TabularDirect),
    Arima(ArimaForecaster),
    Neural(NeuralForecaster, TrainingReport),
}

impl Trained {
    pub fn checkpoint(&self) -> Result<String> {
        match self {
            Trained::Tabular(t) => to_checkpoint(TabularDirect::CHECKPOINT_KIND, t),
            Trained::Arima(a) => to_checkpoint(ArimaForecaster::CHECKPOINT_KIND, a),
            Trained::Neural(n, _) => n.to_checkpoint(),
        }
    }
}

pub fn load_forecaster(text: &str) -> Result<Box<dyn Forecaster>> {
    let kind = checkpoint_kind(text)?;
    Ok(match kind.as_str() {
        TabularDirect::CHECKPOINT_KIND => Box::new(from_checkpoint::<TabularDirect>(text, &kind)?),
        ArimaForecaster::CHECKPOINT_KIND => Box::new(from_checkpoint::<ArimaForecaster>(text, &kind)?),
        NeuralForecaster::CHECKPOINT_KIND => Box::new(NeuralForecaster::from_checkpoint(text)?),
        other => return Err(Error::Checkpoint(format!("`{other}` checkpoints cannot forecast"))),
    })
}

fn column(t: &Tensor, j: usize) -> Vec<f64> {
    (0..t.rows()).map(|i| t.row(i)[j]).collect()
}

fn fit_tabular(model: &ModelConfig, prep: &Prepared, cfg: &RunConfig, seed: u64) -> Result<TabularDirect> {
    let window = WindowSpec {
        lookback: 1,
        horizons: cfg.horizons.clone(),
        mode: WindowMode::Tabular,
        target: cfg.target.clone(),
        features: cfg.features.tabular_columns(),
    };
    let w = make_windows(&prep.train, &window, None)?;
    let heads = cfg
        .horizons
        .iter()
        .enumerate()
        .map(|(j, &horizon)| {
            let y = column(&w.targets, j);
            let x = &w.features;
            let lin = LinearOptions::default();
            let fitted = match &model.kind {
                ModelKind::Ols => TabularModel::Linear(fit_ols(x, &y, lin)?),
                ModelKind::Ridge { lambda: Some(l), .. } => TabularModel::Linear(fit_ridge(x, &y, *l, lin)?),
                ModelKind::Ridge { lambda: None, cv } => {
                    TabularModel::Linear(kfold_search(x, &y, cv, |a, b, l| fit_ridge(a, b, l, lin))?.model)
                }
                ModelKind::Lasso { alpha, cv, options } => TabularModel::Linear(match alpha {
                    Some(a) => fit_lasso(x, &y, *a, options)?.model,
                    None => kfold_search(x, &y, cv, |a, b, l| Ok(fit_lasso(a, b, l, options)?.model))?.model,
                }),
                ModelKind::ElasticNet {
                    alpha,
                    l1_ratio,
                    cv,
                    options,
                } => {
                    let fit = |a: &Tensor, b: &[f64], s: f64| {
                        Ok(fit_elasticnet(a, b, s * l1_ratio, s * (1.0 - l1_ratio), options)?.model)
                    };
                    TabularModel::Linear(match alpha {
                        Some(s) => fit(x, &y, *s)?,
                        None => kfold_search(x, &y, cv, fit)?.model,
                    })
                }
                ModelKind::Svr { c, epsilon, options } => {
                    TabularModel::Linear(fit_svr_linear(x, &y, *c, *epsilon, options)?)
                }
                ModelKind::RandomForest { spec, grid, folds } => {
                    let spec = match grid {
                        Some(g) => grid_search_forest(x, &y, g, spec, *folds, seed)?.best,
                        None => *spec,
                    };
                    TabularModel::Forest(fit_random_forest(x, &y, &spec, seed)?)
                }
                ModelKind::GradientBoosting { spec, grid, folds } => {
                    let spec = match grid {
                        Some(g) => grid_search_boosting(x, &y, g, spec, *folds, seed)?.best,
                        None => *spec,
                    };
                    TabularModel::Boosting(fit_gradient_boosting(x, &y, &spec, seed)?)
                }
                ModelKind::Arima { .. } | ModelKind::Neural { .. } => {
                    return Err(Error::invalid("not a tabular model"));
                }
            };
            Ok(DirectHead { horizon, model: fitted })
        })
        .collect::<Result<_>>()?;
    Ok(TabularDirect {
        name: model.name(),
        family: model.kind.family(),
        window,
        heads,
    })
}

pub fn fit_model(model: &ModelConfig, prep: &Prepared, cfg: &RunConfig) -> Result<Trained> {
    let name = model.name();
    let seed = model_seed(cfg.seed()?, &name);
    match &model.kind {
        ModelKind::Arima {
            order,
            grid,
            exog,
            options,
        } => {
            let series = prep.train.dense_column(&cfg.target)?;
            let x = exog_matrix(&prep.train, exog)?;
            let (order, selection) = match (grid, order) {
                (Some(g), _) => {
                    let found = order_search(&series, x.as_ref(), g, options)?;
                    let note = format!(
                        "ARIMA orders chosen by one-step RMSE on the last {:.0}% of the training block.",
                        HOLDOUT_FRACTION * 100.0
                    );
                    (found.best, Some(note))
                }
                (None, Some(o)) => (*o, None),
                (None, None) => return Err(Error::Config(format!("model `{name}` needs an `order` or a `grid`"))),
            };
            let fitted = fit_arima(&series, x.as_ref(), order, options)?;
            Ok(Trained::Arima(ArimaForecaster {
                name,
                target: cfg.target.clone(),
                exog: exog.clone(),
                model: fitted,
                selection,
            }))
        }
        ModelKind::Neural { spec, training } => {
            let mut spec = spec.clone();
            spec.seed = seed;
            let mode = if spec.architecture.is_feed_forward() {
                WindowMode::Tabular
            } else {
                WindowMode::Sequence
            };
            let window = WindowSpec {
                lookback: spec.lookback(),
                horizons: spec.horizons(),
                mode,
                target: cfg.target.clone(),
                features: cfg.features.channels(),
            };
            let w = make_windows(&prep.train, &window, Some(&prep.scaler))?;
            let (network, report) = train_model(&spec, &w, training.as_ref().unwrap_or(&cfg.training))?;
            Ok(Trained::Neural(
                NeuralForecaster {
                    name,
                    window,
                    scaler: prep.scaler.clone(),
                    network,
                },
                report,
            ))
        }
        _ => fit_tabular(model, prep, cfg, seed).map(Trained::Tabular),
    }
}

/// The run's cleaned frame, produced from the configured input when the
/// clean stage has not run yet.
pub fn cleaned_frame(cfg: &RunConfig, paths: &RunPaths, manifest: &mut Manifest) -> Result<TimeSeriesFrame> {
    if paths.clean().exists() {
        return read_frame(&paths.clean());
    }
    let raw = load_raw(cfg, paths)?;
    let cleaned = clean_stage(&raw, &cfg.cleaning, paths)?;
    manifest.record_stage("clean");
    Ok(cleaned)
}

/// Writes the resolved config into the run directory and starts its manifest.
pub fn init_run(cfg: &RunConfig) -> Result<(RunPaths, Manifest)> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    // The copy is read back from inside the run directory.
    for p in [&mut cfg.input, &mut cfg.output].into_iter().flatten() {
        *p = std::path::absolute(&*p).map_err(|e| Error::io(p.clone(), e))?;
    }
    let cfg = &cfg;
    let paths = RunPaths::new(cfg.output_dir());
    std::fs::create_dir_all(&paths.root).map_err(|e| Error::io(&paths.root, e))?;
    write(&paths.config(), &cfg.to_toml()?)?;
    let mut manifest = Manifest::load_or_new(&paths);
    manifest.seed = cfg.seed;
    manifest.save(&paths)?;
    Ok((paths, manifest))
}

/// Fits every configured model in a pool of `jobs` workers. Checkpoints
/// and loss curves land in the run directory; failures are returned and
/// leave no checkpoint behind.
pub fn train_stage(cfg: &RunConfig, paths: &RunPaths, manifest: &mut Manifest, jobs: usize) -> Result<Vec<ModelFailure>> {
    let cleaned = cleaned_frame(cfg, paths, manifest)?;
    let prep = prepare(&cleaned, cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<Trained>> = pool.install(|| cfg.models.par_iter().map(|m| fit_model(m, &prep, cfg)).collect());

    let mut failures = Vec::new();
    for (model, outcome) in cfg.models.iter().zip(outcomes) {
        let name = model.name();
        let saved = outcome.and_then(|trained| {
            if let Trained::Neural(_, report) = &trained {
                write(&paths.curve(&name), &report.to_csv())?;
            }
            write(&paths.checkpoint(&name), &trained.checkpoint()?)
        });
        match saved {
            Ok(()) => manifest.record_model(&name, "train", None),
            Err(e) => {
                let _ = std::fs::remove_file(paths.checkpoint(&name));
                manifest.record_model(&name, "train", Some(e.to_string()));
                failures.push(ModelFailure {
                    model: name,
                    reason: e.to_string(),
                });
            }
        }
    }
    manifest.record_stage("train");
    manifest.save(paths)?;
    Ok(failures)
}

/// Scores every checkpointed model against the persistence baseline and
/// writes `report.csv`, `report.md` and `metrics.json`.
pub fn evaluate_stage(paths: &RunPaths) -> Result<Evaluation> {
    let cfg = RunConfig::load(&paths.config())?;
    if !cfg.models.iter().any(|m| paths.checkpoint(&m.name()).exists()) {
        return Err(Error::Config(format!(
            "no checkpoints under {}; run `aeris train` first",
            paths.checkpoints().display()
        )));
    }
    let mut manifest = Manifest::load_or_new(paths);
    let prep = prepare(&read_frame(&paths.clean())?, &cfg)?;

    let mut forecasters: Vec<Box<dyn Forecaster>> = Vec::new();
    let mut failures = Vec::new();
    for m in &cfg.models {
        let name = m.name();
        let loaded = read(&paths.checkpoint(&name)).and_then(|t| load_forecaster(&t));
        match loaded {
            Ok(f) if f.name() == name => forecasters.push(f),
            Ok(f) => failures.push(ModelFailure {
                model: name,
                reason: format!("checkpoint holds model `{}`", f.name()),
            }),
            Err(e) => failures.push(ModelFailure {
                model: name,
                reason: e.to_string(),
            }),
        }
    }
    let mut ev = evaluate_all(&forecasters, &prep.frame, &cfg.target, prep.test_start, &cfg.horizons)?;
    failures.append(&mut ev.failures);
    ev.failures = failures;

    for m in &cfg.models {
        let name = m.name();
        let error = ev.failures.iter().find(|f| f.model == name).map(|f| f.reason.clone());
        manifest.record_model(&name, "evaluate", error);
    }
    let json = serde_json::to_string_pretty(&ev.table).map_err(|e| Error::Checkpoint(e.to_string()))?;
    write(&paths.metrics(), &(json + "\n"))?;
    for format in [ReportFormat::Csv, ReportFormat::Markdown] {
        write(&paths.report(format), &render_report(&ev.table, format)?)?;
    }
    manifest.record_stage("evaluate");
    manifest.save(paths)?;
    Ok(ev)
}

/// Renders the stored metrics table in `format`, rewriting its report file.
pub fn report_stage(paths: &RunPaths, format: ReportFormat) -> Result<String> {
    let path = paths.metrics();
    if !path.exists() {
        return Err(Error::Config(format!("no metrics at {}; run `aeris evaluate` first", path.display())));
    }
    let table: MetricsTable = serde_json::from_str(&read(&path)?).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let text = render_report(&table, format)?;
    write(&paths.report(format), &text)?;
    Ok(text)
}
