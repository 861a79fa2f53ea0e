use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::metrics;
use super::table::{Family, MetricsRecord, MetricsTable};
use crate::arima::ArimaModel;
use crate::data::{windows_at, MinMaxScaler, TimeSeriesFrame, WindowMode, WindowSpec};
use crate::error::{Error, Result};
use crate::linear::LinearModel;
use crate::model::Regressor;
use crate::neural::Network;
use crate::numcore::Tensor;
use crate::trees::{GradientBoosting, RandomForest};

pub const DEFAULT_HORIZONS: [usize; 4] = [1, 2, 4, 8];

/// A fitted model able to forecast from any row of a frame.
///
/// Anchor `a` is the last observed row; the forecast for horizon `h`
/// targets row `a + h`. Output is `[anchor][horizon]` in original units.
pub trait Forecaster: Send + Sync {
    fn name(&self) -> &str;
    fn family(&self) -> Family;
    fn forecast(&self, frame: &TimeSeriesFrame, anchors: &[usize], horizons: &[usize]) -> Result<Vec<Vec<f64>>>;

    /// Method notes carried into the report.
    fn notes(&self) -> Vec<String> {
        Vec::new()
    }
}

/// Last observed value of the target, at every horizon.
#[derive(Debug, Clone)]
pub struct Persistence {
    pub target: String,
}

impl Forecaster for Persistence {
    fn name(&self) -> &str {
        "persistence"
    }

    fn family(&self) -> Family {
        Family::Baseline
    }

    fn forecast(&self, frame: &TimeSeriesFrame, anchors: &[usize], horizons: &[usize]) -> Result<Vec<Vec<f64>>> {
        let y = frame.column(&self.target)?;
        anchors
            .iter()
            .map(|&a| {
                let last = y
                    .get(a)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Error::InsufficientData(format!("no `{}` value at row {a}", self.target)))?;
                Ok(vec![last; horizons.len()])
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TabularModel {
    Linear(LinearModel),
    Forest(RandomForest),
    Boosting(GradientBoosting),
}

impl TabularModel {
    pub fn predict(&self, x: &Tensor) -> Result<Vec<f64>> {
        match self {
            TabularModel::Linear(m) => m.predict(x),
            TabularModel::Forest(m) => m.predict(x),
            TabularModel::Boosting(m) => m.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectHead {
    pub horizon: usize,
    pub model: TabularModel,
}

/// One tabular regressor per horizon over flattened windows in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDirect {
    pub name: String,
    pub family: Family,
    pub window: WindowSpec,
    pub heads: Vec<DirectHead>,
}

impl TabularDirect {
    pub const CHECKPOINT_KIND: &'static str = "tabular-direct";
}

impl Forecaster for TabularDirect {
    fn name(&self) -> &str {
        &self.name
    }

    fn family(&self) -> Family {
        self.family
    }

    fn forecast(&self, frame: &TimeSeriesFrame, anchors: &[usize], horizons: &[usize]) -> Result<Vec<Vec<f64>>> {
        let mut window = self.window.clone();
        window.mode = WindowMode::Tabular;
        let x = windows_at(frame, &window, anchors, None)?;
        let columns: Vec<Vec<f64>> = horizons
            .iter()
            .map(|&h| {
                let head = self
                    .heads
                    .iter()
                    .find(|d| d.horizon == h)
                    .ok_or_else(|| Error::invalid(format!("model `{}` has no {h}h head", self.name)))?;
                head.model.predict(&x)
            })
            .collect::<Result<_>>()?;
        Ok(transpose(&columns, anchors.len()))
    }

    fn notes(&self) -> Vec<String> {
        vec!["Tabular models use the direct strategy: one model fitted per horizon.".into()]
    }
}

/// Rolling multi-step forecasts from a fitted ARIMA model. Exogenous
/// regressors take their observed future values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaForecaster {
    pub name: String,
    pub target: String,
    pub exog: Vec<String>,
    pub model: ArimaModel,
    /// How the order was chosen, if by search.
    #[serde(default)]
    pub selection: Option<String>,
}

impl ArimaForecaster {
    pub const CHECKPOINT_KIND: &'static str = "arima-forecaster";
}

impl Forecaster for ArimaForecaster {
    fn name(&self) -> &str {
        &self.name
    }

    fn family(&self) -> Family {
        Family::Statistical
    }

    fn forecast(&self, frame: &TimeSeriesFrame, anchors: &[usize], horizons: &[usize]) -> Result<Vec<Vec<f64>>> {
        let series = frame.dense_column(&self.target)?;
        let exog = exog_matrix(frame, &self.exog)?;
        let max_h = horizons.iter().copied().max().unwrap_or(0);
        let paths = self.model.rolling_forecasts(&series, exog.as_ref(), anchors, max_h)?;
        Ok(paths.into_iter().map(|p| horizons.iter().map(|&h| p[h - 1]).collect()).collect())
    }

    fn notes(&self) -> Vec<String> {
        self.selection.iter().cloned().collect()
    }
}

/// Columns as an `[n, k]` matrix; `None` for an empty list.
pub fn exog_matrix(frame: &TimeSeriesFrame, columns: &[String]) -> Result<Option<Tensor>> {
    if columns.is_empty() {
        return Ok(None);
    }
    let cols: Vec<Vec<f64>> = columns.iter().map(|c| frame.dense_column(c)).collect::<Result<_>>()?;
    let n = frame.n_rows();
    let data = (0..n).flat_map(|i| cols.iter().map(move |c| c[i])).collect();
    Tensor::new(vec![n, columns.len()], data).map(Some)
}

/// A trained network with the windowing and scaling it was trained under.
#[derive(Debug)]
pub struct NeuralForecaster {
    pub name: String,
    pub window: WindowSpec,
    pub scaler: MinMaxScaler,
    pub network: Network,
}

#[derive(Serialize, Deserialize)]
struct NeuralEnvelope {
    name: String,
    window: WindowSpec,
    scaler: MinMaxScaler,
    network: String,
}

impl NeuralForecaster {
    pub const CHECKPOINT_KIND: &'static str = "neural-forecaster";

    pub fn to_checkpoint(&self) -> Result<String> {
        let env = NeuralEnvelope {
            name: self.name.clone(),
            window: self.window.clone(),
            scaler: self.scaler.clone(),
            network: self.network.to_checkpoint()?,
        };
        crate::model::to_checkpoint(Self::CHECKPOINT_KIND, &env)
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let env: NeuralEnvelope = crate::model::from_checkpoint(text, Self::CHECKPOINT_KIND)?;
        Ok(Self {
            name: env.name,
            window: env.window,
            scaler: env.scaler,
            network: Network::from_checkpoint(&env.network)?,
        })
    }
}

impl Forecaster for NeuralForecaster {
    fn name(&self) -> &str {
        &self.name
    }

    fn family(&self) -> Family {
        // Architecture families map one to one onto report groups.
        Family::from_network_family(self.network.spec().architecture.family()).unwrap_or(Family::FeedForward)
    }

    fn forecast(&self, frame: &TimeSeriesFrame, anchors: &[usize], horizons: &[usize]) -> Result<Vec<Vec<f64>>> {
        let heads = self.network.horizons();
        let idx: Vec<usize> = horizons
            .iter()
            .map(|h| {
                heads
                    .iter()
                    .position(|x| x == h)
                    .ok_or_else(|| Error::invalid(format!("model `{}` has no {h}h output head", self.name)))
            })
            .collect::<Result<_>>()?;
        let x = windows_at(frame, &self.window, anchors, Some(&self.scaler))?;
        let pred = self.network.predict(&x)?;
        Ok(pred.into_iter().map(|row| idx.iter().map(|&j| row[j]).collect()).collect())
    }
}

fn transpose(columns: &[Vec<f64>], rows: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|i| columns.iter().map(|c| c[i]).collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFailure {
    pub model: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub table: MetricsTable,
    pub failures: Vec<ModelFailure>,
}

/// Rows used as forecast anchors: every row from the start of the test
/// block whose furthest target still lies inside the frame.
pub fn evaluation_anchors(n_rows: usize, test_start: usize, max_horizon: usize) -> Result<Vec<usize>> {
    let end = n_rows.saturating_sub(max_horizon);
    if test_start >= end {
        return Err(Error::InsufficientData(format!(
            "test block starting at row {test_start} of {n_rows} leaves no anchors for horizon {max_horizon}"
        )));
    }
    Ok((test_start..end).collect())
}

/// Scores the persistence baseline and every model on the same anchors.
///
/// `frame` holds train and test rows in order, with the test block starting
/// at `test_start`. A model that fails is reported in `failures` and left
/// out of the table; the baseline failing is an error.
pub fn evaluate_all(
    models: &[Box<dyn Forecaster>],
    frame: &TimeSeriesFrame,
    target: &str,
    test_start: usize,
    horizons: &[usize],
) -> Result<Evaluation> {
    if horizons.is_empty() || horizons.contains(&0) || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("horizons must be positive and strictly increasing"));
    }
    let max_h = *horizons.last().expect("non-empty");
    let anchors = evaluation_anchors(frame.n_rows(), test_start, max_h)?;
    let y = frame.dense_column(target)?;
    let truth: Vec<Vec<f64>> = horizons.iter().map(|&h| anchors.iter().map(|&a| y[a + h]).collect()).collect();

    let score = |f: &dyn Forecaster| -> Result<Vec<MetricsRecord>> {
        let pred = f.forecast(frame, &anchors, horizons)?;
        if pred.len() != anchors.len() || pred.iter().any(|p| p.len() != horizons.len()) {
            return Err(Error::ShapeMismatch {
                op: "forecast",
                left: vec![pred.len(), pred.first().map_or(0, Vec::len)],
                right: vec![anchors.len(), horizons.len()],
            });
        }
        horizons
            .iter()
            .enumerate()
            .map(|(j, &h)| {
                let p: Vec<f64> = pred.iter().map(|row| row[j]).collect();
                Ok(MetricsRecord::new(f.name(), f.family(), h, metrics(&truth[j], &p)?))
            })
            .collect()
    };

    let baseline = Persistence { target: target.to_string() };
    let mut table = MetricsTable::new();
    for r in score(&baseline)? {
        table.push(r)?;
    }
    let outcomes: Vec<Result<Vec<MetricsRecord>>> = models.par_iter().map(|m| score(m.as_ref())).collect();

    let mut failures = Vec::new();
    for (m, outcome) in models.iter().zip(outcomes) {
        let pushed = outcome.and_then(|records| {
            if table.models().iter().any(|x| x == m.name()) {
                return Err(Error::invalid(format!("model name `{}` is already taken", m.name())));
            }
            records.into_iter().try_for_each(|r| table.push(r))
        });
        match pushed {
            Ok(()) => {
                for note in m.notes() {
                    if !table.notes.contains(&note) {
                        table.notes.push(note);
                    }
                }
            }
            Err(e) => failures.push(ModelFailure {
                model: m.name().to_string(),
                reason: e.to_string(),
            }),
        }
    }
    table.notes.push(format!(
        "Every model is scored on the same {} forecast origins (rows {}..={}); metrics are in original units.",
        anchors.len(),
        anchors[0],
        anchors[anchors.len() - 1]
    ));
    Ok(Evaluation { table, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arima::{fit_arima, ArimaOptions, ArimaOrder};
    use crate::linear::{fit_ols, LinearOptions};
    use crate::neural::{build_model, InputShape, ModelSpec};
    use crate::numcore::SeededRng;
    use approx::assert_relative_eq;
    use chrono::NaiveDate;

    fn ar_frame(n: usize, phi: f64, seed: u64) -> TimeSeriesFrame {
        let mut rng = SeededRng::new(seed);
        let mut y = vec![0.0; n];
        for t in 1..n {
            y[t] = phi * y[t - 1] + rng.next_normal();
        }
        let x: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
        let start = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        TimeSeriesFrame::from_dense(start, vec![("PM2.5", y.iter().map(|v| 20.0 + 3.0 * v).collect()), ("X", x)])
            .unwrap()
    }

    struct Copycat;

    impl Forecaster for Copycat {
        fn name(&self) -> &str {
            "copycat"
        }
        fn family(&self) -> Family {
            Family::Linear
        }
        fn forecast(&self, frame: &TimeSeriesFrame, anchors: &[usize], horizons: &[usize]) -> Result<Vec<Vec<f64>>> {
            let y = frame.dense_column("PM2.5")?;
            Ok(anchors.iter().map(|&a| vec![y[a]; horizons.len()]).collect())
        }
    }

    struct MeanPredictor(f64);

    impl Forecaster for MeanPredictor {
        fn name(&self) -> &str {
            "mean"
        }
        fn family(&self) -> Family {
            Family::Linear
        }
        fn forecast(&self, _: &TimeSeriesFrame, anchors: &[usize], horizons: &[usize]) -> Result<Vec<Vec<f64>>> {
            Ok(vec![vec![self.0; horizons.len()]; anchors.len()])
        }
    }

    #[test]
    fn anchors_cover_test_block() {
        assert_eq!(evaluation_anchors(20, 10, 8).unwrap(), vec![10, 11]);
        assert!(evaluation_anchors(20, 12, 8).is_err());
    }

    #[test]
    fn persistence_leads_and_copies_match() {
        let f = ar_frame(400, 0.8, 1);
        let models: Vec<Box<dyn Forecaster>> = vec![Box::new(Copycat)];
        let ev = evaluate_all(&models, &f, "PM2.5", 300, &DEFAULT_HORIZONS).unwrap();
        assert!(ev.failures.is_empty());
        assert_eq!(ev.table.models(), ["persistence", "copycat"]);
        for h in DEFAULT_HORIZONS {
            let a = ev.table.get("persistence", h).unwrap();
            let b = ev.table.get("copycat", h).unwrap();
            assert_eq!((a.mae, a.rmse, a.r2, a.n_test), (b.mae, b.rmse, b.r2, b.n_test));
            assert_eq!(a.n_test, 100 - 8);
        }
    }

    #[test]
    fn persistence_beats_mean_under_strong_autocorrelation() {
        // Persistence R² is about 2ρ^h − 1, so the ordering needs ρ^h > 1/2.
        let f = ar_frame(3000, 0.95, 2);
        let y = f.dense_column("PM2.5").unwrap();
        let mean = y[2000..].iter().sum::<f64>() / 1000.0;
        let models: Vec<Box<dyn Forecaster>> = vec![Box::new(MeanPredictor(mean))];
        let ev = evaluate_all(&models, &f, "PM2.5", 2000, &DEFAULT_HORIZONS).unwrap();
        for h in DEFAULT_HORIZONS {
            let p = ev.table.get("persistence", h).unwrap().r2.unwrap();
            let m = ev.table.get("mean", h).unwrap().r2.unwrap();
            assert!(p > m, "h={h}: persistence {p} vs mean {m}");
        }
    }

    #[test]
    fn missing_head_is_a_recorded_failure() {
        let f = ar_frame(300, 0.7, 3);
        let window = WindowSpec {
            lookback: 2,
            horizons: vec![1],
            mode: WindowMode::Tabular,
            target: "PM2.5".into(),
            features: vec!["PM2.5".into()],
        };
        let w = crate::data::make_windows(&f.slice_rows(0, 200), &window, None).unwrap();
        let ols = fit_ols(&w.features, &w.targets.data().to_vec(), LinearOptions::default()).unwrap();
        let model = TabularDirect {
            name: "ols".into(),
            family: Family::Linear,
            window,
            heads: vec![DirectHead {
                horizon: 1,
                model: TabularModel::Linear(ols),
            }],
        };
        let models: Vec<Box<dyn Forecaster>> = vec![Box::new(model.clone())];
        let ev = evaluate_all(&models, &f, "PM2.5", 200, &[1, 2]).unwrap();
        assert_eq!(ev.failures.len(), 1);
        assert!(ev.failures[0].reason.contains("2h"));
        assert_eq!(ev.table.models(), ["persistence"]);

        let models: Vec<Box<dyn Forecaster>> = vec![Box::new(model)];
        let ev = evaluate_all(&models, &f, "PM2.5", 200, &[1]).unwrap();
        assert!(ev.failures.is_empty());
        assert!(ev.table.notes.iter().any(|n| n.contains("direct strategy")));
        let ols = ev.table.get("ols", 1).unwrap();
        assert!(ols.rmse < ev.table.get("persistence", 1).unwrap().rmse);
    }

    #[test]
    fn random_walk_arima_matches_persistence() {
        let f = ar_frame(300, 0.95, 4);
        let y = f.dense_column("PM2.5").unwrap();
        let model = fit_arima(&y[..200], None, ArimaOrder::new(0, 1, 0), &ArimaOptions::default()).unwrap();
        let arima = ArimaForecaster {
            name: "arima".into(),
            target: "PM2.5".into(),
            exog: vec![],
            model,
            selection: None,
        };
        let models: Vec<Box<dyn Forecaster>> = vec![Box::new(arima)];
        let ev = evaluate_all(&models, &f, "PM2.5", 200, &[1, 4]).unwrap();
        for h in [1, 4] {
            let a = ev.table.get("persistence", h).unwrap();
            let b = ev.table.get("arima", h).unwrap();
            assert_relative_eq!(a.mae, b.mae, epsilon = 1e-9);
        }
    }

    #[test]
    fn neural_metrics_are_in_original_units() {
        let f = ar_frame(200, 0.5, 5);
        let scaler = MinMaxScaler::fit(&f.slice_rows(0, 150)).unwrap();
        let range = scaler.range("PM2.5").unwrap();
        let mut spec = ModelSpec::new("mlp".parse().unwrap());
        spec.hidden = Some(vec![]);
        spec.lookback = Some(3);
        spec.horizons = vec![1, 2];
        let input = InputShape {
            lookback: 3,
            channels: 2,
            target_channel: 0,
        };
        let mut net = build_model(&spec, input).unwrap();
        let store = net.params_mut();
        for t in store.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.25);
        }
        let weight = store.names().iter().position(|n| n.ends_with("weight")).unwrap();
        store.tensors_mut()[weight].data_mut().iter_mut().for_each(|v| *v = 0.0);
        net.mark_fitted(Some(range));
        let forecaster = NeuralForecaster {
            name: "mlp".into(),
            window: WindowSpec {
                lookback: 3,
                horizons: vec![1, 2],
                mode: WindowMode::Tabular,
                target: "PM2.5".into(),
                features: vec!["PM2.5".into(), "X".into()],
            },
            scaler,
            network: net,
        };
        let pred = forecaster.forecast(&f, &[150, 160], &[2]).unwrap();
        assert_relative_eq!(pred[0][0], range.invert(0.25), epsilon = 1e-12);
        assert_relative_eq!(range.invert(0.25), range.min + 0.25 * (range.max - range.min), epsilon = 1e-12);
        assert!(forecaster.forecast(&f, &[150], &[4]).is_err());

        let back = NeuralForecaster::from_checkpoint(&forecaster.to_checkpoint().unwrap()).unwrap();
        assert_eq!(back.forecast(&f, &[150, 160], &[1, 2]).unwrap(), forecaster.forecast(&f, &[150, 160], &[1, 2]).unwrap());
    }

    #[test]
    fn duplicate_model_names_fail() {
        let f = ar_frame(120, 0.5, 6);
        let models: Vec<Box<dyn Forecaster>> = vec![Box::new(Copycat), Box::new(Copycat)];
        let ev = evaluate_all(&models, &f, "PM2.5", 100, &[1]).unwrap();
        assert_eq!(ev.failures.len(), 1);
        assert!(evaluate_all(&models, &f, "PM2.5", 100, &[2, 1]).is_err());
    }
}
