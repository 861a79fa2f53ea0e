use serde::{Deserialize, Serialize};

use super::layers::Pass;
use super::network::{build_model, InputShape, Network};
use super::spec::ModelSpec;
use crate::data::{SupervisedWindowSet, WindowMode};
use crate::error::{Error, Result};
use crate::numcore::{AdamState, EarlyStopping, ParamStore, SeededRng, StopSignal, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub min_delta: f64,
    /// Trailing fraction of the windows held out for early stopping; zero
    /// disables validation and every epoch runs.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 10,
            min_delta: 1e-5,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::invalid("validation fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub curve: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingReport {
    /// `epoch,train_loss,validation_loss` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,validation_loss\n");
        for r in &self.curve {
            let v = r.validation_loss.map_or(String::new(), |v| format!("{v:.8}"));
            out.push_str(&format!("{},{:.8},{v}\n", r.epoch, r.train_loss));
        }
        out
    }
}

/// Random stream for batch order and dropout, independent of the
/// initialization stream.
const TRAIN_STREAM: u64 = 0x7261_696e;

/// Mini-batch Adam on the mean squared error over all output horizons.
///
/// `x` is `[n, ..sample_shape]`, `y` is `[n, n_horizons]`. The trailing
/// validation fraction drives early stopping and the best parameters are
/// restored at the end.
pub fn train_arrays(network: &mut Network, x: &Tensor, y: &Tensor, config: &TrainConfig) -> Result<TrainingReport> {
    config.validate()?;
    let n = x.rows();
    let nh = network.horizons().len();
    if y.rank() != 2 || y.rows() != n || y.row_len() != nh {
        return Err(Error::ShapeMismatch {
            op: "training targets",
            left: y.shape().to_vec(),
            right: vec![n, nh],
        });
    }
    let n_val = (n as f64 * config.validation_fraction).floor() as usize;
    let n_train = n - n_val;
    if n_train == 0 {
        return Err(Error::InsufficientData("no training windows".into()));
    }
    let val_idx: Vec<usize> = (n_train..n).collect();
    let (x_val, y_val) = (x.select_rows(&val_idx), y.select_rows(&val_idx));

    let master = SeededRng::new(network.spec().seed).fork(TRAIN_STREAM);
    let mut adam = AdamState::new(network.params(), config.learning_rate);
    let mut stopper: EarlyStopping<ParamStore> = EarlyStopping::new(config.patience, config.min_delta);
    let mut curve = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let mut erng = master.fork(epoch as u64);
        let mut order: Vec<usize> = (0..n_train).collect();
        erng.shuffle(&mut order);
        let mut weighted = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut f = Pass::train(network.params(), erng.fork(b as u64));
            let xv = f.g.constant(x.select_rows(chunk));
            let out = network.forward(&mut f, xv)?;
            let loss = f.g.mse(out, &y.select_rows(chunk))?;
            let value = f.g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    learning_rate: config.learning_rate,
                });
            }
            weighted += value * chunk.len() as f64;
            let grads = f.g.backward(loss)?.for_store(network.params());
            adam.step(network.params_mut(), &grads);
        }
        let train_loss = weighted / n_train as f64;
        let validation_loss = if n_val > 0 {
            let pred = network.evaluate(&x_val)?;
            Some(crate::model::mse(pred.data(), y_val.data()))
        } else {
            None
        };
        curve.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        if let Some(v) = validation_loss {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: 0,
                    learning_rate: config.learning_rate,
                });
            }
            if stopper.observe(v, || network.params().clone()) == StopSignal::Stop {
                stopped_early = epoch < config.epochs;
                break;
            }
        }
    }
    let best_epoch = match stopper.best_epoch() {
        Some(e) => {
            let best = stopper.into_best().expect("best snapshot recorded");
            *network.params_mut() = best;
            e
        }
        None => curve.len(),
    };
    Ok(TrainingReport {
        curve,
        best_epoch,
        stopped_early,
    })
}

/// Builds and trains a network for a window set. Horizons requested by the
/// spec must all be present in the window set; targets are read in scaled
/// units and the window set's target range is kept for prediction.
pub fn train_model(spec: &ModelSpec, windows: &SupervisedWindowSet, config: &TrainConfig) -> Result<(Network, TrainingReport)> {
    let want_mode = if spec.architecture.is_feed_forward() {
        WindowMode::Tabular
    } else {
        WindowMode::Sequence
    };
    if windows.mode != want_mode {
        return Err(Error::invalid(format!(
            "{} needs {want_mode:?} windows, got {:?}",
            spec.architecture, windows.mode
        )));
    }
    let target_channel = windows
        .channels
        .iter()
        .position(|c| c == &windows.target)
        .ok_or_else(|| Error::MissingColumn(windows.target.clone()))?;
    let input = InputShape {
        lookback: windows.lookback,
        channels: windows.n_channels(),
        target_channel,
    };
    let mut network = build_model(spec, input)?;
    let columns = horizon_columns(&network.horizons(), &windows.horizons)?;
    let y = select_columns(&windows.targets, &columns);
    let report = train_arrays(&mut network, &windows.features, &y, config)?;
    network.mark_fitted(windows.target_range());
    Ok((network, report))
}

/// Index of each requested horizon within `available`.
pub fn horizon_columns(requested: &[usize], available: &[usize]) -> Result<Vec<usize>> {
    requested
        .iter()
        .map(|h| {
            available
                .iter()
                .position(|a| a == h)
                .ok_or_else(|| Error::invalid(format!("horizon {h} is not among the window horizons {available:?}")))
        })
        .collect()
}

fn select_columns(t: &Tensor, cols: &[usize]) -> Tensor {
    let data = (0..t.rows()).flat_map(|i| cols.iter().map(move |&c| t.row(i)[c])).collect();
    Tensor::new(vec![t.rows(), cols.len()], data).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::fit_ols;
    use crate::neural::{Architecture, ModelSpec};

    fn linear_problem(n: usize) -> (Tensor, Tensor, Vec<f64>) {
        let mut r = SeededRng::new(31);
        let w = [0.6, -0.3, 0.2];
        let x: Vec<f64> = (0..n * 3).map(|_| r.next_f64()).collect();
        let y: Vec<f64> = x.chunks(3).map(|row| 0.1 + row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.01 * r.next_normal()).collect();
        (Tensor::new(vec![n, 3], x).unwrap(), Tensor::new(vec![n, 1], y).unwrap(), w.to_vec())
    }

    fn linear_spec() -> ModelSpec {
        let mut spec = ModelSpec::new(Architecture::Mlp);
        spec.hidden = Some(Vec::new());
        spec.lookback = Some(1);
        spec.horizons = vec![1];
        spec.dropout = 0.0;
        spec
    }

    const LINEAR_INPUT: InputShape = InputShape {
        lookback: 1,
        channels: 3,
        target_channel: 0,
    };

    #[test]
    fn full_batch_convex_loss_is_monotone() {
        let (x, y, _) = linear_problem(100);
        let mut net = build_model(&linear_spec(), LINEAR_INPUT).unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 100,
            learning_rate: 1e-2,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        let report = train_arrays(&mut net, &x, &y, &cfg).unwrap();
        assert!(report.curve.windows(2).all(|w| w[1].train_loss <= w[0].train_loss));
    }

    #[test]
    fn linear_network_matches_ols() {
        let (x, y, _) = linear_problem(200);
        let mut net = build_model(&linear_spec(), LINEAR_INPUT).unwrap();
        let cfg = TrainConfig {
            epochs: 4000,
            batch_size: 200,
            learning_rate: 1e-2,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        train_arrays(&mut net, &x, &y, &cfg).unwrap();
        let ols = fit_ols(&x, y.data(), Default::default()).unwrap();
        let w = net.params().get(0).data();
        for (a, b) in w.iter().zip(&ols.coef) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
        assert!((net.params().get(1).data()[0] - ols.intercept).abs() < 1e-3);
    }

    #[test]
    fn constant_target_is_learned() {
        let (x, _, _) = linear_problem(64);
        let y = Tensor::full(&[64, 1], 0.4);
        let mut net = build_model(&linear_spec(), LINEAR_INPUT).unwrap();
        let cfg = TrainConfig {
            epochs: 400,
            batch_size: 16,
            learning_rate: 1e-2,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        let report = train_arrays(&mut net, &x, &y, &cfg).unwrap();
        assert!(report.curve.last().unwrap().train_loss < 1e-6);
        net.mark_fitted(None);
        let p = net.predict(&x).unwrap();
        assert!(p.iter().all(|r| (r[0] - 0.4).abs() < 2e-3));
    }

    #[test]
    fn same_seed_same_parameters() {
        let (x, y, _) = linear_problem(80);
        let mut spec = linear_spec();
        spec.hidden = Some(vec![5]);
        spec.dropout = 0.2;
        let run = || {
            let mut net = build_model(&spec, LINEAR_INPUT).unwrap();
            let cfg = TrainConfig {
                epochs: 5,
                batch_size: 16,
                ..TrainConfig::default()
            };
            train_arrays(&mut net, &x, &y, &cfg).unwrap();
            net.params().clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_aborts_with_diagnostics() {
        let (x, _, _) = linear_problem(32);
        let y = Tensor::full(&[32, 1], f64::NAN);
        let mut net = build_model(&linear_spec(), LINEAR_INPUT).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.5,
            ..TrainConfig::default()
        };
        match train_arrays(&mut net, &x, &y, &cfg) {
            Err(Error::NonFiniteLoss { epoch, batch, learning_rate }) => {
                assert_eq!((epoch, batch, learning_rate), (1, 0, 0.5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn early_stopping_restores_best() {
        let (x, y, _) = linear_problem(100);
        let mut net = build_model(&linear_spec(), LINEAR_INPUT).unwrap();
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 10,
            learning_rate: 5e-2,
            patience: 3,
            ..TrainConfig::default()
        };
        let report = train_arrays(&mut net, &x, &y, &cfg).unwrap();
        let best = report.curve[report.best_epoch - 1].validation_loss.unwrap();
        assert!(report.curve.iter().all(|r| r.validation_loss.unwrap() >= best - 1e-5));
        let val: Vec<usize> = (90..100).collect();
        let pred = net.evaluate(&x.select_rows(&val)).unwrap();
        assert_eq!(crate::model::mse(pred.data(), y.select_rows(&val).data()), best);
    }

    #[test]
    fn eval_loss_is_repeatable() {
        let (x, _, _) = linear_problem(20);
        let mut spec = linear_spec();
        spec.hidden = Some(vec![4]);
        spec.dropout = 0.3;
        let net = build_model(&spec, LINEAR_INPUT).unwrap();
        let a = net.evaluate(&x).unwrap();
        assert_eq!(a, net.evaluate(&x).unwrap());
        let train_pass = || {
            let mut f = Pass::train(net.params(), SeededRng::new(4));
            let xv = f.g.constant(x.clone());
            let out = net.forward(&mut f, xv).unwrap();
            f.g.value(out).clone()
        };
        assert_eq!(train_pass(), train_pass());
        assert_ne!(train_pass(), a);
    }
}
