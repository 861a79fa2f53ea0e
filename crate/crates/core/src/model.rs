//! Pieces shared by every fitted model: the prediction trait, time-ordered
//! folds and the checkpoint envelope.

use std::ops::Range;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// A fitted model mapping feature rows `[n, p]` to one value per row.
pub trait Regressor {
    fn predict(&self, x: &Tensor) -> Result<Vec<f64>>;
}

/// `k` contiguous folds covering `0..n` in order; earlier folds absorb the
/// remainder one row each.
pub fn contiguous_folds(n: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if k > n {
        return Err(Error::InsufficientData(format!("{k} folds for {n} samples")));
    }
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    Ok((0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

pub fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

/// Mean negative MSE over contiguous folds; each fold is scored by a model
/// fitted on all remaining rows.
pub fn cross_val_score<M: Regressor>(
    x: &Tensor,
    y: &[f64],
    folds: usize,
    fit: impl Fn(&Tensor, &[f64]) -> Result<M>,
) -> Result<f64> {
    let n = y.len();
    let mut total = 0.0;
    let ranges = contiguous_folds(n, folds)?;
    for r in &ranges {
        let train: Vec<usize> = (0..r.start).chain(r.end..n).collect();
        let test: Vec<usize> = r.clone().collect();
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = fit(&x.select_rows(&train), &ty)?;
        let pred = model.predict(&x.select_rows(&test))?;
        total -= mse(&pred, &y[r.clone()]);
    }
    Ok(total / ranges.len() as f64)
}

pub const CHECKPOINT_FORMAT: &str = "aeris-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    model: T,
}

/// Serializes `model` as versioned JSON; floats round-trip bit-exactly.
pub fn to_checkpoint<T: Serialize>(kind: &str, model: &T) -> Result<String> {
    let env = Envelope {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        kind: kind.into(),
        model,
    };
    serde_json::to_string_pretty(&env).map_err(|e| Error::Checkpoint(e.to_string()))
}

/// Reads the `kind` tag without decoding the model body.
pub fn checkpoint_kind(text: &str) -> Result<String> {
    let env: Envelope<serde_json::Value> = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    check_header(&env.format, env.version)?;
    Ok(env.kind)
}

fn check_header(format: &str, version: u32) -> Result<()> {
    if format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("not a checkpoint (format `{format}`)")));
    }
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    Ok(())
}

pub fn from_checkpoint<T: DeserializeOwned>(text: &str, kind: &str) -> Result<T> {
    let env: Envelope<T> = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
    check_header(&env.format, env.version)?;
    if env.kind != kind {
        return Err(Error::Checkpoint(format!("expected a `{kind}` checkpoint, found `{}`", env.kind)));
    }
    Ok(env.model)
}

pub fn save_checkpoint<T: Serialize>(path: &Path, kind: &str, model: &T) -> Result<()> {
    std::fs::write(path, to_checkpoint(kind, model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_checkpoint(&text, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_contiguous_and_cover() {
        let f = contiguous_folds(10, 3).unwrap();
        assert_eq!(f, vec![0..4, 4..7, 7..10]);
        assert!(contiguous_folds(2, 3).is_err());
        assert!(contiguous_folds(10, 1).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let v = vec![0.1, 1.0 / 3.0, f64::MIN_POSITIVE, -2.5e-300, 1e300];
        let text = to_checkpoint("vec", &v).unwrap();
        let back: Vec<f64> = from_checkpoint(&text, "vec").unwrap();
        assert!(v.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(checkpoint_kind(&text).unwrap(), "vec");
        assert!(from_checkpoint::<Vec<f64>>(&text, "other").is_err());
    }
}
