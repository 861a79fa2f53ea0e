//! Numerical substrate: tensors, reverse-mode differentiation, Adam,
//! early stopping and portable seeded randomness.

mod graph;
mod linalg;
mod optim;
mod rng;
mod simplex;
mod tensor;

pub use graph::{Gradients, Graph, ParamStore, Var};
pub use linalg::{least_squares, LeastSquares, RANK_TOLERANCE};
pub(crate) use graph::bspline_basis;
pub use optim::{AdamState, EarlyStopping, StopSignal};
pub use rng::SeededRng;
pub use simplex::{nelder_mead, SimplexOptions, SimplexResult};
pub use tensor::Tensor;
pub(crate) use tensor::gemm_tn;

/// Central finite-difference gradient check.
///
/// `f` evaluates the scalar objective for a parameter store. Returns the
/// largest relative error `|a - n| / max(|a|, |n|, floor)` over every scalar
/// parameter, where `a` is the analytic gradient from `grad` and `n` the
/// central difference with step `h`.
pub fn gradcheck(
    store: &ParamStore,
    h: f64,
    floor: f64,
    f: impl Fn(&ParamStore) -> f64,
    analytic: &[Tensor],
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut probe = store.clone();
    for (pi, t) in store.tensors().iter().enumerate() {
        for j in 0..t.len() {
            let orig = t.data()[j];
            probe.tensors_mut()[pi].data_mut()[j] = orig + h;
            let up = f(&probe);
            probe.tensors_mut()[pi].data_mut()[j] = orig - h;
            let down = f(&probe);
            probe.tensors_mut()[pi].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi].data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}
