//! Nelder-Mead simplex minimization with an optional projection applied to
//! every trial point.

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SimplexOptions {
    /// Stops once `f(worst) − f(best) ≤ tolerance · max(1, |f(best)|)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial_step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 5000,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub history: Vec<f64>,
}

/// Minimizes `f` from `x0`. `project` maps any trial point into the feasible
/// set before it is evaluated.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    project: impl Fn(&mut [f64]),
    opts: &SimplexOptions,
) -> SimplexResult {
    let k = x0.len();
    let eval = |x: &mut Vec<f64>| {
        project(x);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut start = x0.to_vec();
    let v0 = eval(&mut start);
    if k == 0 {
        return SimplexResult {
            x: start,
            value: v0,
            iterations: 0,
            converged: true,
            history: vec![v0],
        };
    }
    let mut pts: Vec<(Vec<f64>, f64)> = vec![(start.clone(), v0)];
    for i in 0..k {
        let mut p = start.clone();
        p[i] += opts.initial_step;
        project(&mut p);
        // A step the projection undoes would collapse the simplex.
        if p[i] == start[i] {
            p[i] -= opts.initial_step;
        }
        let v = eval(&mut p);
        pts.push((p, v));
    }
    let mut history = Vec::new();
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iterations {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        history.push(pts[0].1);
        let (best, worst) = (pts[0].1, pts[k].1);
        if worst - best <= opts.tolerance * best.abs().max(1.0) {
            converged = true;
            break;
        }
        it += 1;
        let centroid: Vec<f64> = (0..k).map(|j| pts[..k].iter().map(|p| p.0[j]).sum::<f64>() / k as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..k).map(|j| centroid[j] + t * (pts[k].0[j] - centroid[j])).collect() };
        let mut xr = along(-1.0);
        let fr = eval(&mut xr);
        if fr < pts[0].1 {
            let mut xe = along(-2.0);
            let fe = eval(&mut xe);
            pts[k] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < pts[k - 1].1 {
            pts[k] = (xr, fr);
        } else {
            let (mut xc, outside) = if fr < pts[k].1 { (along(-0.5), true) } else { (along(0.5), false) };
            let fc = eval(&mut xc);
            if (outside && fc <= fr) || (!outside && fc < pts[k].1) {
                pts[k] = (xc, fc);
            } else {
                let b = pts[0].0.clone();
                for p in pts.iter_mut().skip(1) {
                    let mut s: Vec<f64> = b.iter().zip(&p.0).map(|(bj, pj)| bj + 0.5 * (pj - bj)).collect();
                    let v = eval(&mut s);
                    *p = (s, v);
                }
            }
        }
    }
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = pts.swap_remove(0);
    SimplexResult {
        x,
        value,
        iterations: it,
        converged,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = SimplexOptions {
            tolerance: 1e-14,
            max_iterations: 20_000,
            initial_step: 0.5,
        };
        let r = nelder_mead(f, &[-1.2, 1.0], |_| {}, &opts);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn projection_keeps_iterates_feasible() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2);
        let r = nelder_mead(f, &[0.0], |x| x[0] = x[0].clamp(-0.99, 0.99), &SimplexOptions::default());
        assert!((r.x[0] - 0.99).abs() < 1e-6);
    }
}
