//! Minimal L-BFGS with backtracking line search, used by the distance
//! estimator. Objectives may return `f64::INFINITY` to mark infeasible
//! points; the line search backtracks out of them.

use std::collections::VecDeque;

use nalgebra::DVector;

pub(crate) struct Lbfgs {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the objective improved by less than `rel_tol * (1 + |f|)`
    /// over the last `window` iterations.
    pub rel_tol: f64,
    pub window: usize,
    pub grad_tol: f64,
}

impl Default for Lbfgs {
    fn default() -> Self {
        Self { memory: 8, max_iters: 500, rel_tol: 1e-9, window: 10, grad_tol: 1e-11 }
    }
}

pub(crate) struct MinimizeResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub converged: bool,
}

impl Lbfgs {
    /// Minimize `f` from `x0`; `on_improve(value)` fires after every
    /// accepted step.
    pub fn minimize<F, G, C>(
        &self,
        x0: DVector<f64>,
        mut f: F,
        mut grad: G,
        mut on_improve: C,
    ) -> MinimizeResult
    where
        F: FnMut(&DVector<f64>) -> f64,
        G: FnMut(&DVector<f64>) -> DVector<f64>,
        C: FnMut(f64),
    {
        let mut x = x0;
        let mut fx = f(&x);
        if !fx.is_finite() {
            return MinimizeResult { x, value: fx, converged: false };
        }
        let mut g = grad(&x);
        let mut s_hist: VecDeque<DVector<f64>> = VecDeque::new();
        let mut y_hist: VecDeque<DVector<f64>> = VecDeque::new();
        let mut rho_hist: VecDeque<f64> = VecDeque::new();
        let mut recent: VecDeque<f64> = VecDeque::new();
        recent.push_back(fx);

        for _ in 0..self.max_iters {
            let gnorm = g.amax();
            if gnorm <= self.grad_tol * (1.0 + fx.abs()) {
                return MinimizeResult { x, value: fx, converged: true };
            }

            let mut direction = two_loop(&g, &s_hist, &y_hist, &rho_hist);
            let mut descent = direction.dot(&g);
            if !(descent < 0.0) {
                direction = -g.clone();
                descent = direction.dot(&g);
            }

            // Backtracking Armijo search.
            let mut step = if s_hist.is_empty() { (1.0 / gnorm.max(1.0)).min(1.0) } else { 1.0 };
            let mut accepted = None;
            for _ in 0..50 {
                let candidate = &x + &direction * step;
                let fc = f(&candidate);
                if fc.is_finite() && fc <= fx + 1e-4 * step * descent {
                    accepted = Some((candidate, fc));
                    break;
                }
                step *= 0.5;
            }
            let (x_new, f_new) = match accepted {
                Some(pair) => pair,
                // No admissible step along this direction; treat as stalled.
                None => return MinimizeResult { x, value: fx, converged: true },
            };

            let g_new = grad(&x_new);
            let s = &x_new - &x;
            let y = &g_new - &g;
            let sy = s.dot(&y);
            if sy > 1e-12 * s.norm() * y.norm() {
                if s_hist.len() == self.memory {
                    s_hist.pop_front();
                    y_hist.pop_front();
                    rho_hist.pop_front();
                }
                rho_hist.push_back(1.0 / sy);
                s_hist.push_back(s);
                y_hist.push_back(y);
            }

            x = x_new;
            fx = f_new;
            g = g_new;
            on_improve(fx);

            recent.push_back(fx);
            if recent.len() > self.window + 1 {
                recent.pop_front();
            }
            if recent.len() == self.window + 1 {
                let drop = recent.front().unwrap() - fx;
                if drop <= self.rel_tol * (1.0 + fx.abs()) {
                    return MinimizeResult { x, value: fx, converged: true };
                }
            }
        }
        MinimizeResult { x, value: fx, converged: false }
    }
}

/// Two-loop recursion for the L-BFGS direction `-H g`.
fn two_loop(
    g: &DVector<f64>,
    s_hist: &VecDeque<DVector<f64>>,
    y_hist: &VecDeque<DVector<f64>>,
    rho_hist: &VecDeque<f64>,
) -> DVector<f64> {
    let mut q = g.clone();
    let k = s_hist.len();
    let mut alphas = vec![0.0; k];
    for i in (0..k).rev() {
        alphas[i] = rho_hist[i] * s_hist[i].dot(&q);
        q -= &y_hist[i] * alphas[i];
    }
    if k > 0 {
        let last = k - 1;
        let gamma = s_hist[last].dot(&y_hist[last]) / y_hist[last].dot(&y_hist[last]);
        q *= gamma;
    }
    for i in 0..k {
        let beta = rho_hist[i] * y_hist[i].dot(&q);
        q += &s_hist[i] * (alphas[i] - beta);
    }
    -q
}
