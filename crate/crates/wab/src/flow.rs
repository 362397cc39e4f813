//! Entropy, its gradient flow, and convergence diagnostics.
//!
//! The entropy `H(mu) = sum_x (mu log mu - mu) pi(x)` is minimized at the
//! constant density `1`, where it equals `-1` exactly. In the transport
//! geometry its gradient at `mu` is represented by the pair
//! `(b^-2 grad log mu, a^-2 <log mu, p>_pi)`, so the steepest-descent
//! evolution is the heat equation with a rank-one source,
//!
//! ```text
//! rho_dot = b^-2 (K - I) rho - a^-2 <log rho, p>_pi p .
//! ```
//!
//! [`integrate_flow`] integrates it with classical fixed-step RK4 under a
//! positivity monitor: the theory guarantees a strictly positive floor for
//! the exact solution, so any crossing of the (much smaller) computed floor
//! indicates an oversized step and triggers halving. [`estimate_decay`]
//! fits the exponential entropy decay and reports a sampled lower estimate
//! of the gradient-domination constant that drives it.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calculus::{
    gradient, inner_mobility, inner_node, norm_l2, strictly_positive, total_mass,
};
use crate::chain::MarkovChain;
use crate::operators::TangentDecomposition;
use crate::operators::TransportParams;
use crate::{Density, Error, Result};

/// `H(1)`, exactly: every node contributes `(0 - 1) pi(x)` and the weights
/// sum to one. Kept analytic so entropy gaps do not drift.
pub const ENTROPY_AT_EQUILIBRIUM: f64 = -1.0;

/// Discrete entropy `sum_x (mu log mu - mu) pi(x)` with `0 log 0 = 0`.
pub fn entropy(mu: &Density, chain: &MarkovChain) -> f64 {
    mu.iter()
        .zip(chain.stationary().iter())
        .map(|(&m, &w)| if m > 0.0 { (m * m.ln() - m) * w } else { 0.0 })
        .sum()
}

/// Metric gradient of the entropy at a strictly positive density, in
/// continuity-equation coordinates `(b^-2 grad log mu, a^-2 <log mu, p>_pi)`.
pub fn entropy_gradient(
    mu: &Density,
    params: &TransportParams,
    chain: &MarkovChain,
) -> Result<TangentDecomposition> {
    let min = mu.min();
    if min <= 0.0 {
        return Err(Error::NotStrictlyPositive(min));
    }
    let log_mu = mu.map(f64::ln);
    let b2 = params.b() * params.b();
    let a2 = params.a() * params.a();
    let mut potential = &log_mu / b2;
    let mean = potential.sum() / potential.len() as f64;
    potential.add_scalar_mut(-mean);
    Ok(TangentDecomposition {
        grad_potential: gradient(&potential),
        source_rate: inner_node(&log_mu, params.p(), chain) / a2,
        potential,
    })
}

/// Squared metric norm of the entropy gradient:
/// `a^-2 <log mu, p>_pi^2 + b^-2 <grad log mu, grad log mu>_mu`.
pub fn grad_norm_sq(mu: &Density, params: &TransportParams, chain: &MarkovChain) -> Result<f64> {
    let min = mu.min();
    if min <= 0.0 {
        return Err(Error::NotStrictlyPositive(min));
    }
    let log_mu = mu.map(f64::ln);
    let source = inner_node(&log_mu, params.p(), chain);
    let grad_log = gradient(&log_mu);
    let transport = inner_mobility(&grad_log, &grad_log, mu, chain)?;
    let a2 = params.a() * params.a();
    let b2 = params.b() * params.b();
    Ok(source * source / a2 + transport / b2)
}

/// Right-hand side of the generalized heat equation,
/// `b^-2 (K - I) rho - a^-2 <log rho, p>_pi p`. This is the negative of the
/// entropy gradient viewed as a plain velocity vector.
pub fn heat_rhs(rho: &Density, params: &TransportParams, chain: &MarkovChain) -> Result<DVector<f64>> {
    let min = rho.min();
    if min <= 0.0 {
        return Err(Error::NotStrictlyPositive(min));
    }
    let log_rho = rho.map(f64::ln);
    let diffusion = (chain.kernel() * rho - rho) / (params.b() * params.b());
    let rate = inner_node(&log_rho, params.p(), chain) / (params.a() * params.a());
    Ok(diffusion - params.p() * rate)
}

/// Options for [`integrate_flow`].
#[derive(Debug, Clone, Copy)]
pub struct FlowOpts {
    pub dt: f64,
    pub t_max: f64,
    /// Stop once `||rho - 1||_{pi,2}` drops below this.
    pub stop_tol: f64,
    /// Diagnostics are recorded every this many accepted steps.
    pub record_every: usize,
}

impl FlowOpts {
    /// Defaults scaled to the cost weights: `dt = 0.01 min(a^2, b^2)`.
    pub fn for_params(params: &TransportParams) -> Self {
        let a2 = params.a() * params.a();
        let b2 = params.b() * params.b();
        Self { dt: 0.01 * a2.min(b2), t_max: 200.0, stop_tol: 1e-10, record_every: 10 }
    }
}

/// Recorded time series of one heat-flow run.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Density>,
    pub entropy: Vec<f64>,
    pub grad_norm_sq: Vec<f64>,
    pub min_state: Vec<f64>,
    pub mass: Vec<f64>,
    /// Positivity floor enforced by the monitor.
    pub positivity_floor: f64,
    /// True when the run stopped on `stop_tol` rather than `t_max`.
    pub converged: bool,
}

impl FlowTrajectory {
    /// Number of recorded samples.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    /// True when nothing was recorded (never happens for successful runs).
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Largest `u` with `u log u - u <= kappa`, the per-node bound implied by
/// an entropy sublevel set. Newton on `u (log u - 1) - kappa`.
fn sublevel_max(kappa: f64) -> f64 {
    let kappa = kappa.max(0.0);
    let mut u = std::f64::consts::E + kappa + 1.0;
    for _ in 0..100 {
        let f = u * (u.ln() - 1.0) - kappa;
        let df = u.ln();
        let next = (u - f / df).max(std::f64::consts::E);
        if (next - u).abs() <= 1e-12 * u {
            return next;
        }
        u = next;
    }
    u
}

/// Positivity floor for a run started at `rho0`, derived from the entropy
/// sublevel bound: the flow can never drive its minimum below
/// `min(min(rho0)/2, exp(-2 C max(p) / min(pi p^2)))` where `C` bounds the
/// positive part of `<log rho, p>_pi` along the run.
fn positivity_floor(rho0: &Density, params: &TransportParams, chain: &MarkovChain) -> f64 {
    let kappa = (entropy(rho0, chain) - ENTROPY_AT_EQUILIBRIUM) / chain.min_stationary();
    let c_hat = sublevel_max(kappa).ln().max(0.0);
    let p = params.p();
    let denom: f64 = (0..chain.n())
        .map(|x| chain.stationary()[x] * p[x] * p[x])
        .fold(f64::INFINITY, f64::min);
    let theoretical = (-2.0 * c_hat * p.max() / denom).exp();
    (0.5 * rho0.min()).min(theoretical).max(f64::MIN_POSITIVE)
}

/// One classical RK4 step; `None` when any stage leaves the positive cone
/// or produces a non-finite value.
fn rk4_step(
    state: &Density,
    dt: f64,
    params: &TransportParams,
    chain: &MarkovChain,
) -> Option<Density> {
    let eval = |s: &Density| -> Option<DVector<f64>> {
        if s.min() <= 0.0 {
            return None;
        }
        heat_rhs(s, params, chain).ok()
    };
    let k1 = eval(state)?;
    let k2 = eval(&(state + &k1 * (dt * 0.5)))?;
    let k3 = eval(&(state + &k2 * (dt * 0.5)))?;
    let k4 = eval(&(state + &k3 * dt))?;
    let next = state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().all(|v| v.is_finite()) {
        Some(next)
    } else {
        None
    }
}

/// Integrate the heat equation with source from a strictly positive state.
///
/// Fixed-step RK4; whenever a step lands below the positivity floor (or a
/// stage leaves the cone) the step is retried at half size, up to 20
/// halvings. The exact flow has a strictly positive floor, so persistent
/// violations signal a step size far too large and surface as
/// [`Error::StepSizeUnderflow`].
pub fn integrate_flow(
    rho0: &Density,
    params: &TransportParams,
    chain: &MarkovChain,
    opts: &FlowOpts,
) -> Result<FlowTrajectory> {
    if rho0.len() != chain.n() {
        return Err(Error::DimensionMismatch { expected: chain.n(), got: rho0.len() });
    }
    if !strictly_positive(rho0) {
        return Err(Error::NotStrictlyPositive(rho0.min()));
    }
    if !(opts.dt > 0.0) {
        return Err(Error::InvalidOption(format!("dt must be positive, got {}", opts.dt)));
    }
    if opts.record_every == 0 {
        return Err(Error::InvalidOption("record_every must be at least 1".into()));
    }

    let floor = positivity_floor(rho0, params, chain);
    let ones = DVector::from_element(chain.n(), 1.0);
    let mut trajectory = FlowTrajectory {
        times: Vec::new(),
        states: Vec::new(),
        entropy: Vec::new(),
        grad_norm_sq: Vec::new(),
        min_state: Vec::new(),
        mass: Vec::new(),
        positivity_floor: floor,
        converged: false,
    };

    let record = |t: f64, state: &Density, traj: &mut FlowTrajectory| -> Result<()> {
        traj.times.push(t);
        traj.entropy.push(entropy(state, chain));
        traj.grad_norm_sq.push(grad_norm_sq(state, params, chain)?);
        traj.min_state.push(state.min());
        traj.mass.push(total_mass(state, chain));
        traj.states.push(state.clone());
        Ok(())
    };

    let mut state = rho0.clone();
    let mut t = 0.0;
    record(t, &state, &mut trajectory)?;
    if norm_l2(&(&state - &ones), chain) < opts.stop_tol {
        trajectory.converged = true;
        return Ok(trajectory);
    }

    let mut steps = 0usize;
    let mut recorded_at_current = true;
    while t < opts.t_max * (1.0 - 1e-12) {
        let mut dt_try = opts.dt.min(opts.t_max - t);
        let mut halvings = 0u32;
        let next = loop {
            match rk4_step(&state, dt_try, params, chain) {
                Some(candidate) if candidate.min() >= floor => break candidate,
                _ => {
                    halvings += 1;
                    if halvings > 20 {
                        return Err(Error::StepSizeUnderflow { t, halvings });
                    }
                    dt_try *= 0.5;
                }
            }
        };
        state = next;
        t += dt_try;
        steps += 1;
        recorded_at_current = false;
        if steps % opts.record_every == 0 {
            record(t, &state, &mut trajectory)?;
            recorded_at_current = true;
        }
        if norm_l2(&(&state - &ones), chain) < opts.stop_tol {
            trajectory.converged = true;
            break;
        }
    }
    if !recorded_at_current {
        record(t, &state, &mut trajectory)?;
    }
    Ok(trajectory)
}

/// Gradient-domination ratio `||grad H(mu)||_g^2 / |H(mu) - H(1)|`.
pub fn lojasiewicz_ratio(
    mu: &Density,
    params: &TransportParams,
    chain: &MarkovChain,
) -> Result<f64> {
    let gap = (entropy(mu, chain) - ENTROPY_AT_EQUILIBRIUM).abs();
    if gap < 1e-14 {
        return Err(Error::AtEquilibrium(gap));
    }
    Ok(grad_norm_sq(mu, params, chain)? / gap)
}

/// Sampled lower estimate of the gradient-domination constant over the
/// entropy sublevel set `{H <= ceiling}`: minimum ratio over `n_samples`
/// seeded log-normal densities (plus nothing else — this is an estimate,
/// not the non-constructive compactness constant). Returns infinity when no
/// sample lands in the sublevel set.
pub fn sample_lojasiewicz(
    chain: &MarkovChain,
    params: &TransportParams,
    ceiling: f64,
    n_samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = chain.n();
    let mut min_ratio = f64::INFINITY;
    for _ in 0..n_samples {
        let sigma = rng.gen_range(0.02..0.8);
        let shift = rng.gen_range(-0.4..0.4);
        let mu = DVector::from_fn(n, |_, _| {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let gauss = (-2.0 * u1.ln()).sqrt() * u2.cos();
            (sigma * gauss + shift).exp()
        });
        if entropy(&mu, chain) > ceiling {
            continue;
        }
        if let Ok(ratio) = lojasiewicz_ratio(&mu, params, chain) {
            min_ratio = min_ratio.min(ratio);
        }
    }
    min_ratio
}

/// Exponential-decay fit of a converged trajectory.
#[derive(Debug, Clone, Copy)]
pub struct DecayReport {
    /// Negated slope of `log(H(rho_t) - H(1))` over the fit window.
    pub fitted_rate: f64,
    /// Coefficient of determination of that fit.
    pub r_squared: f64,
    /// Minimum sampled gradient-domination ratio along the trajectory
    /// (a lower estimate of the true constant).
    pub loja_constant: f64,
    /// `||rho_T - 1||_{pi,2}` at the final recorded state.
    pub l2_distance_final: f64,
    /// Negated slope of `log ||rho_t - 1||^2_{pi,2}`, when fittable.
    pub l2_fitted_rate: Option<f64>,
}

/// Fit the entropy decay rate over the tail of a trajectory.
///
/// Samples with entropy gap below `1e-13` are discarded as floating-point
/// floor; the line is fitted on the last half of what remains. Fewer than
/// 10 usable tail samples is an error.
pub fn estimate_decay(trajectory: &FlowTrajectory, chain: &MarkovChain) -> Result<DecayReport> {
    const GAP_CUTOFF: f64 = 1e-13;
    const MIN_SAMPLES: usize = 10;

    let usable: Vec<usize> = (0..trajectory.len())
        .filter(|&i| trajectory.entropy[i] - ENTROPY_AT_EQUILIBRIUM >= GAP_CUTOFF)
        .collect();
    let tail = &usable[usable.len() - usable.len().div_ceil(2)..];
    if tail.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData { got: tail.len(), need: MIN_SAMPLES });
    }

    let ts: Vec<f64> = tail.iter().map(|&i| trajectory.times[i]).collect();
    let log_gaps: Vec<f64> = tail
        .iter()
        .map(|&i| (trajectory.entropy[i] - ENTROPY_AT_EQUILIBRIUM).ln())
        .collect();
    let (slope, _, r_squared) = linear_fit(&ts, &log_gaps);

    let loja_constant = usable
        .iter()
        .map(|&i| {
            trajectory.grad_norm_sq[i] / (trajectory.entropy[i] - ENTROPY_AT_EQUILIBRIUM)
        })
        .fold(f64::INFINITY, f64::min);

    let ones = DVector::from_element(chain.n(), 1.0);
    let l2_points: Vec<(f64, f64)> = tail
        .iter()
        .filter_map(|&i| {
            let d = norm_l2(&(&trajectory.states[i] - &ones), chain);
            (d > 1e-150).then(|| (trajectory.times[i], 2.0 * d.ln()))
        })
        .collect();
    let l2_fitted_rate = if l2_points.len() >= 2 {
        let (ts, ys): (Vec<f64>, Vec<f64>) = l2_points.into_iter().unzip();
        Some(-linear_fit(&ts, &ys).0)
    } else {
        None
    };
    let last_state = trajectory.states.last().expect("non-empty trajectory");
    Ok(DecayReport {
        fitted_rate: -slope,
        r_squared,
        loja_constant,
        l2_distance_final: norm_l2(&(last_state - &ones), chain),
        l2_fitted_rate,
    })
}

/// Least-squares line `y = slope x + intercept` with `r^2`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Right derivative of `t -> min_x eta_t(x)` by the envelope rule: the
/// minimum of `rates` over the argmin set of `values`.
pub fn argmin_envelope_rate(values: &DVector<f64>, rates: &DVector<f64>) -> f64 {
    assert_eq!(values.len(), rates.len(), "values and rates must have equal length");
    assert!(!values.is_empty(), "need at least one entry");
    let min = values.min();
    let tol = 1e-12 * (1.0 + min.abs());
    values
        .iter()
        .zip(rates.iter())
        .filter(|(&v, _)| v <= min + tol)
        .map(|(_, &r)| r)
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_chain, random_reversible_chain};
    use nalgebra::{dmatrix, dvector};
    use rand::Rng;

    fn uniform_params(a: f64, b: f64, chain: &MarkovChain) -> TransportParams {
        TransportParams::new(a, b, DVector::from_element(chain.n(), 1.0), chain).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let chain = build_chain(dmatrix![0.9, 0.1; 0.2, 0.8]).unwrap();
        let ones = dvector![1.0, 1.0];
        assert!((entropy(&ones, &chain) + 1.0).abs() < 1e-15);
        let e = std::f64::consts::E;
        assert!(entropy(&dvector![e, e], &chain).abs() < 1e-14);
        assert_eq!(entropy(&dvector![0.0, 0.0], &chain), 0.0);
    }

    #[test]
    fn entropy_gradient_examples() {
        let chain = random_reversible_chain(4, 2, 0.9);
        let params = uniform_params(1.4, 0.9, &chain);
        let ones = DVector::from_element(4, 1.0);
        let d = entropy_gradient(&ones, &params, &chain).unwrap();
        assert!(d.grad_potential.amax() < 1e-14);
        assert!(d.source_rate.abs() < 1e-14);

        let c = 2.5;
        let d = entropy_gradient(&(&ones * c), &params, &chain).unwrap();
        assert!(d.grad_potential.amax() < 1e-14);
        assert!((d.source_rate - c.ln() / (1.4 * 1.4)).abs() < 1e-13);

        assert!(entropy_gradient(&dvector![1.0, 0.0, 1.0, 1.0], &params, &chain).is_err());
    }

    #[test]
    fn heat_rhs_examples() {
        let chain = build_chain(dmatrix![0.5, 0.5; 0.5, 0.5]).unwrap();
        let params = uniform_params(1.0, 1.0, &chain);
        let ones = dvector![1.0, 1.0];
        assert!(heat_rhs(&ones, &params, &chain).unwrap().amax() < 1e-15);

        let e = std::f64::consts::E;
        let rhs = heat_rhs(&(&ones * e), &params, &chain).unwrap();
        assert!((rhs - dvector![-1.0, -1.0]).amax() < 1e-14);
    }

    #[test]
    fn heat_rhs_mass_rate_identity() {
        // [rhs, pi] = -a^-2 <log rho, p>_pi because pi' (K - I) = 0.
        for seed in 0..30u64 {
            let n = 2 + (seed as usize) % 8;
            let chain = random_reversible_chain(n, 300 + seed, 0.8);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = DVector::from_fn(n, |_, _| rng.gen_range(0.2..3.0));
            let p_raw = DVector::from_fn(n, |_, _| rng.gen_range(0.3..2.0));
            let params = TransportParams::normalized(1.2, 0.7, p_raw, &chain).unwrap();
            let rhs = heat_rhs(&rho, &params, &chain).unwrap();
            let lhs = total_mass(&rhs, &chain);
            let expected =
                -inner_node(&rho.map(f64::ln), params.p(), &chain) / (1.2 * 1.2);
            assert!((lhs - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn heat_rhs_is_negative_entropy_gradient() {
        let chain = random_reversible_chain(5, 4, 0.8);
        let params = uniform_params(0.9, 1.3, &chain);
        let rho = DVector::from_fn(5, |i, _| 0.6 + 0.3 * i as f64);
        let rhs = heat_rhs(&rho, &params, &chain).unwrap();
        let via_decomposition =
            crate::operators::decompose_tangent(&rho, &rhs, &params, &chain).unwrap();
        let grad = entropy_gradient(&rho, &params, &chain).unwrap();
        assert!((via_decomposition.source_rate + grad.source_rate).abs() < 1e-10);
        for x in 0..5 {
            for y in 0..5 {
                if chain.kernel()[(x, y)] > 1e-14 {
                    let got = via_decomposition.grad_potential[(x, y)];
                    let want = -grad.grad_potential[(x, y)];
                    assert!((got - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn equilibrium_start_stops_immediately() {
        let chain = random_reversible_chain(3, 9, 1.0);
        let params = uniform_params(1.0, 1.0, &chain);
        let ones = DVector::from_element(3, 1.0);
        let opts = FlowOpts::for_params(&params);
        let traj = integrate_flow(&ones, &params, &chain, &opts).unwrap();
        assert!(traj.converged);
        assert_eq!(traj.len(), 1);
        assert!((traj.entropy[0] + 1.0).abs() < 1e-15);
        assert!(matches!(
            estimate_decay(&traj, &chain),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn constant_state_follows_scalar_oracle() {
        // For p = 1 and a = 1 a spatially constant state u(t) * 1 obeys the
        // scalar equation u' = -log u. Reference value computed with an
        // independent tiny-step integrator: u(1) = 1.8998659836686436 from
        // u(0) = e.
        let chain = build_chain(dmatrix![0.9, 0.1; 0.2, 0.8]).unwrap();
        let params = uniform_params(1.0, 1.0, &chain);
        let e = std::f64::consts::E;
        let rho0 = dvector![e, e];
        let opts = FlowOpts { dt: 1e-3, t_max: 1.0, stop_tol: 0.0, record_every: 1000 };
        let traj = integrate_flow(&rho0, &params, &chain, &opts).unwrap();
        let last = traj.states.last().unwrap();
        assert!((traj.times.last().unwrap() - 1.0).abs() < 1e-12);
        // Stays spatially constant.
        assert!((last[0] - last[1]).abs() < 1e-12);
        assert!((last[0] - 1.8998659836686436).abs() < 1e-9, "u(1) = {}", last[0]);
    }

    #[test]
    fn lojasiewicz_ratio_near_equilibrium() {
        let chain = random_reversible_chain(4, 6, 0.9);
        let params = uniform_params(1.0, 1.0, &chain);
        let ones = DVector::from_element(4, 1.0);
        assert!(matches!(
            lojasiewicz_ratio(&ones, &params, &chain),
            Err(Error::AtEquilibrium(_))
        ));
        // Constant perturbations: ratio -> 2 a^-2 as eps -> 0.
        let eps = 1e-4;
        let ratio = lojasiewicz_ratio(&(&ones * (1.0 + eps)), &params, &chain).unwrap();
        assert!((ratio - 2.0).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn argmin_envelope_examples() {
        assert_eq!(argmin_envelope_rate(&dvector![0.0, 1.0], &dvector![5.0, -7.0]), 5.0);
        assert_eq!(argmin_envelope_rate(&dvector![0.5, 0.5], &dvector![1.0, -1.0]), -1.0);
        assert_eq!(argmin_envelope_rate(&dvector![2.0], &dvector![3.0]), 3.0);
    }

    #[test]
    fn argmin_envelope_matches_finite_differences() {
        // Quadratic families eta_t(x) = alpha + beta t + gamma t^2; the
        // one-sided difference of the min envelope converges at rate O(h).
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let n = 2 + rng.gen_range(0..5);
            let alphas = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let betas = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let gammas = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let eta = |t: f64| {
                DVector::from_fn(n, |i, _| alphas[i] + betas[i] * t + gammas[i] * t * t)
            };
            let zeta = |t: f64| eta(t).min();
            let rate = argmin_envelope_rate(&eta(0.0), &betas);
            let mut prev_err = f64::INFINITY;
            for k in 1..=4 {
                let h = 10f64.powi(-(k as i32 + 1));
                let fd = (zeta(h) - zeta(0.0)) / h;
                let err = (fd - rate).abs();
                assert!(err <= prev_err + 1e-12);
                prev_err = err;
            }
            assert!(prev_err < 1e-3);
        }
    }

    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sublevel_bound_brackets_initial_state() {
        let chain = random_reversible_chain(5, 12, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho0 = DVector::from_fn(5, |_, _| rng.gen_range(0.1..6.0));
        let kappa = (entropy(&rho0, &chain) - ENTROPY_AT_EQUILIBRIUM) / chain.min_stationary();
        let m = sublevel_max(kappa);
        assert!(m >= rho0.max() * (1.0 - 1e-12));
        assert!((m * (m.ln() - 1.0) - kappa.max(0.0)).abs() < 1e-8 * (1.0 + kappa.abs()));
    }
}
