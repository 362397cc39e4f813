//! Built-in diagnostic suite behind the `demo` CLI subcommand.
//!
//! Runs compact versions of the acceptance checks on two built-in chains
//! (an asymmetric 2-state chain and a seeded 5-state chain) and prints one
//! pass/fail line per criterion. The full-size randomized suite lives in
//! the `acceptance` integration test target.

use std::io::Write;

use nalgebra::{dmatrix, DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calculus::{
    divergence, gradient, inner_edge, inner_mobility, inner_node, log_mean, norm_l1,
};
use crate::chain::{build_chain, random_reversible_chain, weighted_spectrum, MarkovChain};
use crate::distance::{estimate_distance, l1_bounds, DistanceOpts};
use crate::flow::{
    argmin_envelope_rate, estimate_decay, integrate_flow, FlowOpts,
    ENTROPY_AT_EQUILIBRIUM,
};
use crate::operators::{
    continuity_matrix, decompose_tangent, energy_matrix, TransportParams,
};
use crate::Density;

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn builtin_two_state() -> MarkovChain {
    build_chain(dmatrix![0.9, 0.1; 0.2, 0.8]).expect("valid builtin")
}

fn builtin_five_state() -> MarkovChain {
    random_reversible_chain(5, 2024, 0.8)
}

fn uniform_params(a: f64, b: f64, chain: &MarkovChain) -> TransportParams {
    TransportParams::new(a, b, DVector::from_element(chain.n(), 1.0), chain)
        .expect("uniform direction is always admissible")
}

fn random_positive(n: usize, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Density {
    DVector::from_fn(n, |_, _| rng.gen_range(lo..hi))
}

/// Run every check, printing one line per criterion; returns overall pass.
pub fn run_demo(out: &mut dyn Write) -> std::io::Result<bool> {
    let chains = [builtin_two_state(), builtin_five_state()];
    let checks = vec![
        pure_source_pinch(&chains),
        operator_identities(&chains),
        tangent_round_trip(&chains),
        gradient_flow_identity(&chains),
        exponential_convergence(&chains),
        positivity_and_mass_law(&chains),
        metric_axioms(&chains),
        scaling_degeneracy(),
        spectrum_check(&chains),
        envelope_rate_oracle(),
        two_state_brute_force(),
    ];
    let mut all = true;
    for (idx, check) in checks.iter().enumerate() {
        let status = if check.passed { "PASS" } else { "FAIL" };
        writeln!(out, "criterion {:2} {:<32} {} ({})", idx + 1, check.name, status, check.detail)?;
        all &= check.passed;
    }
    writeln!(out, "overall: {}", if all { "PASS" } else { "FAIL" })?;
    Ok(all)
}

fn pure_source_pinch(chains: &[MarkovChain]) -> Check {
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for chain in chains {
        for (s, a) in [(0.3, 0.5), (-0.2, 2.0)] {
            let params = uniform_params(a, 1.0, chain);
            let mu0 = DVector::from_element(chain.n(), 1.0);
            let mu1 = &mu0 + params.p() * s;
            let opts =
                DistanceOpts { n_steps: 8, restarts: 2, max_iters: 250, ..Default::default() };
            match estimate_distance(&mu0, &mu1, &params, chain, &opts) {
                Ok(est) => {
                    let exact = a * s.abs();
                    let rel = (est.upper_bound - exact) / exact;
                    worst = worst.max(rel.abs());
                    passed &= rel.abs() <= 0.01 && (est.lower_bound - exact).abs() <= 1e-10;
                }
                Err(_) => passed = false,
            }
        }
    }
    Check {
        name: "pure-source distance pinch",
        passed,
        detail: format!("worst relative excess {worst:.2e}"),
    }
}

fn operator_identities(chains: &[MarkovChain]) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for chain in chains {
        let n = chain.n();
        for _ in 0..50 {
            let psi = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let field = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
            let mu = random_positive(n, &mut rng, 0.05, 4.0);

            let lap = crate::calculus::laplacian(&psi, chain);
            let direct = chain.kernel() * &psi - &psi;
            let defect = (lap - direct).amax();
            passed &= defect <= 1e-14;
            worst = worst.max(defect);

            let ibp = (inner_edge(&gradient(&psi), &field, chain)
                + inner_node(&psi, &divergence(&field, chain), chain))
            .abs();
            passed &= ibp <= 1e-12 * (1.0 + psi.amax() + field.amax());

            let a = energy_matrix(&mu, chain).unwrap();
            let b = continuity_matrix(&mu, chain).unwrap();
            for x in 0..n {
                for y in 0..n {
                    let d = (a[(x, y)] - chain.stationary()[x] * b[(x, y)]).abs();
                    passed &= d <= 1e-15 * (1.0 + a[(x, y)].abs());
                }
            }

            let grad = gradient(&psi);
            let norm_sq = inner_mobility(&grad, &grad, &mu, chain).unwrap();
            let quad = (&a * &psi).dot(&psi);
            passed &= (norm_sq - quad).abs() <= 1e-12 * (1.0 + norm_sq.abs());

            let sv = b.svd(false, false).singular_values;
            let smax = sv.iter().cloned().fold(0.0, f64::max);
            let rank = sv.iter().filter(|&&s| s > 1e-10 * smax).count();
            passed &= rank == n - 1;
        }
    }
    Check {
        name: "operator identities",
        passed,
        detail: format!("worst Laplacian defect {worst:.2e}"),
    }
}

fn tangent_round_trip(chains: &[MarkovChain]) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for chain in chains {
        let n = chain.n();
        for _ in 0..50 {
            let mu = random_positive(n, &mut rng, 0.05, 5.0);
            let rho = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let params = TransportParams::normalized(
                rng.gen_range(0.4..2.0),
                rng.gen_range(0.4..2.0),
                random_positive(n, &mut rng, 0.2, 2.0),
                chain,
            )
            .unwrap();
            match decompose_tangent(&mu, &rho, &params, chain) {
                Ok(d) => {
                    let mut weighted = DMatrix::zeros(n, n);
                    for x in 0..n {
                        for y in 0..n {
                            weighted[(x, y)] =
                                d.grad_potential[(x, y)] * log_mean(mu[x], mu[y]).unwrap();
                        }
                    }
                    let residual = (&rho + divergence(&weighted, chain)
                        - params.p() * d.source_rate)
                        .amax();
                    worst = worst.max(residual);
                    passed &= residual <= 1e-10;
                }
                Err(_) => passed = false,
            }
        }
    }
    Check {
        name: "tangent round-trip",
        passed,
        detail: format!("worst reconstruction residual {worst:.2e}"),
    }
}

fn gradient_flow_identity(chains: &[MarkovChain]) -> Check {
    let mut passed = true;
    let mut worst: f64 = 0.0;
    for chain in chains {
        let params = uniform_params(1.0, 1.0, chain);
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        let rho0 = random_positive(chain.n(), &mut rng, 0.6, 1.6);
        let opts = FlowOpts { dt: 0.01, t_max: 5.0, stop_tol: 1e-12, record_every: 1 };
        match integrate_flow(&rho0, &params, chain, &opts) {
            Ok(traj) => {
                let tol = 5e-4f64.max(1e-8);
                for k in 1..traj.len().saturating_sub(1) {
                    let dt2 = traj.times[k + 1] - traj.times[k - 1];
                    let fd = (traj.entropy[k + 1] - traj.entropy[k - 1]) / dt2;
                    let defect = (fd + traj.grad_norm_sq[k]).abs();
                    worst = worst.max(defect);
                    passed &= defect <= tol;
                }
            }
            Err(_) => passed = false,
        }
    }
    Check {
        name: "gradient-flow identity",
        passed,
        detail: format!("worst |dH/dt + ||grad H||^2| = {worst:.2e}"),
    }
}

fn exponential_convergence(chains: &[MarkovChain]) -> Check {
    let mut passed = true;
    let mut worst_r2 = 1.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for chain in chains {
        let params = uniform_params(0.8, 0.8, chain);
        let opts = FlowOpts { t_max: 200.0, ..FlowOpts::for_params(&params) };
        for _ in 0..3 {
            let rho0 = random_positive(chain.n(), &mut rng, 0.2, 4.0);
            match integrate_flow(&rho0, &params, chain, &opts) {
                Ok(traj) => {
                    passed &= traj.converged;
                    match estimate_decay(&traj, chain) {
                        Ok(decay) => {
                            worst_r2 = worst_r2.min(decay.r_squared);
                            passed &= decay.r_squared >= 0.99;
                            // Entropy gap stays under the certified envelope.
                            let gap0 = traj.entropy[0] - ENTROPY_AT_EQUILIBRIUM;
                            let t0 = traj.times[0];
                            for k in 0..traj.len() {
                                let gap = traj.entropy[k] - ENTROPY_AT_EQUILIBRIUM;
                                if gap < 1e-13 {
                                    continue;
                                }
                                let envelope = 1.05
                                    * gap0
                                    * (-decay.loja_constant * (traj.times[k] - t0)).exp();
                                passed &= gap <= envelope;
                            }
                        }
                        Err(_) => passed = false,
                    }
                }
                Err(_) => passed = false,
            }
        }
    }
    Check {
        name: "exponential convergence",
        passed,
        detail: format!("worst tail fit r^2 = {worst_r2:.4}"),
    }
}

fn positivity_and_mass_law(chains: &[MarkovChain]) -> Check {
    let mut passed = true;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for chain in chains {
        let params = uniform_params(1.0, 1.0, chain);
        let rho0 = random_positive(chain.n(), &mut rng, 0.4, 2.5);
        let opts = FlowOpts { dt: 0.01, t_max: 10.0, stop_tol: 1e-12, record_every: 1 };
        match integrate_flow(&rho0, &params, chain, &opts) {
            Ok(traj) => {
                passed &= traj.positivity_floor > 0.0;
                passed &= traj.min_state.iter().all(|&m| m >= traj.positivity_floor);
                for k in 1..traj.len().saturating_sub(1) {
                    let dt2 = traj.times[k + 1] - traj.times[k - 1];
                    let fd = (traj.mass[k + 1] - traj.mass[k - 1]) / dt2;
                    let expected = -inner_node(
                        &traj.states[k].map(f64::ln),
                        params.p(),
                        chain,
                    );
                    let defect = (fd - expected).abs();
                    worst = worst.max(defect);
                    passed &= defect <= 1e-3;
                }
            }
            Err(_) => passed = false,
        }
    }
    Check {
        name: "positivity floor and mass law",
        passed,
        detail: format!("worst mass-rate defect {worst:.2e}"),
    }
}

fn metric_axioms(chains: &[MarkovChain]) -> Check {
    let mut passed = true;
    let mut detail = String::new();
    let chain = &chains[0];
    let params = uniform_params(1.0, 1.0, chain);
    let opts = DistanceOpts { n_steps: 8, restarts: 2, max_iters: 250, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(606);

    // Symmetry.
    let mu0 = random_positive(chain.n(), &mut rng, 0.4, 2.0);
    let mu1 = random_positive(chain.n(), &mut rng, 0.4, 2.0);
    let fwd = estimate_distance(&mu0, &mu1, &params, chain, &opts);
    let bwd = estimate_distance(&mu1, &mu0, &params, chain, &opts);
    match (fwd, bwd) {
        (Ok(f), Ok(b)) => {
            let rel = (f.upper_bound - b.upper_bound).abs() / f.upper_bound.max(1e-12);
            passed &= rel <= 0.02;
            detail = format!("symmetry defect {rel:.2e}");
        }
        _ => passed = false,
    }

    // Identity of indiscernibles plus the L1 sandwich.
    let est = estimate_distance(&mu0, &mu0, &params, chain, &opts).unwrap();
    passed &= est.upper_bound <= 1e-6;
    let est = estimate_distance(&mu0, &mu1, &params, chain, &opts).unwrap();
    let bounds = l1_bounds(&mu0, &mu1, &params, chain, est.upper_bound).unwrap();
    let l1 = norm_l1(&(&mu0 - &mu1), chain);
    passed &= l1 <= bounds.lower_factor * est.upper_bound + 1e-9;
    passed &= est.upper_bound <= bounds.upper_factor * l1 + 1e-9;

    // Triangle inequality through a random midpoint.
    let mu2 = random_positive(chain.n(), &mut rng, 0.4, 2.0);
    let d01 = estimate_distance(&mu0, &mu1, &params, chain, &opts).unwrap().upper_bound;
    let d02 = estimate_distance(&mu0, &mu2, &params, chain, &opts).unwrap().upper_bound;
    let d21 = estimate_distance(&mu2, &mu1, &params, chain, &opts).unwrap().upper_bound;
    passed &= d01 <= (d02 + d21) * 1.02;

    Check { name: "metric axioms", passed, detail }
}

fn scaling_degeneracy() -> Check {
    let chain = builtin_two_state();
    let params = uniform_params(1.0, 1.0, &chain);
    // Equal weighted mass: (2*0.7 + 1.6)/3 = (2*1.0 + 1.0)/3 = 1.
    let mu0 = DVector::from_vec(vec![1.0, 1.0]);
    let mu1 = DVector::from_vec(vec![0.7, 1.6]);
    let opts = DistanceOpts { n_steps: 16, restarts: 2, max_iters: 400, ..Default::default() };
    let mut ratios = Vec::new();
    let mut passed = true;
    for lambda in [1.0, 4.0, 16.0, 64.0] {
        match estimate_distance(&(&mu0 * lambda), &(&mu1 * lambda), &params, &chain, &opts) {
            Ok(est) => ratios.push(est.upper_bound / lambda.sqrt()),
            Err(_) => passed = false,
        }
    }
    let spread = if let (Some(max), Some(min)) = (
        ratios.iter().cloned().reduce(f64::max),
        ratios.iter().cloned().reduce(f64::min),
    ) {
        passed &= min / max >= 0.8;
        1.0 - min / max
    } else {
        passed = false;
        1.0
    };
    Check {
        name: "mass-scaling degeneracy",
        passed,
        detail: format!("sqrt-normalized spread {spread:.2e}"),
    }
}

fn spectrum_check(chains: &[MarkovChain]) -> Check {
    let mut passed = true;
    let mut worst: f64 = 0.0;
    let mut all: Vec<MarkovChain> = chains.to_vec();
    for seed in 0..20u64 {
        all.push(random_reversible_chain(2 + (seed as usize) % 11, 7000 + seed, 0.7));
    }
    for chain in &all {
        let report = weighted_spectrum(chain);
        let defect = (report.eigenvalues[0] - 1.0).abs();
        worst = worst.max(defect);
        passed &= defect <= 1e-10;
        passed &= report.eigenvalues.iter().all(|k| k.abs() <= 1.0 + 1e-10);
        if chain.n() >= 2 {
            passed &= report.spectral_gap > 0.0;
        }
    }
    Check {
        name: "spectrum",
        passed,
        detail: format!("worst |kappa_1 - 1| = {worst:.2e}"),
    }
}

fn envelope_rate_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut passed = true;
    let mut worst_slope: f64 = 1.0;
    for _ in 0..10 {
        let n = 3 + rng.gen_range(0..4);
        let alphas = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let betas = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let gammas = DVector::from_fn(n, |_, _| rng.gen_range(0.2..1.0));
        let eta = |t: f64| {
            DVector::from_fn(n, |i, _| alphas[i] + betas[i] * t + gammas[i] * t * t)
        };
        let rate = argmin_envelope_rate(&eta(0.0), &betas);
        let mut points = Vec::new();
        for k in 2..=5 {
            let h = 10f64.powi(-(k as i32));
            let fd = (eta(h).min() - eta(0.0).min()) / h;
            let err = (fd - rate).abs().max(1e-300);
            points.push((h.ln(), err.ln()));
        }
        // Error should shrink linearly in h: regression slope near 1.
        let mean_x = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
        let mean_y = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
        let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
        let slope = sxy / sxx;
        if (slope - 1.0).abs() > (worst_slope - 1.0).abs() {
            worst_slope = slope;
        }
        passed &= (slope - 1.0).abs() <= 0.3;
    }
    Check {
        name: "envelope rate oracle",
        passed,
        detail: format!("worst regression slope {worst_slope:.3}"),
    }
}

/// Exhaustive dynamic program over symmetric pure-transport paths of the
/// symmetric 2-state chain, on a dense value grid.
fn two_state_oracle(m: f64, d0: f64, d1: f64, b: f64, n_steps: usize, grid: usize) -> f64 {
    let lo = d0.min(d1);
    let hi = d0.max(d1);
    let values: Vec<f64> =
        (0..grid).map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64).collect();
    let dt = 1.0 / n_steps as f64;
    let start = if d0 <= d1 { 0 } else { grid - 1 };
    let goal = if d0 <= d1 { grid - 1 } else { 0 };
    let mut cost = vec![f64::INFINITY; grid];
    cost[start] = 0.0;
    for _ in 0..n_steps {
        let mut next = vec![f64::INFINITY; grid];
        for (i, &di) in values.iter().enumerate() {
            if !cost[i].is_finite() {
                continue;
            }
            for (j, &dj) in values.iter().enumerate() {
                let mid = 0.5 * (di + dj);
                let theta = log_mean(m + mid, m - mid).unwrap();
                if theta <= 0.0 {
                    continue;
                }
                let speed = (dj - di) / dt;
                let step = dt * b * b * speed * speed / theta;
                if cost[i] + step < next[j] {
                    next[j] = cost[i] + step;
                }
            }
        }
        cost = next;
    }
    cost[goal].sqrt()
}

fn two_state_brute_force() -> Check {
    let chain = build_chain(dmatrix![0.5, 0.5; 0.5, 0.5]).expect("valid kernel");
    let params = uniform_params(1.0, 1.0, &chain);
    let mut passed = true;
    let mut worst: f64 = 0.0;
    for (d0, d1) in [(0.5, -0.5), (0.2, 0.6)] {
        let m = 1.0;
        let mu0 = DVector::from_vec(vec![m + d0, m - d0]);
        let mu1 = DVector::from_vec(vec![m + d1, m - d1]);
        let oracle = two_state_oracle(m, d0, d1, params.b(), 16, 121);
        let opts =
            DistanceOpts { n_steps: 16, restarts: 2, max_iters: 400, ..Default::default() };
        match estimate_distance(&mu0, &mu1, &params, &chain, &opts) {
            Ok(est) => {
                let rel = (est.upper_bound - oracle).abs() / oracle;
                worst = worst.max(rel);
                passed &= rel <= 0.02;
            }
            Err(_) => passed = false,
        }
    }
    Check {
        name: "two-state brute force",
        passed,
        detail: format!("worst relative gap {worst:.2e}"),
    }
}
