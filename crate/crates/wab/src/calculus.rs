//! Discrete calculus on the chain: gradient, divergence, Laplacian,
//! stationary-weighted inner products, the logarithmic mean, and the
//! mobility it induces on edges.

use nalgebra::{DMatrix, DVector};

use crate::chain::MarkovChain;
use crate::{Density, EdgeField, Error, Result};

/// Pairs with `mobility * K` above this threshold count as the support of
/// the edge geometry; equality of edge fields is only meaningful there.
pub const SUPPORT_TOL: f64 = 1e-14;

/// Relative distance below which the logarithmic mean switches to a series.
const LOG_MEAN_SERIES_TOL: f64 = 1e-8;

/// Logarithmic mean `(u - v) / (log u - log v)` with the conventions
/// `theta(u, u) = u` and `theta(u, 0) = 0`.
///
/// Near `u = v` the quotient loses significant digits, so the value is
/// evaluated by the expansion `m (1 - r^2/12 - r^4/180)` around the
/// arithmetic mean `m = (u+v)/2` with `r = (u-v)/m`. For arguments within
/// a factor of two the log difference is computed as `ln_1p((u-v)/v)`:
/// the subtraction is exact there (Sterbenz), so the quotient keeps full
/// precision at any magnitude instead of losing `eps |log u| / r` digits.
pub fn log_mean(u: f64, v: f64) -> Result<f64> {
    if u < 0.0 || v < 0.0 {
        return Err(Error::NegativeInput(u.min(v)));
    }
    if u == 0.0 || v == 0.0 {
        return Ok(0.0);
    }
    if u == v {
        return Ok(v);
    }
    if (u - v).abs() <= LOG_MEAN_SERIES_TOL * u.max(v) {
        let m = 0.5 * (u + v);
        let r = (u - v) / m;
        let r2 = r * r;
        return Ok(m * (1.0 - r2 / 12.0 - r2 * r2 / 180.0));
    }
    if u.max(v) <= 2.0 * u.min(v) {
        let r = (u - v) / v;
        return Ok((u - v) / r.ln_1p());
    }
    Ok((u - v) / (u.ln() - v.ln()))
}

/// Edgewise mobility `theta(mu(x), mu(y))`; symmetric.
pub fn mobility(mu: &Density) -> Result<EdgeField> {
    let n = mu.len();
    let mut field = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in x..n {
            let value = log_mean(mu[x], mu[y])?;
            field[(x, y)] = value;
            field[(y, x)] = value;
        }
    }
    Ok(field)
}

/// Discrete gradient `grad psi (x, y) = psi(y) - psi(x)`; antisymmetric.
pub fn gradient(psi: &DVector<f64>) -> EdgeField {
    let n = psi.len();
    DMatrix::from_fn(n, n, |x, y| psi[y] - psi[x])
}

/// Discrete divergence `(div Psi)(x) = 1/2 sum_y (Psi(x,y) - Psi(y,x)) K(x,y)`.
pub fn divergence(field: &EdgeField, chain: &MarkovChain) -> DVector<f64> {
    let n = chain.n();
    DVector::from_fn(n, |x, _| {
        let mut acc = 0.0;
        for y in 0..n {
            acc += (field[(x, y)] - field[(y, x)]) * chain.kernel()[(x, y)];
        }
        0.5 * acc
    })
}

/// `div grad psi`; equals `(K - I) psi` up to rounding.
pub fn laplacian(psi: &DVector<f64>, chain: &MarkovChain) -> DVector<f64> {
    divergence(&gradient(psi), chain)
}

/// Stationary-weighted inner product on nodes: `sum_x phi(x) psi(x) pi(x)`.
pub fn inner_node(phi: &DVector<f64>, psi: &DVector<f64>, chain: &MarkovChain) -> f64 {
    let pi = chain.stationary();
    phi.iter().zip(psi.iter()).zip(pi.iter()).map(|((a, b), w)| a * b * w).sum()
}

/// Stationary-weighted bilinear form on edges:
/// `1/2 sum_{x,y} Phi(x,y) Psi(x,y) K(x,y) pi(x)`.
pub fn inner_edge(phi: &EdgeField, psi: &EdgeField, chain: &MarkovChain) -> f64 {
    let n = chain.n();
    let pi = chain.stationary();
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..n {
            acc += phi[(x, y)] * psi[(x, y)] * chain.kernel()[(x, y)] * pi[x];
        }
    }
    0.5 * acc
}

/// Mobility-weighted bilinear form `<Phi, mobility * Psi>` at density `mu`.
pub fn inner_mobility(
    phi: &EdgeField,
    psi: &EdgeField,
    mu: &Density,
    chain: &MarkovChain,
) -> Result<f64> {
    let n = chain.n();
    let pi = chain.stationary();
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..n {
            let k = chain.kernel()[(x, y)];
            if k <= 0.0 {
                continue;
            }
            acc += phi[(x, y)] * psi[(x, y)] * log_mean(mu[x], mu[y])? * k * pi[x];
        }
    }
    Ok(0.5 * acc)
}

/// Total mass `[mu, pi]`.
pub fn total_mass(mu: &Density, chain: &MarkovChain) -> f64 {
    mu.iter().zip(chain.stationary().iter()).map(|(m, w)| m * w).sum()
}

/// Weighted L1 norm `sum |psi(x)| pi(x)`.
pub fn norm_l1(psi: &DVector<f64>, chain: &MarkovChain) -> f64 {
    psi.iter().zip(chain.stationary().iter()).map(|(v, w)| v.abs() * w).sum()
}

/// Weighted L2 norm `sqrt(<psi, psi>_pi)`.
pub fn norm_l2(psi: &DVector<f64>, chain: &MarkovChain) -> f64 {
    inner_node(psi, psi, chain).max(0.0).sqrt()
}

/// Membership in the nonnegative cone.
pub fn in_cone(mu: &Density) -> bool {
    mu.iter().all(|&v| v >= 0.0)
}

/// Membership in the strictly positive interior.
pub fn strictly_positive(mu: &Density) -> bool {
    mu.iter().all(|&v| v > 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::build_chain;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    /// Adaptive Simpson quadrature of `int_0^1 u^s v^(1-s) ds`, the
    /// integral representation of the logarithmic mean. Independent oracle.
    fn log_mean_quadrature(u: f64, v: f64) -> f64 {
        if u == 0.0 || v == 0.0 {
            return 0.0;
        }
        fn f(u: f64, v: f64, s: f64) -> f64 {
            u.powf(s) * v.powf(1.0 - s)
        }
        fn simpson(u: f64, v: f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(u, v, a) + 4.0 * f(u, v, 0.5 * (a + b)) + f(u, v, b))
        }
        fn adapt(u: f64, v: f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(u, v, a, m);
            let right = simpson(u, v, m, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            adapt(u, v, a, m, left, tol * 0.5, depth - 1)
                + adapt(u, v, m, b, right, tol * 0.5, depth - 1)
        }
        let whole = simpson(u, v, 0.0, 1.0);
        adapt(u, v, 0.0, 1.0, whole, 1e-13 * u.max(v), 40)
    }

    #[test]
    fn log_mean_branches() {
        assert_eq!(log_mean(3.0, 3.0).unwrap(), 3.0);
        assert_eq!(log_mean(0.0, 5.0).unwrap(), 0.0);
        assert_eq!(log_mean(5.0, 0.0).unwrap(), 0.0);
        assert_eq!(log_mean(0.0, 0.0).unwrap(), 0.0);
        // theta(1, e) = (1 - e)/(0 - 1) = e - 1, also the quadrature value.
        let e = std::f64::consts::E;
        assert!((log_mean(1.0, e).unwrap() - (e - 1.0)).abs() < 1e-14);
        assert!(log_mean(-1.0, 2.0).is_err());
    }

    #[test]
    fn log_mean_matches_quadrature_on_grid() {
        let grid = [1e-6, 1e-4, 1e-2, 0.5, 1.0, 3.0, 1e2, 1e4, 1e6];
        for &u in &grid {
            for &v in &grid {
                let theta = log_mean(u, v).unwrap();
                let oracle = log_mean_quadrature(u, v);
                let scale = u.max(v);
                assert!(
                    (theta - oracle).abs() <= 1e-10 * scale.max(1.0),
                    "theta({u}, {v}) = {theta} vs quadrature {oracle}"
                );
            }
        }
    }

    #[test]
    fn log_mean_series_branch_is_smooth() {
        let u = 2.0;
        // Inside the series window the expansion is exact to rounding.
        for k in [1e-10, 1e-8, 1e-6, 1e-4, 4e-4] {
            let v = u * (1.0 + k);
            let theta = log_mean(u, v).unwrap();
            let oracle = log_mean_quadrature(u, v);
            assert!((theta - oracle).abs() < 1e-13 * u, "k = {k}");
        }
        // Just outside, the direct quotient is still good to ~1e-13.
        for k in [2e-3, 1e-2, 0.1] {
            let v = u * (1.0 + k);
            let theta = log_mean(u, v).unwrap();
            let oracle = log_mean_quadrature(u, v);
            assert!((theta - oracle).abs() < 1e-12 * u, "k = {k}");
        }
    }

    #[test]
    fn mobility_examples() {
        let ones = dvector![1.0, 1.0, 1.0];
        let hat = mobility(&ones).unwrap();
        assert!(hat.iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let mu = dvector![1.0, 0.0];
        let hat = mobility(&mu).unwrap();
        assert_eq!(hat[(0, 1)], 0.0);
        assert_eq!(hat[(1, 0)], 0.0);
        assert_eq!(hat[(0, 0)], 1.0);
        assert_eq!(hat[(1, 1)], 0.0);

        let e = std::f64::consts::E;
        let hat = mobility(&dvector![1.0, e]).unwrap();
        assert!((hat[(0, 1)] - (e - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn gradient_and_divergence_examples() {
        let psi = dvector![1.0, 2.0, 4.0];
        let g = gradient(&psi);
        assert_eq!(g[(0, 2)], 3.0);
        assert_eq!(g[(2, 1)], -2.0);
        assert!(gradient(&dvector![1.0, 1.0]).iter().all(|&v| v == 0.0));

        let chain = build_chain(dmatrix![0.5, 0.5; 0.5, 0.5]).unwrap();
        let div = divergence(&gradient(&dvector![0.0, 1.0]), &chain);
        assert!((div[0] - 0.5).abs() < 1e-15);
        assert!((div[1] + 0.5).abs() < 1e-15);

        // Symmetric fields have zero divergence.
        let sym = dmatrix![0.0, 2.5; 2.5, 0.0];
        assert!(divergence(&sym, &chain).amax() < 1e-15);
    }

    #[test]
    fn laplacian_equals_kernel_minus_identity() {
        let chain = build_chain(dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let lap = laplacian(&dvector![0.0, 1.0], &chain);
        assert!((lap[0] - 1.0).abs() < 1e-15);
        assert!((lap[1] + 1.0).abs() < 1e-15);

        for seed in 0..20u64 {
            let n = 2 + (seed as usize) % 9;
            let chain = crate::chain::random_reversible_chain(n, seed, 0.8);
            let psi = DVector::from_fn(n, |i, _| ((seed as f64) + i as f64).sin());
            let direct = chain.kernel() * &psi - &psi;
            assert!((laplacian(&psi, &chain) - direct).amax() <= 1e-14);
        }
    }

    #[test]
    fn inner_products_examples() {
        let chain = build_chain(dmatrix![0.9, 0.1; 0.2, 0.8]).unwrap();
        let ones = dvector![1.0, 1.0];
        assert!((inner_node(&ones, &ones, &chain) - 1.0).abs() < 1e-13);
        // pi = (2/3, 1/3): <(1,-1), (1,1)>_pi = 2/3 - 1/3 = 1/3.
        let v = inner_node(&dvector![1.0, -1.0], &dvector![1.0, 1.0], &chain);
        assert!((v - 1.0 / 3.0).abs() < 1e-13);

        let sym = build_chain(dmatrix![0.5, 0.5; 0.5, 0.5]).unwrap();
        let g = gradient(&dvector![0.0, 1.0]);
        assert!((inner_edge(&g, &g, &sym) - 0.25).abs() < 1e-15);
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(inner_edge(&zero, &g, &sym), 0.0);
    }

    #[test]
    fn mobility_inner_reduces_to_edge_inner_at_ones() {
        let chain = crate::chain::random_reversible_chain(5, 3, 0.9);
        let phi = gradient(&DVector::from_fn(5, |i, _| (i as f64).cos()));
        let psi = gradient(&DVector::from_fn(5, |i, _| (i as f64 * 0.7).sin()));
        let ones = DVector::from_element(5, 1.0);
        let a = inner_mobility(&phi, &psi, &ones, &chain).unwrap();
        let b = inner_edge(&phi, &psi, &chain);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn isolated_mass_kills_mobility_inner() {
        // A zero node cuts every edge of a 2-state chain.
        let chain = build_chain(dmatrix![0.5, 0.5; 0.5, 0.5]).unwrap();
        let mu = dvector![3.0, 0.0];
        let phi = gradient(&dvector![1.0, -2.0]);
        let v = inner_mobility(&phi, &phi, &mu, &chain).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn integration_by_parts_randomized() {
        for seed in 0..200u64 {
            let n = 2 + (seed as usize) % 9;
            let chain = crate::chain::random_reversible_chain(n, 10_000 + seed, 0.7);
            let psi = DVector::from_fn(n, |i, _| ((i + 1) as f64 * (seed as f64 + 0.3)).sin());
            let field =
                DMatrix::from_fn(n, n, |x, y| ((x * n + y) as f64 * 0.31 + seed as f64).cos());
            let lhs = inner_edge(&gradient(&psi), &field, &chain);
            let rhs = -inner_node(&psi, &divergence(&field, &chain), &chain);
            let scale = 1.0 + lhs.abs() + rhs.abs();
            assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }

    proptest! {
        #[test]
        fn log_mean_symmetry_and_homogeneity(
            u in 1e-9f64..1e9,
            v in 1e-9f64..1e9,
            lambda in 1e-6f64..1e6,
        ) {
            let a = log_mean(u, v).unwrap();
            let b = log_mean(v, u).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            let scaled = log_mean(lambda * u, lambda * v).unwrap();
            prop_assert!((scaled - lambda * a).abs() <= 1e-12 * scaled.abs());
        }

        #[test]
        fn log_mean_between_geometric_and_arithmetic(
            u in 1e-9f64..1e9,
            v in 1e-9f64..1e9,
        ) {
            let theta = log_mean(u, v).unwrap();
            let geo = (u * v).sqrt();
            let ari = 0.5 * (u + v);
            prop_assert!(theta >= geo * (1.0 - 1e-12));
            prop_assert!(theta <= ari * (1.0 + 1e-12));
        }

        #[test]
        fn log_mean_monotone_in_each_argument(
            u in 1e-6f64..1e6,
            v in 1e-6f64..1e6,
            bump in 1.0001f64..2.0,
        ) {
            let base = log_mean(u, v).unwrap();
            prop_assert!(log_mean(u * bump, v).unwrap() > base);
            prop_assert!(log_mean(u, v * bump).unwrap() > base);
        }
    }
}
