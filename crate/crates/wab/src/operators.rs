//! Mobility-weighted operators and the Riemannian structure they induce.
//!
//! At a density `mu` the chain carries two matrices built from the edge
//! mobility `theta(mu(x), mu(y))`:
//!
//! - [`energy_matrix`] `A`: the stiffness form of transport,
//!   `psi' A psi = ||grad psi||_mu^2`;
//! - [`continuity_matrix`] `B`: the operator driving the continuity
//!   equation, `mu_dot = B psi + h p`, with `A = diag(pi) B`.
//!
//! Both annihilate constants; for strictly positive `mu` their rank is
//! `n - 1` and `B` restricted to zero-sum vectors is invertible onto the
//! space of zero-weighted-mean vectors. [`solve_potential`] computes that
//! restricted inverse, [`decompose_tangent`] turns an arbitrary velocity
//! into its unique `(gradient flux, source rate)` representation, and
//! [`metric_inner`] evaluates the Riemannian metric in those coordinates.
//!
//! The sign conventions are fixed by one contract: the decomposition
//! `(grad psi, h)` of a velocity `rho` must satisfy the continuity equation
//! `rho + div_mu(grad psi) = h p` to solver precision.

use nalgebra::{DMatrix, DVector};

use crate::calculus::{gradient, inner_mobility, log_mean, total_mass};
use crate::chain::MarkovChain;
use crate::{Density, EdgeField, Error, Result};

/// Densities below this floor are rejected by the elliptic solves; the
/// restricted operator degenerates as the mobility vanishes.
pub const STRICT_POSITIVITY_FLOOR: f64 = 1e-12;

/// Condition-number estimate above which a restricted solve is refused.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Cost weights and source direction of the transport geometry.
///
/// `a` prices mass creation/removal, `b` prices transport, and `p` is the
/// strictly positive direction along which mass may change, normalized so
/// that `[p, pi] = 1`.
#[derive(Debug, Clone)]
pub struct TransportParams {
    a: f64,
    b: f64,
    p: Density,
}

impl TransportParams {
    /// Tolerance on `[p, pi] = 1` accepted by [`TransportParams::new`].
    pub const NORMALIZATION_TOL: f64 = 1e-10;

    /// Build parameters, checking `a, b > 0`, `p > 0`, and `[p, pi] = 1`.
    pub fn new(a: f64, b: f64, p: Density, chain: &MarkovChain) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::NonPositiveWeights { a, b });
        }
        if p.len() != chain.n() {
            return Err(Error::DimensionMismatch { expected: chain.n(), got: p.len() });
        }
        let min = p.min();
        if min <= 0.0 {
            return Err(Error::NotStrictlyPositive(min));
        }
        let mass = total_mass(&p, chain);
        if (mass - 1.0).abs() > Self::NORMALIZATION_TOL {
            return Err(Error::SourceNotNormalized(mass));
        }
        Ok(Self { a, b, p })
    }

    /// Like [`TransportParams::new`] but rescales `p` so `[p, pi] = 1`.
    pub fn normalized(a: f64, b: f64, p: Density, chain: &MarkovChain) -> Result<Self> {
        if p.len() != chain.n() {
            return Err(Error::DimensionMismatch { expected: chain.n(), got: p.len() });
        }
        let mass = total_mass(&p, chain);
        if !(mass > 0.0) {
            return Err(Error::SourceNotNormalized(mass));
        }
        Self::new(a, b, p / mass, chain)
    }

    /// Source-cost weight.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Transport-cost weight.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Source direction (strictly positive, unit weighted mass).
    pub fn p(&self) -> &Density {
        &self.p
    }
}

/// A velocity written in continuity-equation coordinates.
///
/// `grad_potential` is the gradient field of `potential` (a zero-sum node
/// vector) and `source_rate` the scalar source amplitude; together they
/// reconstruct the velocity as `rho = -div_mu(grad_potential) + source_rate * p`.
#[derive(Debug, Clone)]
pub struct TangentDecomposition {
    /// Gradient field of `potential`, antisymmetric on the kernel support.
    pub grad_potential: EdgeField,
    /// Scalar source amplitude `h`.
    pub source_rate: f64,
    /// The zero-sum potential whose gradient is `grad_potential`.
    pub potential: DVector<f64>,
}

/// Stiffness matrix `A` of the transport energy at `mu`.
///
/// Diagonal `sum_{z != x} K(x,z) theta(mu(x),mu(z)) pi(x)`, off-diagonal
/// `-K(x,y) theta(mu(x),mu(y)) pi(x)`. Symmetric positive semidefinite,
/// `A 1 = 0`.
pub fn energy_matrix(mu: &Density, chain: &MarkovChain) -> Result<DMatrix<f64>> {
    weighted_laplacian(mu, chain, true)
}

/// Continuity-equation matrix `B` at `mu`: same pattern as
/// [`energy_matrix`] without the stationary weight, so `A = diag(pi) B`.
/// Satisfies `B 1 = 0` and `pi' B = 0`.
pub fn continuity_matrix(mu: &Density, chain: &MarkovChain) -> Result<DMatrix<f64>> {
    weighted_laplacian(mu, chain, false)
}

fn weighted_laplacian(
    mu: &Density,
    chain: &MarkovChain,
    stationary_weighted: bool,
) -> Result<DMatrix<f64>> {
    let n = chain.n();
    if mu.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mu.len() });
    }
    let mut matrix = DMatrix::zeros(n, n);
    for x in 0..n {
        let weight = if stationary_weighted { chain.stationary()[x] } else { 1.0 };
        let mut diag = 0.0;
        for y in 0..n {
            if y == x {
                continue;
            }
            let entry = chain.kernel()[(x, y)] * log_mean(mu[x], mu[y])? * weight;
            matrix[(x, y)] = -entry;
            diag += entry;
        }
        matrix[(x, x)] = diag;
    }
    Ok(matrix)
}

/// Solve `B_mu psi = nu` for the unique zero-sum potential `psi`.
///
/// Requires `mu` strictly positive (above [`STRICT_POSITIVITY_FLOOR`]) and
/// `nu` orthogonal to the stationary density. The zero-sum constraint is
/// enforced by QR on the stacked system `[B; 1'] psi = [nu; 0]`; the ratio
/// of extreme diagonal entries of `R` serves as the condition estimate
/// guarded by [`CONDITION_LIMIT`].
pub fn solve_potential(mu: &Density, nu: &DVector<f64>, chain: &MarkovChain) -> Result<DVector<f64>> {
    let matrix = continuity_matrix(mu, chain)?;
    solve_restricted(mu, &matrix, nu, chain)
}

pub(crate) fn solve_restricted(
    mu: &Density,
    continuity: &DMatrix<f64>,
    nu: &DVector<f64>,
    chain: &MarkovChain,
) -> Result<DVector<f64>> {
    let n = chain.n();
    if nu.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: nu.len() });
    }
    let min = mu.min();
    if min <= STRICT_POSITIVITY_FLOOR {
        return Err(Error::NotStrictlyPositive(min));
    }
    let mean = total_mass(nu, chain);
    if mean.abs() > 1e-10 * (1.0 + nu.amax()) {
        return Err(Error::NotInRange(mean));
    }

    let mut stacked = DMatrix::zeros(n + 1, n);
    stacked.view_mut((0, 0), (n, n)).copy_from(continuity);
    for y in 0..n {
        stacked[(n, y)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(nu);

    let qr = stacked.qr();
    let r = qr.r();
    let mut dmin = f64::INFINITY;
    let mut dmax: f64 = 0.0;
    for i in 0..n {
        let d = r[(i, i)].abs();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    let cond = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
    if cond > CONDITION_LIMIT {
        return Err(Error::IllConditioned(cond));
    }
    let qtb = qr.q().transpose() * rhs;
    r.solve_upper_triangular(&qtb).ok_or(Error::IllConditioned(f64::INFINITY))
}

/// Decompose a velocity `rho` at `mu` into `(grad psi, h)` solving the
/// continuity equation `rho + div_mu(grad psi) = h p`.
///
/// The source rate is forced to `h = [rho, pi]` by mass balance; the
/// potential then solves `B_mu psi = rho - h p` on zero-sum vectors.
pub fn decompose_tangent(
    mu: &Density,
    rho: &DVector<f64>,
    params: &TransportParams,
    chain: &MarkovChain,
) -> Result<TangentDecomposition> {
    let (potential, source_rate) = decompose_potential(mu, rho, params, chain)?;
    Ok(TangentDecomposition {
        grad_potential: gradient(&potential),
        source_rate,
        potential,
    })
}

/// Potential-level variant of [`decompose_tangent`]; returns `(psi, h)`.
pub fn decompose_potential(
    mu: &Density,
    rho: &DVector<f64>,
    params: &TransportParams,
    chain: &MarkovChain,
) -> Result<(DVector<f64>, f64)> {
    let h = total_mass(rho, chain);
    let nu = rho - params.p() * h;
    let psi = solve_potential(mu, &nu, chain)?;
    Ok((psi, h))
}

/// Riemannian metric `g_mu(rho, xi) = a^2 h_rho h_xi + b^2 <grad psi_rho, grad psi_xi>_mu`.
pub fn metric_inner(
    mu: &Density,
    rho: &DVector<f64>,
    xi: &DVector<f64>,
    params: &TransportParams,
    chain: &MarkovChain,
) -> Result<f64> {
    let dr = decompose_tangent(mu, rho, params, chain)?;
    let dx = decompose_tangent(mu, xi, params, chain)?;
    let transport = inner_mobility(&dr.grad_potential, &dx.grad_potential, mu, chain)?;
    Ok(params.a() * params.a() * dr.source_rate * dx.source_rate
        + params.b() * params.b() * transport)
}

/// Orthogonal projection of an edge field onto gradient fields in the
/// mobility inner product at `mu`.
///
/// The projection `grad psi` is characterized by matching mobility-weighted
/// divergences, `div_mu(grad psi) = div_mu(Phi)`, so the residual
/// `Phi - grad psi` is divergence-free.
pub fn project_onto_gradients(
    mu: &Density,
    field: &EdgeField,
    chain: &MarkovChain,
) -> Result<EdgeField> {
    let n = chain.n();
    // div_mu(Phi) = div(mobility * Phi), assembled entrywise.
    let mut weighted = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            weighted[(x, y)] = field[(x, y)] * log_mean(mu[x], mu[y])?;
        }
    }
    let div = crate::calculus::divergence(&weighted, chain);
    let psi = solve_potential(mu, &(-div), chain)?;
    Ok(gradient(&psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{divergence, inner_mobility};
    use crate::chain::{build_chain, random_reversible_chain};
    use nalgebra::{dmatrix, dvector};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn symmetric_two_state() -> MarkovChain {
        build_chain(dmatrix![0.5, 0.5; 0.5, 0.5]).unwrap()
    }

    fn uniform_params(chain: &MarkovChain) -> TransportParams {
        let p = DVector::from_element(chain.n(), 1.0);
        TransportParams::new(1.0, 1.0, p, chain).unwrap()
    }

    #[test]
    fn params_validation() {
        let chain = build_chain(dmatrix![0.9, 0.1; 0.2, 0.8]).unwrap();
        // [1, pi] = 1 for any chain, so the uniform direction is admissible.
        assert!(TransportParams::new(1.0, 2.0, dvector![1.0, 1.0], &chain).is_ok());
        assert!(matches!(
            TransportParams::new(0.0, 1.0, dvector![1.0, 1.0], &chain),
            Err(Error::NonPositiveWeights { .. })
        ));
        assert!(matches!(
            TransportParams::new(1.0, 1.0, dvector![2.0, 1.0], &chain),
            Err(Error::SourceNotNormalized(_))
        ));
        let params = TransportParams::normalized(1.0, 1.0, dvector![2.0, 1.0], &chain).unwrap();
        assert!((total_mass(params.p(), &chain) - 1.0).abs() < 1e-14);
        assert!(matches!(
            TransportParams::new(1.0, 1.0, dvector![1.5, 0.0], &chain),
            Err(Error::NotStrictlyPositive(_))
        ));
    }

    #[test]
    fn matrices_on_two_state_chain() {
        let chain = symmetric_two_state();
        let ones = dvector![1.0, 1.0];
        let a = energy_matrix(&ones, &chain).unwrap();
        assert_eq!(a, dmatrix![0.25, -0.25; -0.25, 0.25]);
        let b = continuity_matrix(&ones, &chain).unwrap();
        assert_eq!(b, dmatrix![0.5, -0.5; -0.5, 0.5]);

        let zero = dvector![0.0, 0.0];
        assert!(energy_matrix(&zero, &chain).unwrap().amax() == 0.0);
        assert!(continuity_matrix(&zero, &chain).unwrap().amax() == 0.0);
    }

    #[test]
    fn kernel_and_range_structure() {
        for seed in 0..50u64 {
            let n = 2 + (seed as usize) % 9;
            let chain = random_reversible_chain(n, 500 + seed, 0.8);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mu = DVector::from_fn(n, |_, _| rng.gen_range(0.05..3.0));
            let a = energy_matrix(&mu, &chain).unwrap();
            let b = continuity_matrix(&mu, &chain).unwrap();
            let ones = DVector::from_element(n, 1.0);

            assert!((&a * &ones).amax() < 1e-13);
            assert!((&b * &ones).amax() < 1e-13);
            assert!((a.transpose() * &ones).amax() < 1e-13);
            assert!((b.transpose() * chain.stationary()).amax() < 1e-13);

            // A = diag(pi) B, elementwise.
            for x in 0..n {
                for y in 0..n {
                    let lhs = a[(x, y)];
                    let rhs = chain.stationary()[x] * b[(x, y)];
                    assert!((lhs - rhs).abs() <= 1e-15 * (1.0 + lhs.abs().max(rhs.abs())));
                }
            }

            // Numerical rank n-1 for strictly positive densities.
            for m in [&a, &b] {
                let svd = m.clone().svd(false, false);
                let smax = svd.singular_values[0];
                let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * smax).count();
                assert_eq!(rank, n - 1, "seed {seed}");
            }
        }
    }

    #[test]
    fn solve_potential_two_state_example() {
        let chain = symmetric_two_state();
        let psi = solve_potential(&dvector![1.0, 1.0], &dvector![1.0, -1.0], &chain).unwrap();
        assert!((psi[0] - 1.0).abs() < 1e-12);
        assert!((psi[1] + 1.0).abs() < 1e-12);

        let zero = solve_potential(&dvector![1.0, 1.0], &dvector![0.0, 0.0], &chain).unwrap();
        assert!(zero.amax() < 1e-14);
    }

    #[test]
    fn solve_potential_round_trip() {
        for seed in 0..100u64 {
            let n = 2 + (seed as usize) % 9;
            let chain = random_reversible_chain(n, 900 + seed, 0.7);
            let mut rng = ChaCha8Rng::seed_from_u64(77 + seed);
            let mu = DVector::from_fn(n, |_, _| rng.gen_range(0.1..4.0));
            let mut phi = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let mean = phi.sum() / n as f64;
            phi.add_scalar_mut(-mean);
            let b = continuity_matrix(&mu, &chain).unwrap();
            let nu = &b * &phi;
            let psi = solve_potential(&mu, &nu, &chain).unwrap();
            assert!((&psi - &phi).amax() <= 1e-10, "seed {seed}");
            let residual = (&b * &psi - &nu).amax();
            assert!(residual <= 1e-10 * (1.0 + nu.amax()));
        }
    }

    #[test]
    fn solve_potential_rejects_bad_inputs() {
        let chain = symmetric_two_state();
        assert!(matches!(
            solve_potential(&dvector![1.0, 0.0], &dvector![0.0, 0.0], &chain),
            Err(Error::NotStrictlyPositive(_))
        ));
        assert!(matches!(
            solve_potential(&dvector![1.0, 1.0], &dvector![1.0, 1.0], &chain),
            Err(Error::NotInRange(_))
        ));
    }

    #[test]
    fn decompose_tangent_examples() {
        let chain = symmetric_two_state();
        let params = uniform_params(&chain);
        let mu = dvector![1.0, 1.0];

        // rho = c p: pure source.
        let d = decompose_tangent(&mu, &(params.p() * 0.7), &params, &chain).unwrap();
        assert!((d.source_rate - 0.7).abs() < 1e-14);
        assert!(d.grad_potential.amax() < 1e-12);

        // rho = (1, -1): pure transport, psi = (1, -1).
        let d = decompose_tangent(&mu, &dvector![1.0, -1.0], &params, &chain).unwrap();
        assert!(d.source_rate.abs() < 1e-14);
        assert!((d.grad_potential[(0, 1)] + 2.0).abs() < 1e-12);

        let d = decompose_tangent(&mu, &dvector![0.0, 0.0], &params, &chain).unwrap();
        assert_eq!(d.source_rate, 0.0);
        assert!(d.grad_potential.amax() < 1e-14);
    }

    #[test]
    fn decompose_tangent_reconstruction_randomized() {
        for seed in 0..100u64 {
            let n = 2 + (seed as usize) % 9;
            let chain = random_reversible_chain(n, 40 + seed, 0.8);
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
            let mu = DVector::from_fn(n, |_, _| rng.gen_range(0.05..5.0));
            let rho = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let p_raw = DVector::from_fn(n, |_, _| rng.gen_range(0.2..2.0));
            let params = TransportParams::normalized(0.8, 1.3, p_raw, &chain).unwrap();

            let d = decompose_tangent(&mu, &rho, &params, &chain).unwrap();
            // rho + div_mu(grad psi) - h p = 0.
            let mut weighted = DMatrix::zeros(n, n);
            for x in 0..n {
                for y in 0..n {
                    weighted[(x, y)] =
                        d.grad_potential[(x, y)] * log_mean(mu[x], mu[y]).unwrap();
                }
            }
            let residual = (&rho + divergence(&weighted, &chain) - params.p() * d.source_rate)
                .amax();
            assert!(residual <= 1e-10, "seed {seed}: residual {residual:.3e}");
        }
    }

    #[test]
    fn metric_examples_and_bilinearity() {
        let chain = symmetric_two_state();
        let params = TransportParams::new(1.5, 2.0, dvector![1.0, 1.0], &chain).unwrap();
        let mu = dvector![1.0, 1.0];

        let g = metric_inner(&mu, params.p(), params.p(), &params, &chain).unwrap();
        assert!((g - 1.5 * 1.5).abs() < 1e-12);

        let rho = dvector![1.0, -1.0];
        let g = metric_inner(&mu, &rho, &rho, &params, &chain).unwrap();
        assert!((g - 4.0).abs() < 1e-11); // b^2 * [A psi, psi] = 4 * 1

        let zero = dvector![0.0, 0.0];
        assert_eq!(metric_inner(&mu, &zero, &zero, &params, &chain).unwrap(), 0.0);

        // Bilinearity on a random chain.
        let chain = random_reversible_chain(5, 11, 0.9);
        let params = uniform_params(&chain);
        let mu = DVector::from_element(5, 1.3);
        let r1 = DVector::from_fn(5, |i, _| (i as f64 * 1.1).sin());
        let r2 = DVector::from_fn(5, |i, _| (i as f64 * 0.4).cos());
        let xi = DVector::from_fn(5, |i, _| 0.3 * i as f64 - 0.6);
        let lhs = metric_inner(&mu, &(&r1 * 2.0 + &r2), &xi, &params, &chain).unwrap();
        let rhs = 2.0 * metric_inner(&mu, &r1, &xi, &params, &chain).unwrap()
            + metric_inner(&mu, &r2, &xi, &params, &chain).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        // Symmetry.
        let ab = metric_inner(&mu, &r1, &r2, &params, &chain).unwrap();
        let ba = metric_inner(&mu, &r2, &r1, &params, &chain).unwrap();
        assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab.abs()));
    }

    #[test]
    fn energy_norm_identity() {
        // ||grad psi||_mu^2 = [A psi, psi] on random data.
        for seed in 0..50u64 {
            let n = 2 + (seed as usize) % 9;
            let chain = random_reversible_chain(n, 7000 + seed, 0.8);
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 13 + 1);
            let mu = DVector::from_fn(n, |_, _| rng.gen_range(0.05..4.0));
            let psi = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let grad = gradient(&psi);
            let lhs = inner_mobility(&grad, &grad, &mu, &chain).unwrap();
            let a = energy_matrix(&mu, &chain).unwrap();
            let rhs = (&a * &psi).dot(&psi);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn projection_properties() {
        let chain = random_reversible_chain(6, 21, 0.8);
        let mu = DVector::from_fn(6, |i, _| 0.5 + 0.2 * i as f64);

        // Identity on gradients.
        let phi = DVector::from_fn(6, |i, _| (i as f64).sin());
        let g = gradient(&phi);
        let proj = project_onto_gradients(&mu, &g, &chain).unwrap();
        for x in 0..6 {
            for y in 0..6 {
                if chain.kernel()[(x, y)] > 1e-14 {
                    assert!((proj[(x, y)] - g[(x, y)]).abs() < 1e-10);
                }
            }
        }

        // Orthogonality and idempotence on a generic field.
        let field = DMatrix::from_fn(6, 6, |x, y| ((x as f64) - 0.3 * (y as f64)).cos());
        let proj = project_onto_gradients(&mu, &field, &chain).unwrap();
        let residual = &field - &proj;
        let cross = inner_mobility(&proj, &residual, &mu, &chain).unwrap();
        assert!(cross.abs() < 1e-10);
        let twice = project_onto_gradients(&mu, &proj, &chain).unwrap();
        for x in 0..6 {
            for y in 0..6 {
                if chain.kernel()[(x, y)] > 1e-14 {
                    assert!((twice[(x, y)] - proj[(x, y)]).abs() < 1e-10);
                }
            }
        }

        // Symmetric fields are divergence-free: projection vanishes.
        let sym = DMatrix::from_fn(6, 6, |x, y| ((x + y) as f64).sin());
        let proj = project_onto_gradients(&mu, &sym, &chain).unwrap();
        assert!(proj.amax() < 1e-10);

        let zero = DMatrix::zeros(6, 6);
        let proj = project_onto_gradients(&mu, &zero, &chain).unwrap();
        assert!(proj.amax() < 1e-14);
    }
}
