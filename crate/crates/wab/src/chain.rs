//! Finite irreducible reversible Markov chains.
//!
//! A [`MarkovChain`] bundles a row-stochastic kernel `K`, its stationary
//! density `pi` (solved at construction), and the detailed-balance defect
//! `max |K(x,y) pi(x) - K(y,x) pi(y)|`. Construction rejects kernels that
//! are not stochastic, not irreducible, or not reversible: the discrete
//! calculus downstream (integration by parts, self-adjointness of `K` in
//! the `pi`-weighted inner product) is only valid under detailed balance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Row sums may deviate from 1 by at most this much on input.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Detailed-balance defect accepted at construction.
pub const REVERSIBILITY_TOL: f64 = 1e-10;
/// Residual required of the stationary solve.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-12;
/// Kernel entries above this count as edges of the connectivity digraph.
pub const POSITIVE_ENTRY_TOL: f64 = 1e-14;

/// A validated finite irreducible reversible Markov chain.
///
/// Immutable after construction; cheap to clone and safe to share across
/// threads.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    kernel: DMatrix<f64>,
    stationary: DVector<f64>,
    reversibility_defect: f64,
}

impl MarkovChain {
    /// Number of states.
    pub fn n(&self) -> usize {
        self.kernel.nrows()
    }

    /// Row-stochastic transition kernel.
    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// Stationary density `pi` (strictly positive, sums to 1).
    pub fn stationary(&self) -> &DVector<f64> {
        &self.stationary
    }

    /// `max |K(x,y) pi(x) - K(y,x) pi(y)|` over all pairs.
    pub fn reversibility_defect(&self) -> f64 {
        self.reversibility_defect
    }

    /// Smallest stationary weight, used in several bound constants.
    pub fn min_stationary(&self) -> f64 {
        self.stationary.min()
    }
}

/// Validate a kernel and compute its stationary density.
///
/// The stationary density is the least-squares solution of the augmented
/// system `[K' - I; 1']' pi = [0; 1]`, refined until the residual
/// `||pi' K - pi'||_inf` is below [`STATIONARY_RESIDUAL_TOL`]. Chains whose
/// detailed-balance defect exceeds [`REVERSIBILITY_TOL`] are rejected with
/// [`Error::NotReversible`]; nothing is silently symmetrized.
pub fn build_chain(kernel: DMatrix<f64>) -> Result<MarkovChain> {
    let n = kernel.nrows();
    if kernel.ncols() != n {
        return Err(Error::NotSquare(kernel.nrows(), kernel.ncols()));
    }
    if n == 0 {
        return Err(Error::InvalidOption("kernel must have at least one state".into()));
    }
    for (idx, &v) in kernel.iter().enumerate() {
        if v < -POSITIVE_ENTRY_TOL {
            return Err(Error::NegativeEntry { index: idx, value: v });
        }
    }
    for row in 0..n {
        let sum: f64 = kernel.row(row).iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::RowSum { row, sum });
        }
    }
    check_irreducible(&kernel)?;

    let stationary = solve_stationary(&kernel)?;
    let mut defect = 0.0f64;
    for x in 0..n {
        for y in (x + 1)..n {
            let d = (kernel[(x, y)] * stationary[x] - kernel[(y, x)] * stationary[y]).abs();
            defect = defect.max(d);
        }
    }
    if defect > REVERSIBILITY_TOL {
        return Err(Error::NotReversible { defect });
    }

    Ok(MarkovChain { kernel, stationary, reversibility_defect: defect })
}

/// Strong connectivity of the digraph of entries above [`POSITIVE_ENTRY_TOL`].
fn check_irreducible(kernel: &DMatrix<f64>) -> Result<()> {
    let n = kernel.nrows();
    let reach = |transpose: bool| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..n {
                let w = if transpose { kernel[(y, x)] } else { kernel[(x, y)] };
                if w > POSITIVE_ENTRY_TOL && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen
    };
    let fwd = reach(false);
    let bwd = reach(true);
    for x in 0..n {
        if !fwd[x] || !bwd[x] {
            return Err(Error::NotIrreducible(x));
        }
    }
    Ok(())
}

/// Least-squares stationary solve with iterative refinement.
fn solve_stationary(kernel: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = kernel.nrows();
    // Stack (K' - I) on top of the normalization row 1'.
    let mut system = DMatrix::zeros(n + 1, n);
    for x in 0..n {
        for y in 0..n {
            system[(x, y)] = kernel[(y, x)] - if x == y { 1.0 } else { 0.0 };
        }
    }
    for y in 0..n {
        system[(n, y)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;

    let qr = system.clone().qr();
    let solve = |b: &DVector<f64>| -> Result<DVector<f64>> {
        let qtb = qr.q().transpose() * b;
        qr.r()
            .solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::Numerical("stationary solve: singular R factor".into()))
    };

    let mut pi = solve(&rhs)?;
    // A couple of refinement rounds push the residual to machine precision.
    for _ in 0..2 {
        let residual = &rhs - &system * &pi;
        let delta = solve(&residual)?;
        pi += delta;
    }
    let total: f64 = pi.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Numerical("stationary solve produced a degenerate density".into()));
    }
    pi /= total;
    if pi.min() <= 0.0 {
        return Err(Error::Numerical("stationary density has a nonpositive entry".into()));
    }
    let residual = (kernel.transpose() * &pi - &pi).amax();
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "stationary residual {residual:.3e} exceeds {STATIONARY_RESIDUAL_TOL:.0e}"
        )));
    }
    Ok(pi)
}

/// Eigenvalue summary of the kernel in the stationary-weighted geometry.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Eigenvalues of `K`, sorted descending; all real by reversibility.
    pub eigenvalues: DVector<f64>,
    /// `1 - kappa_2`, the gap below the top eigenvalue (1.0 for a single state).
    pub spectral_gap: f64,
    /// `||K 1 - 1||_inf`, how exactly the constant vector is fixed.
    pub top_eigenvector_defect: f64,
}

/// Eigenvalues of `K` via the symmetrization `S = Pi^{1/2} K Pi^{-1/2}`.
///
/// Detailed balance makes `S` symmetric, so the spectrum is real and can be
/// computed with a symmetric solver; `S` is similar to `K`, so the
/// eigenvalues agree.
pub fn weighted_spectrum(chain: &MarkovChain) -> SpectrumReport {
    let n = chain.n();
    let pi = chain.stationary();
    let mut sym = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            sym[(x, y)] = chain.kernel()[(x, y)] * (pi[x] / pi[y]).sqrt();
        }
    }
    // Scrub rounding asymmetry before handing to the symmetric solver.
    let sym = (&sym + sym.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("real eigenvalues"));

    let spectral_gap = if n >= 2 { 1.0 - eigenvalues[1] } else { 1.0 };
    let ones = DVector::from_element(n, 1.0);
    let top_eigenvector_defect = (chain.kernel() * &ones - &ones).amax();
    SpectrumReport {
        eigenvalues: DVector::from_vec(eigenvalues),
        spectral_gap,
        top_eigenvector_defect,
    }
}

/// Draw a reversible chain from a symmetric random weight matrix.
///
/// Every unordered pair becomes an edge with probability `connectivity`; a
/// shuffled spanning path guarantees irreducibility and every node gets a
/// self-loop. Row-normalizing the symmetric weights yields a kernel that is
/// reversible with respect to the degree density. Deterministic given
/// `seed`.
pub fn random_reversible_chain(n: usize, seed: u64, connectivity: f64) -> MarkovChain {
    assert!(n >= 1, "need at least one state");
    let connectivity = connectivity.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut weights = DMatrix::zeros(n, n);
    for x in 0..n {
        weights[(x, x)] = rng.gen_range(0.1..0.6);
        for y in (x + 1)..n {
            if rng.gen_range(0.0..1.0) < connectivity {
                let w = rng.gen_range(0.5..1.5);
                weights[(x, y)] = w;
                weights[(y, x)] = w;
            }
        }
    }
    // Spanning backbone over a random permutation of the states.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    for pair in order.windows(2) {
        let (x, y) = (pair[0], pair[1]);
        if weights[(x, y)] <= 0.0 {
            let w = rng.gen_range(0.5..1.5);
            weights[(x, y)] = w;
            weights[(y, x)] = w;
        }
    }

    let mut kernel = weights.clone();
    for x in 0..n {
        let degree: f64 = weights.row(x).iter().sum();
        for y in 0..n {
            kernel[(x, y)] /= degree;
        }
    }
    build_chain(kernel).expect("construction guarantees a valid reversible chain")
}
