//! Cascaded SBS precoders.
//!
//! Each SBS first confines its signal to the kernel of its aggregate
//! interference channel towards the MUEs (the inner precoder `E`, one column
//! per cyclic-prefix sample), then picks a `theta`-dimensional subspace of
//! that kernel with an outer precoder `Theta`. The product `Z = E Theta` is
//! semi-unitary whenever both factors are.

use faer::{c64, Mat, MatRef};

use crate::error::{CiaError, Result};
use crate::linalg::{
    gram_identity_deviation, hermitian_inverse_sqrt, log2_det_hpd, singular_values, svd_right, CMat, ONE, ZERO,
};
use crate::ofdm::{ChannelTaps, OfdmSystem};

/// Relative singular-value threshold separating the kernel from the row space.
pub const KERNEL_RANK_TOL: f64 = 1e-8;

/// Tolerance on `Z^H Z = I` when cascading.
pub const SEMI_UNITARY_TOL: f64 = 1e-10;

/// Orthonormal basis `E` of `ker(T_sp)`, `(N + L) x L`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerPrecoder {
    matrix: CMat,
}

impl InnerPrecoder {
    /// Wraps a basis supplied by the caller after checking orthonormality.
    pub fn from_matrix(matrix: CMat) -> Result<Self> {
        if !verify_semi_unitary(matrix.as_ref(), SEMI_UNITARY_TOL) || matrix.nrows() < matrix.ncols() {
            return Err(CiaError::NumericalDegeneracy(
                "inner precoder columns are not orthonormal".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }

    /// Kernel dimension (number of columns).
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// `||T E||_F / ||T||_F`.
    pub fn relative_leakage(&self, t_sp: MatRef<'_, c64>) -> f64 {
        let norm = t_sp.norm_l2();
        if norm == 0.0 {
            return 0.0;
        }
        (t_sp * self.matrix.as_ref()).norm_l2() / norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OuterStrategy {
    /// Strongest eigenmodes of the served link.
    CiaA,
    /// Kernel columns leaking least towards the non-served SUEs.
    CiaB,
}

impl OuterStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            OuterStrategy::CiaA => "cia_a",
            OuterStrategy::CiaB => "cia_b",
        }
    }
}

/// `L x theta` subspace selector inside the kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterPrecoder {
    matrix: CMat,
    strategy: OuterStrategy,
}

impl OuterPrecoder {
    pub(crate) fn from_parts(matrix: CMat, strategy: OuterStrategy) -> Self {
        Self { matrix, strategy }
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }

    pub fn strategy(&self) -> OuterStrategy {
        self.strategy
    }

    pub fn theta(&self) -> usize {
        self.matrix.ncols()
    }
}

/// `Z = E Theta` with per-stream powers.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadedPrecoder {
    matrix: CMat,
    powers: Vec<f64>,
}

impl CascadedPrecoder {
    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.matrix.as_ref()
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn streams(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    /// Replaces the per-stream powers.
    pub fn with_powers(mut self, powers: Vec<f64>) -> Result<Self> {
        if powers.len() != self.matrix.ncols() {
            return Err(CiaError::InvalidDimension(format!(
                "{} powers for {} streams",
                powers.len(),
                self.matrix.ncols()
            )));
        }
        if powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(CiaError::InvalidParameter("stream powers must be finite and non-negative".into()));
        }
        self.powers = powers;
        Ok(self)
    }

    /// Silent transmitter with the same shape.
    pub fn silenced(&self) -> Self {
        Self {
            matrix: self.matrix.clone(),
            powers: vec![0.0; self.powers.len()],
        }
    }
}

/// `T_sp = sum_j D_j F B H_sp^(j)` for one SBS.
pub fn aggregate_interference_matrix(h_sp_row: &[ChannelTaps], sys: &OfdmSystem) -> Result<CMat> {
    sys.aggregate_interference(h_sp_row)
}

/// Orthonormal kernel basis of a full-row-rank wide matrix, taken from the
/// right singular vectors past the row rank.
pub fn null_space_precoder(t: MatRef<'_, c64>) -> Result<InnerPrecoder> {
    let (rows, cols) = (t.nrows(), t.ncols());
    if rows >= cols {
        return Err(CiaError::InvalidDimension(format!(
            "interference matrix {rows}x{cols} has no kernel"
        )));
    }
    let (sv, v) = svd_right(t)?;
    let max = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > KERNEL_RANK_TOL * max).count();
    if rank < rows || max == 0.0 {
        return Err(CiaError::DegenerateChannel { rank, expected: rows });
    }
    Ok(InnerPrecoder {
        matrix: v.as_ref().subcols(rows, cols - rows).to_owned(),
    })
}

/// `T_ss = F B H E`, the `N x L` channel seen through the kernel basis.
pub fn equivalent_secondary_channel(sys: &OfdmSystem, taps: &ChannelTaps, inner: &InnerPrecoder) -> CMat {
    sys.receive(taps, inner.matrix())
}

fn check_theta(theta: usize, dim: usize) -> Result<()> {
    if theta == 0 || theta > dim {
        return Err(CiaError::InvalidParameter(format!("theta must lie in [1, {dim}], got {theta}")));
    }
    Ok(())
}

/// CIA A selection: right singular vectors of the direct link plus the
/// singular values (non-increasing) used for the rate estimate.
#[derive(Debug, Clone)]
pub struct EigenmodeBasis {
    pub singular_values: Vec<f64>,
    pub right_vectors: CMat,
}

impl EigenmodeBasis {
    pub fn of(t_ss_direct: MatRef<'_, c64>) -> Result<Self> {
        let (mut singular_values, right_vectors) = svd_right(t_ss_direct)?;
        // wide inputs have fewer singular values than modes; pad with zeros
        singular_values.resize(t_ss_direct.ncols(), 0.0);
        Ok(Self {
            singular_values,
            right_vectors,
        })
    }

    pub fn outer(&self, theta: usize) -> Result<OuterPrecoder> {
        check_theta(theta, self.right_vectors.ncols())?;
        Ok(OuterPrecoder {
            matrix: self.right_vectors.as_ref().subcols(0, theta).to_owned(),
            strategy: OuterStrategy::CiaA,
        })
    }
}

/// `Theta = [v_1 | ... | v_theta]`, the strongest right singular vectors of `T_ss^(k,k)`.
pub fn cia_a_outer(t_ss_direct: MatRef<'_, c64>, theta: usize) -> Result<OuterPrecoder> {
    check_theta(theta, t_ss_direct.ncols())?;
    EigenmodeBasis::of(t_ss_direct)?.outer(theta)
}

/// Column powers `g_T` of a stack of blocks sharing the same columns.
pub fn column_powers<'a>(blocks: impl IntoIterator<Item = MatRef<'a, c64>>) -> Vec<f64> {
    let mut g: Vec<f64> = Vec::new();
    for b in blocks {
        if g.is_empty() {
            g = vec![0.0; b.ncols()];
        }
        for (c, gc) in g.iter_mut().enumerate() {
            *gc += (0..b.nrows()).map(|r| b[(r, c)].norm_sqr()).sum::<f64>();
        }
    }
    g
}

/// Column indices sorted by increasing power; ties keep the lower index first.
pub fn weakest_columns(powers: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..powers.len()).collect();
    idx.sort_by(|&a, &b| powers[a].total_cmp(&powers[b]).then(a.cmp(&b)));
    idx
}

/// CIA B from precomputed column powers of `T_ss^(k,[k])`.
pub fn cia_b_outer_from_powers(powers: &[f64], theta: usize) -> Result<OuterPrecoder> {
    check_theta(theta, powers.len())?;
    let order = weakest_columns(powers);
    let l = powers.len();
    let matrix = Mat::from_fn(l, theta, |r, c| if r == order[c] { ONE } else { ZERO });
    Ok(OuterPrecoder {
        matrix,
        strategy: OuterStrategy::CiaB,
    })
}

/// `Theta = [e_g(1) | ... | e_g(theta)]` for the `theta` kernel columns of
/// least power in the stacked non-served channel `T_ss^(k,[k])`.
pub fn cia_b_outer(t_ss_others: MatRef<'_, c64>, theta: usize) -> Result<OuterPrecoder> {
    if t_ss_others.nrows() == 0 {
        return Err(CiaError::NoNeighbors);
    }
    cia_b_outer_from_powers(&column_powers([t_ss_others]), theta)
}

/// `Z = E Theta` with unit power per stream.
pub fn cascade(inner: &InnerPrecoder, outer: &OuterPrecoder) -> Result<CascadedPrecoder> {
    if inner.dim() != outer.matrix.nrows() {
        return Err(CiaError::InvalidDimension(format!(
            "inner precoder has {} columns, outer expects {}",
            inner.dim(),
            outer.matrix.nrows()
        )));
    }
    let matrix = inner.matrix() * outer.matrix();
    let dev = gram_identity_deviation(matrix.as_ref());
    if dev > SEMI_UNITARY_TOL {
        return Err(CiaError::NumericalDegeneracy(format!(
            "cascaded precoder deviates from semi-unitary by {dev:e}"
        )));
    }
    let powers = vec![1.0; matrix.ncols()];
    Ok(CascadedPrecoder { matrix, powers })
}

/// True iff the smaller Gram matrix of `m` is within `tol` (Frobenius) of `I`.
pub fn verify_semi_unitary(m: MatRef<'_, c64>, tol: f64) -> bool {
    m.nrows() > 0 && m.ncols() > 0 && gram_identity_deviation(m) <= tol
}

/// Water-filling `p_i = [mu - 1/lambda_i]^+` with `sum p_i = budget`.
///
/// The water level is solved exactly: modes are sorted by decreasing gain
/// and the largest active set whose level clears its weakest member wins.
pub fn waterfill(eigenvalues: &[f64], budget: f64) -> Result<Vec<f64>> {
    if eigenvalues.is_empty() {
        return Err(CiaError::InvalidParameter("water-filling needs at least one mode".into()));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(CiaError::InvalidParameter(format!("budget must be positive, got {budget}")));
    }
    if let Some(bad) = eigenvalues.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(CiaError::InvalidParameter(format!("mode gains must be positive, got {bad}")));
    }
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]).then(a.cmp(&b)));
    let mut level = budget + 1.0 / eigenvalues[order[0]];
    let mut inv_sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        inv_sum += 1.0 / eigenvalues[i];
        let candidate = (budget + inv_sum) / (k + 1) as f64;
        if candidate > 1.0 / eigenvalues[i] {
            level = candidate;
        } else {
            break;
        }
    }
    Ok(eigenvalues.iter().map(|&l| (level - 1.0 / l).max(0.0)).collect())
}

/// `(1 / block_len) log2 det(I + S^{-1/2} T Z d(p) Z^H T^H S^{-1/2})`.
pub fn link_spectral_efficiency(
    t_direct_full: MatRef<'_, c64>,
    whitener: MatRef<'_, c64>,
    z: MatRef<'_, c64>,
    powers: &[f64],
) -> Result<f64> {
    let g = whitener * t_direct_full * z;
    let streams = g.ncols();
    // Sylvester: det(I_N + G P G^H) = det(I + P^{1/2} G^H G P^{1/2})
    let gram = g.adjoint() * &g;
    let m = Mat::from_fn(streams, streams, |i, j| {
        let v = gram[(i, j)] * (powers[i] * powers[j]).sqrt();
        if i == j {
            v + ONE
        } else {
            v
        }
    });
    Ok(log2_det_hpd(m.as_ref())? / t_direct_full.ncols() as f64)
}

/// Optimal precoder under the null-steering constraint.
#[derive(Debug, Clone)]
pub struct OptimalPrecoder {
    pub precoder: CascadedPrecoder,
    /// Eigenvalues of `G^H G`, non-increasing.
    pub mode_gains: Vec<f64>,
    pub spectral_efficiency: f64,
    /// `S^{-1/2}`.
    pub whitener: CMat,
}

/// `Z* = E V_g` with water-filled powers over the eigenvalues of `G^H G`,
/// `G = S^{-1/2} T E`, where `T` is the full `N x (N + L)` direct link and
/// `S` the interference-plus-noise covariance.
pub fn optimal_secondary_precoder(
    inner: &InnerPrecoder,
    t_direct_full: MatRef<'_, c64>,
    interference_cov: MatRef<'_, c64>,
    budget: f64,
) -> Result<OptimalPrecoder> {
    if interference_cov.nrows() != t_direct_full.nrows() {
        return Err(CiaError::InvalidDimension(format!(
            "covariance is {}x{}, channel has {} rows",
            interference_cov.nrows(),
            interference_cov.ncols(),
            t_direct_full.nrows()
        )));
    }
    let whitener = hermitian_inverse_sqrt(interference_cov)?;
    let g = &whitener * t_direct_full * inner.matrix();
    let basis = EigenmodeBasis::of(g.as_ref())?;
    let gains: Vec<f64> = basis.singular_values.iter().map(|s| s * s).collect();
    let max = gains.first().copied().unwrap_or(0.0);
    let active: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 1e-12 * max && max > 0.0).collect();
    let mut powers = vec![0.0; gains.len()];
    if !active.is_empty() {
        let sub: Vec<f64> = active.iter().map(|&i| gains[i]).collect();
        for (&i, p) in active.iter().zip(waterfill(&sub, budget)?) {
            powers[i] = p;
        }
    }
    let se = gains
        .iter()
        .zip(&powers)
        .map(|(l, p)| (1.0 + p * l).log2())
        .sum::<f64>()
        / t_direct_full.ncols() as f64;
    let outer = OuterPrecoder {
        matrix: basis.right_vectors,
        strategy: OuterStrategy::CiaA,
    };
    let precoder = cascade(inner, &outer)?.with_powers(powers)?;
    Ok(OptimalPrecoder {
        precoder,
        mode_gains: gains,
        spectral_efficiency: se,
        whitener,
    })
}

/// `(1 / block_len) sum_{i <= theta} log2(1 + lambda_i / noise_var)`, the
/// served-link estimate behind CIA A. `singular_values` must be non-increasing.
pub fn cia_a_rate_estimate(singular_values: &[f64], theta: usize, noise_var: f64, block_len: usize) -> f64 {
    singular_values
        .iter()
        .take(theta)
        .map(|s| (1.0 + s * s / noise_var).log2())
        .sum::<f64>()
        / block_len as f64
}

/// `(1 / block_len) sum_{i in g^theta} log2(1 + 1 / (noise_var + g_i))`, the
/// CIA B estimate assuming unit served-link gains.
pub fn cia_b_rate_estimate(column_powers: &[f64], theta: usize, noise_var: f64, block_len: usize) -> f64 {
    weakest_columns(column_powers)
        .into_iter()
        .take(theta)
        .map(|i| (1.0 + 1.0 / (noise_var + column_powers[i])).log2())
        .sum::<f64>()
        / block_len as f64
}

/// Singular values of the aggregate interference matrix, for rank checks.
pub fn interference_singular_values(t_sp: MatRef<'_, c64>) -> Result<Vec<f64>> {
    singular_values(t_sp)
}
