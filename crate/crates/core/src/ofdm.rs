//! OFDM block matrices and frequency-domain equivalent channels.
//!
//! Indices are 0-based: subcarrier `k` here is subcarrier `k + 1` in the
//! usual 1-based matrix notation, and tap `m` is the `m`-th delay.

use std::f64::consts::PI;

use faer::{c64, Mat, MatRef};

use crate::error::{CiaError, Result};
use crate::linalg::{indicator, CMat, ZERO};

/// Block dimensions of the primary OFDMA transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OfdmParams {
    n_subcarriers: usize,
    cp_len: usize,
    channel_order: usize,
    n_mues: usize,
}

impl OfdmParams {
    /// Validates `N > L >= l` and `M | N`.
    ///
    /// `L == l` is accepted: the prefix still absorbs a channel of `l + 1`
    /// taps, and the reference scenario uses `L = l = 32`.
    pub fn new(
        n_subcarriers: usize,
        cp_len: usize,
        channel_order: usize,
        n_mues: usize,
    ) -> Result<Self> {
        if n_subcarriers == 0 {
            return Err(CiaError::config("n_subcarriers", "must be positive"));
        }
        if cp_len == 0 {
            return Err(CiaError::config("cp_len", "must be positive"));
        }
        if n_mues == 0 {
            return Err(CiaError::config("n_mues", "must be positive"));
        }
        if cp_len >= n_subcarriers {
            return Err(CiaError::config(
                "cp_len",
                format!("must be smaller than n_subcarriers ({cp_len} >= {n_subcarriers})"),
            ));
        }
        if channel_order > cp_len {
            return Err(CiaError::config(
                "channel_order",
                format!("must not exceed cp_len ({channel_order} > {cp_len})"),
            ));
        }
        if n_subcarriers % n_mues != 0 {
            return Err(CiaError::config(
                "n_mues",
                format!("must divide n_subcarriers ({n_subcarriers} % {n_mues} != 0)"),
            ));
        }
        Ok(Self {
            n_subcarriers,
            cp_len,
            channel_order,
            n_mues,
        })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len
    }

    pub fn channel_order(&self) -> usize {
        self.channel_order
    }

    pub fn n_mues(&self) -> usize {
        self.n_mues
    }

    /// `N + L`, the transmitted block length.
    pub fn block_len(&self) -> usize {
        self.n_subcarriers + self.cp_len
    }

    pub fn taps_len(&self) -> usize {
        self.channel_order + 1
    }

    pub fn subcarriers_per_mue(&self) -> usize {
        self.n_subcarriers / self.n_mues
    }
}

/// Impulse response of one link, `l + 1` taps.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTaps(Vec<c64>);

impl ChannelTaps {
    pub fn new(taps: Vec<c64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(CiaError::InvalidDimension("channel needs at least one tap".into()));
        }
        if taps.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return Err(CiaError::InvalidParameter("channel taps must be finite".into()));
        }
        Ok(Self(taps))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![ZERO; len.max(1)])
    }

    pub fn as_slice(&self) -> &[c64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Channel order `l` (number of taps minus one).
    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    pub fn energy(&self) -> f64 {
        self.0.iter().map(|t| t.norm_sqr()).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|t| t * factor).collect())
    }
}

/// Disjoint equal-size subcarrier sets, one per MUE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubcarrierAllocation {
    sets: Vec<Vec<usize>>,
    owner: Vec<usize>,
}

impl SubcarrierAllocation {
    /// MUE `j` receives the `j`-th contiguous block of `N / M` subcarriers.
    pub fn contiguous(params: &OfdmParams) -> Self {
        let per = params.subcarriers_per_mue();
        let sets = (0..params.n_mues())
            .map(|j| (j * per..(j + 1) * per).collect())
            .collect();
        let owner = (0..params.n_subcarriers()).map(|i| i / per).collect();
        Self { sets, owner }
    }

    /// Custom allocation; sets must partition `0..N` into `M` blocks of `N / M`.
    pub fn from_sets(params: &OfdmParams, sets: Vec<Vec<usize>>) -> Result<Self> {
        let n = params.n_subcarriers();
        if sets.len() != params.n_mues() {
            return Err(CiaError::config("allocation", "one subcarrier set per MUE"));
        }
        let mut owner = vec![usize::MAX; n];
        for (j, set) in sets.iter().enumerate() {
            if set.len() != params.subcarriers_per_mue() {
                return Err(CiaError::config("allocation", "every set must hold N / M subcarriers"));
            }
            for &i in set {
                if i >= n {
                    return Err(CiaError::config("allocation", format!("subcarrier {i} out of range")));
                }
                if owner[i] != usize::MAX {
                    return Err(CiaError::config("allocation", format!("subcarrier {i} assigned twice")));
                }
                owner[i] = j;
            }
        }
        Ok(Self { sets, owner })
    }

    pub fn set(&self, mue: usize) -> &[usize] {
        &self.sets[mue]
    }

    pub fn owner(&self, subcarrier: usize) -> usize {
        self.owner[subcarrier]
    }

    pub fn n_mues(&self) -> usize {
        self.sets.len()
    }

    /// Diagonal 0/1 filter `D_j` selecting the subcarriers of MUE `j`.
    pub fn filter(&self, mue: usize) -> CMat {
        let n = self.owner.len();
        indicator(n, n, |i, k| i == k && self.owner[i] == mue)
    }
}

fn unit_root(k: usize, l: usize, n: usize) -> c64 {
    // reduce k*l first so the angle stays accurate for large n
    let phase = -2.0 * PI * (((k * l) % n) as f64) / n as f64;
    c64::new(phase.cos(), phase.sin())
}

/// Unitary DFT matrix, `[F]_{k,l} = exp(-i 2 pi k l / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> Result<CMat> {
    if n == 0 {
        return Err(CiaError::InvalidDimension("DFT size must be positive".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(Mat::from_fn(n, n, |k, l| unit_root(k, l, n) * scale))
}

/// `(N + L) x N` matrix prepending the last `L` samples of a block.
pub fn cp_insertion_matrix(params: &OfdmParams) -> CMat {
    let (n, l) = (params.n_subcarriers(), params.cp_len());
    indicator(n + l, n, |r, c| if r < l { c == n - l + r } else { c == r - l })
}

/// `N x (N + L)` matrix dropping the first `L` samples of a block.
pub fn cp_removal_matrix(params: &OfdmParams) -> CMat {
    let (n, l) = (params.n_subcarriers(), params.cp_len());
    indicator(n, n + l, |r, c| c == r + l)
}

/// `dim x dim` circulant matrix with first column `(h_0, ..., h_l, 0, ...)`.
pub fn circulant_channel_matrix(taps: &ChannelTaps, dim: usize) -> Result<CMat> {
    if dim < taps.len() {
        return Err(CiaError::InvalidDimension(format!(
            "circulant size {dim} smaller than {} taps",
            taps.len()
        )));
    }
    let h = taps.as_slice();
    Ok(Mat::from_fn(dim, dim, |r, c| {
        let d = (r + dim - c) % dim;
        if d < h.len() {
            h[d]
        } else {
            ZERO
        }
    }))
}

/// Receiver filters `D_1, ..., D_M` for the contiguous allocation.
pub fn subcarrier_filters(params: &OfdmParams) -> Vec<CMat> {
    let alloc = SubcarrierAllocation::contiguous(params);
    (0..params.n_mues()).map(|j| alloc.filter(j)).collect()
}

/// Per-subcarrier gains of the CP-OFDM link: the diagonal of
/// `F B H A F^{-1}`, i.e. the length-`N` DFT of the zero-padded taps.
pub fn ofdm_equivalent_diagonal(taps: &ChannelTaps, params: &OfdmParams) -> Vec<c64> {
    let n = params.n_subcarriers();
    let h = taps.as_slice();
    (0..n)
        .map(|k| h.iter().enumerate().map(|(m, &hm)| hm * unit_root(k, m, n)).sum())
        .collect()
}

/// Precomputed DFT and allocation for repeated equivalent-channel products.
#[derive(Debug, Clone)]
pub struct OfdmSystem {
    params: OfdmParams,
    allocation: SubcarrierAllocation,
    dft: CMat,
    /// Rows of the DFT owned by each MUE.
    dft_rows: Vec<CMat>,
}

impl OfdmSystem {
    pub fn new(params: OfdmParams) -> Self {
        Self::with_allocation(params, SubcarrierAllocation::contiguous(&params))
    }

    pub fn with_allocation(params: OfdmParams, allocation: SubcarrierAllocation) -> Self {
        let dft = dft_matrix(params.n_subcarriers()).expect("validated params");
        let dft_rows = (0..params.n_mues())
            .map(|j| {
                let rows = allocation.set(j);
                Mat::from_fn(rows.len(), dft.ncols(), |i, c| dft[(rows[i], c)])
            })
            .collect();
        Self {
            params,
            allocation,
            dft,
            dft_rows,
        }
    }

    pub fn params(&self) -> &OfdmParams {
        &self.params
    }

    pub fn allocation(&self) -> &SubcarrierAllocation {
        &self.allocation
    }

    pub fn dft(&self) -> MatRef<'_, c64> {
        self.dft.as_ref()
    }

    /// `B H x` for an `(N + L) x c` input, computed as a linear convolution.
    ///
    /// Rows below the prefix never wrap because `L >= l`.
    pub fn strip_prefix_convolve(&self, taps: &ChannelTaps, x: MatRef<'_, c64>) -> CMat {
        let (n, l) = (self.params.n_subcarriers(), self.params.cp_len());
        debug_assert_eq!(x.nrows(), n + l);
        let h = taps.as_slice();
        let mut out = Mat::<c64>::zeros(n, x.ncols());
        for c in 0..x.ncols() {
            let col = x.col(c);
            for r in 0..n {
                let base = r + l;
                let mut acc = ZERO;
                for (m, &hm) in h.iter().enumerate() {
                    acc += hm * col[base - m];
                }
                out[(r, c)] = acc;
            }
        }
        out
    }

    /// `F B H x`: what a receiver sees after prefix removal and the DFT.
    pub fn receive(&self, taps: &ChannelTaps, x: MatRef<'_, c64>) -> CMat {
        let time = self.strip_prefix_convolve(taps, x);
        &self.dft * &time
    }

    /// Explicit `N x (N + L)` matrix `B H` for `taps`.
    pub fn strip_prefix_channel(&self, taps: &ChannelTaps) -> CMat {
        let (n, l) = (self.params.n_subcarriers(), self.params.cp_len());
        let h = taps.as_slice();
        Mat::from_fn(n, n + l, |r, c| {
            let base = r + l;
            if c <= base && base - c < h.len() {
                h[base - c]
            } else {
                ZERO
            }
        })
    }

    /// `sum_j D_j F B H_j`: rows of MUE `j`'s subcarriers see channel `j`.
    pub fn aggregate_interference(&self, per_mue: &[ChannelTaps]) -> Result<CMat> {
        if per_mue.len() != self.params.n_mues() {
            return Err(CiaError::InvalidDimension(format!(
                "expected {} channels, got {}",
                self.params.n_mues(),
                per_mue.len()
            )));
        }
        let n = self.params.n_subcarriers();
        let mut t = Mat::<c64>::zeros(n, self.params.block_len());
        for (j, taps) in per_mue.iter().enumerate() {
            let block = &self.dft_rows[j] * self.strip_prefix_channel(taps);
            for (i, &row) in self.allocation.set(j).iter().enumerate() {
                for c in 0..t.ncols() {
                    t[(row, c)] = block[(i, c)];
                }
            }
        }
        Ok(t)
    }

    /// `D_j F B H x` restricted to the rows of MUE `j` (an `N/M x c` block).
    pub fn receive_mue_rows(&self, mue: usize, taps: &ChannelTaps, x: MatRef<'_, c64>) -> CMat {
        let time = self.strip_prefix_convolve(taps, x);
        &self.dft_rows[mue] * &time
    }

    pub fn diagonal_gains(&self, taps: &ChannelTaps) -> Vec<c64> {
        ofdm_equivalent_diagonal(taps, &self.params)
    }
}
