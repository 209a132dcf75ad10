//! Independent dense-matrix oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use cia_core::c64;
use cia_core::channel::{complex_gaussian, ChannelSet};
use cia_core::ofdm::{ChannelTaps, OfdmParams};
use cia_core::seed::rng_from_seed;
use faer::Mat;

pub type CMat = Mat<c64>;

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> CMat {
    let mut rng = rng_from_seed(seed);
    Mat::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng, 1.0))
}

/// Haar-like `n x cols` matrix with orthonormal columns.
pub fn random_semi_unitary(n: usize, cols: usize, seed: u64) -> CMat {
    let q = gaussian_matrix(n, n, seed).qr().compute_Q();
    q.as_ref().subcols(0, cols).to_owned()
}

pub fn dft(n: usize) -> CMat {
    let s = 1.0 / (n as f64).sqrt();
    Mat::from_fn(n, n, |k, m| {
        let a = -2.0 * PI * (k * m) as f64 / n as f64;
        c64::new(a.cos() * s, a.sin() * s)
    })
}

pub fn idft(n: usize) -> CMat {
    dft(n).adjoint().to_owned()
}

/// Linear convolution over one block of `dim` samples.
pub fn convolution(taps: &ChannelTaps, dim: usize) -> CMat {
    let h = taps.as_slice();
    Mat::from_fn(dim, dim, |r, c| if r >= c && r - c < h.len() { h[r - c] } else { c64::new(0.0, 0.0) })
}

pub fn add_prefix(n: usize, l: usize) -> CMat {
    Mat::from_fn(n + l, n, |r, c| {
        let src = if r < l { n - l + r } else { r - l };
        if src == c { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) }
    })
}

pub fn drop_prefix(n: usize, l: usize) -> CMat {
    Mat::from_fn(n, n + l, |r, c| if c == r + l { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) })
}

/// `F B H` for one link, `N x (N + L)`.
pub fn received(params: &OfdmParams, taps: &ChannelTaps) -> CMat {
    let (n, l) = (params.n_subcarriers(), params.cp_len());
    dft(n) * drop_prefix(n, l) * convolution(taps, n + l)
}

/// Bisection on the water level; `iters` halvings of the bracket.
pub fn bisection_waterfill(gains: &[f64], budget: f64, iters: usize) -> Vec<f64> {
    let fill = |mu: f64| gains.iter().map(|g| (mu - 1.0 / g).max(0.0)).collect::<Vec<_>>();
    let (mut lo, mut hi) = (0.0, budget + gains.iter().map(|g| 1.0 / g).fold(0.0, f64::max));
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if fill(mid).iter().sum::<f64>() > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    fill(0.5 * (lo + hi))
}

/// Row power of `m` weighted per column.
fn row_power(m: &CMat, i: usize, w: &[f64]) -> f64 {
    (0..m.ncols()).map(|c| w[c] * m[(i, c)].norm_sqr()).sum()
}

pub struct DenseSinrs {
    /// Per MUE over its contiguous subcarrier block.
    pub primary: Vec<Vec<f64>>,
    /// Per SUE over all subcarriers.
    pub secondary: Vec<Vec<f64>>,
}

/// Evaluates every SINR straight from the block receive equations,
/// keeping inter-carrier terms of the MBS signal as interference.
pub fn dense_sinrs(
    params: &OfdmParams,
    ch: &ChannelSet,
    precoders: &[(CMat, Vec<f64>)],
    mbs_powers: &[f64],
    alpha: f64,
    noise: f64,
) -> DenseSinrs {
    let (n, l, m) = (params.n_subcarriers(), params.cp_len(), params.n_mues());
    let mbs_tx = add_prefix(n, l) * idft(n);
    let per = n / m;
    let primary = (0..m)
        .map(|j| {
            let direct = received(params, &ch.h_pp[j]) * &mbs_tx;
            let leaks: Vec<CMat> = precoders.iter().enumerate().map(|(k, (z, _))| received(params, &ch.h_sp[k][j]) * z).collect();
            (j * per..(j + 1) * per)
                .map(|i| {
                    let signal = mbs_powers[i] * direct[(i, i)].norm_sqr();
                    let ici = row_power(&direct, i, mbs_powers) - signal;
                    let leak: f64 = leaks.iter().zip(precoders).map(|(t, (_, p))| row_power(t, i, p)).sum();
                    signal / (ici + leak + noise)
                })
                .collect()
        })
        .collect();
    let secondary = (0..precoders.len())
        .map(|k| {
            let from_mbs = received(params, &ch.h_ps[k]) * &mbs_tx;
            let links: Vec<CMat> = precoders.iter().enumerate().map(|(s, (z, _))| received(params, &ch.h_ss[s][k]) * z).collect();
            (0..n)
                .map(|i| {
                    let signal = row_power(&links[k], i, &precoders[k].1);
                    let co: f64 = (0..precoders.len()).filter(|&s| s != k).map(|s| row_power(&links[s], i, &precoders[s].1)).sum();
                    signal / (co + alpha * row_power(&from_mbs, i, mbs_powers) + noise)
                })
                .collect()
        })
        .collect();
    DenseSinrs { primary, secondary }
}
