//! SINR and spectral efficiency of both tiers.

use faer::c64;

use crate::channel::ChannelSet;
use crate::error::{CiaError, Result};
use crate::linalg::{weighted_row_power, CMat};
use crate::ofdm::{ofdm_equivalent_diagonal, ChannelTaps, OfdmParams, OfdmSystem};
use crate::precoder::CascadedPrecoder;

/// Linear SINR per received symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrVector(Vec<f64>);

impl SinrVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(CiaError::InvalidParameter(format!("SINR must be finite and non-negative, got {v}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entries at `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> SinrVector {
        SinrVector(indices.iter().map(|&i| self.0[i]).collect())
    }
}

/// Spectral efficiency of both tiers, in bits/s/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct TierRates {
    pub primary_se: f64,
    pub secondary_se: f64,
    pub primary_per_user: Vec<f64>,
    pub secondary_per_user: Vec<f64>,
}

impl TierRates {
    pub fn new(primary_per_user: Vec<f64>, secondary_per_user: Vec<f64>) -> Self {
        Self {
            primary_se: primary_per_user.iter().sum(),
            secondary_se: secondary_per_user.iter().sum(),
            primary_per_user,
            secondary_per_user,
        }
    }
}

/// Scale `alpha` in `[0, 1]` of the MBS interference seen by the SUEs.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct InterferenceFactor(f64);

impl InterferenceFactor {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(CiaError::config("alpha", format!("must lie in [0, 1], got {alpha}")));
        }
        Ok(Self(alpha))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for InterferenceFactor {
    fn default() -> Self {
        Self(1.0)
    }
}

fn check_noise(noise_var: f64) -> Result<()> {
    if noise_var > 0.0 && noise_var.is_finite() {
        Ok(())
    } else {
        Err(CiaError::InvalidParameter(format!("noise variance must be positive, got {noise_var}")))
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(CiaError::InvalidDimension(format!("{what}: expected {want}, got {got}")))
    }
}

/// `p_i |g_i|^2 / sigma^2` with `g` the OFDM diagonal of `taps`.
pub fn primary_sinr_perfect(
    taps: &ChannelTaps,
    powers: &[f64],
    noise_var: f64,
    params: &OfdmParams,
) -> Result<SinrVector> {
    check_noise(noise_var)?;
    check_len("primary powers", powers.len(), params.n_subcarriers())?;
    let g = ofdm_equivalent_diagonal(taps, params);
    SinrVector::new(g.iter().zip(powers).map(|(g, p)| p * g.norm_sqr() / noise_var).collect())
}

/// Received primary signal power `p_i |g_i|^2` on every subcarrier, each
/// subcarrier taking the gain of the MUE that owns it.
pub fn primary_signal_power(sys: &OfdmSystem, channels: &ChannelSet, powers: &[f64]) -> Vec<f64> {
    let gains: Vec<Vec<c64>> = channels.h_pp.iter().map(|h| sys.diagonal_gains(h)).collect();
    (0..sys.params().n_subcarriers())
        .map(|i| powers[i] * gains[sys.allocation().owner(i)][i].norm_sqr())
        .collect()
}

/// SBS leakage `sum_k t_sp^H d(p) t_sp` on every subcarrier, measured with
/// the channels in `channels` against the given precoders.
pub fn cross_tier_leakage(sys: &OfdmSystem, channels: &ChannelSet, precoders: &[CascadedPrecoder]) -> Vec<f64> {
    let n = sys.params().n_subcarriers();
    let mut leak = vec![0.0; n];
    for (k, z) in precoders.iter().enumerate() {
        if z.total_power() == 0.0 {
            continue;
        }
        for j in 0..sys.params().n_mues() {
            let rows = sys.receive_mue_rows(j, &channels.h_sp[k][j], z.matrix());
            for (r, &i) in sys.allocation().set(j).iter().enumerate() {
                leak[i] += weighted_row_power(rows.as_ref(), r, z.powers());
            }
        }
    }
    leak
}

/// Primary SINR per MUE when the SBS precoders may leak into the MUEs.
///
/// Leakage is evaluated with the true channels in `channels`; the result
/// vectors follow the subcarrier order of each MUE's set.
pub fn primary_sinr_imperfect(
    sys: &OfdmSystem,
    channels: &ChannelSet,
    precoders: &[CascadedPrecoder],
    primary_powers: &[f64],
    noise_var: f64,
) -> Result<Vec<SinrVector>> {
    check_noise(noise_var)?;
    check_len("primary powers", primary_powers.len(), sys.params().n_subcarriers())?;
    check_len("precoders", precoders.len(), channels.n_sbs())?;
    let signal = primary_signal_power(sys, channels, primary_powers);
    let leak = cross_tier_leakage(sys, channels, precoders);
    (0..sys.params().n_mues())
        .map(|j| {
            SinrVector::new(
                sys.allocation()
                    .set(j)
                    .iter()
                    .map(|&i| signal[i] / (leak[i] + noise_var))
                    .collect(),
            )
        })
        .collect()
}

/// Received per-subcarrier powers at SUE `k` from SBS `m`, that is the
/// weighted row powers of `F B H_ss^(m,k) Z^(m)`.
pub fn secondary_link_power(sys: &OfdmSystem, taps: &ChannelTaps, z: &CascadedPrecoder) -> Vec<f64> {
    let n = sys.params().n_subcarriers();
    if z.total_power() == 0.0 {
        return vec![0.0; n];
    }
    let t: CMat = sys.receive(taps, z.matrix());
    (0..n).map(|i| weighted_row_power(t.as_ref(), i, z.powers())).collect()
}

/// SINR of SUE `k` on every subcarrier: direct-link row power over co-tier
/// interference, `alpha`-scaled MBS interference and noise.
pub fn secondary_sinr(
    k: usize,
    sys: &OfdmSystem,
    channels: &ChannelSet,
    precoders: &[CascadedPrecoder],
    primary_powers: &[f64],
    alpha: InterferenceFactor,
    noise_var: f64,
) -> Result<SinrVector> {
    check_noise(noise_var)?;
    check_len("precoders", precoders.len(), channels.n_sbs())?;
    check_len("primary powers", primary_powers.len(), sys.params().n_subcarriers())?;
    if k >= channels.n_sbs() {
        return Err(CiaError::InvalidParameter(format!("SUE index {k} out of range")));
    }
    let signal = secondary_link_power(sys, &channels.h_ss[k][k], &precoders[k]);
    let mut denom = vec![noise_var; signal.len()];
    for (m, z) in precoders.iter().enumerate() {
        if m != k {
            for (d, p) in denom.iter_mut().zip(secondary_link_power(sys, &channels.h_ss[m][k], z)) {
                *d += p;
            }
        }
    }
    if alpha.value() > 0.0 {
        let g = sys.diagonal_gains(&channels.h_ps[k]);
        for ((d, g), p) in denom.iter_mut().zip(&g).zip(primary_powers) {
            *d += alpha.value() * p * g.norm_sqr();
        }
    }
    SinrVector::new(signal.iter().zip(&denom).map(|(s, d)| s / d).collect())
}

/// `(1 / (N + L)) sum_i log2(1 + SINR_i)`.
pub fn spectral_efficiency(sinr: &SinrVector, params: &OfdmParams) -> f64 {
    block_spectral_efficiency(sinr, params.block_len())
}

/// `(1 / block_len) sum_i log2(1 + SINR_i)`.
pub fn block_spectral_efficiency(sinr: &SinrVector, block_len: usize) -> f64 {
    sinr.values().iter().map(|s| s.ln_1p()).sum::<f64>() / std::f64::consts::LN_2 / block_len as f64
}

/// `SINR^2 tau / (1 + (1 + tau) SINR)`.
pub fn effective_sinr(sinr: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(CiaError::InvalidParameter(format!("training length must be positive, got {tau}")));
    }
    if !(sinr >= 0.0 && sinr.is_finite()) {
        return Err(CiaError::InvalidParameter(format!("SINR must be finite and non-negative, got {sinr}")));
    }
    Ok(sinr * sinr * tau / (1.0 + (1.0 + tau) * sinr))
}

/// Fraction `(T - tau) / T` of the coherence time left for data.
pub fn prelog_factor(tau: f64, coherence_time: f64) -> Result<f64> {
    if !(tau > 0.0 && tau <= coherence_time && coherence_time.is_finite()) {
        return Err(CiaError::InvalidParameter(format!(
            "need 0 < tau <= T, got tau = {tau}, T = {coherence_time}"
        )));
    }
    Ok((coherence_time - tau) / coherence_time)
}

/// Per-user rates under imperfect CSI: the effective SINR of every symbol
/// (when `effective` is set) and the training pre-log penalty.
pub fn tier_se_imperfect(
    per_user_sinr: &[SinrVector],
    tau: f64,
    coherence_time: f64,
    params: &OfdmParams,
    effective: bool,
) -> Result<Vec<f64>> {
    block_tier_se_imperfect(per_user_sinr, tau, coherence_time, params.block_len(), effective)
}

/// [`tier_se_imperfect`] for an explicit block length.
pub fn block_tier_se_imperfect(
    per_user_sinr: &[SinrVector],
    tau: f64,
    coherence_time: f64,
    block_len: usize,
    effective: bool,
) -> Result<Vec<f64>> {
    let prelog = prelog_factor(tau, coherence_time)?;
    per_user_sinr
        .iter()
        .map(|s| {
            let s = if effective {
                SinrVector::new(s.values().iter().map(|&v| effective_sinr(v, tau)).collect::<Result<_>>()?)?
            } else {
                s.clone()
            };
            Ok(prelog * block_spectral_efficiency(&s, block_len))
        })
        .collect()
}
