//! Rayleigh channel draws, noisy training and SNR calibration.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use faer::c64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CiaError, Result};
use crate::ofdm::{ChannelTaps, OfdmParams, OfdmSystem};
use crate::precoder::{equivalent_secondary_channel, null_space_precoder};
use crate::seed::{derive_seed, rng_from_seed};

/// `CN(0, variance)` sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> c64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64::new(re * s, im * s)
}

/// Uniform power-delay profile: `l + 1` i.i.d. taps of variance `1 / (l + 1)`.
pub fn draw_taps<R: Rng + ?Sized>(order: usize, rng: &mut R) -> ChannelTaps {
    let var = 1.0 / (order + 1) as f64;
    let taps = (0..=order).map(|_| complex_gaussian(rng, var)).collect();
    ChannelTaps::new(taps).expect("gaussian taps are finite")
}

/// Link families; the discriminant is part of every per-link seed path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum LinkKind {
    MbsToMue = 1,
    SbsToMue = 2,
    MbsToSue = 3,
    SbsToSue = 4,
}

/// Seed of the link `(tx, rx)` of `kind` inside a trial.
pub fn link_seed(trial_seed: u64, kind: LinkKind, tx: usize, rx: usize) -> u64 {
    derive_seed(trial_seed, &[kind as u64, tx as u64, rx as u64])
}

fn draw_link(trial_seed: u64, kind: LinkKind, tx: usize, rx: usize, order: usize) -> ChannelTaps {
    draw_taps(order, &mut rng_from_seed(link_seed(trial_seed, kind, tx, rx)))
}

/// Every link of one trial. Indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// MBS to MUE `j`.
    pub h_pp: Vec<ChannelTaps>,
    /// `h_sp[k][j]`: SBS `k` to MUE `j`.
    pub h_sp: Vec<Vec<ChannelTaps>>,
    /// MBS to SUE `k`.
    pub h_ps: Vec<ChannelTaps>,
    /// `h_ss[i][k]`: SBS `i` to SUE `k`.
    pub h_ss: Vec<Vec<ChannelTaps>>,
}

impl ChannelSet {
    pub fn n_sbs(&self) -> usize {
        self.h_ps.len()
    }

    pub fn n_mues(&self) -> usize {
        self.h_pp.len()
    }

    pub fn link_count(&self) -> usize {
        self.h_pp.len()
            + self.h_sp.iter().map(Vec::len).sum::<usize>()
            + self.h_ps.len()
            + self.h_ss.iter().map(Vec::len).sum::<usize>()
    }

    /// Applies `f(kind, tx, rx, taps)` to every link, keeping the layout.
    pub fn map_taps(&self, mut f: impl FnMut(LinkKind, usize, usize, &ChannelTaps) -> ChannelTaps) -> Self {
        Self {
            h_pp: self.h_pp.iter().enumerate().map(|(j, h)| f(LinkKind::MbsToMue, 0, j, h)).collect(),
            h_sp: self
                .h_sp
                .iter()
                .enumerate()
                .map(|(k, row)| row.iter().enumerate().map(|(j, h)| f(LinkKind::SbsToMue, k, j, h)).collect())
                .collect(),
            h_ps: self.h_ps.iter().enumerate().map(|(k, h)| f(LinkKind::MbsToSue, 0, k, h)).collect(),
            h_ss: self
                .h_ss
                .iter()
                .enumerate()
                .map(|(i, row)| row.iter().enumerate().map(|(k, h)| f(LinkKind::SbsToSue, i, k, h)).collect())
                .collect(),
        }
    }
}

/// Draws `M + K M + K + K^2` independent links. Each link has its own
/// sub-seed, so changing `K` leaves the MBS links untouched.
pub fn draw_channel_set(params: &OfdmParams, n_sbs: usize, trial_seed: u64) -> ChannelSet {
    let order = params.channel_order();
    let m = params.n_mues();
    ChannelSet {
        h_pp: (0..m).map(|j| draw_link(trial_seed, LinkKind::MbsToMue, 0, j, order)).collect(),
        h_sp: (0..n_sbs)
            .map(|k| (0..m).map(|j| draw_link(trial_seed, LinkKind::SbsToMue, k, j, order)).collect())
            .collect(),
        h_ps: (0..n_sbs).map(|k| draw_link(trial_seed, LinkKind::MbsToSue, 0, k, order)).collect(),
        h_ss: (0..n_sbs)
            .map(|i| (0..n_sbs).map(|k| draw_link(trial_seed, LinkKind::SbsToSue, i, k, order)).collect())
            .collect(),
    }
}

/// Training parameters: power `rho`, duration `tau` and coherence time, in symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsiQuality {
    training_power: f64,
    tau: f64,
    coherence_time: f64,
}

impl CsiQuality {
    pub fn new(training_power: f64, tau: f64, coherence_time: f64) -> Result<Self> {
        if !(training_power > 0.0 && training_power.is_finite()) {
            return Err(CiaError::config("training_power", "must be positive"));
        }
        if !(coherence_time > 0.0 && coherence_time.is_finite()) {
            return Err(CiaError::config("coherence_time", "must be positive"));
        }
        if !(tau > 0.0 && tau <= coherence_time) {
            return Err(CiaError::config(
                "tau",
                format!("must satisfy 0 < tau <= coherence_time ({tau} vs {coherence_time})"),
            ));
        }
        Ok(Self {
            training_power,
            tau,
            coherence_time,
        })
    }

    /// Builds from the fraction `tau / T` of the coherence time.
    pub fn from_ratio(training_power: f64, tau_over_t: f64, coherence_time: f64) -> Result<Self> {
        Self::new(training_power, tau_over_t * coherence_time, coherence_time)
    }

    pub fn training_power(&self) -> f64 {
        self.training_power
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn coherence_time(&self) -> f64 {
        self.coherence_time
    }

    pub fn tau_over_t(&self) -> f64 {
        self.tau / self.coherence_time
    }
}

/// Split `h = estimate + error` of one link.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedTaps {
    pub estimate: ChannelTaps,
    pub error: ChannelTaps,
}

/// Splits `truth` into `estimate + error`, nudging either part by a few
/// ulps so that the floating-point sum rounds back to `truth`.
///
/// When `|estimate|` and `|error|` both sit two or more binades above
/// `|truth|`, no such pair exists; the raw pair is kept and its sum is then
/// within a few ulps of `max(|truth|, |estimate|)`.
fn exact_split(truth: f64, estimate: f64) -> (f64, f64) {
    let exact = |e: f64, c: f64| e + c == truth;
    let error = truth - estimate;
    if exact(estimate, error) {
        return (estimate, error);
    }
    let (mut eu, mut ed, mut cu, mut cd) = (estimate, estimate, error, error);
    for _ in 0..8 {
        eu = eu.next_up();
        ed = ed.next_down();
        cu = cu.next_up();
        cd = cd.next_down();
        for e in [eu, ed] {
            if exact(e, truth - e) {
                return (e, truth - e);
            }
        }
        for c in [cu, cd] {
            if exact(truth - c, c) {
                return (truth - c, c);
            }
        }
    }
    (estimate, error)
}

/// Linear MMSE estimate from `r = sqrt(rho tau) h + n`, `n ~ CN(0, noise_var I)`,
/// with the prior tap variance `1 / (l + 1)`.
pub fn noisy_estimate<R: Rng + ?Sized>(
    true_taps: &ChannelTaps,
    csi: &CsiQuality,
    noise_var: f64,
    rng: &mut R,
) -> Result<EstimatedTaps> {
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(CiaError::InvalidParameter(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    let prior = 1.0 / true_taps.len() as f64;
    let gain = (csi.training_power() * csi.tau()).sqrt();
    let shrink = gain * prior / (gain * gain * prior + noise_var);
    let (mut est, mut err) = (Vec::with_capacity(true_taps.len()), Vec::with_capacity(true_taps.len()));
    for &h in true_taps.as_slice() {
        let r = h * gain + complex_gaussian(rng, noise_var);
        let raw = r * shrink;
        let (er, xr) = exact_split(h.re, raw.re);
        let (ei, xi) = exact_split(h.im, raw.im);
        est.push(c64::new(er, ei));
        err.push(c64::new(xr, xi));
    }
    Ok(EstimatedTaps {
        estimate: ChannelTaps::new(est)?,
        error: ChannelTaps::new(err)?,
    })
}

/// Noise variance giving `snr_db` for a receiver whose mean per-subcarrier
/// signal power is `reference_power`.
pub fn noise_variance_for_snr(snr_db: f64, reference_power: f64) -> f64 {
    reference_power / 10f64.powf(snr_db / 10.0)
}

/// How the reference per-subcarrier power is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SnrCalibration {
    /// Mean of `||t_i||^2`.
    #[default]
    LinearMean,
    /// `10^{E[log10 ||t_i||^2]}`.
    LogMean,
}

const CALIBRATION_SEED: u64 = 0x5eed_ca11_b4a7_e000;

/// Monte Carlo estimate of the mean per-subcarrier power `||t_ss,i||^2` of
/// a served SUE when its SBS sends unit power on every kernel dimension.
pub fn calibrate_reference_power(params: &OfdmParams, trials: usize, mode: SnrCalibration) -> Result<f64> {
    if trials == 0 {
        return Err(CiaError::InvalidParameter("calibration needs at least one trial".into()));
    }
    let sys = OfdmSystem::new(*params);
    let n = params.n_subcarriers();
    let mut acc = 0.0;
    let mut count = 0usize;
    for t in 0..trials {
        let seed = derive_seed(CALIBRATION_SEED, &[t as u64]);
        let cs = draw_channel_set(params, 1, seed);
        let t_sp = sys.aggregate_interference(&cs.h_sp[0])?;
        let inner = null_space_precoder(t_sp.as_ref())?;
        let t_ss = equivalent_secondary_channel(&sys, &cs.h_ss[0][0], &inner);
        for i in 0..n {
            let p: f64 = (0..t_ss.ncols()).map(|c| t_ss[(i, c)].norm_sqr()).sum();
            acc += match mode {
                SnrCalibration::LinearMean => p,
                SnrCalibration::LogMean => p.max(f64::MIN_POSITIVE).log10(),
            };
            count += 1;
        }
    }
    let mean = acc / count as f64;
    Ok(match mode {
        SnrCalibration::LinearMean => mean,
        SnrCalibration::LogMean => 10f64.powf(mean),
    })
}

type CalibrationKey = (OfdmParams, SnrCalibration, usize);

/// Cached [`calibrate_reference_power`]; computed once per process and key.
pub fn reference_power(params: &OfdmParams, trials: usize, mode: SnrCalibration) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<CalibrationKey, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (*params, mode, trials);
    if let Some(&c) = cache.lock().expect("calibration cache poisoned").get(&key) {
        return Ok(c);
    }
    let c = calibrate_reference_power(params, trials, mode)?;
    cache.lock().expect("calibration cache poisoned").insert(key, c);
    Ok(c)
}
