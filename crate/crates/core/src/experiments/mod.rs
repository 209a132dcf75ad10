//! Monte Carlo drivers: theta maps, CIA and TDMA trials, the single-tier
//! reference and parameter sweeps.

mod realization;
mod sweep;
mod theta;

pub use realization::{CiaEvaluation, Realization, TdmaEvaluation};
pub use sweep::{sweep, with_jobs, Efficiency, GridPoint, PointResult, Summary, TrialReport};
pub use theta::{optimal_theta_map, optimal_theta_maps, ThetaMap};

use crate::channel::{reference_power, noise_variance_for_snr, CsiQuality, SnrCalibration};
use crate::error::{CiaError, Result};
use crate::metrics::InterferenceFactor;
use crate::ofdm::{OfdmParams, OfdmSystem};
use crate::precoder::OuterStrategy;

/// Channel knowledge at the SBSs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CsiMode {
    Perfect,
    Imperfect(CsiQuality),
}

/// SBS power loading over the selected streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerMode {
    /// Unit power per stream.
    #[default]
    UniformUnit,
    /// Water-filling of `sbs_budget` over the per-stream direct-link gains.
    Waterfill,
}

/// MBS power allocation over its subcarriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MbsPower {
    /// `primary_power` on every subcarrier.
    Uniform,
    /// Water-filling of `N * primary_power` over the MBS's own gains, as
    /// in the single-tier reference.
    #[default]
    Waterfill,
}

/// What theta selection maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaObjective {
    /// Simulated second-tier spectral efficiency, all interference included.
    #[default]
    Simulated,
    /// The per-SBS closed-form estimate of the chosen strategy.
    Approximate,
}

/// Second-tier scheme of a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Cia(OuterStrategy),
    Tdma,
    /// Standalone MBS with water-filling, no second tier.
    SingleTier,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Cia(s) => s.label(),
            Scheme::Tdma => "tdma",
            Scheme::SingleTier => "single_tier",
        }
    }
}

/// Monte Carlo settings of the SNR reference power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CalibrationConfig {
    pub trials: usize,
    pub mode: SnrCalibration,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            trials: 2000,
            mode: SnrCalibration::LinearMean,
        }
    }
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub ofdm: OfdmParams,
    /// Number of SBS/SUE pairs `K`.
    pub n_sbs: usize,
    pub strategy: OuterStrategy,
    pub theta_override: Option<usize>,
    pub alpha: InterferenceFactor,
    pub snr_db: f64,
    pub csi: CsiMode,
    pub power_mode: PowerMode,
    /// Total SBS power for water-filling; `None` means `L`.
    pub sbs_budget: Option<f64>,
    /// Mean MBS power per subcarrier.
    pub primary_power: f64,
    pub mbs_power: MbsPower,
    pub trials: usize,
    pub master_seed: u64,
    pub calibration: CalibrationConfig,
    /// Apply the effective-SINR penalty to the MUEs too under imperfect CSI.
    pub primary_effective_sinr: bool,
    pub theta_objective: ThetaObjective,
}

impl SystemConfig {
    pub fn new(ofdm: OfdmParams, n_sbs: usize) -> Self {
        Self {
            ofdm,
            n_sbs,
            strategy: OuterStrategy::CiaA,
            theta_override: None,
            alpha: InterferenceFactor::default(),
            snr_db: 30.0,
            csi: CsiMode::Perfect,
            power_mode: PowerMode::UniformUnit,
            sbs_budget: None,
            primary_power: 1.0,
            mbs_power: MbsPower::Waterfill,
            trials: 500,
            master_seed: 1,
            calibration: CalibrationConfig::default(),
            primary_effective_sinr: true,
            theta_objective: ThetaObjective::Simulated,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sbs == 0 {
            return Err(CiaError::config("n_sbs", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(CiaError::config("trials", "must be at least 1"));
        }
        if !self.snr_db.is_finite() {
            return Err(CiaError::config("snr_db", "must be finite"));
        }
        if let Some(t) = self.theta_override {
            if t == 0 || t > self.ofdm.cp_len() {
                return Err(CiaError::config(
                    "theta",
                    format!("must lie in [1, {}], got {t}", self.ofdm.cp_len()),
                ));
            }
        }
        if let Some(b) = self.sbs_budget {
            if !(b > 0.0 && b.is_finite()) {
                return Err(CiaError::config("sbs_budget", format!("must be positive, got {b}")));
            }
        }
        if !(self.primary_power > 0.0 && self.primary_power.is_finite()) {
            return Err(CiaError::config("primary_power", "must be positive"));
        }
        if self.calibration.trials == 0 {
            return Err(CiaError::config("calibration_trials", "must be at least 1"));
        }
        Ok(())
    }

    pub fn sbs_budget(&self) -> f64 {
        self.sbs_budget.unwrap_or(self.ofdm.cp_len() as f64)
    }

    /// Thermal noise variance at every receiver for `snr_db`.
    pub fn noise_variance(&self) -> Result<f64> {
        let c = reference_power(&self.ofdm, self.calibration.trials, self.calibration.mode)?;
        Ok(noise_variance_for_snr(self.snr_db, c))
    }

    /// Theta for `K = n_sbs`: the override, else the map entry.
    pub fn resolve_theta(&self, map: Option<&ThetaMap>) -> Result<usize> {
        if let Some(t) = self.theta_override {
            return Ok(t);
        }
        match map {
            Some(m) if m.strategy == self.strategy => m.theta(self.n_sbs).ok_or_else(|| {
                CiaError::InvalidParameter(format!("theta map has no entry for K = {}", self.n_sbs))
            }),
            Some(_) => Err(CiaError::InvalidParameter("theta map was built for another strategy".into())),
            None => Err(CiaError::InvalidParameter("no theta override and no theta map".into())),
        }
    }
}

/// One CIA realization of `config` at trial index `trial`.
pub fn run_cia_trial(config: &SystemConfig, theta_map: Option<&ThetaMap>, trial: usize) -> Result<CiaEvaluation> {
    config.validate()?;
    let theta = config.resolve_theta(theta_map)?;
    let sys = OfdmSystem::new(config.ofdm);
    let noise = config.noise_variance()?;
    let r = Realization::draw(&sys, config, config.n_sbs, noise, trial)?;
    r.cia(config, config.n_sbs, theta, noise).map_err(|e| e.in_trial(trial))
}

/// One TDMA realization: every SBS alone in its slot with water-filling.
pub fn run_tdma_trial(config: &SystemConfig, trial: usize) -> Result<TdmaEvaluation> {
    config.validate()?;
    let sys = OfdmSystem::new(config.ofdm);
    let noise = config.noise_variance()?;
    let r = Realization::draw(&sys, config, config.n_sbs, noise, trial)?;
    r.tdma(config, config.n_sbs, noise).map_err(|e| e.in_trial(trial))
}

/// Spectral efficiency of a standalone MBS water-filling `N * primary_power`
/// over its subcarrier gains.
pub fn run_single_tier_reference(config: &SystemConfig, trial: usize) -> Result<f64> {
    config.validate()?;
    let sys = OfdmSystem::new(config.ofdm);
    let noise = config.noise_variance()?;
    let channels = crate::channel::draw_channel_set(&config.ofdm, 0, crate::seed::trial_seed(config.master_seed, trial));
    realization::single_tier_se(&sys, &channels, noise, config.primary_power)
}
