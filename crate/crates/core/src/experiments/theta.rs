use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{CiaError, Result};
use crate::ofdm::OfdmSystem;
use crate::precoder::OuterStrategy;

use super::realization::Realization;
use super::sweep::Summary;
use super::{CsiMode, SystemConfig, ThetaObjective};

/// Best number of streams per SBS for each `K`, with the averaged
/// objective curves it was picked from.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMap {
    pub strategy: OuterStrategy,
    pub objective: ThetaObjective,
    pub snr_db: f64,
    pub alpha: f64,
    pub trials: usize,
    pub entries: BTreeMap<usize, usize>,
    /// `curves[K][theta - 1]`: objective over the trials.
    pub curves: BTreeMap<usize, Vec<Summary>>,
}

impl ThetaMap {
    pub fn theta(&self, k: usize) -> Option<usize> {
        self.entries.get(&k).copied()
    }

    /// Averaged objective at the selected theta.
    pub fn best_value(&self, k: usize) -> Option<f64> {
        let t = self.theta(k)?;
        Some(self.curves[&k][t - 1].mean)
    }
}

/// Index of the largest mean; ties resolve to the smallest theta.
fn argmax(curve: &[Summary]) -> usize {
    let mut best = 0;
    for (i, s) in curve.iter().enumerate() {
        if s.mean > curve[best].mean {
            best = i;
        }
    }
    best + 1
}

/// Picks theta for every `K` in `k_values` by averaging the configured
/// objective over `config.trials` perfect-CSI channel draws with unit
/// stream powers.
pub fn optimal_theta_map(config: &SystemConfig, k_values: &[usize]) -> Result<ThetaMap> {
    let mut maps = optimal_theta_maps(config, &[config.strategy], k_values)?;
    Ok(maps.remove(0))
}

/// [`optimal_theta_map`] for several strategies on the same channel draws.
pub fn optimal_theta_maps(
    config: &SystemConfig,
    strategies: &[OuterStrategy],
    k_values: &[usize],
) -> Result<Vec<ThetaMap>> {
    config.validate()?;
    let k_max = *k_values
        .iter()
        .max()
        .ok_or_else(|| CiaError::config("k_values", "must not be empty"))?;
    if k_values.contains(&0) {
        return Err(CiaError::config("k_values", "every K must be at least 1"));
    }
    if strategies.is_empty() {
        return Err(CiaError::config("strategies", "must not be empty"));
    }
    if strategies.contains(&OuterStrategy::CiaB) && k_values.contains(&1) {
        return Err(CiaError::NoNeighbors);
    }
    let mut ks = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut design = config.clone();
    design.csi = CsiMode::Perfect;
    let sys = OfdmSystem::new(design.ofdm);
    let noise = design.noise_variance()?;
    let alpha = design.alpha.value();
    // per_trial[trial][strategy][K][theta - 1]
    let per_trial: Vec<Vec<Vec<Vec<f64>>>> = (0..design.trials)
        .into_par_iter()
        .map(|trial| {
            let r = Realization::draw(&sys, &design, k_max, noise, trial)?;
            strategies
                .iter()
                .map(|&strategy| {
                    ks.iter()
                        .map(|&k| match design.theta_objective {
                            ThetaObjective::Simulated => {
                                r.secondary_se_by_theta(strategy, k, alpha, design.mbs_power, noise)
                            }
                            ThetaObjective::Approximate => r.approximate_se_by_theta(strategy, k, noise),
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_trial(trial))
        })
        .collect::<Result<_>>()?;
    let l = design.ofdm.cp_len();
    Ok(strategies
        .iter()
        .enumerate()
        .map(|(si, &strategy)| {
            let mut entries = BTreeMap::new();
            let mut curves = BTreeMap::new();
            for (ki, &k) in ks.iter().enumerate() {
                let curve: Vec<Summary> = (0..l)
                    .map(|t| Summary::of(&per_trial.iter().map(|c| c[si][ki][t]).collect::<Vec<_>>()))
                    .collect();
                entries.insert(k, argmax(&curve));
                curves.insert(k, curve);
            }
            ThetaMap {
                strategy,
                objective: design.theta_objective,
                snr_db: design.snr_db,
                alpha,
                trials: design.trials,
                entries,
                curves,
            }
        })
        .collect())
}
