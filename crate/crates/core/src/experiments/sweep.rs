use rayon::prelude::*;

use crate::channel::{draw_channel_set, CsiQuality};
use crate::error::{CiaError, Result};
use crate::metrics::TierRates;
use crate::ofdm::OfdmSystem;
use crate::seed::trial_seed;

use super::realization::{estimate_channels, Realization};
use super::{CsiMode, Scheme, SystemConfig, ThetaMap};

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, n };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }
}

/// One scenario of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub config: SystemConfig,
    pub scheme: Scheme,
}

/// Imperfect-over-perfect ratios of the mean tier rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Efficiency {
    pub primary: f64,
    pub secondary: f64,
}

/// Per-trial rates and summaries of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub scheme: Scheme,
    pub config: SystemConfig,
    pub theta: Option<usize>,
    pub noise_variance: f64,
    pub trial_seeds: Vec<u64>,
    pub primary: Vec<f64>,
    pub secondary: Vec<f64>,
    /// Standalone water-filled MBS on the same channels.
    pub reference: Vec<f64>,
    pub primary_summary: Summary,
    pub secondary_summary: Summary,
    pub reference_summary: Summary,
    /// `100 (mean(primary + secondary) / mean(reference) - 1)`.
    pub percent_increase: f64,
    /// Set for imperfect CSI: ratios against the same point with perfect CSI.
    pub efficiency: Option<Efficiency>,
}

pub type PointResult = std::result::Result<TrialReport, CiaError>;

/// Point settings fixed before any trial runs.
struct Prepared {
    noise: f64,
    theta: Option<usize>,
    /// Index into the group's imperfect-CSI designs.
    design: Option<usize>,
}

struct Outcome {
    rates: TierRates,
    perfect: Option<TierRates>,
    reference: f64,
}

fn prepare(point: &GridPoint, maps: &[ThetaMap]) -> Result<(f64, Option<usize>)> {
    point.config.validate()?;
    let noise = point.config.noise_variance()?;
    let theta = match point.scheme {
        Scheme::Cia(strategy) => {
            let map = maps
                .iter()
                .find(|m| m.strategy == strategy && m.theta(point.config.n_sbs).is_some());
            Some(point.config.resolve_theta(map)?)
        }
        _ => None,
    };
    Ok((noise, theta))
}

fn evaluate(r: &Realization, point: &GridPoint, theta: Option<usize>, noise: f64) -> Result<TierRates> {
    let c = &point.config;
    match point.scheme {
        Scheme::Cia(_) => Ok(r.cia(c, c.n_sbs, theta.expect("resolved in prepare"), noise)?.rates),
        Scheme::Tdma => Ok(r.tdma(c, c.n_sbs, noise)?.rates),
        Scheme::SingleTier => Ok(TierRates::new(vec![r.single_tier_se(noise)?], Vec::new())),
    }
}

/// Same shared-draw key: everything that changes the channel samples.
fn same_draws(a: &SystemConfig, b: &SystemConfig) -> bool {
    a.ofdm == b.ofdm
        && a.master_seed == b.master_seed
        && a.trials == b.trials
        && a.calibration == b.calibration
        && a.primary_power == b.primary_power
}

/// Runs every grid point. Points sharing the OFDM setup, seed, trial count
/// and MBS power reuse the same channel draws, drawn once per trial for the
/// largest `K` among them. A failing trial fails only its own point.
///
/// `jobs` caps the worker threads; results do not depend on it.
pub fn sweep(points: &[GridPoint], maps: &[ThetaMap], jobs: Option<usize>) -> Vec<PointResult> {
    match with_jobs(jobs, || sweep_inner(points, maps)) {
        Ok(r) => r,
        Err(e) => points.iter().map(|_| Err(e.clone())).collect(),
    }
}

/// Runs `f` on a pool of `jobs` worker threads, or on the global pool.
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| CiaError::InvalidParameter(format!("thread pool: {e}"))),
        None => Ok(f()),
    }
}

fn sweep_inner(points: &[GridPoint], maps: &[ThetaMap]) -> Vec<PointResult> {
    // the scheme decides the outer strategy
    let points: Vec<GridPoint> = points
        .iter()
        .map(|p| {
            let mut p = p.clone();
            if let Scheme::Cia(s) = p.scheme {
                p.config.strategy = s;
            }
            p
        })
        .collect();
    let points = &points[..];
    let mut results: Vec<Option<PointResult>> = vec![None; points.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        match groups.iter_mut().find(|g| same_draws(&points[g[0]].config, &p.config)) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    for group in groups {
        let mut designs: Vec<(u64, CsiQuality)> = Vec::new();
        let mut ready: Vec<(usize, Prepared)> = Vec::new();
        for &i in &group {
            match prepare(&points[i], maps) {
                Ok((noise, theta)) => {
                    let design = match points[i].config.csi {
                        CsiMode::Perfect => None,
                        CsiMode::Imperfect(q) => {
                            let key = (noise.to_bits(), q);
                            Some(designs.iter().position(|d| *d == key).unwrap_or_else(|| {
                                designs.push(key);
                                designs.len() - 1
                            }))
                        }
                    };
                    ready.push((i, Prepared { noise, theta, design }));
                }
                Err(e) => results[i] = Some(Err(e)),
            }
        }
        if ready.is_empty() {
            continue;
        }
        let base = &points[ready[0].0].config;
        let k_max = ready.iter().map(|(i, _)| points[*i].config.n_sbs).max().unwrap_or(1);
        let sys = OfdmSystem::new(base.ofdm);
        let per_trial: Vec<Vec<Result<Outcome>>> = (0..base.trials)
            .into_par_iter()
            .map(|trial| run_trial(&sys, base, points, &ready, &designs, k_max, trial))
            .collect();
        for (slot, (i, prep)) in ready.iter().enumerate() {
            let mut outcomes = Vec::with_capacity(base.trials);
            let mut failure = None;
            for (trial, row) in per_trial.iter().enumerate() {
                match &row[slot] {
                    Ok(o) => outcomes.push(o),
                    Err(e) => {
                        failure = Some(e.clone().in_trial(trial));
                        break;
                    }
                }
            }
            results[*i] = Some(match failure {
                Some(e) => Err(e),
                None => Ok(report(&points[*i], prep, &outcomes)),
            });
        }
    }
    results.into_iter().map(|r| r.expect("every point resolved")).collect()
}

fn run_trial(
    sys: &OfdmSystem,
    base: &SystemConfig,
    points: &[GridPoint],
    ready: &[(usize, Prepared)],
    designs: &[(u64, CsiQuality)],
    k_max: usize,
    trial: usize,
) -> Vec<Result<Outcome>> {
    let seed = trial_seed(base.master_seed, trial);
    let truth = draw_channel_set(&base.ofdm, k_max, seed);
    let perfect = Realization::from_channels(sys, &truth, None, None, base.primary_power);
    let imperfect: Vec<Result<Realization>> = designs
        .iter()
        .map(|&(noise_bits, q)| {
            let est = estimate_channels(&truth, &q, f64::from_bits(noise_bits), seed)?;
            Realization::from_channels(sys, &truth, Some(&est), Some(q), base.primary_power)
        })
        .collect();
    ready
        .iter()
        .map(|(i, prep)| {
            let point = &points[*i];
            let perfect = perfect.as_ref().map_err(Clone::clone)?;
            let reference = perfect.single_tier_se(prep.noise)?;
            let perfect_rates = evaluate(perfect, point, prep.theta, prep.noise)?;
            Ok(match prep.design {
                None => Outcome { rates: perfect_rates, perfect: None, reference },
                Some(d) => {
                    let r = imperfect[d].as_ref().map_err(Clone::clone)?;
                    Outcome {
                        rates: evaluate(r, point, prep.theta, prep.noise)?,
                        perfect: Some(perfect_rates),
                        reference,
                    }
                }
            })
        })
        .collect()
}

fn report(point: &GridPoint, prep: &Prepared, outcomes: &[&Outcome]) -> TrialReport {
    let c = &point.config;
    let primary: Vec<f64> = outcomes.iter().map(|o| o.rates.primary_se).collect();
    let secondary: Vec<f64> = outcomes.iter().map(|o| o.rates.secondary_se).collect();
    let reference: Vec<f64> = outcomes.iter().map(|o| o.reference).collect();
    let (ps, ss, rs) = (Summary::of(&primary), Summary::of(&secondary), Summary::of(&reference));
    let efficiency = match c.csi {
        CsiMode::Perfect => None,
        CsiMode::Imperfect(_) => {
            let mean = |f: fn(&TierRates) -> f64| {
                outcomes.iter().map(|o| f(o.perfect.as_ref().expect("imperfect point"))).sum::<f64>()
                    / outcomes.len() as f64
            };
            Some(Efficiency {
                primary: ps.mean / mean(|r| r.primary_se),
                secondary: ss.mean / mean(|r| r.secondary_se),
            })
        }
    };
    TrialReport {
        scheme: point.scheme,
        config: c.clone(),
        theta: prep.theta,
        noise_variance: prep.noise,
        trial_seeds: (0..c.trials).map(|t| trial_seed(c.master_seed, t)).collect(),
        percent_increase: 100.0 * ((ps.mean + ss.mean) / rs.mean - 1.0),
        primary,
        secondary,
        reference,
        primary_summary: ps,
        secondary_summary: ss,
        reference_summary: rs,
        efficiency,
    }
}
