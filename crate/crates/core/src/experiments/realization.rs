use faer::{c64, Mat};

use crate::channel::{draw_channel_set, link_seed, noisy_estimate, ChannelSet, CsiQuality, LinkKind};
use crate::error::{CiaError, Result};
use crate::linalg::{select_columns, weighted_row_power, CMat};
use crate::metrics::{spectral_efficiency, tier_se_imperfect, SinrVector, TierRates};
use crate::ofdm::{OfdmParams, OfdmSystem};
use crate::precoder::{
    cascade, column_powers, equivalent_secondary_channel, null_space_precoder, waterfill, weakest_columns,
    CascadedPrecoder, EigenmodeBasis, InnerPrecoder, OuterPrecoder, OuterStrategy,
};
use crate::seed::{derive_seed, rng_from_seed, trial_seed};

use super::{CsiMode, MbsPower, PowerMode, SystemConfig};

const ESTIMATE_TAG: u64 = 0x6573_7469_6d61_7465;

/// Outcome of one CIA trial.
#[derive(Debug, Clone)]
pub struct CiaEvaluation {
    pub theta: usize,
    pub rates: TierRates,
    /// Per MUE, in the order of its subcarrier set.
    pub primary_sinr: Vec<SinrVector>,
    /// Per SUE, over all subcarriers.
    pub secondary_sinr: Vec<SinrVector>,
    pub precoders: Vec<CascadedPrecoder>,
    /// `max_k ||T_sp^(k) Z^(k)||_F / ||T_sp^(k)||_F` with the true channels.
    pub max_relative_leakage: f64,
}

/// Outcome of one TDMA trial.
#[derive(Debug, Clone)]
pub struct TdmaEvaluation {
    /// Time-averaged rates of both tiers.
    pub rates: TierRates,
    /// Second-tier spectral efficiency of each SBS during its own slot.
    pub slot_secondary_se: Vec<f64>,
    pub precoders: Vec<CascadedPrecoder>,
}

/// Selected directions of one SBS inside its kernel basis.
enum Outer {
    Modes(CMat),
    Columns(Vec<usize>),
}

impl Outer {
    fn apply(&self, m: &CMat) -> CMat {
        match self {
            Outer::Modes(v) => m * v,
            Outer::Columns(cols) => select_columns(m.as_ref(), cols),
        }
    }

    fn matrix(&self, l: usize) -> CMat {
        match self {
            Outer::Modes(v) => v.clone(),
            Outer::Columns(cols) => {
                Mat::from_fn(l, cols.len(), |r, c| if r == cols[c] { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) })
            }
        }
    }
}

fn row_powers(w: &CMat, powers: &[f64]) -> Vec<f64> {
    (0..w.nrows()).map(|i| weighted_row_power(w.as_ref(), i, powers)).collect()
}

/// Per-row power of each column, row-major `n x cols`.
fn entry_powers(w: &CMat) -> Vec<f64> {
    let (n, c) = (w.nrows(), w.ncols());
    let mut out = vec![0.0; n * c];
    for j in 0..c {
        for i in 0..n {
            out[i * c + j] = w[(i, j)].norm_sqr();
        }
    }
    out
}

/// Prefix sums along each row of a row-major table.
fn cumulate(table: &mut [f64], cols: usize) {
    for row in table.chunks_mut(cols) {
        for j in 1..cols {
            row[j] += row[j - 1];
        }
    }
}

/// Noisy training of every SBS-side link; MBS links are left untouched.
pub(crate) fn estimate_channels(truth: &ChannelSet, csi: &CsiQuality, noise_var: f64, seed: u64) -> Result<ChannelSet> {
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(CiaError::InvalidParameter(format!("noise variance must be positive, got {noise_var}")));
    }
    Ok(truth.map_taps(|kind, tx, rx, taps| match kind {
        LinkKind::SbsToMue | LinkKind::SbsToSue => {
            let mut rng = rng_from_seed(derive_seed(link_seed(seed, kind, tx, rx), &[ESTIMATE_TAG]));
            noisy_estimate(taps, csi, noise_var, &mut rng).expect("noise checked above").estimate
        }
        _ => taps.clone(),
    }))
}

/// Water-filled standalone MBS with budget `N * primary_power`.
pub(crate) fn single_tier_se(sys: &OfdmSystem, channels: &ChannelSet, noise_var: f64, primary_power: f64) -> Result<f64> {
    let r = Realization::from_channels(sys, channels, None, None, primary_power)?;
    r.single_tier_se(noise_var)
}

fn owner_gains(sys: &OfdmSystem, channels: &ChannelSet) -> Vec<f64> {
    let per_mue: Vec<Vec<c64>> = channels.h_pp.iter().map(|h| sys.diagonal_gains(h)).collect();
    (0..sys.params().n_subcarriers())
        .map(|i| per_mue[sys.allocation().owner(i)][i].norm_sqr())
        .collect()
}

/// Water-filled powers over `gains`, zero on non-positive ones.
fn waterfill_positive(gains: &[f64], budget: f64) -> Result<Vec<f64>> {
    let active: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    let mut p = vec![0.0; gains.len()];
    if active.is_empty() {
        return Ok(p);
    }
    let sub: Vec<f64> = active.iter().map(|&i| gains[i]).collect();
    for (&i, v) in active.iter().zip(waterfill(&sub, budget)?) {
        p[i] = v;
    }
    Ok(p)
}

/// One channel draw with every precoder-independent product cached, so
/// that schemes, theta values and any `K` up to the drawn number of pairs
/// can be evaluated on common random numbers.
///
/// Precoders are designed from the SBS-side view of the channels (the
/// estimates under imperfect CSI); rates always use the true channels.
pub struct Realization {
    params: OfdmParams,
    n_sbs: usize,
    csi: Option<CsiQuality>,
    inner: Vec<InnerPrecoder>,
    /// True `F B H_ss^(m,k) E^(m)`, indexed `[m][k]`.
    t_ss: Vec<Vec<CMat>>,
    /// SVD of the design-side direct link `T_ss^(k,k)`.
    eigen: Vec<EigenmodeBasis>,
    /// Design-side column powers of `T_ss^(k,k)`.
    direct_powers: Vec<Vec<f64>>,
    /// Design-side column powers of `T_ss^(k,m)`, indexed `[k][m]`.
    cross_powers: Vec<Vec<Vec<f64>>>,
    /// True `T_sp^(k) E^(k)`.
    leak: Vec<CMat>,
    t_sp_norm: Vec<f64>,
    primary_gains: Vec<f64>,
    primary_power: f64,
    /// `|g_ps,i|^2` at each SUE.
    mbs_at_sue: Vec<Vec<f64>>,
    mue_sets: Vec<Vec<usize>>,
}

impl Realization {
    /// Draws trial `trial` of `config` with `k_max` pairs.
    pub fn draw(sys: &OfdmSystem, config: &SystemConfig, k_max: usize, noise_var: f64, trial: usize) -> Result<Self> {
        let seed = trial_seed(config.master_seed, trial);
        let truth = draw_channel_set(&config.ofdm, k_max, seed);
        let (design, csi) = match config.csi {
            CsiMode::Perfect => (None, None),
            CsiMode::Imperfect(q) => (Some(estimate_channels(&truth, &q, noise_var, seed)?), Some(q)),
        };
        Self::from_channels(sys, &truth, design.as_ref(), csi, config.primary_power).map_err(|e| e.in_trial(trial))
    }

    /// Builds from explicit channels; `design` defaults to `truth`.
    pub fn from_channels(
        sys: &OfdmSystem,
        truth: &ChannelSet,
        design: Option<&ChannelSet>,
        csi: Option<CsiQuality>,
        primary_power: f64,
    ) -> Result<Self> {
        let k = truth.n_sbs();
        let view = design.unwrap_or(truth);
        let mut inner = Vec::with_capacity(k);
        let mut leak = Vec::with_capacity(k);
        let mut t_sp_norm = Vec::with_capacity(k);
        for s in 0..k {
            let t_design = sys.aggregate_interference(&view.h_sp[s])?;
            let e = null_space_precoder(t_design.as_ref())?;
            let t_true = match design {
                Some(_) => sys.aggregate_interference(&truth.h_sp[s])?,
                None => t_design,
            };
            leak.push(&t_true * e.matrix());
            t_sp_norm.push(t_true.norm_l2());
            inner.push(e);
        }
        let t_ss: Vec<Vec<CMat>> = (0..k)
            .map(|m| (0..k).map(|r| equivalent_secondary_channel(sys, &truth.h_ss[m][r], &inner[m])).collect())
            .collect();
        let mut eigen = Vec::with_capacity(k);
        let mut direct_powers = Vec::with_capacity(k);
        let mut cross_powers = Vec::with_capacity(k);
        for s in 0..k {
            let direct = match design {
                Some(d) => equivalent_secondary_channel(sys, &d.h_ss[s][s], &inner[s]),
                None => t_ss[s][s].clone(),
            };
            direct_powers.push(column_powers([direct.as_ref()]));
            eigen.push(EigenmodeBasis::of(direct.as_ref())?);
            // F is unitary, so column powers need only the time-domain product
            let row: Vec<Vec<f64>> = (0..k)
                .map(|m| match design {
                    Some(d) => column_powers([sys.strip_prefix_convolve(&d.h_ss[s][m], inner[s].matrix()).as_ref()]),
                    None => column_powers([t_ss[s][m].as_ref()]),
                })
                .collect();
            cross_powers.push(row);
        }
        Ok(Self {
            params: *sys.params(),
            n_sbs: k,
            csi,
            inner,
            t_ss,
            eigen,
            direct_powers,
            cross_powers,
            leak,
            t_sp_norm,
            primary_gains: owner_gains(sys, truth),
            primary_power,
            mbs_at_sue: truth.h_ps.iter().map(|h| sys.diagonal_gains(h).iter().map(|g| g.norm_sqr()).collect()).collect(),
            mue_sets: (0..sys.params().n_mues()).map(|j| sys.allocation().set(j).to_vec()).collect(),
        })
    }

    pub fn n_sbs(&self) -> usize {
        self.n_sbs
    }

    pub fn inner(&self, k: usize) -> &InnerPrecoder {
        &self.inner[k]
    }

    fn check_active(&self, k_active: usize) -> Result<()> {
        if k_active == 0 || k_active > self.n_sbs {
            return Err(CiaError::InvalidParameter(format!(
                "{k_active} active pairs requested from a draw of {}",
                self.n_sbs
            )));
        }
        Ok(())
    }

    fn outer(&self, strategy: OuterStrategy, s: usize, k_active: usize, theta: usize) -> Result<Outer> {
        let l = self.params.cp_len();
        if theta == 0 || theta > l {
            return Err(CiaError::InvalidParameter(format!("theta must lie in [1, {l}], got {theta}")));
        }
        Ok(match strategy {
            OuterStrategy::CiaA => Outer::Modes(self.eigen[s].right_vectors.as_ref().subcols(0, theta).to_owned()),
            OuterStrategy::CiaB => {
                let mut order = self.cia_b_order(s, k_active)?;
                order.truncate(theta);
                Outer::Columns(order)
            }
        })
    }

    fn cia_b_order(&self, s: usize, k_active: usize) -> Result<Vec<usize>> {
        if k_active < 2 {
            return Err(CiaError::NoNeighbors);
        }
        let mut g = vec![0.0; self.params.cp_len()];
        for m in (0..k_active).filter(|&m| m != s) {
            for (a, b) in g.iter_mut().zip(&self.cross_powers[s][m]) {
                *a += b;
            }
        }
        Ok(weakest_columns(&g))
    }

    fn stream_gains(&self, outer: &Outer, s: usize, theta: usize, noise_var: f64) -> Vec<f64> {
        match outer {
            Outer::Modes(_) => self.eigen[s].singular_values[..theta].iter().map(|v| v * v / noise_var).collect(),
            Outer::Columns(cols) => cols.iter().map(|&c| self.direct_powers[s][c] / noise_var).collect(),
        }
    }

    fn rates(&self, primary: &[SinrVector], secondary: &[SinrVector], config: &SystemConfig) -> Result<TierRates> {
        Ok(match self.csi {
            None => TierRates::new(
                primary.iter().map(|s| spectral_efficiency(s, &self.params)).collect(),
                secondary.iter().map(|s| spectral_efficiency(s, &self.params)).collect(),
            ),
            Some(q) => TierRates::new(
                tier_se_imperfect(primary, q.tau(), q.coherence_time(), &self.params, config.primary_effective_sinr)?,
                tier_se_imperfect(secondary, q.tau(), q.coherence_time(), &self.params, true)?,
            ),
        })
    }

    /// MBS power on every subcarrier. Water-filling uses the true gains:
    /// the MBS needs only its own links.
    pub fn mbs_powers(&self, mode: MbsPower, noise_var: f64) -> Result<Vec<f64>> {
        Ok(match mode {
            MbsPower::Uniform => vec![self.primary_power; self.primary_gains.len()],
            MbsPower::Waterfill => {
                let lambda: Vec<f64> = self.primary_gains.iter().map(|g| g / noise_var).collect();
                waterfill_positive(&lambda, self.primary_power * lambda.len() as f64)?
            }
        })
    }

    /// Primary SINR per MUE given the total SBS leakage on every subcarrier.
    fn primary_sinr(&self, leak: &[f64], noise_var: f64, pp: &[f64]) -> Result<Vec<SinrVector>> {
        self.mue_sets
            .iter()
            .map(|set| {
                SinrVector::new(
                    set.iter()
                        .map(|&i| pp[i] * self.primary_gains[i] / (leak[i] + noise_var))
                        .collect(),
                )
            })
            .collect()
    }

    fn mbs_interference(&self, k: usize, alpha: f64, pp: &[f64]) -> Vec<f64> {
        self.mbs_at_sue[k].iter().zip(pp).map(|(g, p)| alpha * p * g).collect()
    }

    /// CIA with the first `k_active` pairs transmitting `theta` streams each.
    pub fn cia(&self, config: &SystemConfig, k_active: usize, theta: usize, noise_var: f64) -> Result<CiaEvaluation> {
        self.check_active(k_active)?;
        let outers: Vec<Outer> = (0..k_active)
            .map(|s| self.outer(config.strategy, s, k_active, theta))
            .collect::<Result<_>>()?;
        let powers: Vec<Vec<f64>> = match config.power_mode {
            PowerMode::UniformUnit => vec![vec![1.0; theta]; k_active],
            PowerMode::Waterfill => outers
                .iter()
                .enumerate()
                .map(|(s, o)| waterfill_positive(&self.stream_gains(o, s, theta, noise_var), config.sbs_budget()))
                .collect::<Result<_>>()?,
        };
        let pp = self.mbs_powers(config.mbs_power, noise_var)?;
        let n = self.params.n_subcarriers();
        let mut leak = vec![0.0; n];
        let mut max_relative_leakage: f64 = 0.0;
        let mut precoders = Vec::with_capacity(k_active);
        for s in 0..k_active {
            let w = outers[s].apply(&self.leak[s]);
            max_relative_leakage = max_relative_leakage.max(w.norm_l2() / self.t_sp_norm[s]);
            for (a, b) in leak.iter_mut().zip(row_powers(&w, &powers[s])) {
                *a += b;
            }
            let outer = OuterPrecoder::from_parts(outers[s].matrix(self.params.cp_len()), config.strategy);
            precoders.push(cascade(&self.inner[s], &outer)?.with_powers(powers[s].clone())?);
        }
        let alpha = config.alpha.value();
        let secondary_sinr = (0..k_active)
            .map(|k| {
                let signal = row_powers(&outers[k].apply(&self.t_ss[k][k]), &powers[k]);
                let mut denom: Vec<f64> = self.mbs_interference(k, alpha, &pp).iter().map(|v| v + noise_var).collect();
                for m in (0..k_active).filter(|&m| m != k) {
                    for (d, p) in denom.iter_mut().zip(row_powers(&outers[m].apply(&self.t_ss[m][k]), &powers[m])) {
                        *d += p;
                    }
                }
                SinrVector::new(signal.iter().zip(&denom).map(|(s, d)| s / d).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let primary_sinr = self.primary_sinr(&leak, noise_var, &pp)?;
        Ok(CiaEvaluation {
            theta,
            rates: self.rates(&primary_sinr, &secondary_sinr, config)?,
            primary_sinr,
            secondary_sinr,
            precoders,
            max_relative_leakage,
        })
    }

    /// TDMA over the first `k_active` pairs: one SBS per slot, water-filling
    /// `sbs_budget` over all of its direct-link eigenmodes.
    pub fn tdma(&self, config: &SystemConfig, k_active: usize, noise_var: f64) -> Result<TdmaEvaluation> {
        self.check_active(k_active)?;
        let l = self.params.cp_len();
        let share = 1.0 / k_active as f64;
        let alpha = config.alpha.value();
        let pp = self.mbs_powers(config.mbs_power, noise_var)?;
        let mut primary = vec![0.0; self.params.n_mues()];
        let mut secondary = Vec::with_capacity(k_active);
        let mut precoders = Vec::with_capacity(k_active);
        for s in 0..k_active {
            let outer = Outer::Modes(self.eigen[s].right_vectors.clone());
            let powers = waterfill_positive(&self.stream_gains(&outer, s, l, noise_var), config.sbs_budget())?;
            let leak = row_powers(&outer.apply(&self.leak[s]), &powers);
            let signal = row_powers(&outer.apply(&self.t_ss[s][s]), &powers);
            let denom: Vec<f64> = self.mbs_interference(s, alpha, &pp).iter().map(|v| v + noise_var).collect();
            let sue = SinrVector::new(signal.iter().zip(&denom).map(|(a, b)| a / b).collect())?;
            let slot = self.rates(&self.primary_sinr(&leak, noise_var, &pp)?, std::slice::from_ref(&sue), config)?;
            for (a, b) in primary.iter_mut().zip(&slot.primary_per_user) {
                *a += share * b;
            }
            secondary.push(slot.secondary_se);
            let outer = OuterPrecoder::from_parts(outer.matrix(l), OuterStrategy::CiaA);
            precoders.push(cascade(&self.inner[s], &outer)?.with_powers(powers)?);
        }
        Ok(TdmaEvaluation {
            rates: TierRates::new(primary, secondary.iter().map(|v| share * v).collect()),
            slot_secondary_se: secondary,
            precoders,
        })
    }

    /// Second-tier spectral efficiency for every `theta` in `1..=L`, with
    /// unit power per stream and all `k_active` pairs using the same theta.
    pub fn secondary_se_by_theta(
        &self,
        strategy: OuterStrategy,
        k_active: usize,
        alpha: f64,
        mbs: MbsPower,
        noise_var: f64,
    ) -> Result<Vec<f64>> {
        self.check_active(k_active)?;
        let pp = self.mbs_powers(mbs, noise_var)?;
        let (n, l) = (self.params.n_subcarriers(), self.params.cp_len());
        let outers: Vec<Outer> = (0..k_active).map(|s| self.outer(strategy, s, k_active, l)).collect::<Result<_>>()?;
        // tables[m][k][i * l + t]: power at SUE k, subcarrier i, from the first t + 1 streams of SBS m
        let tables: Vec<Vec<Vec<f64>>> = (0..k_active)
            .map(|m| {
                (0..k_active)
                    .map(|k| {
                        let mut t = entry_powers(&outers[m].apply(&self.t_ss[m][k]));
                        cumulate(&mut t, l);
                        t
                    })
                    .collect()
            })
            .collect();
        let mut se = vec![0.0; l];
        for k in 0..k_active {
            let base: Vec<f64> = self.mbs_interference(k, alpha, &pp).iter().map(|v| v + noise_var).collect();
            for (t, out) in se.iter_mut().enumerate() {
                let mut acc = 0.0;
                for i in 0..n {
                    let idx = i * l + t;
                    let mut denom = base[i];
                    for (m, row) in tables.iter().enumerate() {
                        if m != k {
                            denom += row[k][idx];
                        }
                    }
                    acc += (tables[k][k][idx] / denom).ln_1p();
                }
                *out += acc / std::f64::consts::LN_2;
            }
        }
        let block = self.params.block_len() as f64;
        Ok(se.into_iter().map(|v| v / block).collect())
    }

    /// The strategy's closed-form rate estimate for every `theta`, summed
    /// over the first `k_active` SBSs.
    pub fn approximate_se_by_theta(&self, strategy: OuterStrategy, k_active: usize, noise_var: f64) -> Result<Vec<f64>> {
        self.check_active(k_active)?;
        let l = self.params.cp_len();
        let block = self.params.block_len();
        let mut out = vec![0.0; l];
        for s in 0..k_active {
            for (t, v) in out.iter_mut().enumerate() {
                *v += match strategy {
                    OuterStrategy::CiaA => {
                        crate::precoder::cia_a_rate_estimate(&self.eigen[s].singular_values, t + 1, noise_var, block)
                    }
                    OuterStrategy::CiaB => {
                        let mut g = vec![0.0; l];
                        for m in (0..k_active).filter(|&m| m != s) {
                            for (a, b) in g.iter_mut().zip(&self.cross_powers[s][m]) {
                                *a += b;
                            }
                        }
                        if k_active < 2 {
                            return Err(CiaError::NoNeighbors);
                        }
                        crate::precoder::cia_b_rate_estimate(&g, t + 1, noise_var, block)
                    }
                };
            }
        }
        Ok(out)
    }

    /// Standalone water-filled MBS on the same primary channels.
    pub fn single_tier_se(&self, noise_var: f64) -> Result<f64> {
        let pp = self.mbs_powers(MbsPower::Waterfill, noise_var)?;
        let sinr = self.primary_sinr(&vec![0.0; pp.len()], noise_var, &pp)?;
        Ok(sinr.iter().map(|s| spectral_efficiency(s, &self.params)).sum())
    }
}
