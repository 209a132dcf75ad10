use std::fmt;
use std::str::FromStr;

use cia_core::experiments::{
    optimal_theta_maps, sweep, with_jobs, CsiMode, GridPoint, Scheme, Summary, ThetaMap, TrialReport,
};
use cia_core::metrics::InterferenceFactor;
use cia_core::precoder::OuterStrategy;

use crate::config::Plan;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    ThetaMap,
    SeVsSnr,
    EtaVsTau,
    PercentIncrease,
    Custom,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ThetaMap => "theta_map",
            Experiment::SeVsSnr => "se_vs_snr",
            Experiment::EtaVsTau => "eta_vs_tau",
            Experiment::PercentIncrease => "percent_increase",
            Experiment::Custom => "custom",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "theta_map" => Experiment::ThetaMap,
            "se_vs_snr" => Experiment::SeVsSnr,
            "eta_vs_tau" => Experiment::EtaVsTau,
            "percent_increase" => Experiment::PercentIncrease,
            "custom" => Experiment::Custom,
            _ => {
                return Err(format!(
                    "unknown experiment `{s}` (theta_map, se_vs_snr, eta_vs_tau, percent_increase, custom)"
                ))
            }
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One x/y/err curve of a plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x_label: &'static str,
    pub y_label: &'static str,
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug)]
pub struct Outcome {
    pub reports: Vec<TrialReport>,
    pub series: Vec<Series>,
    /// Grid points that did not complete, with their diagnostics.
    pub failures: Vec<String>,
}

pub fn run(plan: &Plan, experiment: Experiment, jobs: Option<usize>) -> Result<Outcome, CliError> {
    with_jobs(jobs, || match experiment {
        Experiment::ThetaMap => theta_map(plan),
        Experiment::SeVsSnr => se_vs_snr(plan),
        Experiment::EtaVsTau => eta_vs_tau(plan),
        Experiment::PercentIncrease => percent_increase(plan),
        Experiment::Custom => custom(plan),
    })?
}

fn strategies(schemes: &[Scheme]) -> Vec<OuterStrategy> {
    let mut out = Vec::new();
    for s in schemes {
        if let Scheme::Cia(st) = s {
            if !out.contains(st) {
                out.push(*st);
            }
        }
    }
    out
}

fn compute_maps(plan: &Plan, strategies: &[OuterStrategy]) -> Result<Vec<ThetaMap>, CliError> {
    if strategies.is_empty() {
        return Ok(Vec::new());
    }
    let mut c = plan.base.clone();
    c.snr_db = plan.theta.snr_db;
    c.trials = plan.theta.trials;
    Ok(optimal_theta_maps(&c, strategies, &plan.axes.k)?)
}

/// Cartesian product of the plan's axes for every scheme. `tau` applies
/// only under imperfect CSI.
fn grid(plan: &Plan, schemes: &[Scheme], imperfect: bool) -> Result<Vec<GridPoint>, CliError> {
    let taus: Vec<f64> = if imperfect { plan.axes.tau_over_t.clone() } else { vec![0.0] };
    let mut points = Vec::new();
    for &scheme in schemes {
        let thetas: Vec<Option<usize>> = match scheme {
            Scheme::Cia(_) => plan.axes.theta.clone(),
            _ => vec![None],
        };
        for &k in &plan.axes.k {
            for &snr in &plan.axes.snr_db {
                for &alpha in &plan.axes.alpha {
                    for &tau in &taus {
                        for &theta in &thetas {
                            let mut c = plan.base.clone();
                            c.n_sbs = k;
                            c.snr_db = snr;
                            c.alpha = InterferenceFactor::new(alpha).map_err(CliError::from_validation)?;
                            c.csi = plan.csi(imperfect, tau)?;
                            c.theta_override = theta;
                            if let Scheme::Cia(s) = scheme {
                                c.strategy = s;
                            }
                            points.push(GridPoint { config: c, scheme });
                        }
                    }
                }
            }
        }
    }
    Ok(points)
}

fn describe(p: &GridPoint) -> String {
    let c = &p.config;
    let mut s = format!("{} K={} snr_db={} alpha={}", p.scheme.label(), c.n_sbs, c.snr_db, c.alpha.value());
    if let CsiMode::Imperfect(q) = c.csi {
        s.push_str(&format!(" tau_over_T={}", q.tau_over_t()));
    }
    if let Some(t) = c.theta_override {
        s.push_str(&format!(" theta={t}"));
    }
    s
}

/// Runs `points`, computing theta maps first when some CIA point lacks a theta.
fn execute(plan: &Plan, points: Vec<GridPoint>) -> Result<(Vec<TrialReport>, Vec<String>), CliError> {
    let missing: Vec<Scheme> = points
        .iter()
        .filter(|p| p.config.theta_override.is_none())
        .map(|p| p.scheme)
        .collect();
    let maps = compute_maps(plan, &strategies(&missing))?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (p, r) in points.iter().zip(sweep(&points, &maps, None)) {
        match r {
            Ok(r) => reports.push(r),
            Err(e) => failures.push(format!("{}: {e}", describe(p))),
        }
    }
    Ok((reports, failures))
}

fn tau_of(r: &TrialReport) -> f64 {
    match r.config.csi {
        CsiMode::Imperfect(q) => q.tau_over_t(),
        CsiMode::Perfect => 0.0,
    }
}

/// Groups reports into series keyed by `label`, with x and y/err from the closures.
fn collect_series(
    reports: &[TrialReport],
    x_label: &'static str,
    y_label: &'static str,
    label: impl Fn(&TrialReport) -> String,
    point: impl Fn(&TrialReport) -> (f64, f64, f64),
) -> Vec<Series> {
    let mut out: Vec<Series> = Vec::new();
    for r in reports {
        let l = label(r);
        let p = point(r);
        match out.iter_mut().find(|s| s.label == l) {
            Some(s) => s.points.push(p),
            None => out.push(Series {
                label: l,
                x_label,
                y_label,
                points: vec![p],
            }),
        }
    }
    for s in &mut out {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

fn base_label(r: &TrialReport, axes: &crate::config::Axes) -> String {
    let mut l = format!("{} K={}", r.scheme.label(), r.config.n_sbs);
    if axes.alpha.len() > 1 {
        l.push_str(&format!(" alpha={}", r.config.alpha.value()));
    }
    if axes.theta.len() > 1 {
        if let Some(t) = r.theta {
            l.push_str(&format!(" theta={t}"));
        }
    }
    l
}

fn theta_map(plan: &Plan) -> Result<Outcome, CliError> {
    let schemes = plan
        .schemes
        .clone()
        .unwrap_or_else(|| vec![Scheme::Cia(OuterStrategy::CiaA), Scheme::Cia(OuterStrategy::CiaB)]);
    let strategies = strategies(&schemes);
    if strategies.is_empty() {
        return Err(CliError::Config("theta_map needs cia_a or cia_b in grid.schemes".into()));
    }
    let maps = compute_maps(plan, &strategies)?;
    let mut series = Vec::new();
    let mut points = Vec::new();
    for m in &maps {
        for (&k, curve) in &m.curves {
            series.push(Series {
                label: format!("{} K={k}", m.strategy.label()),
                x_label: "theta",
                y_label: "secondary_se",
                points: curve.iter().enumerate().map(|(i, s)| ((i + 1) as f64, s.mean, s.stderr)).collect(),
            });
            let mut c = plan.base.clone();
            c.n_sbs = k;
            c.snr_db = plan.theta.snr_db;
            c.strategy = m.strategy;
            c.csi = CsiMode::Perfect;
            c.theta_override = m.theta(k);
            points.push(GridPoint {
                config: c,
                scheme: Scheme::Cia(m.strategy),
            });
        }
    }
    let (reports, failures) = execute(plan, points)?;
    Ok(Outcome {
        reports,
        series,
        failures,
    })
}

fn se_vs_snr(plan: &Plan) -> Result<Outcome, CliError> {
    let schemes = plan.schemes.clone().unwrap_or_else(|| {
        vec![
            Scheme::Cia(OuterStrategy::CiaA),
            Scheme::Cia(OuterStrategy::CiaB),
            Scheme::Tdma,
        ]
    });
    let (reports, failures) = execute(plan, grid(plan, &schemes, plan.imperfect)?)?;
    let series = collect_series(
        &reports,
        "snr_db",
        "secondary_se",
        |r| base_label(r, &plan.axes),
        |r| (r.config.snr_db, r.secondary_summary.mean, r.secondary_summary.stderr),
    );
    Ok(Outcome {
        reports,
        series,
        failures,
    })
}

fn eta_vs_tau(plan: &Plan) -> Result<Outcome, CliError> {
    let schemes = plan.schemes.clone().unwrap_or_else(|| vec![Scheme::Cia(OuterStrategy::CiaA)]);
    let (reports, failures) = execute(plan, grid(plan, &schemes, true)?)?;
    let label = |tier: &str, r: &TrialReport| format!("eta_{tier} {} snr_db={}", base_label(r, &plan.axes), r.config.snr_db);
    // first-order error of a ratio whose denominator is the perfect-CSI mean
    let ratio = |eta: f64, s: &Summary| if s.mean != 0.0 { (eta, s.stderr * eta / s.mean) } else { (eta, f64::NAN) };
    let mut series = collect_series(
        &reports,
        "tau_over_T",
        "eta_p",
        |r| label("p", r),
        |r| {
            let (y, e) = ratio(r.efficiency.map_or(f64::NAN, |e| e.primary), &r.primary_summary);
            (tau_of(r), y, e)
        },
    );
    series.extend(collect_series(
        &reports,
        "tau_over_T",
        "eta_s",
        |r| label("s", r),
        |r| {
            let (y, e) = ratio(r.efficiency.map_or(f64::NAN, |e| e.secondary), &r.secondary_summary);
            (tau_of(r), y, e)
        },
    ));
    Ok(Outcome {
        reports,
        series,
        failures,
    })
}

/// Standard error of the percent increase, treating the reference mean as exact.
fn percent_stderr(r: &TrialReport) -> f64 {
    let total: Vec<f64> = r.primary.iter().zip(&r.secondary).map(|(p, s)| p + s).collect();
    100.0 * Summary::of(&total).stderr / r.reference_summary.mean
}

fn percent_increase(plan: &Plan) -> Result<Outcome, CliError> {
    let schemes = plan
        .schemes
        .clone()
        .unwrap_or_else(|| vec![Scheme::Cia(OuterStrategy::CiaA), Scheme::Tdma]);
    let (reports, failures) = execute(plan, grid(plan, &schemes, plan.imperfect)?)?;
    let series = collect_series(
        &reports,
        "snr_db",
        "percent_increase",
        |r| {
            let mut l = base_label(r, &plan.axes);
            if plan.imperfect && plan.axes.tau_over_t.len() > 1 {
                l.push_str(&format!(" tau_over_T={}", tau_of(r)));
            }
            l
        },
        |r| (r.config.snr_db, r.percent_increase, percent_stderr(r)),
    );
    Ok(Outcome {
        reports,
        series,
        failures,
    })
}

fn custom(plan: &Plan) -> Result<Outcome, CliError> {
    let schemes = plan.schemes.clone().unwrap_or_else(|| vec![Scheme::Cia(plan.base.strategy)]);
    let (reports, failures) = execute(plan, grid(plan, &schemes, plan.imperfect)?)?;
    let series = collect_series(
        &reports,
        "snr_db",
        "secondary_se",
        |r| {
            let mut l = base_label(r, &plan.axes);
            if plan.imperfect {
                l.push_str(&format!(" tau_over_T={}", tau_of(r)));
            }
            l
        },
        |r| (r.config.snr_db, r.secondary_summary.mean, r.secondary_summary.stderr),
    );
    Ok(Outcome {
        reports,
        series,
        failures,
    })
}
