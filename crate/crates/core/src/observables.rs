//! Scalar observables and objectives, from BP marginals or oracle means,
//! and the estimators that produce them.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::bp::{run_fixed_t, run_mirror, BpParams, ConvergenceReport, Marginals};
use crate::enumerate::{
    average_over_patterns, exact_expectation, exact_observables, sample_patterns, EnumerationLimits, NashMeans,
    SampledAverage,
};
use crate::error::{Error, Result};
use crate::game::{PresencePattern, ServiceConfig};
use crate::instance::Instance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    MirrorBp,
    FixedTBp,
    Exact,
    Sampled,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::MirrorBp => "mirror-bp",
            Source::FixedTBp => "fixed-t-bp",
            Source::Exact => "exact",
            Source::Sampled => "sampled",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservableSet {
    /// Expected connected workload.
    pub w: f64,
    /// Expected number of users with every edge blocked.
    pub n: f64,
    /// Expected satisfaction of connected users.
    pub osat: f64,
    /// Expected number of present users left unconnected.
    pub present_disconnected: f64,
    /// `osat - omega * present_disconnected - alpha * energy`.
    pub f: f64,
    pub energy: f64,
    pub source: Source,
    pub converged: bool,
}

pub fn energy(inst: &Instance, x: &ServiceConfig) -> f64 {
    x.on_units().fold(0.0, |acc, s| acc + inst.unit(s).cost)
}

fn assemble(inst: &Instance, x: &ServiceConfig, m: NashMeans, source: Source, converged: bool) -> ObservableSet {
    let energy = energy(inst, x);
    ObservableSet {
        w: m.w,
        n: m.n,
        osat: m.osat,
        present_disconnected: m.present_disconnected,
        f: m.osat - inst.omega() * m.present_disconnected - inst.alpha() * energy,
        energy,
        source,
        converged,
    }
}

fn marginal_means(inst: &Instance, marginals: &Marginals) -> NashMeans {
    let mut w = 0.0;
    let mut osat = 0.0;
    for (edge, b) in inst.edges().iter().zip(&marginals.edge) {
        w += b[2] * f64::from(edge.w_su);
        osat += b[2] * f64::from(edge.w_us);
    }
    NashMeans {
        w,
        osat,
        n: marginals.user_disconnected.iter().sum(),
        present_disconnected: marginals.user_traces.iter().map(|t| t.present_disconnected()).sum(),
    }
}

/// Observables read off BP marginals.
pub fn compute_from_marginals(
    inst: &Instance,
    x: &ServiceConfig,
    marginals: &Marginals,
    source: Source,
    converged: bool,
) -> ObservableSet {
    assemble(inst, x, marginal_means(inst, marginals), source, converged)
}

/// Observables from equilibrium means produced by an oracle.
pub fn compute_exact(inst: &Instance, x: &ServiceConfig, means: Option<NashMeans>, source: Source) -> Result<ObservableSet> {
    let m = means.ok_or_else(|| Error::Undefined("no presence pattern admits an equilibrium".into()))?;
    Ok(assemble(inst, x, m, source, true))
}

/// How to estimate the observables of a configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum Estimator {
    /// One mirror fixed point.
    Mirror(BpParams),
    /// BP at one given presence pattern.
    FixedT { t: PresencePattern, bp: BpParams },
    /// Enumeration at one given presence pattern.
    ExactAt { t: PresencePattern, limits: EnumerationLimits },
    /// Enumeration summed over every presence pattern.
    Exact(EnumerationLimits),
    /// Enumeration over a sample of presence patterns.
    Sampled { samples: usize, seed: u64, limits: EnumerationLimits },
    /// Fixed-presence BP over a sample of presence patterns.
    SampledBp { samples: usize, seed: u64, bp: BpParams },
}

impl Estimator {
    pub fn source(&self) -> Source {
        match self {
            Estimator::Mirror(_) => Source::MirrorBp,
            Estimator::FixedT { .. } => Source::FixedTBp,
            Estimator::ExactAt { .. } | Estimator::Exact(_) => Source::Exact,
            Estimator::Sampled { .. } | Estimator::SampledBp { .. } => Source::Sampled,
        }
    }
}

/// An estimate together with whatever diagnostics its estimator produced.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub observables: ObservableSet,
    pub report: Option<ConvergenceReport>,
    pub sampled: Option<SampledAverage>,
}

/// Fixed-presence BP means, or `None` when BP finds no consistent
/// labelling. The flag tells whether BP converged.
pub fn fixed_t_means(inst: &Instance, x: &ServiceConfig, t: &PresencePattern, bp: &BpParams) -> Result<(Option<NashMeans>, bool)> {
    match run_fixed_t(inst, x, t, bp) {
        Ok(out) => Ok((Some(marginal_means(inst, &out.marginals)), out.report.converged)),
        Err(Error::Degenerate(_)) => Ok((None, true)),
        Err(e) => Err(e),
    }
}

/// Explicit presence sampling with fixed-presence BP inside.
pub fn sampled_bp_average(inst: &Instance, x: &ServiceConfig, samples: usize, seed: u64, bp: &BpParams) -> Result<(SampledAverage, bool)> {
    if samples == 0 {
        return Err(Error::Param("sample size must be at least 1".into()));
    }
    let patterns = sample_patterns(inst, samples, seed);
    let all_converged = AtomicBool::new(true);
    let avg = average_over_patterns(&patterns, |t| {
        let (m, conv) = fixed_t_means(inst, x, t, bp)?;
        if !conv {
            all_converged.store(false, Ordering::Relaxed);
        }
        Ok(m)
    })?;
    Ok((avg, all_converged.into_inner()))
}

pub fn evaluate(inst: &Instance, x: &ServiceConfig, estimator: &Estimator) -> Result<Evaluation> {
    x.check_len(inst)?;
    let source = estimator.source();
    match estimator {
        Estimator::Mirror(bp) => {
            let out = run_mirror(inst, x, bp)?;
            Ok(Evaluation {
                observables: compute_from_marginals(inst, x, &out.marginals, source, out.report.converged),
                report: Some(out.report),
                sampled: None,
            })
        }
        Estimator::FixedT { t, bp } => {
            let out = run_fixed_t(inst, x, t, bp)?;
            Ok(Evaluation {
                observables: compute_from_marginals(inst, x, &out.marginals, source, out.report.converged),
                report: Some(out.report),
                sampled: None,
            })
        }
        Estimator::ExactAt { t, limits } => {
            let r = exact_observables(inst, x, t, *limits)?;
            Ok(Evaluation {
                observables: compute_exact(inst, x, r.means, source)?,
                report: None,
                sampled: None,
            })
        }
        Estimator::Exact(limits) => {
            let r = exact_expectation(inst, x, *limits)?;
            Ok(Evaluation {
                observables: compute_exact(inst, x, r.means, source)?,
                report: None,
                sampled: None,
            })
        }
        Estimator::Sampled { samples, seed, limits } => {
            let avg = crate::enumerate::sampled_average(inst, x, *samples, *seed, *limits)?;
            Ok(Evaluation {
                observables: compute_exact(inst, x, avg.means(), source)?,
                report: None,
                sampled: Some(avg),
            })
        }
        Estimator::SampledBp { samples, seed, bp } => {
            let (avg, converged) = sampled_bp_average(inst, x, *samples, *seed, bp)?;
            let mut obs = compute_exact(inst, x, avg.means(), source)?;
            obs.converged = converged;
            Ok(Evaluation {
                observables: obs,
                report: None,
                sampled: Some(avg),
            })
        }
    }
}
