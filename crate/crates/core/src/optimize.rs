//! Search over activation configurations: greedy switch-off decimation
//! and exhaustive search for small unit counts.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::bp::{run_mirror, run_mirror_from, MessageSet};
use crate::error::{Error, Result};
use crate::game::ServiceConfig;
use crate::instance::{Instance, UnitId};
use crate::observables::{compute_from_marginals, evaluate, Estimator, ObservableSet};

/// Largest unit count accepted by [`exhaustive_x`].
pub const MAX_EXHAUSTIVE_UNITS: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Switch units off until none is left.
    None,
    /// Stop after this many switch-offs.
    MaxSteps(usize),
    /// Stop before the first step whose cumulative relative drop exceeds the threshold.
    CumulativeRelDrop(f64),
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::CumulativeRelDrop(0.005)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreedyParams {
    pub stop: StopRule,
    /// Start each mirror candidate from the messages of the current
    /// configuration instead of uniform messages.
    pub warm_start: bool,
}

impl Default for GreedyParams {
    fn default() -> Self {
        GreedyParams { stop: StopRule::default(), warm_start: true }
    }
}

#[derive(Clone, Debug)]
pub struct DecimationStep {
    pub switched_off: UnitId,
    pub x_after: ServiceConfig,
    pub observables: ObservableSet,
    pub o_before: f64,
    pub drop_abs: f64,
    pub drop_rel_cumulative: f64,
    /// Candidates left out of the argmin because their estimate was unusable.
    pub flagged: Vec<UnitId>,
}

#[derive(Clone, Debug)]
pub struct DecimationTrajectory {
    pub n_units: usize,
    pub initial: ObservableSet,
    pub steps: Vec<DecimationStep>,
    /// Number of leading steps accepted by the stop rule.
    pub chosen_stop: usize,
}

impl DecimationTrajectory {
    /// Number of leading steps a rule would keep, applied after the fact.
    pub fn stop_index(&self, rule: StopRule) -> usize {
        match rule {
            StopRule::None => self.steps.len(),
            StopRule::MaxSteps(k) => k.min(self.steps.len()),
            StopRule::CumulativeRelDrop(theta) => self
                .steps
                .iter()
                .position(|st| st.drop_rel_cumulative > theta)
                .unwrap_or(self.steps.len()),
        }
    }

    /// Configuration after the accepted steps.
    pub fn chosen_x(&self) -> ServiceConfig {
        match self.chosen_stop {
            0 => ServiceConfig::all_on(self.n_units),
            k => self.steps[k - 1].x_after.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,unit_off,O_before,O_after,drop_abs,drop_rel_cum")?;
        for (j, st) in self.steps.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                j + 1,
                st.switched_off.index(),
                st.o_before,
                st.observables.osat,
                st.drop_abs,
                st.drop_rel_cumulative
            )?;
        }
        Ok(())
    }
}

fn usable(r: Result<ObservableSet>) -> Result<Option<ObservableSet>> {
    match r {
        Ok(o) if o.converged => Ok(Some(o)),
        Ok(_) | Err(Error::Undefined(_)) | Err(Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

type Candidate = (Option<ObservableSet>, Option<MessageSet>);

fn evaluate_candidate(inst: &Instance, x: &ServiceConfig, estimator: &Estimator, start: Option<&MessageSet>) -> Result<Candidate> {
    match (estimator, start) {
        (Estimator::Mirror(bp), Some(start)) => match run_mirror_from(inst, x, bp, start) {
            Ok(out) => {
                let obs = compute_from_marginals(inst, x, &out.marginals, estimator.source(), out.report.converged);
                Ok((usable(Ok(obs))?, Some(out.messages)))
            }
            Err(e) => Ok((usable(Err(e))?, None)),
        },
        _ => Ok((usable(evaluate(inst, x, estimator).map(|e| e.observables))?, None)),
    }
}

/// Starting from every unit on, repeatedly switches off the unit whose
/// removal costs the least expected satisfaction.
pub fn greedy_decimation(inst: &Instance, estimator: &Estimator, params: &GreedyParams) -> Result<DecimationTrajectory> {
    let stop = params.stop;
    if let StopRule::CumulativeRelDrop(theta) = stop {
        if !(theta >= 0.0) {
            return Err(Error::Param(format!("drop threshold must be non-negative, got {theta}")));
        }
    }
    let mut x = ServiceConfig::all_on(inst.n_units());
    let (initial, mut messages) = match estimator {
        Estimator::Mirror(bp) if params.warm_start => {
            let out = run_mirror(inst, &x, bp)?;
            let obs = compute_from_marginals(inst, &x, &out.marginals, estimator.source(), out.report.converged);
            (obs, Some(out.messages))
        }
        _ => (evaluate(inst, &x, estimator)?.observables, None),
    };
    let o0 = initial.osat;
    let mut o_prev = o0;
    let mut steps = Vec::new();

    while x.count_on() > 0 {
        if let StopRule::MaxSteps(k) = stop {
            if steps.len() >= k {
                break;
            }
        }
        let on: Vec<UnitId> = x.on_units().collect();
        let mut evals: Vec<Candidate> = on
            .par_iter()
            .map(|&s| evaluate_candidate(inst, &x.with(s, false), estimator, messages.as_ref()))
            .collect::<Result<_>>()?;

        let mut best: Option<(usize, ObservableSet)> = None;
        let mut flagged = Vec::new();
        for (i, (&s, ev)) in on.iter().zip(&evals).enumerate() {
            match ev.0 {
                None => flagged.push(s),
                Some(o) => {
                    if best.map_or(true, |(_, b)| o_prev - o.osat < o_prev - b.osat) {
                        best = Some((i, o));
                    }
                }
            }
        }
        let (i, obs) = best.ok_or_else(|| {
            Error::Degenerate(format!("step {}: every candidate evaluation was unusable", steps.len() + 1))
        })?;
        let s = on[i];
        if messages.is_some() {
            messages = evals.swap_remove(i).1;
        }
        x.set(s, false);
        let drop_rel_cumulative = if o0 != 0.0 { (o0 - obs.osat) / o0.abs() } else { 0.0 };
        steps.push(DecimationStep {
            switched_off: s,
            x_after: x.clone(),
            observables: obs,
            o_before: o_prev,
            drop_abs: o_prev - obs.osat,
            drop_rel_cumulative,
            flagged,
        });
        o_prev = obs.osat;
        if let StopRule::CumulativeRelDrop(theta) = stop {
            if drop_rel_cumulative > theta {
                break;
            }
        }
    }

    let mut traj = DecimationTrajectory { n_units: inst.n_units(), initial, steps, chosen_stop: 0 };
    traj.chosen_stop = traj.stop_index(stop);
    Ok(traj)
}

#[derive(Clone, Debug)]
pub struct ExhaustiveResult {
    pub best_x: ServiceConfig,
    pub best: ObservableSet,
    /// Every configuration in lexicographic order of its 0/1 string,
    /// with `None` where the estimate was unusable.
    pub table: Vec<(ServiceConfig, Option<ObservableSet>)>,
}

impl ExhaustiveResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,W,N,Osat,F,energy,converged")?;
        for (x, o) in &self.table {
            match o {
                Some(o) => writeln!(out, "{},{},{},{},{},{},{}", x, o.w, o.n, o.osat, o.f, o.energy, o.converged)?,
                None => writeln!(out, "{x},,,,,,false")?,
            }
        }
        Ok(())
    }
}

/// Configuration `i` in lexicographic order, unit 0 being the leading digit.
fn lex_config(i: u64, n_units: usize) -> ServiceConfig {
    ServiceConfig::new((0..n_units).map(|s| (i >> (n_units - 1 - s)) & 1 == 1).collect())
}

/// Evaluates the full objective on every configuration and returns the
/// best one, the lexicographically smallest among ties.
pub fn exhaustive_x(inst: &Instance, estimator: &Estimator) -> Result<ExhaustiveResult> {
    let n = inst.n_units();
    if n > MAX_EXHAUSTIVE_UNITS {
        return Err(Error::Resource {
            what: "exhaustive configuration search units",
            value: n as f64,
            limit: MAX_EXHAUSTIVE_UNITS as f64,
        });
    }
    let configs: Vec<ServiceConfig> = (0..1u64 << n).map(|i| lex_config(i, n)).collect();
    let values: Vec<Option<ObservableSet>> = configs
        .par_iter()
        .map(|x| usable(evaluate(inst, x, estimator).map(|e| e.observables)))
        .collect::<Result<_>>()?;

    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(o) = v {
            if best.map_or(true, |b| o.f > values[b].unwrap().f) {
                best = Some(i);
            }
        }
    }
    let b = best.ok_or_else(|| Error::Degenerate("no configuration has a usable estimate".into()))?;
    Ok(ExhaustiveResult {
        best_x: configs[b].clone(),
        best: values[b].unwrap(),
        table: configs.into_iter().zip(values).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lex_order_puts_unit_zero_first() {
        let xs: Vec<String> = (0..4).map(|i| lex_config(i, 2).to_string()).collect();
        assert_eq!(xs, ["00", "01", "10", "11"]);
    }

    #[test]
    fn stop_index_applies_rules() {
        let o = ObservableSet {
            w: 0.0,
            n: 0.0,
            osat: 0.0,
            present_disconnected: 0.0,
            f: 0.0,
            energy: 0.0,
            source: crate::observables::Source::Exact,
            converged: true,
        };
        let step = |d| DecimationStep {
            switched_off: UnitId(0),
            x_after: ServiceConfig::all_off(3),
            observables: o,
            o_before: 0.0,
            drop_abs: 0.0,
            drop_rel_cumulative: d,
            flagged: vec![],
        };
        let t = DecimationTrajectory { n_units: 3, initial: o, steps: vec![step(0.001), step(0.004), step(0.02)], chosen_stop: 0 };
        assert_eq!(t.stop_index(StopRule::None), 3);
        assert_eq!(t.stop_index(StopRule::MaxSteps(2)), 2);
        assert_eq!(t.stop_index(StopRule::MaxSteps(9)), 3);
        assert_eq!(t.stop_index(StopRule::default()), 2);
    }
}
