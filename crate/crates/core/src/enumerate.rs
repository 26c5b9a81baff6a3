//! Exact oracle: exhaustive equilibrium enumeration at fixed activation and
//! presence, and explicit sampling over presence patterns.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{fits, z_to_y, EdgeAssignment, PresencePattern, ServiceConfig, StrategyProfile};
use crate::instance::{Instance, UnitId, UserId};

/// Search-size guard for the enumerator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerationLimits {
    /// Bound on both the raw search space (product of per-user option
    /// counts) and the number of nodes actually visited.
    pub budget: u64,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        EnumerationLimits { budget: 1_000_000_000 }
    }
}

#[derive(Clone, Copy)]
struct Opt {
    unit: usize,
    w_us: u32,
    w_su: u32,
}

/// Depth-first search over present users' choices with capacity pruning and
/// best-response pruning on units whose load is final.
struct Search<'a> {
    inst: &'a Instance,
    x: &'a ServiceConfig,
    order: Vec<usize>,
    // options per position: reachable units that could ever fit
    options: Vec<Vec<Opt>>,
    // workload still able to arrive at each unit from unplaced users
    pending: Vec<u64>,
    loads: Vec<u64>,
    // chosen (unit, w_us) per user
    choice: Vec<Option<(usize, u32)>>,
    present: Vec<bool>,
    placed: Vec<bool>,
    nodes: u64,
    budget: u64,
    neg_omega: f64,
}

impl<'a> Search<'a> {
    fn new(inst: &'a Instance, x: &'a ServiceConfig, t: &PresencePattern, limits: EnumerationLimits) -> Result<Self> {
        x.check_len(inst)?;
        t.check_len(inst)?;
        let present: Vec<bool> = t.bits().to_vec();

        // breadth-first order keeps neighbourhoods together, so unit loads
        // become final early
        let mut order = Vec::new();
        let mut seen_user = vec![false; inst.n_users()];
        let mut seen_unit = vec![false; inst.n_units()];
        let mut queue = std::collections::VecDeque::new();
        for root in 0..inst.n_users() {
            if seen_user[root] {
                continue;
            }
            seen_user[root] = true;
            queue.push_back(root);
            while let Some(u) = queue.pop_front() {
                if present[u] {
                    order.push(u);
                }
                for &e in inst.user_edges(UserId(u)) {
                    let s = inst.edge(e).unit.0;
                    if seen_unit[s] {
                        continue;
                    }
                    seen_unit[s] = true;
                    for &f in inst.unit_edges(UnitId(s)) {
                        let v = inst.edge(f).user.0;
                        if !seen_user[v] {
                            seen_user[v] = true;
                            queue.push_back(v);
                        }
                    }
                }
            }
        }

        let mut space = 1f64;
        let options: Vec<Vec<Opt>> = order
            .iter()
            .map(|&u| {
                inst.user_edges(UserId(u))
                    .iter()
                    .map(|&e| inst.edge(e))
                    .filter(|edge| fits(inst, x, edge.unit, 0, edge.w_su))
                    .map(|edge| Opt {
                        unit: edge.unit.0,
                        w_us: edge.w_us,
                        w_su: edge.w_su,
                    })
                    .collect()
            })
            .collect();
        for opts in &options {
            space *= (opts.len() + 1) as f64;
        }
        if space > limits.budget as f64 {
            return Err(Error::Resource {
                what: "enumeration search space",
                value: space,
                limit: limits.budget as f64,
            });
        }

        let mut pending = vec![0u64; inst.n_units()];
        for opts in &options {
            for o in opts {
                pending[o.unit] += u64::from(o.w_su);
            }
        }

        Ok(Search {
            inst,
            x,
            order,
            options,
            pending,
            placed: vec![false; inst.n_users()],
            loads: vec![0; inst.n_units()],
            choice: vec![None; inst.n_users()],
            present,
            nodes: 0,
            budget: limits.budget,
            neg_omega: -inst.omega(),
        })
    }

    // Whether `u`'s current choice can still be a best response with
    // respect to unit `s`.
    #[inline]
    fn stable_against(&self, u: usize, s: usize, w_us: u32, w_su: u32) -> bool {
        let current = match self.choice[u] {
            Some((cs, _)) if cs == s => return true,
            Some((_, w)) => f64::from(w),
            None => self.neg_omega,
        };
        if f64::from(w_us) <= current {
            return true;
        }
        // violated only once `s` is sure to stay available for `u`
        !fits(self.inst, self.x, UnitId(s), self.loads[s] + self.pending[s], w_su)
    }

    fn run<F: FnMut(&Self)>(&mut self, visit: &mut F) -> Result<()> {
        self.descend(0, visit)
    }

    fn descend<F: FnMut(&Self)>(&mut self, pos: usize, visit: &mut F) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::Resource {
                what: "enumeration nodes visited",
                value: self.nodes as f64,
                limit: self.budget as f64,
            });
        }
        if pos == self.order.len() {
            visit(self);
            return Ok(());
        }
        let u = self.order[pos];
        let n_opts = self.options[pos].len();
        for k in 0..n_opts {
            let o = self.options[pos][k];
            self.pending[o.unit] -= u64::from(o.w_su);
        }
        self.placed[u] = true;
        let mut result = Ok(());
        for k in 0..=n_opts {
            let pick = if k < n_opts { Some(self.options[pos][k]) } else { None };
            if let Some(o) = pick {
                if !fits(self.inst, self.x, UnitId(o.unit), self.loads[o.unit], o.w_su) {
                    continue;
                }
                self.loads[o.unit] += u64::from(o.w_su);
                self.choice[u] = Some((o.unit, o.w_us));
            } else {
                self.choice[u] = None;
            }
            if self.consistent_after(u) {
                result = self.descend(pos + 1, visit);
            }
            if let Some(o) = pick {
                self.loads[o.unit] -= u64::from(o.w_su);
            }
            self.choice[u] = None;
            if result.is_err() {
                break;
            }
        }
        self.placed[u] = false;
        for k in 0..n_opts {
            let o = self.options[pos][k];
            self.pending[o.unit] += u64::from(o.w_su);
        }
        result
    }

    // Re-checks placed neighbours of every unit whose bounds moved when `u`
    // was placed.
    fn consistent_after(&self, u: usize) -> bool {
        let inst = self.inst;
        for &e in inst.user_edges(UserId(u)) {
            let s = inst.edge(e).unit.0;
            for &f in inst.unit_edges(UnitId(s)) {
                let edge = inst.edge(f);
                let v = edge.user.0;
                if self.placed[v] && self.present[v] && !self.stable_against(v, s, edge.w_us, edge.w_su) {
                    return false;
                }
            }
        }
        true
    }

    fn profile(&self) -> StrategyProfile {
        StrategyProfile(self.choice.iter().map(|c| c.map(|(s, _)| UnitId(s))).collect())
    }
}

/// Calls `visit` once per equilibrium profile at (`x`, `t`) and returns how
/// many there are.
pub fn visit_nash<F: FnMut(&StrategyProfile)>(
    inst: &Instance,
    x: &ServiceConfig,
    t: &PresencePattern,
    limits: EnumerationLimits,
    mut visit: F,
) -> Result<u64> {
    let mut search = Search::new(inst, x, t, limits)?;
    let mut count = 0u64;
    search.run(&mut |s: &Search| {
        count += 1;
        visit(&s.profile());
    })?;
    Ok(count)
}

/// All equilibria at (`x`, `t`) as edge assignments; the count is the
/// partition function Z(x, t).
pub fn enumerate_nash(
    inst: &Instance,
    x: &ServiceConfig,
    t: &PresencePattern,
    limits: EnumerationLimits,
) -> Result<Vec<EdgeAssignment>> {
    let mut out = Vec::new();
    visit_nash(inst, x, t, limits, |z| {
        out.push(z_to_y(inst, x, t, z).expect("equilibria are feasible"));
    })?;
    Ok(out)
}

/// Per-equilibrium observables averaged uniformly over the equilibrium set.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct NashMeans {
    /// Connected workload.
    pub w: f64,
    /// Users whose every edge is blocked.
    pub n: f64,
    /// Satisfaction of connected users.
    pub osat: f64,
    /// Present users left without a unit.
    pub present_disconnected: f64,
}

impl NashMeans {
    fn scaled(self, k: f64) -> Self {
        NashMeans {
            w: self.w * k,
            n: self.n * k,
            osat: self.osat * k,
            present_disconnected: self.present_disconnected * k,
        }
    }

    fn add(self, o: Self) -> Self {
        NashMeans {
            w: self.w + o.w,
            n: self.n + o.n,
            osat: self.osat + o.osat,
            present_disconnected: self.present_disconnected + o.present_disconnected,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactResult {
    /// Number of equilibria.
    pub z: u64,
    /// `None` when there is no equilibrium to average over.
    pub means: Option<NashMeans>,
}

impl ExactResult {
    pub fn is_defined(&self) -> bool {
        self.means.is_some()
    }
}

pub fn exact_observables(
    inst: &Instance,
    x: &ServiceConfig,
    t: &PresencePattern,
    limits: EnumerationLimits,
) -> Result<ExactResult> {
    let mut search = Search::new(inst, x, t, limits)?;
    let mut z = 0u64;
    let mut sum = NashMeans::default();
    search.run(&mut |s: &Search| {
        z += 1;
        let inst = s.inst;
        let mut w = 0u64;
        let mut osat = 0u64;
        let mut n = 0u64;
        let mut pd = 0u64;
        for u in 0..inst.n_users() {
            match s.choice[u] {
                Some((unit, w_us)) => {
                    osat += u64::from(w_us);
                    let e = inst.edge_between(UserId(u), UnitId(unit)).expect("reachable");
                    w += u64::from(inst.edge(e).w_su);
                }
                None => {
                    if s.present[u] {
                        pd += 1;
                    }
                    let all_blocked = inst.user_edges(UserId(u)).iter().all(|&e| {
                        let edge = inst.edge(e);
                        !fits(inst, s.x, edge.unit, s.loads[edge.unit.0], edge.w_su)
                    });
                    if all_blocked {
                        n += 1;
                    }
                }
            }
        }
        sum = sum.add(NashMeans {
            w: w as f64,
            n: n as f64,
            osat: osat as f64,
            present_disconnected: pd as f64,
        });
    })?;
    let means = (z > 0).then(|| sum.scaled(1.0 / z as f64));
    Ok(ExactResult { z, means })
}

/// Fraction of equilibria giving each label to each edge, as
/// `[blocked, free, used]` triples. `None` when there is no equilibrium.
pub fn exact_edge_marginals(
    inst: &Instance,
    x: &ServiceConfig,
    t: &PresencePattern,
    limits: EnumerationLimits,
) -> Result<Option<Vec<[f64; 3]>>> {
    let mut counts = vec![[0u64; 3]; inst.n_edges()];
    let z = visit_nash(inst, x, t, limits, |z| {
        let y = z_to_y(inst, x, t, z).expect("equilibria are feasible");
        for (e, label) in y.0.iter().enumerate() {
            counts[e][label.slot()] += 1;
        }
    })?;
    if z == 0 {
        return Ok(None);
    }
    let zf = z as f64;
    Ok(Some(
        counts
            .into_iter()
            .map(|c| [c[0] as f64 / zf, c[1] as f64 / zf, c[2] as f64 / zf])
            .collect(),
    ))
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Estimate { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Estimate { mean, stderr: (var / n as f64).sqrt() }
    }
}

/// Averages over a sample of presence patterns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampledAverage {
    pub samples: usize,
    /// Patterns without any equilibrium, left out of the means.
    pub zero_z: usize,
    pub w: Estimate,
    pub n: Estimate,
    pub osat: Estimate,
    pub present_disconnected: Estimate,
}

impl SampledAverage {
    pub fn means(&self) -> Option<NashMeans> {
        (self.samples > self.zero_z).then_some(NashMeans {
            w: self.w.mean,
            n: self.n.mean,
            osat: self.osat.mean,
            present_disconnected: self.present_disconnected.mean,
        })
    }
}

/// `count` i.i.d. presence patterns drawn from a seeded stream.
pub fn sample_patterns(inst: &Instance, count: usize, seed: u64) -> Vec<PresencePattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| PresencePattern::sample(inst, &mut rng)).collect()
}

/// Evaluates `per_pattern` once per distinct pattern (in parallel) and
/// averages the defined results over the whole sample in pattern order.
pub fn average_over_patterns<F>(patterns: &[PresencePattern], per_pattern: F) -> Result<SampledAverage>
where
    F: Fn(&PresencePattern) -> Result<Option<NashMeans>> + Sync,
{
    let mut slot_of: HashMap<&PresencePattern, usize> = HashMap::new();
    let mut distinct: Vec<&PresencePattern> = Vec::new();
    let slots: Vec<usize> = patterns
        .iter()
        .map(|t| {
            *slot_of.entry(t).or_insert_with(|| {
                distinct.push(t);
                distinct.len() - 1
            })
        })
        .collect();
    let values: Vec<Option<NashMeans>> = distinct
        .par_iter()
        .map(|t| per_pattern(t))
        .collect::<Result<_>>()?;
    let defined: Vec<NashMeans> = slots.iter().filter_map(|&i| values[i]).collect();
    let col = |f: fn(&NashMeans) -> f64| Estimate::from_samples(&defined.iter().map(f).collect::<Vec<_>>());
    Ok(SampledAverage {
        samples: patterns.len(),
        zero_z: patterns.len() - defined.len(),
        w: col(|m| m.w),
        n: col(|m| m.n),
        osat: col(|m| m.osat),
        present_disconnected: col(|m| m.present_disconnected),
    })
}

/// Explicit sampling over presence with exhaustive enumeration inside.
pub fn sampled_average(
    inst: &Instance,
    x: &ServiceConfig,
    sample_size: usize,
    seed: u64,
    limits: EnumerationLimits,
) -> Result<SampledAverage> {
    if sample_size == 0 {
        return Err(Error::Param("sample size must be at least 1".into()));
    }
    x.check_len(inst)?;
    let patterns = sample_patterns(inst, sample_size, seed);
    average_over_patterns(&patterns, |t| Ok(exact_observables(inst, x, t, limits)?.means))
}

/// Exact presence average by summing over all 2^U patterns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PresenceExpectation {
    /// Conditional on patterns that admit an equilibrium.
    pub means: Option<NashMeans>,
    /// Probability mass of patterns without any equilibrium.
    pub excluded_mass: f64,
}

/// Largest user count accepted by [`exact_expectation`].
pub const MAX_FULL_SUM_USERS: usize = 20;

pub fn exact_expectation(inst: &Instance, x: &ServiceConfig, limits: EnumerationLimits) -> Result<PresenceExpectation> {
    let n = inst.n_users();
    if n > MAX_FULL_SUM_USERS {
        return Err(Error::Resource {
            what: "users for full presence summation",
            value: n as f64,
            limit: MAX_FULL_SUM_USERS as f64,
        });
    }
    x.check_len(inst)?;
    let parts: Vec<(f64, Option<NashMeans>)> = (0..1u64 << n)
        .into_par_iter()
        .map(|mask| {
            let t = PresencePattern::from_mask(mask, n);
            let prob = t.probability(inst);
            if prob == 0.0 {
                return Ok((0.0, None));
            }
            Ok((prob, exact_observables(inst, x, &t, limits)?.means))
        })
        .collect::<Result<_>>()?;
    let mut acc = NashMeans::default();
    let mut mass = 0.0;
    let mut excluded = 0.0;
    for (prob, m) in parts {
        match m {
            Some(m) => {
                acc = acc.add(m.scaled(prob));
                mass += prob;
            }
            None => excluded += prob,
        }
    }
    Ok(PresenceExpectation {
        means: (mass > 0.0).then(|| acc.scaled(1.0 / mass)),
        excluded_mass: excluded,
    })
}
