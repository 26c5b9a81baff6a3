//! Strategies, payoffs and the Nash-equilibrium predicate, in both the
//! per-user choice representation and the three-state edge labelling.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::{Instance, UnitId, UserId};

/// Activation vector over units.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ServiceConfig(Vec<bool>);

impl ServiceConfig {
    pub fn new(bits: Vec<bool>) -> Self {
        ServiceConfig(bits)
    }

    pub fn all_on(n_units: usize) -> Self {
        ServiceConfig(vec![true; n_units])
    }

    pub fn all_off(n_units: usize) -> Self {
        ServiceConfig(vec![false; n_units])
    }

    /// Bit `s` of `mask` gives unit `s`.
    pub fn from_mask(mask: u64, n_units: usize) -> Self {
        ServiceConfig((0..n_units).map(|s| mask >> s & 1 == 1).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn is_on(&self, s: UnitId) -> bool {
        self.0[s.0]
    }

    pub fn set(&mut self, s: UnitId, on: bool) {
        self.0[s.0] = on;
    }

    pub fn with(&self, s: UnitId, on: bool) -> Self {
        let mut x = self.clone();
        x.set(s, on);
        x
    }

    pub fn count_on(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn on_units(&self) -> impl Iterator<Item = UnitId> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(s, _)| UnitId(s))
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn check_len(&self, inst: &Instance) -> Result<()> {
        if self.0.len() != inst.n_units() {
            return Err(Error::Domain(format!(
                "configuration has {} entries for {} units",
                self.0.len(),
                inst.n_units()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ServiceConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for ServiceConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_bits(s).map(ServiceConfig)
    }
}

/// Presence realization over users.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PresencePattern(Vec<bool>);

impl PresencePattern {
    pub fn new(bits: Vec<bool>) -> Self {
        PresencePattern(bits)
    }

    pub fn all_present(n_users: usize) -> Self {
        PresencePattern(vec![true; n_users])
    }

    pub fn from_mask(mask: u64, n_users: usize) -> Self {
        PresencePattern((0..n_users).map(|u| mask >> u & 1 == 1).collect())
    }

    /// Independent Bernoulli draw with each user's presence probability.
    pub fn sample<R: rand::Rng>(inst: &Instance, rng: &mut R) -> Self {
        PresencePattern(inst.users().iter().map(|u| rng.gen::<f64>() < u.p).collect())
    }

    /// Probability of this pattern under the instance's presence model.
    pub fn probability(&self, inst: &Instance) -> f64 {
        self.0
            .iter()
            .zip(inst.users())
            .map(|(&t, u)| if t { u.p } else { 1.0 - u.p })
            .product()
    }

    #[inline]
    pub fn is_present(&self, u: UserId) -> bool {
        self.0[u.0]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn check_len(&self, inst: &Instance) -> Result<()> {
        if self.0.len() != inst.n_users() {
            return Err(Error::Domain(format!(
                "presence pattern has {} entries for {} users",
                self.0.len(),
                inst.n_users()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for PresencePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for PresencePattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_bits(s).map(PresencePattern)
    }
}

fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.trim()
        .chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Param(format!("expected 0/1 string, found {other:?}"))),
        })
        .collect()
}

/// Each user's chosen unit, `None` when disconnected.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StrategyProfile(pub Vec<Option<UnitId>>);

impl StrategyProfile {
    pub fn disconnected(n_users: usize) -> Self {
        StrategyProfile(vec![None; n_users])
    }

    pub fn choice(&self, u: UserId) -> Option<UnitId> {
        self.0[u.0]
    }
}

/// Three-state edge label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(i8)]
pub enum Label {
    /// Unit inactive, or saturated for this user.
    Blocked = -1,
    /// Unit could take the user but is not used.
    Free = 0,
    Used = 1,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Blocked, Label::Free, Label::Used];

    /// Position in `[-1, 0, 1]`-ordered triples.
    #[inline]
    pub fn slot(self) -> usize {
        (self as i8 + 1) as usize
    }

    pub fn value(self) -> i8 {
        self as i8
    }
}

/// One label per edge, indexed like [`Instance::edges`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeAssignment(pub Vec<Label>);

impl EdgeAssignment {
    pub fn label(&self, e: usize) -> Label {
        self.0[e]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Payoff value; `NegInf` orders below every finite value.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum Payoff {
    NegInf,
    Value(f64),
}

fn check_inputs(inst: &Instance, x: &ServiceConfig, t: &PresencePattern, z: &StrategyProfile) -> Result<()> {
    x.check_len(inst)?;
    t.check_len(inst)?;
    if z.0.len() != inst.n_users() {
        return Err(Error::Domain(format!(
            "profile has {} entries for {} users",
            z.0.len(),
            inst.n_users()
        )));
    }
    for u in inst.user_ids() {
        if let Some(s) = z.choice(u) {
            if inst.edge_between(u, s).is_none() {
                return Err(Error::Domain(format!("{u} chose {s}, which it cannot reach")));
            }
        }
    }
    Ok(())
}

/// Load on every unit implied by a profile.
fn unit_loads(inst: &Instance, z: &StrategyProfile) -> Vec<u64> {
    let mut load = vec![0u64; inst.n_units()];
    for u in inst.user_ids() {
        if let Some(s) = z.choice(u) {
            let e = inst.edge_between(u, s).expect("checked reachable");
            load[s.0] += u64::from(inst.edge(e).w_su);
        }
    }
    load
}

/// Whether unit `s` can accept `w_su` more on top of `load` under `x`.
#[inline]
pub(crate) fn fits(inst: &Instance, x: &ServiceConfig, s: UnitId, load: u64, w_su: u32) -> bool {
    x.is_on(s) && load + u64::from(w_su) <= u64::from(inst.unit(s).capacity)
}

/// Payoff of user `u` for the action it plays in `z`, others fixed.
pub fn payoff(
    inst: &Instance,
    x: &ServiceConfig,
    t: &PresencePattern,
    z: &StrategyProfile,
    u: UserId,
) -> Result<Payoff> {
    check_inputs(inst, x, t, z)?;
    let loads = unit_loads(inst, z);
    Ok(payoff_with_loads(inst, x, t, z, &loads, u, z.choice(u)))
}

// Payoff of `u` playing `action` while the rest play `z`.
fn payoff_with_loads(
    inst: &Instance,
    x: &ServiceConfig,
    t: &PresencePattern,
    z: &StrategyProfile,
    loads: &[u64],
    u: UserId,
    action: Option<UnitId>,
) -> Payoff {
    let present = t.is_present(u);
    match action {
        None if present => Payoff::Value(-inst.omega()),
        None => Payoff::Value(0.0),
        Some(_) if !present => Payoff::NegInf,
        Some(s) => {
            let e = inst.edge_between(u, s).expect("checked reachable");
            let edge = inst.edge(e);
            let mut others = loads[s.0];
            if z.choice(u) == Some(s) {
                others -= u64::from(edge.w_su);
            }
            if fits(inst, x, s, others, edge.w_su) {
                Payoff::Value(f64::from(edge.w_us))
            } else {
                Payoff::NegInf
            }
        }
    }
}

/// True iff no user can strictly improve by deviating unilaterally.
pub fn is_nash(inst: &Instance, x: &ServiceConfig, t: &PresencePattern, z: &StrategyProfile) -> Result<bool> {
    check_inputs(inst, x, t, z)?;
    let loads = unit_loads(inst, z);
    for u in inst.user_ids() {
        let current = payoff_with_loads(inst, x, t, z, &loads, u, z.choice(u));
        let alternatives = std::iter::once(None)
            .chain(inst.user_edges(u).iter().map(|&e| Some(inst.edge(e).unit)));
        for alt in alternatives {
            if payoff_with_loads(inst, x, t, z, &loads, u, alt) > current {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Edge labelling of a capacity-feasible profile.
pub fn z_to_y(inst: &Instance, x: &ServiceConfig, t: &PresencePattern, z: &StrategyProfile) -> Result<EdgeAssignment> {
    check_inputs(inst, x, t, z)?;
    let loads = unit_loads(inst, z);
    for u in inst.user_ids() {
        if let Some(s) = z.choice(u) {
            if !t.is_present(u) {
                return Err(Error::Domain(format!("absent {u} is connected to {s}")));
            }
        }
    }
    for s in inst.unit_ids() {
        if loads[s.0] > 0 && !fits(inst, x, s, loads[s.0], 0) {
            return Err(Error::Domain(format!("load {} exceeds what {s} can carry", loads[s.0])));
        }
    }
    let labels = inst
        .edges()
        .iter()
        .map(|edge| {
            if z.choice(edge.user) == Some(edge.unit) {
                Label::Used
            } else if fits(inst, x, edge.unit, loads[edge.unit.0], edge.w_su) {
                Label::Free
            } else {
                Label::Blocked
            }
        })
        .collect();
    Ok(EdgeAssignment(labels))
}

/// Inverse of [`z_to_y`] on assignments with at most one used edge per user.
pub fn y_to_z(inst: &Instance, y: &EdgeAssignment) -> StrategyProfile {
    let mut z = StrategyProfile::disconnected(inst.n_users());
    for (e, edge) in inst.edges().iter().enumerate() {
        if y.label(e) == Label::Used {
            z.0[edge.user.0] = Some(edge.unit);
        }
    }
    z
}

/// The edge-label constraint system whose solutions are exactly the
/// equilibria:
///
/// 1. a user uses at most one unit, none when absent;
/// 2. used workloads fit each unit's active capacity;
/// 3. a used unit is at least as good as every free one;
/// 4. non-used labels match availability (blocked iff it would not fit);
/// 5. a present user with any free unit uses some unit.
pub fn check_edge_constraints(inst: &Instance, x: &ServiceConfig, t: &PresencePattern, y: &EdgeAssignment) -> bool {
    if x.len() != inst.n_units() || t.len() != inst.n_users() || y.len() != inst.n_edges() {
        return false;
    }
    let mut loads = vec![0u64; inst.n_units()];
    for (e, edge) in inst.edges().iter().enumerate() {
        if y.label(e) == Label::Used {
            loads[edge.unit.0] += u64::from(edge.w_su);
        }
    }
    // C2
    for s in inst.unit_ids() {
        let cap = if x.is_on(s) { u64::from(inst.unit(s).capacity) } else { 0 };
        if loads[s.0] > cap {
            return false;
        }
    }
    for u in inst.user_ids() {
        let edges = inst.user_edges(u);
        let used: Vec<usize> = edges.iter().copied().filter(|&e| y.label(e) == Label::Used).collect();
        // C1
        if used.len() > usize::from(t.is_present(u)) {
            return false;
        }
        let mut any_free = false;
        for &e in edges {
            let edge = inst.edge(e);
            match y.label(e) {
                Label::Used => {}
                label => {
                    // C4
                    let available = fits(inst, x, edge.unit, loads[edge.unit.0], edge.w_su);
                    if available != (label == Label::Free) {
                        return false;
                    }
                    if label == Label::Free {
                        any_free = true;
                        // C3
                        if let Some(&ue) = used.first() {
                            if inst.edge(ue).w_us < edge.w_us {
                                return false;
                            }
                        }
                    }
                }
            }
        }
        // C5
        if t.is_present(u) && any_free && used.is_empty() {
            return false;
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq)]
pub enum DynamicsOutcome {
    Converged { profile: StrategyProfile, sweeps: usize },
    NoConvergence,
}

/// Asynchronous best-response dynamics from the all-disconnected profile.
/// Each sweep visits present users in a fresh seeded random order. Ties
/// keep the current action, then prefer the lowest unit id, then
/// disconnection.
pub fn best_response_dynamics(
    inst: &Instance,
    x: &ServiceConfig,
    t: &PresencePattern,
    seed: u64,
    max_steps: usize,
) -> Result<DynamicsOutcome> {
    if max_steps == 0 {
        return Err(Error::Param("max_steps must be at least 1".into()));
    }
    let mut z = StrategyProfile::disconnected(inst.n_users());
    check_inputs(inst, x, t, &z)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut loads = vec![0u64; inst.n_units()];
    let mut order: Vec<UserId> = inst.user_ids().filter(|&u| t.is_present(u)).collect();

    for sweep in 1..=max_steps {
        order.shuffle(&mut rng);
        for &u in &order {
            let current = z.choice(u);
            let mut best = current;
            let mut best_pay = payoff_with_loads(inst, x, t, &z, &loads, u, current);
            let mut units: Vec<UnitId> = inst.user_edges(u).iter().map(|&e| inst.edge(e).unit).collect();
            units.sort();
            let candidates = units.into_iter().map(Some).chain(std::iter::once(None));
            for alt in candidates {
                if alt == current {
                    continue;
                }
                let pay = payoff_with_loads(inst, x, t, &z, &loads, u, alt);
                if pay > best_pay {
                    best = alt;
                    best_pay = pay;
                }
            }
            if best != current {
                if let Some(s) = current {
                    let e = inst.edge_between(u, s).expect("reachable");
                    loads[s.0] -= u64::from(inst.edge(e).w_su);
                }
                if let Some(s) = best {
                    let e = inst.edge_between(u, s).expect("reachable");
                    loads[s.0] += u64::from(inst.edge(e).w_su);
                }
                z.0[u.0] = best;
            }
        }
        if is_nash(inst, x, t, &z)? {
            return Ok(DynamicsOutcome::Converged { profile: z, sweeps: sweep });
        }
    }
    Ok(DynamicsOutcome::NoConvergence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Edge, Unit, User};

    pub(crate) fn toy(users: &[(f64, &[(usize, u32, u32)])], caps: &[u32], omega: f64) -> Instance {
        let units = caps
            .iter()
            .map(|&c| Unit { x: 0.0, y: 0.0, capacity: c, cost: 1.0 })
            .collect();
        let mut edges = Vec::new();
        let mut us = Vec::new();
        for (u, (p, links)) in users.iter().enumerate() {
            us.push(User { x: 0.0, y: 0.0, p: *p });
            for &(s, w_us, w_su) in links.iter() {
                edges.push(Edge { user: UserId(u), unit: UnitId(s), w_us, w_su });
            }
        }
        Instance::new(us, units, edges, omega, 0.0, 10).unwrap()
    }

    fn pair() -> Instance {
        toy(&[(1.0, &[(0, 7, 3)]), (1.0, &[(0, 7, 3)])], &[5], 10.0)
    }

    fn present(n: usize) -> PresencePattern {
        PresencePattern::all_present(n)
    }

    #[test]
    fn payoff_cases() {
        let one = toy(&[(1.0, &[(0, 7, 3)])], &[5], 10.0);
        let x = ServiceConfig::all_on(1);
        let t = present(1);
        let on = StrategyProfile(vec![Some(UnitId(0))]);
        assert_eq!(payoff(&one, &x, &t, &on, UserId(0)).unwrap(), Payoff::Value(7.0));

        let tight = toy(&[(1.0, &[(0, 7, 3)])], &[2], 10.0);
        assert_eq!(payoff(&tight, &x, &t, &on, UserId(0)).unwrap(), Payoff::NegInf);

        let off = StrategyProfile(vec![None]);
        assert_eq!(payoff(&one, &x, &t, &off, UserId(0)).unwrap(), Payoff::Value(-10.0));

        let absent = PresencePattern::new(vec![false]);
        assert_eq!(payoff(&one, &x, &absent, &off, UserId(0)).unwrap(), Payoff::Value(0.0));
        assert_eq!(payoff(&one, &x, &absent, &on, UserId(0)).unwrap(), Payoff::NegInf);

        let bogus = StrategyProfile(vec![Some(UnitId(3))]);
        assert!(matches!(payoff(&one, &x, &t, &bogus, UserId(0)), Err(Error::Domain(_))));
    }

    #[test]
    fn neg_inf_orders_below_values() {
        assert!(Payoff::NegInf < Payoff::Value(-1e300));
        assert!(Payoff::Value(-10.0) < Payoff::Value(0.0));
    }

    #[test]
    fn pair_equilibria() {
        let inst = pair();
        let x = ServiceConfig::all_on(1);
        let t = present(2);
        let first = StrategyProfile(vec![Some(UnitId(0)), None]);
        let second = StrategyProfile(vec![None, Some(UnitId(0))]);
        let nobody = StrategyProfile(vec![None, None]);
        assert!(is_nash(&inst, &x, &t, &first).unwrap());
        assert!(is_nash(&inst, &x, &t, &second).unwrap());
        assert!(!is_nash(&inst, &x, &t, &nobody).unwrap());

        let y = z_to_y(&inst, &x, &t, &first).unwrap();
        assert_eq!(y.0, vec![Label::Used, Label::Blocked]);
        assert!(check_edge_constraints(&inst, &x, &t, &y));
    }

    #[test]
    fn absent_user_does_not_change_verdict() {
        let inst = toy(
            &[(1.0, &[(0, 7, 3)]), (1.0, &[(0, 7, 3)]), (0.5, &[(0, 9, 1)])],
            &[5],
            10.0,
        );
        let x = ServiceConfig::all_on(1);
        let t = PresencePattern::new(vec![true, true, false]);
        let z = StrategyProfile(vec![Some(UnitId(0)), None, None]);
        assert!(is_nash(&inst, &x, &t, &z).unwrap());
        let z = StrategyProfile(vec![None, None, None]);
        assert!(!is_nash(&inst, &x, &t, &z).unwrap());
    }

    #[test]
    fn inactive_unit_blocks_everyone() {
        let inst = pair();
        let x = ServiceConfig::all_off(1);
        let t = present(2);
        let z = StrategyProfile::disconnected(2);
        assert!(is_nash(&inst, &x, &t, &z).unwrap());
        let y = z_to_y(&inst, &x, &t, &z).unwrap();
        assert!(y.0.iter().all(|&l| l == Label::Blocked));
    }

    #[test]
    fn infeasible_profile_is_a_domain_error() {
        let inst = pair();
        let x = ServiceConfig::all_on(1);
        let z = StrategyProfile(vec![Some(UnitId(0)), Some(UnitId(0))]);
        assert!(matches!(z_to_y(&inst, &x, &present(2), &z), Err(Error::Domain(_))));
    }

    #[test]
    fn single_user_label_used() {
        let inst = toy(&[(1.0, &[(0, 7, 3)])], &[5], 10.0);
        let x = ServiceConfig::all_on(1);
        let z = StrategyProfile(vec![Some(UnitId(0))]);
        assert_eq!(z_to_y(&inst, &x, &present(1), &z).unwrap().0, vec![Label::Used]);
    }

    #[test]
    fn constraint_violations() {
        let inst = pair();
        let x = ServiceConfig::all_on(1);
        let t = present(2);
        // both used: capacity
        let y = EdgeAssignment(vec![Label::Used, Label::Used]);
        assert!(!check_edge_constraints(&inst, &x, &t, &y));
        // nobody connected although the unit is free
        let y = EdgeAssignment(vec![Label::Free, Label::Free]);
        assert!(!check_edge_constraints(&inst, &x, &t, &y));
        // used + free where the free label should be blocked
        let y = EdgeAssignment(vec![Label::Used, Label::Free]);
        assert!(!check_edge_constraints(&inst, &x, &t, &y));
    }

    #[test]
    fn worse_unit_while_better_is_free() {
        let inst = toy(&[(1.0, &[(0, 9, 1), (1, 2, 1)])], &[5, 5], 10.0);
        let x = ServiceConfig::all_on(2);
        let t = present(1);
        let z = StrategyProfile(vec![Some(UnitId(1))]);
        assert!(!is_nash(&inst, &x, &t, &z).unwrap());
        let e_best = inst.edge_between(UserId(0), UnitId(0)).unwrap();
        let mut y = vec![Label::Free; 2];
        y[1 - e_best] = Label::Used;
        assert!(!check_edge_constraints(&inst, &x, &t, &EdgeAssignment(y)));
    }

    #[test]
    fn dynamics_single_user() {
        let inst = toy(&[(1.0, &[(0, 7, 3)])], &[5], 10.0);
        let out = best_response_dynamics(&inst, &ServiceConfig::all_on(1), &present(1), 0, 10).unwrap();
        assert_eq!(
            out,
            DynamicsOutcome::Converged {
                profile: StrategyProfile(vec![Some(UnitId(0))]),
                sweeps: 1
            }
        );
    }

    #[test]
    fn dynamics_pair_reaches_both_equilibria() {
        let inst = pair();
        let x = ServiceConfig::all_on(1);
        let mut seen = std::collections::HashSet::new();
        for seed in 0..32 {
            match best_response_dynamics(&inst, &x, &present(2), seed, 10).unwrap() {
                DynamicsOutcome::Converged { profile, .. } => {
                    assert!(is_nash(&inst, &x, &present(2), &profile).unwrap());
                    seen.insert(profile);
                }
                DynamicsOutcome::NoConvergence => panic!("no convergence"),
            }
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn dynamics_all_inactive() {
        let inst = pair();
        let out = best_response_dynamics(&inst, &ServiceConfig::all_off(1), &present(2), 5, 3).unwrap();
        assert_eq!(
            out,
            DynamicsOutcome::Converged { profile: StrategyProfile::disconnected(2), sweeps: 1 }
        );
    }
}
