//! Sum-product message passing on the edge-label factor graph.
//!
//! Unit factors send `mu` (unit to user) and user factors send `mu_hat`
//! (user to unit), both as `[blocked, free, used]` triples. Presence enters
//! each user factor through `nu`; at fixed presence it is a point mass, in
//! the mirror scheme it is tuned against the factor's reply `nu_hat` so the
//! user's presence marginal matches its probability. One mirror fixed point
//! therefore averages over equilibria and presence together.

mod unit;
mod user;

pub use unit::{unit_messages, UnitScratch};
pub use user::{user_messages, FactorSums};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{PresencePattern, ServiceConfig};
use crate::instance::{Instance, UnitId, UserId};

/// Distribution over the labels `[-1, 0, 1]`.
pub type Triple = [f64; 3];
/// Distribution over presence `[absent, present]`.
pub type Pair = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Factors visited in id order.
    Sequential,
    /// Fresh seeded permutation of each layer per iteration.
    RandomPermutation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpParams {
    /// Weight kept from the previous message, in `[0, 1)`.
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Lower clamp on `nu_hat` before it is inverted.
    pub floor: f64,
    pub seed: u64,
    pub schedule: Schedule,
}

impl Default for BpParams {
    fn default() -> Self {
        BpParams {
            damping: 0.5,
            tol: 1e-8,
            max_iters: 10_000,
            floor: 1e-12,
            seed: 0,
            schedule: Schedule::RandomPermutation,
        }
    }
}

impl BpParams {
    pub fn check(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Param(format!("damping {} outside [0, 1)", self.damping)));
        }
        if !(self.tol > 0.0) || !(self.floor > 0.0) {
            return Err(Error::Param("tol and floor must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Param("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// All messages of one run, indexed by edge (`mu`, `mu_hat`) or user.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageSet {
    pub mu: Vec<Triple>,
    pub mu_hat: Vec<Triple>,
    pub nu: Vec<Pair>,
    pub nu_hat: Vec<Pair>,
}

impl MessageSet {
    pub fn uniform(inst: &Instance) -> Self {
        MessageSet {
            mu: vec![[1.0 / 3.0; 3]; inst.n_edges()],
            mu_hat: vec![[1.0 / 3.0; 3]; inst.n_edges()],
            nu: inst.users().iter().map(|u| [1.0 - u.p, u.p]).collect(),
            nu_hat: vec![[0.5, 0.5]; inst.n_users()],
        }
    }

    /// Largest deviation of any message from unit sum or non-negativity.
    pub fn normalization_error(&self) -> f64 {
        let tri = self.mu.iter().chain(&self.mu_hat).map(|m| dev(m));
        let pair = self.nu.iter().chain(&self.nu_hat).map(|m| dev(m));
        tri.chain(pair).fold(0.0, f64::max)
    }
}

fn dev(m: &[f64]) -> f64 {
    let neg = m.iter().fold(0.0_f64, |a, &v| a.max(-v));
    neg.max((m.iter().sum::<f64>() - 1.0).abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub floored_users: usize,
}

/// Per-user view of the local factor belief.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UserTrace {
    /// Presence marginal at the user node.
    pub t_weight: Pair,
    /// Probability that every edge is blocked, given presence.
    pub all_blocked_given_t: Pair,
}

impl UserTrace {
    pub fn disconnected(&self) -> f64 {
        self.t_weight[0] * self.all_blocked_given_t[0] + self.t_weight[1] * self.all_blocked_given_t[1]
    }

    pub fn present_disconnected(&self) -> f64 {
        self.t_weight[1] * self.all_blocked_given_t[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    /// Edge beliefs over `[-1, 0, 1]`.
    pub edge: Vec<Triple>,
    pub user_disconnected: Vec<f64>,
    pub user_traces: Vec<UserTrace>,
}

#[derive(Clone, Debug)]
pub struct BpOutcome {
    pub marginals: Marginals,
    pub report: ConvergenceReport,
    pub messages: MessageSet,
}

/// Normalizes in place; `None` if the total is zero or not finite.
fn normalize<const N: usize>(m: &mut [f64; N]) -> Option<()> {
    let z: f64 = m.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return None;
    }
    m.iter_mut().for_each(|v| *v /= z);
    Some(())
}

/// Blends `fresh` into `old` and returns the largest componentwise change.
fn damp_into<const N: usize>(old: &mut [f64; N], fresh: &[f64; N], damping: f64) -> f64 {
    let mut change = 0.0_f64;
    for (o, &f) in old.iter_mut().zip(fresh) {
        let v = (1.0 - damping) * f + damping * *o;
        change = change.max((v - *o).abs());
        *o = v;
    }
    change
}

/// Result of one user-factor evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct UserSweep {
    /// Normalized messages to the user's units, in [`Instance::user_edges`] order.
    pub mu_hat: Vec<Triple>,
    pub nu_hat: Pair,
    pub sums: FactorSums,
}

/// Evaluates the best-response factor of `u` given the unit messages along
/// its edges (in [`Instance::user_edges`] order) and its presence message.
pub fn user_factor_sweep(inst: &Instance, u: UserId, incoming: &[Triple], nu: Pair) -> Result<UserSweep> {
    let edges = inst.user_edges(u);
    if incoming.len() != edges.len() {
        return Err(Error::Domain(format!("{u} has {} edges, got {} messages", edges.len(), incoming.len())));
    }
    let weights: Vec<u32> = edges.iter().map(|&e| inst.edge(e).w_us).collect();
    let mut out = vec![[0.0; 3]; edges.len()];
    let sums = user_messages(&weights, incoming, nu, &mut out);
    for (m, &e) in out.iter_mut().zip(edges) {
        normalize(m).ok_or_else(|| Error::Degenerate(format!("message {u} -> {}", inst.edge(e).unit)))?;
    }
    let mut nu_hat = sums.total;
    normalize(&mut nu_hat).ok_or_else(|| Error::Degenerate(format!("presence reply of {u}")))?;
    Ok(UserSweep { mu_hat: out, nu_hat, sums })
}

/// Evaluates the capacity factor of `s` given the user messages along its
/// edges (in [`Instance::unit_edges`] order).
pub fn unit_factor_sweep(inst: &Instance, active: bool, s: UnitId, incoming: &[Triple]) -> Result<Vec<Triple>> {
    let edges = inst.unit_edges(s);
    if incoming.len() != edges.len() {
        return Err(Error::Domain(format!("{s} has {} edges, got {} messages", edges.len(), incoming.len())));
    }
    let weights: Vec<u32> = edges.iter().map(|&e| inst.edge(e).w_su).collect();
    let mut out = vec![[0.0; 3]; edges.len()];
    unit_messages(&weights, inst.unit(s).capacity, active, incoming, &mut out, &mut UnitScratch::default());
    for (m, &e) in out.iter_mut().zip(edges) {
        normalize(m).ok_or_else(|| Error::Degenerate(format!("message {s} -> {}", inst.edge(e).user)))?;
    }
    Ok(out)
}

/// Presence message that reproduces the prior once multiplied by `nu_hat`.
/// The flag reports that a component needed the floor.
pub fn nu_update(nu_hat: Pair, p_present: f64, floor: f64) -> (Pair, bool) {
    let prior = [1.0 - p_present, p_present];
    let mut floored = false;
    let mut nu = [0.0; 2];
    for t in 0..2 {
        if prior[t] == 0.0 {
            continue;
        }
        let denom = if nu_hat[t] < floor {
            floored = true;
            floor
        } else {
            nu_hat[t]
        };
        nu[t] = prior[t] / denom;
    }
    let z = nu[0] + nu[1];
    (
        [nu[0] / z, nu[1] / z],
        floored,
    )
}

#[derive(Clone, Copy)]
enum Presence<'a> {
    Fixed(&'a PresencePattern),
    Mirror,
}

/// Equilibrium-averaged marginals at a fixed presence pattern.
pub fn run_fixed_t(inst: &Instance, x: &ServiceConfig, t: &PresencePattern, params: &BpParams) -> Result<BpOutcome> {
    t.check_len(inst)?;
    run(inst, x, Presence::Fixed(t), params, None)
}

/// Marginals averaged over equilibria and presence in one fixed point.
pub fn run_mirror(inst: &Instance, x: &ServiceConfig, params: &BpParams) -> Result<BpOutcome> {
    run(inst, x, Presence::Mirror, params, None)
}

/// [`run_mirror`] started from previously converged messages.
pub fn run_mirror_from(inst: &Instance, x: &ServiceConfig, params: &BpParams, start: &MessageSet) -> Result<BpOutcome> {
    if start.mu.len() != inst.n_edges() || start.nu.len() != inst.n_users() {
        return Err(Error::Domain("warm-start messages do not match the instance".into()));
    }
    run(inst, x, Presence::Mirror, params, Some(start))
}

struct Layout {
    unit_w: Vec<Vec<u32>>,
    user_w: Vec<Vec<u32>>,
}

impl Layout {
    fn new(inst: &Instance) -> Self {
        Layout {
            unit_w: inst
                .unit_ids()
                .map(|s| inst.unit_edges(s).iter().map(|&e| inst.edge(e).w_su).collect())
                .collect(),
            user_w: inst
                .user_ids()
                .map(|u| inst.user_edges(u).iter().map(|&e| inst.edge(e).w_us).collect())
                .collect(),
        }
    }
}

fn run(
    inst: &Instance,
    x: &ServiceConfig,
    presence: Presence<'_>,
    params: &BpParams,
    start: Option<&MessageSet>,
) -> Result<BpOutcome> {
    params.check()?;
    x.check_len(inst)?;
    let layout = Layout::new(inst);
    let mut msgs = start.cloned().unwrap_or_else(|| MessageSet::uniform(inst));
    if let Presence::Fixed(t) = presence {
        for u in inst.user_ids() {
            msgs.nu[u.0] = if t.is_present(u) { [0.0, 1.0] } else { [1.0, 0.0] };
        }
    }
    let mirror = matches!(presence, Presence::Mirror);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut unit_order: Vec<usize> = (0..inst.n_units()).collect();
    let mut user_order: Vec<usize> = (0..inst.n_users()).collect();
    let mut scratch = UnitScratch::default();
    let mut inbox: Vec<Triple> = Vec::new();
    let mut outbox: Vec<Triple> = Vec::new();
    let mut floored = vec![false; inst.n_users()];

    let mut report = ConvergenceReport {
        iterations: 0,
        residual: f64::INFINITY,
        converged: false,
        floored_users: 0,
    };

    for iter in 1..=params.max_iters {
        if params.schedule == Schedule::RandomPermutation {
            unit_order.shuffle(&mut rng);
            user_order.shuffle(&mut rng);
        }
        let mut residual = 0.0_f64;

        for &s in &unit_order {
            let edges = inst.unit_edges(UnitId(s));
            inbox.clear();
            inbox.extend(edges.iter().map(|&e| msgs.mu_hat[e]));
            outbox.clear();
            outbox.resize(edges.len(), [0.0; 3]);
            let active = x.is_on(UnitId(s));
            unit_messages(&layout.unit_w[s], inst.unit(UnitId(s)).capacity, active, &inbox, &mut outbox, &mut scratch);
            for (m, &e) in outbox.iter_mut().zip(edges) {
                normalize(m).ok_or_else(|| {
                    Error::Degenerate(format!("message s{s} -> {} at iteration {iter}", inst.edge(e).user))
                })?;
                // an inactive unit's reply does not depend on its inputs
                let damping = if active { params.damping } else { 0.0 };
                residual = residual.max(damp_into(&mut msgs.mu[e], m, damping));
            }
        }

        for &u in &user_order {
            let edges = inst.user_edges(UserId(u));
            inbox.clear();
            inbox.extend(edges.iter().map(|&e| msgs.mu[e]));
            outbox.clear();
            outbox.resize(edges.len(), [0.0; 3]);
            let sums = user_messages(&layout.user_w[u], &inbox, msgs.nu[u], &mut outbox);
            for (m, &e) in outbox.iter_mut().zip(edges) {
                normalize(m).ok_or_else(|| {
                    Error::Degenerate(format!("message u{u} -> {} at iteration {iter}", inst.edge(e).unit))
                })?;
                residual = residual.max(damp_into(&mut msgs.mu_hat[e], m, params.damping));
            }
            let mut nu_hat = sums.total;
            normalize(&mut nu_hat)
                .ok_or_else(|| Error::Degenerate(format!("presence reply of u{u} at iteration {iter}")))?;
            let change = damp_into(&mut msgs.nu_hat[u], &nu_hat, params.damping);
            if mirror {
                residual = residual.max(change);
            }
        }

        if mirror {
            for &u in &user_order {
                let (nu, hit) = nu_update(msgs.nu_hat[u], inst.users()[u].p, params.floor);
                floored[u] = hit;
                residual = residual.max(damp_into(&mut msgs.nu[u], &nu, params.damping));
            }
        }

        debug_assert!(msgs.normalization_error() < 1e-9, "messages lost normalization");
        report.iterations = iter;
        report.residual = residual;
        if residual < params.tol {
            report.converged = true;
            break;
        }
    }
    report.floored_users = floored.iter().filter(|&&f| f).count();

    let marginals = marginals(inst, &layout, &msgs, presence)?;
    Ok(BpOutcome {
        marginals,
        report,
        messages: msgs,
    })
}

fn marginals(inst: &Instance, layout: &Layout, msgs: &MessageSet, presence: Presence<'_>) -> Result<Marginals> {
    let mut edge = Vec::with_capacity(inst.n_edges());
    for (e, (mu, mu_hat)) in msgs.mu.iter().zip(&msgs.mu_hat).enumerate() {
        let mut b = [mu[0] * mu_hat[0], mu[1] * mu_hat[1], mu[2] * mu_hat[2]];
        normalize(&mut b).ok_or_else(|| {
            let edge = inst.edge(e);
            Error::Degenerate(format!("belief on edge ({}, {})", edge.user, edge.unit))
        })?;
        edge.push(b);
    }

    let mut user_traces = Vec::with_capacity(inst.n_users());
    let mut inbox = Vec::new();
    let mut outbox = Vec::new();
    for u in inst.user_ids() {
        let edges = inst.user_edges(u);
        inbox.clear();
        inbox.extend(edges.iter().map(|&e| msgs.mu[e]));
        outbox.clear();
        outbox.resize(edges.len(), [0.0; 3]);
        let sums = user_messages(&layout.user_w[u.0], &inbox, msgs.nu[u.0], &mut outbox);
        let t_weight = match presence {
            Presence::Fixed(t) => {
                if t.is_present(u) {
                    [0.0, 1.0]
                } else {
                    [1.0, 0.0]
                }
            }
            Presence::Mirror => {
                let mut w = [msgs.nu[u.0][0] * sums.total[0], msgs.nu[u.0][1] * sums.total[1]];
                normalize(&mut w).ok_or_else(|| Error::Degenerate(format!("presence belief of {u}")))?;
                w
            }
        };
        user_traces.push(UserTrace {
            t_weight,
            all_blocked_given_t: [sums.all_blocked_given(0), sums.all_blocked_given(1)],
        });
    }
    let user_disconnected = user_traces.iter().map(UserTrace::disconnected).collect();
    Ok(Marginals {
        edge,
        user_disconnected,
        user_traces,
    })
}
