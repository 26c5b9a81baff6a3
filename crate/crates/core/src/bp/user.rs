//! Outgoing messages of a user's best-response factor.
//!
//! Absent users only take blocked/free labels. A present user either has
//! every edge blocked, or uses one unit while every strictly better unit is
//! blocked and the rest are blocked or free. With edges sorted by
//! satisfaction, each "uses unit j" term is a prefix product of blocked
//! weights times a product of blocked-or-free weights.

use super::{Pair, Triple};

const BLOCKED: usize = 0;
const FREE: usize = 1;
const USED: usize = 2;

/// Unnormalized sums of the factor restricted to one presence value.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct FactorSums {
    /// Total weight of allowed labellings, per presence value.
    pub total: Pair,
    /// Weight of the all-blocked labelling (allowed for both values).
    pub all_blocked: f64,
}

impl FactorSums {
    /// Probability of the all-blocked labelling given presence `t`.
    pub fn all_blocked_given(&self, t: usize) -> f64 {
        if self.total[t] > 0.0 {
            self.all_blocked / self.total[t]
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy)]
struct Item {
    blocked: f64,
    open: f64,
    used: f64,
    w: u32,
}

// Presence-1 sums over a satisfaction-sorted item list: the all-blocked
// weight and, per item, the weight of labellings where it is the used edge.
fn used_terms(items: &[Item], terms: &mut Vec<f64>) -> f64 {
    let n = items.len();
    terms.clear();
    terms.resize(n, 0.0);
    let mut suffix_open = vec![1.0; n + 1];
    for i in (0..n).rev() {
        suffix_open[i] = suffix_open[i + 1] * items[i].open;
    }
    let mut prefix_blocked = 1.0;
    let mut g0 = 0;
    while g0 < n {
        let mut g1 = g0 + 1;
        while g1 < n && items[g1].w == items[g0].w {
            g1 += 1;
        }
        let tail = suffix_open[g1];
        // leave-one-out product of `open` inside the tie group
        let mut left = 1.0;
        for p in g0..g1 {
            let right: f64 = items[p + 1..g1].iter().map(|it| it.open).product();
            terms[p] = items[p].used * prefix_blocked * left * right * tail;
            left *= items[p].open;
        }
        for it in &items[g0..g1] {
            prefix_blocked *= it.blocked;
        }
        g0 = g1;
    }
    prefix_blocked
}

/// Messages from user factor to each of its units, in the order of
/// `incoming` (which must follow the instance's satisfaction-sorted edge
/// order), plus the factor sums behind the presence message.
pub fn user_messages(weights: &[u32], incoming: &[Triple], nu: Pair, out: &mut [Triple]) -> FactorSums {
    let n = weights.len();
    debug_assert!(weights.windows(2).all(|w| w[0] >= w[1]));
    let items: Vec<Item> = incoming
        .iter()
        .zip(weights)
        .map(|(m, &w)| Item {
            blocked: m[BLOCKED],
            open: m[BLOCKED] + m[FREE],
            used: m[USED],
            w,
        })
        .collect();

    let mut terms = Vec::with_capacity(n);
    let all_blocked = used_terms(&items, &mut terms);
    let open_all: f64 = items.iter().map(|it| it.open).product();
    let sums = FactorSums {
        total: [open_all, all_blocked + terms.iter().sum::<f64>()],
        all_blocked,
    };

    let mut reduced: Vec<Item> = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n {
        reduced.clear();
        reduced.extend(items.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, it)| *it));
        let blocked_rest = used_terms(&reduced, &mut terms);
        let open_rest: f64 = reduced.iter().map(|it| it.open).product();
        let w_i = weights[i];

        let mut any_used = 0.0;
        let mut no_worse_used = 0.0;
        for (it, &term) in reduced.iter().zip(terms.iter()) {
            any_used += term;
            if it.w >= w_i {
                no_worse_used += term;
            }
        }
        let mut better_blocked = 1.0;
        let mut rest_open = 1.0;
        for it in &reduced {
            if it.w > w_i {
                better_blocked *= it.blocked;
            } else {
                rest_open *= it.open;
            }
        }

        out[i][BLOCKED] = nu[0] * open_rest + nu[1] * (blocked_rest + any_used);
        out[i][FREE] = nu[0] * open_rest + nu[1] * no_worse_used;
        out[i][USED] = nu[1] * better_blocked * rest_open;
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normalized(t: Triple) -> Triple {
        let z: f64 = t.iter().sum();
        [t[0] / z, t[1] / z, t[2] / z]
    }

    #[test]
    fn present_degree_one() {
        let mut out = [[0.0; 3]];
        user_messages(&[5], &[[1.0 / 3.0; 3]], [0.0, 1.0], &mut out);
        assert_eq!(normalized(out[0]), [0.5, 0.0, 0.5]);
    }

    #[test]
    fn absent_degree_one() {
        let mut out = [[0.0; 3]];
        user_messages(&[5], &[[1.0 / 3.0; 3]], [1.0, 0.0], &mut out);
        assert_eq!(normalized(out[0]), [0.5, 0.5, 0.0]);
    }
}
