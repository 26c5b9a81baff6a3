//! Outgoing messages of a unit's capacity factor.
//!
//! The factor accepts a labelling when the connected users' workloads sum to
//! a load `L` within the active capacity, and every other neighbour is
//! blocked exactly when its own workload would push `L` over capacity. For a
//! fixed final load every non-connected neighbour contributes a constant, so
//! each `L` is one knapsack pass; prefix and suffix tables over the
//! neighbours give all leave-one-out messages from the same pass.

use super::Triple;
use crate::game::Label;

const BLOCKED: usize = 0;
const FREE: usize = 1;
const USED: usize = 2;

/// Reusable buffers for [`unit_messages`].
#[derive(Default, Debug)]
pub struct UnitScratch {
    prefix: Vec<f64>,
    suffix: Vec<f64>,
    out_weight: Vec<f64>,
}

/// Computes the (unnormalized) message to every neighbour of a unit.
///
/// `weights[i]` is neighbour `i`'s workload and `incoming[i]` its message to
/// the unit; results go to `out[i]`. An inactive unit blocks everyone.
pub fn unit_messages(
    weights: &[u32],
    capacity: u32,
    active: bool,
    incoming: &[Triple],
    out: &mut [Triple],
    scratch: &mut UnitScratch,
) {
    let n = weights.len();
    debug_assert_eq!(incoming.len(), n);
    debug_assert_eq!(out.len(), n);
    if !active {
        for o in out.iter_mut() {
            *o = [1.0, 0.0, 0.0];
        }
        return;
    }
    for o in out.iter_mut() {
        *o = [0.0; 3];
    }
    let cap = capacity as usize;
    scratch.out_weight.resize(n, 0.0);

    scratch.prefix.resize((n + 1) * (cap + 1), 0.0);
    scratch.suffix.resize((n + 1) * (cap + 1), 0.0);

    for load in 0..=cap {
        let width = load + 1;
        for (i, &w) in weights.iter().enumerate() {
            let fits = load + w as usize <= cap;
            scratch.out_weight[i] = if fits { incoming[i][FREE] } else { incoming[i][BLOCKED] };
        }

        let prefix = &mut scratch.prefix;
        prefix[..width].fill(0.0);
        prefix[0] = 1.0;
        for i in 0..n {
            let w = weights[i] as usize;
            let (done, rest) = prefix.split_at_mut((i + 1) * width);
            let prev = &done[i * width..];
            let next = &mut rest[..width];
            let f = scratch.out_weight[i];
            let g = incoming[i][USED];
            let (lo, hi) = next[..width].split_at_mut(w.min(width));
            for (o, &p) in lo.iter_mut().zip(prev) {
                *o = p * f;
            }
            for ((o, &p), &q) in hi.iter_mut().zip(&prev[w.min(width)..width]).zip(prev) {
                *o = p * f + q * g;
            }
        }

        let suffix = &mut scratch.suffix;
        suffix[n * width..(n + 1) * width].fill(0.0);
        suffix[n * width] = 1.0;
        for i in (0..n).rev() {
            let w = weights[i] as usize;
            let (head, tail) = suffix.split_at_mut((i + 1) * width);
            let prev = &tail[..width];
            let next = &mut head[i * width..];
            let f = scratch.out_weight[i];
            let g = incoming[i][USED];
            let (lo, hi) = next[..width].split_at_mut(w.min(width));
            for (o, &p) in lo.iter_mut().zip(prev) {
                *o = p * f;
            }
            for ((o, &p), &q) in hi.iter_mut().zip(&prev[w.min(width)..width]).zip(prev) {
                *o = p * f + q * g;
            }
        }

        for i in 0..n {
            let w = weights[i] as usize;
            let pre = &scratch.prefix[i * width..(i + 1) * width];
            let suf = &scratch.suffix[(i + 1) * width..(i + 2) * width];
            let others_at = |target: usize| -> f64 {
                pre[..=target].iter().zip(suf[..=target].iter().rev()).map(|(a, b)| a * b).sum()
            };
            // neighbour i stays out and the others fill exactly `load`
            let rest = others_at(load);
            let label = if load + w <= cap { Label::Free } else { Label::Blocked };
            out[i][label.slot()] += rest;
            // neighbour i is part of `load`
            if w <= load {
                out[i][USED] += others_at(load - w);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(weights: &[u32], cap: u32, active: bool, incoming: &[Triple]) -> Vec<Triple> {
        let mut out = vec![[0.0; 3]; weights.len()];
        unit_messages(weights, cap, active, incoming, &mut out, &mut UnitScratch::default());
        out.into_iter().map(normalized).collect()
    }

    fn normalized(t: Triple) -> Triple {
        let z: f64 = t.iter().sum();
        [t[0] / z, t[1] / z, t[2] / z]
    }

    #[test]
    fn inactive_blocks() {
        let out = run(&[3, 4], 5, false, &[[1.0 / 3.0; 3]; 2]);
        assert!(out.iter().all(|m| *m == [1.0, 0.0, 0.0]));
    }

    #[test]
    fn lone_neighbour_that_fits() {
        let out = run(&[3], 5, true, &[[1.0 / 3.0; 3]]);
        assert_eq!(out[0], [0.0, 0.5, 0.5]);
    }

    #[test]
    fn lone_neighbour_too_heavy() {
        let out = run(&[6], 5, true, &[[0.2, 0.3, 0.5]]);
        assert_eq!(out[0], [1.0, 0.0, 0.0]);
    }
}
