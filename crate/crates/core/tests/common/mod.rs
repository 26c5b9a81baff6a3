#![allow(dead_code)]

use provision::instance::{Edge, Unit, User};
use provision::game::check_edge_constraints;
use provision::{EdgeAssignment, Instance, Label, PresencePattern, ServiceConfig, UnitId, UserId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Triple = [f64; 3];

/// Builds an instance from `(p, [(unit, w_us, w_su)])` per user.
pub fn toy(users: &[(f64, &[(usize, u32, u32)])], caps: &[u32], omega: f64) -> Instance {
    let units = caps.iter().map(|&c| Unit { x: 0.0, y: 0.0, capacity: c, cost: 1.0 }).collect();
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

/// Random bipartite tree with at most `max_users` users. Every user has at
/// least one edge.
pub fn random_tree(seed: u64, max_users: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_users = rng.gen_range(2..=max_users);
    let mut users = vec![User { x: 0.0, y: 0.0, p: 1.0 - rng.gen::<f64>() }];
    let mut units = vec![Unit { x: 0.0, y: 0.0, capacity: rng.gen_range(2..=10), cost: 1.0 }];
    let mut links = vec![(0usize, 0usize)];
    while users.len() < n_users {
        if rng.gen_bool(0.35) && units.len() < n_users {
            // new unit hanging off an existing user
            let u = rng.gen_range(0..users.len());
            units.push(Unit { x: 0.0, y: 0.0, capacity: rng.gen_range(2..=10), cost: 1.0 });
            links.push((u, units.len() - 1));
        } else {
            let s = rng.gen_range(0..units.len());
            users.push(User { x: 0.0, y: 0.0, p: 1.0 - rng.gen::<f64>() });
            links.push((users.len() - 1, s));
        }
    }
    let edges = links
        .into_iter()
        .map(|(u, s)| {
            let w_su = rng.gen_range(1..=6);
            Edge { user: UserId(u), unit: UnitId(s), w_us: rng.gen_range(0..=4) * 2 + 1, w_su }
        })
        .collect();
    Instance::new(users, units, edges, 10.0, 0.0, 10).unwrap()
}

/// Whether a bipartite instance graph has no cycle.
pub fn is_forest(inst: &Instance) -> bool {
    let n = inst.n_users() + inst.n_units();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, mut a: usize) -> usize {
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    for e in inst.edges() {
        let a = find(&mut parent, e.user.0);
        let b = find(&mut parent, inst.n_users() + e.unit.0);
        if a == b {
            return false;
        }
        parent[a] = b;
    }
    true
}

pub fn labellings(d: usize) -> impl Iterator<Item = Vec<Label>> {
    (0..3usize.pow(d as u32)).map(move |mut code| {
        (0..d)
            .map(|_| {
                let l = Label::ALL[code % 3];
                code /= 3;
                l
            })
            .collect()
    })
}

/// Direct reading of the user constraint: no used edge when absent; when
/// present, either everything blocked or one used edge with every strictly
/// better edge blocked.
pub fn user_allows(labels: &[Label], w_us: &[u32], present: bool) -> bool {
    let used: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Used).collect();
    if !present {
        return used.is_empty();
    }
    match used.as_slice() {
        [] => labels.iter().all(|&l| l == Label::Blocked),
        [j] => (0..labels.len()).all(|i| i == *j || w_us[i] <= w_us[*j] || labels[i] == Label::Blocked),
        _ => false,
    }
}

/// Direct reading of the unit constraint.
pub fn unit_allows(labels: &[Label], w_su: &[u32], capacity: u32, active: bool) -> bool {
    let cap = if active { capacity } else { 0 };
    let load: u32 = (0..labels.len()).filter(|&i| labels[i] == Label::Used).map(|i| w_su[i]).sum();
    if load > cap {
        return false;
    }
    (0..labels.len()).all(|i| match labels[i] {
        Label::Used => true,
        l => (l == Label::Blocked) == (load + w_su[i] > cap),
    })
}

/// Brute-force factor-to-variable messages (normalized) for every
/// neighbour `i` of a factor with predicate `allows`.
pub fn brute_messages(d: usize, incoming: &[Triple], weight_of: impl Fn(&[Label]) -> f64) -> Vec<Triple> {
    let mut out = vec![[0.0; 3]; d];
    for labels in labellings(d) {
        let w = weight_of(&labels);
        if w == 0.0 {
            continue;
        }
        for i in 0..d {
            let mut prod = w;
            for j in 0..d {
                if j != i {
                    prod *= incoming[j][labels[j].slot()];
                }
            }
            out[i][labels[i].slot()] += prod;
        }
    }
    out.into_iter()
        .map(|m| {
            let z: f64 = m.iter().sum();
            [m[0] / z, m[1] / z, m[2] / z]
        })
        .collect()
}

pub fn random_triple(rng: &mut impl Rng) -> Triple {
    let a: [f64; 3] = [rng.gen::<f64>() + 1e-3, rng.gen::<f64>() + 1e-3, rng.gen::<f64>() + 1e-3];
    let z: f64 = a.iter().sum();
    [a[0] / z, a[1] / z, a[2] / z]
}

pub fn max_diff(a: &[Triple], b: &[Triple]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Counts edge labellings satisfying every constraint by direct search over
/// labels, independent of the strategy-space enumerator.
pub fn count_y_solutions(inst: &Instance, x: &ServiceConfig, t: &PresencePattern) -> u64 {
    struct Ctx<'a> {
        inst: &'a Instance,
        x: &'a ServiceConfig,
        t: &'a PresencePattern,
        order: Vec<usize>,
        pos: Vec<usize>,
        labels: Vec<Label>,
        load: Vec<u64>,
        unassigned: Vec<u64>,
        left: Vec<usize>,
        count: u64,
    }
    fn cap(c: &Ctx, s: UnitId) -> u64 {
        if c.x.is_on(s) {
            c.inst.unit(s).capacity as u64
        } else {
            0
        }
    }
    fn user_ok(c: &Ctx, u: UserId) -> bool {
        if !c.t.is_present(u) {
            return true;
        }
        let es = c.inst.user_edges(u);
        let used = es.iter().find(|&&e| c.labels[e] == Label::Used);
        let best_free = es.iter().filter(|&&e| c.labels[e] == Label::Free).map(|&e| c.inst.edge(e).w_us).max();
        match (used, best_free) {
            (None, Some(_)) => false,
            (Some(&e), Some(b)) => c.inst.edge(e).w_us >= b,
            _ => true,
        }
    }
    fn unit_ok(c: &Ctx, s: UnitId) -> bool {
        let l = c.load[s.index()];
        c.inst.unit_edges(s).iter().all(|&e| {
            let over = l + c.inst.edge(e).w_su as u64 > cap(c, s);
            match c.labels[e] {
                Label::Used => true,
                Label::Free => !over,
                Label::Blocked => over,
            }
        })
    }
    fn go(c: &mut Ctx, k: usize) {
        if k == c.order.len() {
            if check_edge_constraints(c.inst, c.x, c.t, &EdgeAssignment(c.labels.clone())) {
                c.count += 1;
            }
            return;
        }
        let e = c.order[k];
        let edge = *c.inst.edge(e);
        let s = edge.unit.index();
        let capacity = cap(c, edge.unit);
        let w = edge.w_su as u64;
        let last_of_user = c.inst.user_edges(edge.user).iter().all(|&f| c.pos[f] <= k);
        c.unassigned[s] -= w;
        c.left[s] -= 1;
        for l in Label::ALL {
            let ok = match l {
                Label::Used => {
                    c.t.is_present(edge.user)
                        && c.load[s] + w <= capacity
                        && !c.inst.user_edges(edge.user).iter().any(|&f| f != e && c.labels[f] == Label::Used)
                }
                Label::Free => c.load[s] + w <= capacity,
                Label::Blocked => c.load[s] + c.unassigned[s] + w > capacity,
            };
            if !ok {
                continue;
            }
            c.labels[e] = l;
            if l == Label::Used {
                c.load[s] += w;
            }
            if (!last_of_user || user_ok(c, edge.user)) && (c.left[s] > 0 || unit_ok(c, edge.unit)) {
                go(c, k + 1);
            }
            if l == Label::Used {
                c.load[s] -= w;
            }
        }
        c.labels[e] = Label::Blocked;
        c.unassigned[s] += w;
        c.left[s] += 1;
    }

    // unit-major, units in breadth-first order, so each unit is checked
    // as soon as its edges are labelled
    let mut unit_seen = vec![false; inst.n_units()];
    let mut user_seen = vec![false; inst.n_users()];
    let mut order = Vec::new();
    for root in 0..inst.n_units() {
        if unit_seen[root] {
            continue;
        }
        unit_seen[root] = true;
        let mut queue = std::collections::VecDeque::from([UnitId(root)]);
        while let Some(s) = queue.pop_front() {
            for &e in inst.unit_edges(s) {
                order.push(e);
                let u = inst.edge(e).user;
                if !user_seen[u.index()] {
                    user_seen[u.index()] = true;
                    for &f in inst.user_edges(u) {
                        let r = inst.edge(f).unit;
                        if !unit_seen[r.index()] {
                            unit_seen[r.index()] = true;
                            queue.push_back(r);
                        }
                    }
                }
            }
        }
    }
    let mut unassigned = vec![0u64; inst.n_units()];
    let mut left = vec![0usize; inst.n_units()];
    for e in inst.edges() {
        unassigned[e.unit.index()] += e.w_su as u64;
        left[e.unit.index()] += 1;
    }
    let mut pos = vec![0; inst.n_edges()];
    for (k, &e) in order.iter().enumerate() {
        pos[e] = k;
    }
    let mut c = Ctx {
        inst,
        x,
        t,
        order,
        pos,
        labels: vec![Label::Blocked; inst.n_edges()],
        load: vec![0; inst.n_units()],
        unassigned,
        left,
        count: 0,
    };
    go(&mut c, 0);
    c.count
}
