//! Problem instances: the bipartite user/unit graph with its weights,
//! capacities, costs and presence probabilities.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(pub usize);

impl UserId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl UnitId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// A user-unit link. `w_us` is the satisfaction the user gets from the
/// unit, `w_su` the workload the user puts on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub user: UserId,
    pub unit: UnitId,
    pub w_us: u32,
    pub w_su: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct User {
    pub x: f64,
    pub y: f64,
    /// Probability of being present.
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Unit {
    pub x: f64,
    pub y: f64,
    pub capacity: u32,
    /// Energy cost paid while active.
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    users: Vec<User>,
    units: Vec<Unit>,
    edges: Vec<Edge>,
    omega: f64,
    alpha: f64,
    w_max: u32,
    // edge indices per user, sorted by w_us descending then unit id
    user_edges: Vec<Vec<usize>>,
    // edge indices per unit, in edge order
    unit_edges: Vec<Vec<usize>>,
}

/// One broken invariant, located by field and index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]: {}", self.field, i, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl Instance {
    /// Assembles an instance and its adjacency. Fails only on structural
    /// problems (dangling ids, duplicate edges); semantic invariants are
    /// reported by [`Instance::validate`].
    pub fn new(
        users: Vec<User>,
        units: Vec<Unit>,
        edges: Vec<Edge>,
        omega: f64,
        alpha: f64,
        w_max: u32,
    ) -> Result<Self> {
        let mut user_edges = vec![Vec::new(); users.len()];
        let mut unit_edges = vec![Vec::new(); units.len()];
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for (e, edge) in edges.iter().enumerate() {
            if edge.user.0 >= users.len() {
                return Err(Error::Domain(format!("edge {e} references unknown user {}", edge.user)));
            }
            if edge.unit.0 >= units.len() {
                return Err(Error::Domain(format!("edge {e} references unknown unit {}", edge.unit)));
            }
            if !seen.insert((edge.user, edge.unit)) {
                return Err(Error::Domain(format!("duplicate edge ({}, {})", edge.user, edge.unit)));
            }
            user_edges[edge.user.0].push(e);
            unit_edges[edge.unit.0].push(e);
        }
        for list in &mut user_edges {
            list.sort_by(|&a, &b| {
                edges[b]
                    .w_us
                    .cmp(&edges[a].w_us)
                    .then(edges[a].unit.cmp(&edges[b].unit))
            });
        }
        Ok(Instance {
            users,
            units,
            edges,
            omega,
            alpha,
            w_max,
            user_edges,
            unit_edges,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn users(&self) -> &[User] {
        &self.users
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn user(&self, u: UserId) -> &User {
        &self.users[u.0]
    }

    pub fn unit(&self, s: UnitId) -> &Unit {
        &self.units[s.0]
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn w_max(&self) -> u32 {
        self.w_max
    }

    /// Edge indices of user `u`, best satisfaction first.
    pub fn user_edges(&self, u: UserId) -> &[usize] {
        &self.user_edges[u.0]
    }

    pub fn unit_edges(&self, s: UnitId) -> &[usize] {
        &self.unit_edges[s.0]
    }

    pub fn edge_between(&self, u: UserId, s: UnitId) -> Option<usize> {
        self.user_edges[u.0].iter().copied().find(|&e| self.edges[e].unit == s)
    }

    pub fn user_ids(&self) -> impl Iterator<Item = UserId> + '_ {
        (0..self.users.len()).map(UserId)
    }

    pub fn unit_ids(&self) -> impl Iterator<Item = UnitId> + '_ {
        (0..self.units.len()).map(UnitId)
    }

    /// Same instance with a different trade-off parameter.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    /// Lists every broken invariant; empty means the instance is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (u, user) in self.users.iter().enumerate() {
            if self.user_edges[u].is_empty() {
                out.push(Violation {
                    field: "users",
                    index: Some(u),
                    message: "user has no edges".into(),
                });
            }
            if !(user.p > 0.0 && user.p <= 1.0) {
                out.push(Violation {
                    field: "p",
                    index: Some(u),
                    message: format!("presence probability {} outside (0, 1]", user.p),
                });
            }
        }
        for (e, edge) in self.edges.iter().enumerate() {
            if edge.w_su < 1 || edge.w_su > self.w_max {
                out.push(Violation {
                    field: "w_su",
                    index: Some(e),
                    message: format!("workload {} outside [1, {}]", edge.w_su, self.w_max),
                });
            }
        }
        for (s, unit) in self.units.iter().enumerate() {
            if unit.capacity < 1 {
                out.push(Violation {
                    field: "capacity",
                    index: Some(s),
                    message: "capacity must be positive".into(),
                });
            }
            if !(unit.cost >= 0.0 && unit.cost.is_finite()) {
                out.push(Violation {
                    field: "cost",
                    index: Some(s),
                    message: format!("cost {} must be finite and non-negative", unit.cost),
                });
            }
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            out.push(Violation {
                field: "omega",
                index: None,
                message: format!("penalty {} must be finite and non-negative", self.omega),
            });
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            out.push(Violation {
                field: "alpha",
                index: None,
                message: format!("trade-off {} must be finite and non-negative", self.alpha),
            });
        }
        out
    }

    /// `Ok(())` iff [`Instance::validate`] finds nothing.
    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v.iter().map(ToString::to_string).collect()))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                context: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile::from(self);
        let mut s = serde_json::to_string_pretty(&file).expect("instance serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parse = |message: String| Error::Parse {
            context: "instance".into(),
            message,
        };
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
        if file.version != FILE_VERSION {
            return Err(parse(format!("unsupported version {}", file.version)));
        }
        if file.users.len() != file.n_users {
            return Err(parse(format!(
                "n_users is {} but {} users are listed",
                file.n_users,
                file.users.len()
            )));
        }
        if file.units.len() != file.n_units {
            return Err(parse(format!(
                "n_units is {} but {} units are listed",
                file.n_units,
                file.units.len()
            )));
        }
        for (i, u) in file.users.iter().enumerate() {
            if u.id != i {
                return Err(parse(format!("users[{i}]: id {} out of order", u.id)));
            }
        }
        for (i, s) in file.units.iter().enumerate() {
            if s.id != i {
                return Err(parse(format!("units[{i}]: id {} out of order", s.id)));
            }
        }
        let users = file
            .users
            .iter()
            .map(|u| User { x: u.x, y: u.y, p: u.p })
            .collect();
        let units = file
            .units
            .iter()
            .map(|s| Unit {
                x: s.x,
                y: s.y,
                capacity: s.capacity,
                cost: s.cost,
            })
            .collect();
        let edges = file
            .edges
            .iter()
            .map(|e| Edge {
                user: UserId(e.u),
                unit: UnitId(e.s),
                w_us: e.w_us,
                w_su: e.w_su,
            })
            .collect();
        Instance::new(users, units, edges, file.omega, file.alpha, file.w_max)
            .map_err(|e| parse(e.to_string()))
    }
}

const FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    version: u32,
    n_users: usize,
    n_units: usize,
    omega: f64,
    alpha: f64,
    w_max: u32,
    units: Vec<UnitRecord>,
    users: Vec<UserRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitRecord {
    id: usize,
    x: f64,
    y: f64,
    capacity: u32,
    cost: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserRecord {
    id: usize,
    x: f64,
    y: f64,
    p: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    u: usize,
    s: usize,
    w_us: u32,
    w_su: u32,
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        InstanceFile {
            version: FILE_VERSION,
            n_users: inst.n_users(),
            n_units: inst.n_units(),
            omega: inst.omega,
            alpha: inst.alpha,
            w_max: inst.w_max,
            units: inst
                .units
                .iter()
                .enumerate()
                .map(|(id, s)| UnitRecord {
                    id,
                    x: s.x,
                    y: s.y,
                    capacity: s.capacity,
                    cost: s.cost,
                })
                .collect(),
            users: inst
                .users
                .iter()
                .enumerate()
                .map(|(id, u)| UserRecord { id, x: u.x, y: u.y, p: u.p })
                .collect(),
            edges: inst
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    u: e.user.0,
                    s: e.unit.0,
                    w_us: e.w_us,
                    w_su: e.w_su,
                })
                .collect(),
        }
    }
}

/// Parameters of the random geometric construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n_users: usize,
    pub n_units: usize,
    /// Units accessible to each user (its k nearest).
    pub k: usize,
    pub capacity: u32,
    pub w_max: u32,
    pub omega: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl GeneratorParams {
    pub fn check(&self) -> Result<()> {
        if self.n_users == 0 || self.n_units == 0 {
            return Err(Error::Param("n_users and n_units must be positive".into()));
        }
        if self.k == 0 || self.k > self.n_units {
            return Err(Error::Param(format!(
                "k = {} must lie in 1..={}",
                self.k, self.n_units
            )));
        }
        if self.capacity == 0 || self.w_max == 0 {
            return Err(Error::Param("capacity and w_max must be positive".into()));
        }
        if !(self.omega >= 0.0) || !(self.alpha >= 0.0) {
            return Err(Error::Param("omega and alpha must be non-negative".into()));
        }
        Ok(())
    }
}

/// Places units and users uniformly in the unit square and links each user
/// to its `k` nearest units. Workloads grow with squared distance and are
/// scaled so the longest edge carries exactly `w_max`.
pub fn generate_instance(params: &GeneratorParams) -> Result<Instance> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let units: Vec<Unit> = (0..params.n_units)
        .map(|_| Unit {
            x: rng.gen(),
            y: rng.gen(),
            capacity: params.capacity,
            cost: 1.0,
        })
        .collect();
    let mut users: Vec<User> = (0..params.n_users)
        .map(|_| User {
            x: rng.gen(),
            y: rng.gen(),
            p: 0.0,
        })
        .collect();
    for user in &mut users {
        user.p = 1.0 - rng.gen::<f64>();
    }

    let mut links: Vec<(usize, usize, f64)> = Vec::with_capacity(params.n_users * params.k);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(params.n_units);
    for (u, user) in users.iter().enumerate() {
        order.clear();
        order.extend(units.iter().enumerate().map(|(s, unit)| {
            let dx = user.x - unit.x;
            let dy = user.y - unit.y;
            (dx * dx + dy * dy, s)
        }));
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut nearest: Vec<(f64, usize)> = order[..params.k].to_vec();
        nearest.sort_by_key(|&(_, s)| s);
        links.extend(nearest.into_iter().map(|(d2, s)| (u, s, d2)));
    }

    let d2_max = links.iter().map(|l| l.2).fold(0.0_f64, f64::max);
    let w_max = params.w_max;
    let edges = links
        .into_iter()
        .map(|(u, s, d2)| {
            let w_su = if d2_max > 0.0 {
                let gamma = f64::from(w_max) / d2_max;
                ((gamma * d2).ceil() as u32).clamp(1, w_max)
            } else {
                w_max
            };
            Edge {
                user: UserId(u),
                unit: UnitId(s),
                w_us: w_max - w_su,
                w_su,
            }
        })
        .collect();

    Instance::new(users, units, edges, params.omega, params.alpha, w_max)
}
