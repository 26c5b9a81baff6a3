use std::path::Path;

use anyhow::{bail, Context, Result};
use provision::GeneratorParams;
use serde::{Deserialize, Serialize};

/// Lists of generator values; the batch is their cross product.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n_users: Vec<usize>,
    pub n_units: Vec<usize>,
    pub k: Vec<usize>,
    pub capacity: Vec<u32>,
    pub w_max: Vec<u32>,
    pub omega: Vec<f64>,
    #[serde(default = "zero_alpha")]
    pub alpha: Vec<f64>,
}

fn zero_alpha() -> Vec<f64> {
    vec![0.0]
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Instances per grid point.
    pub replicates: usize,
    /// First instance seed; instance `i` of the batch uses `seed + i`.
    pub seed: u64,
    pub grid: Grid,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
        let sc: Scenario = toml::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))?;
        sc.check().with_context(|| format!("scenario {}", path.display()))?;
        Ok(sc)
    }

    fn check(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            bail!("name must be non-empty and use only letters, digits, '-' or '_'");
        }
        let g = &self.grid;
        let lens = [
            ("n_users", g.n_users.len()),
            ("n_units", g.n_units.len()),
            ("k", g.k.len()),
            ("capacity", g.capacity.len()),
            ("w_max", g.w_max.len()),
            ("omega", g.omega.len()),
            ("alpha", g.alpha.len()),
        ];
        for (field, n) in lens {
            if n == 0 {
                bail!("grid.{field} needs at least one value");
            }
        }
        Ok(())
    }

    /// Grid points in a fixed nesting order (the last field varies fastest).
    pub fn points(&self) -> Vec<GeneratorParams> {
        let g = &self.grid;
        let mut out = Vec::new();
        for &n_users in &g.n_users {
            for &n_units in &g.n_units {
                for &k in &g.k {
                    for &capacity in &g.capacity {
                        for &w_max in &g.w_max {
                            for &omega in &g.omega {
                                for &alpha in &g.alpha {
                                    out.push(GeneratorParams { n_users, n_units, k, capacity, w_max, omega, alpha, seed: 0 });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
