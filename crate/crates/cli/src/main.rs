mod batch;
mod report;
mod scenario;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use provision::bp::BpParams;
use provision::enumerate::{sampled_average, EnumerationLimits, SampledAverage};
use provision::observables::{compute_from_marginals, evaluate, sampled_bp_average, Estimator, Source};
use provision::optimize::{exhaustive_x, greedy_decimation, GreedyParams, StopRule};
use provision::{generate_instance, Instance, PresencePattern, ServiceConfig};
use rayon::prelude::*;
use serde_json::json;

use batch::{instance_hash, load_inputs, BatchManifest, Entry, ManifestEntry, MANIFEST};
use report::{observable_row, x_label, Sink, OBSERVABLE_HEADER};
use scenario::Scenario;

#[derive(Parser)]
#[command(name = "provision", version, about = "Service-unit activation under selfish users")]
struct Cli {
    /// Worker threads for batch and candidate evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance batch from a scenario file.
    Generate(GenerateArgs),
    /// Evaluate observables of a configuration on each instance.
    Eval(EvalArgs),
    /// Mirror BP against a presence-sampling oracle, per sample size.
    Compare(CompareArgs),
    /// Search activation configurations.
    Optimize(OptimizeArgs),
}

#[derive(Args, Clone)]
struct BpArgs {
    #[arg(long, default_value_t = 0.5)]
    damping: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
}

impl BpArgs {
    fn params(&self, seed: u64) -> BpParams {
        BpParams { damping: self.damping, tol: self.tol, max_iters: self.max_iters, seed, ..BpParams::default() }
    }
}

#[derive(Args)]
struct GenerateArgs {
    scenario: PathBuf,
    /// Output directory for instance files and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario's replicate count.
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorKind {
    Mirror,
    FixedT,
    Exact,
    Sampled,
    SampledBp,
}

#[derive(Args)]
struct EvalArgs {
    /// Instance files, manifests, or directories containing a manifest.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "mirror")]
    estimator: EstimatorKind,
    /// all-on, all-off, or a 0/1 string with one digit per unit.
    #[arg(long, default_value = "all-on")]
    x: String,
    /// Presence pattern (0/1 per user, or all-present) for fixed-t and exact.
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    bp: BpArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Oracle {
    /// Equilibrium enumeration at each sampled presence pattern.
    Enum,
    /// Fixed-presence BP at each sampled presence pattern.
    Bp,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "enum")]
    oracle: Oracle,
    #[arg(long, default_value = "all-on")]
    x: String,
    /// Oracle sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    sample_size: Vec<usize>,
    /// Oracle seed for the first instance; instance `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    bp: BpArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Greedy,
    Exhaustive,
}

#[derive(Args)]
struct OptimizeArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long, value_enum, default_value = "mirror")]
    estimator: EstimatorKind,
    /// none, max-steps:K, or drop:THETA (cumulative relative drop).
    #[arg(long, default_value = "drop:0.005")]
    stop: String,
    /// Start every greedy candidate from uniform messages.
    #[arg(long)]
    cold_start: bool,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    bp: BpArgs,
}

fn parse_x(text: &str, inst: &Instance) -> Result<ServiceConfig> {
    let x = match text {
        "all-on" => ServiceConfig::all_on(inst.n_units()),
        "all-off" => ServiceConfig::all_off(inst.n_units()),
        bits => bits.parse::<ServiceConfig>().with_context(|| format!("bad configuration {bits:?}"))?,
    };
    x.check_len(inst)?;
    Ok(x)
}

fn parse_t(text: &str, inst: &Instance) -> Result<PresencePattern> {
    let t = match text {
        "all-present" => PresencePattern::all_present(inst.n_users()),
        bits => bits.parse::<PresencePattern>().with_context(|| format!("bad presence pattern {bits:?}"))?,
    };
    t.check_len(inst)?;
    Ok(t)
}

fn parse_stop(text: &str) -> Result<StopRule> {
    Ok(match text.split_once(':') {
        None if text == "none" => StopRule::None,
        Some(("max-steps", k)) => StopRule::MaxSteps(k.parse().context("max-steps needs an integer")?),
        Some(("drop", v)) => StopRule::CumulativeRelDrop(v.parse().context("drop needs a number")?),
        _ => bail!("unknown stop rule {text:?}; use none, max-steps:K or drop:THETA"),
    })
}

fn stop_json(stop: StopRule) -> serde_json::Value {
    match stop {
        StopRule::None => json!("none"),
        StopRule::MaxSteps(k) => json!({ "max_steps": k }),
        StopRule::CumulativeRelDrop(v) => json!({ "cumulative_rel_drop": v }),
    }
}

fn estimator_for(
    kind: EstimatorKind,
    inst: &Instance,
    t: Option<&str>,
    sample_size: Option<usize>,
    seed: u64,
    bp: BpParams,
) -> Result<Estimator> {
    let limits = EnumerationLimits::default();
    let need_s = || sample_size.context("this estimator needs --sample-size");
    Ok(match kind {
        EstimatorKind::Mirror => Estimator::Mirror(bp),
        EstimatorKind::FixedT => Estimator::FixedT {
            t: parse_t(t.context("fixed-t needs --t")?, inst)?,
            bp,
        },
        EstimatorKind::Exact => match t {
            Some(t) => Estimator::ExactAt { t: parse_t(t, inst)?, limits },
            None => Estimator::Exact(limits),
        },
        EstimatorKind::Sampled => Estimator::Sampled { samples: need_s()?, seed, limits },
        EstimatorKind::SampledBp => Estimator::SampledBp { samples: need_s()?, seed, bp },
    })
}

fn estimator_name(kind: EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::Mirror => "mirror",
        EstimatorKind::FixedT => "fixed-t",
        EstimatorKind::Exact => "exact",
        EstimatorKind::Sampled => "sampled",
        EstimatorKind::SampledBp => "sampled-bp",
    }
}

fn hashes(entries: &[Entry]) -> serde_json::Value {
    entries.iter().map(|e| json!({ "id": e.id, "sha256": e.sha256 })).collect()
}

fn bp_json(bp: &BpParams) -> serde_json::Value {
    serde_json::to_value(bp).expect("parameters serialize")
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut sc = Scenario::load(&a.scenario)?;
    if let Some(seed) = a.seed {
        sc.seed = seed;
    }
    if let Some(r) = a.replicates {
        sc.replicates = r;
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut jobs = Vec::new();
    for (g, point) in sc.points().into_iter().enumerate() {
        for r in 0..sc.replicates {
            let seed = sc.seed.wrapping_add(jobs.len() as u64);
            jobs.push((g, r, provision::GeneratorParams { seed, ..point.clone() }));
        }
    }
    let entries: Vec<ManifestEntry> = jobs
        .into_par_iter()
        .map(|(g, r, params)| {
            let inst = generate_instance(&params).with_context(|| format!("grid point {g}, replicate {r}"))?;
            let id = format!("{}-p{g:03}-r{r:03}", sc.name);
            let file = format!("{id}.json");
            let path = a.out.join(&file);
            inst.save(&path).with_context(|| format!("writing {}", path.display()))?;
            Ok(ManifestEntry { id, file, grid_point: g, replicate: r, params, sha256: instance_hash(&inst) })
        })
        .collect::<Result<_>>()?;
    let manifest = BatchManifest { scenario: sc.name, seed: sc.seed, replicates: sc.replicates, grid: sc.grid, instances: entries };
    let path = a.out.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {} instances to {}", manifest.instances.len(), a.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let entries = load_inputs(&a.inputs)?;
    let bp = a.bp.params(a.seed);
    let rows: Vec<String> = entries
        .par_iter()
        .map(|e| {
            let x = parse_x(&a.x, &e.inst)?;
            let est = estimator_for(a.estimator, &e.inst, a.t.as_deref(), a.sample_size, a.seed, bp)?;
            let ev = evaluate(&e.inst, &x, &est).with_context(|| format!("evaluating {}", e.id))?;
            Ok(observable_row(&e.id, &x, &ev.observables))
        })
        .collect::<Result<_>>()?;
    let mut body = String::from(OBSERVABLE_HEADER);
    body.push('\n');
    for r in rows {
        body.push_str(&r);
        body.push('\n');
    }
    let manifest = json!({
        "command": "eval",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "instances": hashes(&entries),
        "estimator": estimator_name(a.estimator),
        "x": a.x,
        "t": a.t,
        "sample_size": a.sample_size,
        "seed": a.seed,
        "bp": bp_json(&bp),
    });
    Sink::new(a.out).write(body.as_bytes(), manifest)
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let entries = load_inputs(&a.inputs)?;
    if a.sample_size.iter().any(|&s| s == 0) {
        bail!("sample sizes must be positive");
    }
    let bp = a.bp.params(a.seed);
    let limits = EnumerationLimits::default();
    let blocks: Vec<String> = entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let x = parse_x(&a.x, &e.inst)?;
            let out = provision::bp::run_mirror(&e.inst, &x, &bp).with_context(|| format!("mirror on {}", e.id))?;
            let m = compute_from_marginals(&e.inst, &x, &out.marginals, Source::MirrorBp, out.report.converged);
            let seed = a.seed.wrapping_add(i as u64);
            let mut block = String::new();
            for &s in &a.sample_size {
                let avg: SampledAverage = match a.oracle {
                    Oracle::Enum => sampled_average(&e.inst, &x, s, seed, limits),
                    Oracle::Bp => sampled_bp_average(&e.inst, &x, s, seed, &bp).map(|(avg, _)| avg),
                }
                .with_context(|| format!("oracle on {}", e.id))?;
                block.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}\n",
                    e.id,
                    x_label(&x),
                    s,
                    m.w,
                    avg.w.mean,
                    avg.w.stderr,
                    m.n,
                    avg.n.mean,
                    avg.n.stderr,
                    out.report.converged,
                    avg.zero_z
                ));
            }
            Ok(block)
        })
        .collect::<Result<_>>()?;
    let mut body =
        String::from("instance_id,x_bitmask_or_hash,S,W_mirror,W_oracle,W_oracle_stderr,N_mirror,N_oracle,N_oracle_stderr,mirror_converged,zero_z\n");
    body.extend(blocks);
    let manifest = json!({
        "command": "compare",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "instances": hashes(&entries),
        "oracle": match a.oracle { Oracle::Enum => "enum", Oracle::Bp => "bp" },
        "x": a.x,
        "sample_sizes": a.sample_size,
        "seed": a.seed,
        "oracle_seed_rule": "seed + instance index",
        "bp": bp_json(&bp),
    });
    Sink::new(a.out).write(body.as_bytes(), manifest)
}

fn cmd_optimize(a: OptimizeArgs) -> Result<()> {
    let entries = load_inputs(std::slice::from_ref(&a.input))?;
    let e = &entries[0];
    let bp = a.bp.params(a.seed);
    let est = estimator_for(a.estimator, &e.inst, None, a.sample_size, a.seed, bp)?;
    let mut body = Vec::new();
    let mut manifest = json!({
        "command": "optimize",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "instances": hashes(&entries),
        "estimator": estimator_name(a.estimator),
        "sample_size": a.sample_size,
        "seed": a.seed,
        "bp": bp_json(&bp),
    });
    match a.method {
        Method::Greedy => {
            let stop = parse_stop(&a.stop)?;
            let params = GreedyParams { stop, warm_start: !a.cold_start };
            let t = greedy_decimation(&e.inst, &est, &params).with_context(|| format!("greedy on {}", e.id))?;
            t.write_csv(&mut body)?;
            manifest["method"] = json!("greedy");
            manifest["stop"] = stop_json(stop);
            manifest["warm_start"] = json!(params.warm_start);
            manifest["result"] = json!({
                "initial_osat": t.initial.osat,
                "chosen_stop": t.chosen_stop,
                "chosen_x": x_label(&t.chosen_x()),
            });
        }
        Method::Exhaustive => {
            let r = exhaustive_x(&e.inst, &est).with_context(|| format!("exhaustive search on {}", e.id))?;
            r.write_csv(&mut body)?;
            manifest["method"] = json!("exhaustive");
            manifest["result"] = json!({ "best_x": r.best_x.to_string(), "best_f": r.best.f });
        }
    }
    Sink::new(a.out).write(&body, manifest)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
    }
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Optimize(a) => cmd_optimize(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
