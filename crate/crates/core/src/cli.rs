//! Config-driven experiment runner behind the `kernelbounds` binary.
//!
//! A run reads one JSON config (`"schema": 1`, a `"command"` tag and its
//! parameters), writes CSV/JSON artifacts into the output directory and
//! reports findings: bound checks that computed fine but did not hold.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bounds::{
    default_c_grid, difference_bound_check, evaluate_envelope, explicit_bound_data, explicit_segment,
    fit_class_profile, fit_envelope, kernel_bound_check, bilinear_bound_check, scale_and_gamma,
    summability_profile, EnvelopeFit, Group, GroupSpec,
};
use crate::error::{Error, Result};
use crate::graph::{families, geometry_report, parse_edge_list, product_geometry_check, WeightedGraph};
use crate::harmonic::{
    convergence_order, cosh_extension, estimate_harnack_constant, inequality_trials, mixed_residual,
    sobolev_samples, MixedDomain,
};
use crate::laplacian::AnalyticSeries;
use crate::markov::{propagation_report, reversibility_residual, KernelMatrix, MarkovOperator};
use crate::transmutation::transmutation_residuals;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "kernelbounds", version, about = "Run a kernel-bound experiment from a JSON config")]
pub struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for CSV/JSON artifacts; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Path { n: usize },
    Cycle { n: usize },
    Grid { width: usize, height: usize },
    Star { leaves: usize },
    RandomTree { n: usize, seed: u64 },
    LazySegment { n: usize, loop_weight: f64 },
    /// Adds a loop of weight `m(u)` at every vertex.
    Lazy { of: Box<GraphSpec> },
    /// Edge-list file, relative to the config's directory.
    File { path: PathBuf },
}

impl GraphSpec {
    pub fn build(&self, base: &Path) -> Result<WeightedGraph> {
        match self {
            GraphSpec::Path { n } => families::path(*n),
            GraphSpec::Cycle { n } => families::cycle(*n),
            GraphSpec::Grid { width, height } => families::grid(*width, *height),
            GraphSpec::Star { leaves } => families::star(*leaves),
            GraphSpec::RandomTree { n, seed } => families::random_weight_tree(*n, *seed),
            GraphSpec::LazySegment { n, loop_weight } => families::lazy_segment(*n, *loop_weight),
            GraphSpec::Lazy { of } => families::lazy(&of.build(base)?),
            GraphSpec::File { path } => {
                let full = base.join(path);
                let text = fs::read_to_string(&full)
                    .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", full.display())))?;
                parse_edge_list(&text).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", full.display())))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            GraphSpec::Path { n } => format!("path{n}"),
            GraphSpec::Cycle { n } => format!("cycle{n}"),
            GraphSpec::Grid { width, height } => format!("grid{width}x{height}"),
            GraphSpec::Star { leaves } => format!("star{leaves}"),
            GraphSpec::RandomTree { n, seed } => format!("tree{n}s{seed}"),
            GraphSpec::LazySegment { n, loop_weight } => format!("lazysegment{n}w{loop_weight}"),
            GraphSpec::Lazy { of } => format!("lazy_{}", of.label()),
            GraphSpec::File { path } => path.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "group", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupConfig {
    LazyLattice { d: usize, truncation_radius: usize },
    LazyHeisenberg { truncation_radius: usize },
    Custom { spec: GroupSpec },
}

impl GroupConfig {
    fn build(&self) -> Result<Group> {
        Group::new(match self {
            GroupConfig::LazyLattice { d, truncation_radius } => GroupSpec::lazy_lattice(*d, *truncation_radius),
            GroupConfig::LazyHeisenberg { truncation_radius } => GroupSpec::lazy_heisenberg(*truncation_radius),
            GroupConfig::Custom { spec } => spec.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlCase {
    pub k: usize,
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductConfig {
    pub first: GraphSpec,
    pub second: GraphSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedEnvelope {
    #[serde(rename = "C")]
    pub big_c: f64,
    pub c: f64,
}

fn one() -> usize {
    1
}
fn two() -> f64 {
    2.0
}
fn four() -> f64 {
    4.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn transmute_tolerance() -> f64 {
    1e-10
}
fn plateau_tolerance() -> f64 {
    1.05
}
fn default_j_max() -> usize {
    4
}
fn default_deltas() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}
fn default_lambdas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0]
}
fn default_order_range() -> [f64; 2] {
    [1.8, 2.2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default)]
    pub graphs: Vec<GraphSpec>,
    #[serde(default)]
    pub products: Vec<ProductConfig>,
    pub r0: f64,
    /// Poincaré centres on products are `0, stride, 2·stride, …`.
    #[serde(default = "one")]
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmuteConfig {
    pub graphs: Vec<GraphSpec>,
    pub a_list: Vec<f64>,
    pub n_max: usize,
    #[serde(default = "transmute_tolerance")]
    pub tolerance: f64,
    /// Also check finite propagation and reversibility of `Pⁿ`.
    #[serde(default = "yes")]
    pub propagation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCheckConfig {
    pub cases: Vec<KlCase>,
    pub n_list: Vec<usize>,
    #[serde(default = "half")]
    pub s: f64,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
    /// Tails up to `q = ⌈q_factor · n^{1/(2k)}⌉`.
    #[serde(default = "four")]
    pub q_factor: f64,
    #[serde(default)]
    pub c_grid: Option<Vec<f64>>,
    #[serde(default = "two")]
    pub slack: f64,
    /// Allowed ratio of fitted decay rates across `n`.
    #[serde(default = "two")]
    pub stability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBoundConfig {
    pub graph: GraphSpec,
    pub k: usize,
    pub l: usize,
    pub n: usize,
    #[serde(default = "half")]
    pub s: f64,
    pub pairs: Vec<[usize; 2]>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub c_grid: Option<Vec<f64>>,
    #[serde(default = "two")]
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitBoundConfig {
    pub cases: Vec<KlCase>,
    pub n_list: Vec<usize>,
    /// `n` values whose per-`n` prefactors must agree within `spread_factor`.
    #[serde(default)]
    pub spread_n: Vec<usize>,
    #[serde(default = "four")]
    pub spread_factor: f64,
    #[serde(default)]
    pub c_grid: Option<Vec<f64>>,
    #[serde(default = "two")]
    pub slack: f64,
    /// Check this envelope instead of fitting one.
    #[serde(default)]
    pub fixed: Option<FixedEnvelope>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSumConfig {
    pub group: GroupConfig,
    pub k: usize,
    pub n_max: usize,
    #[serde(default)]
    pub plateau: Option<[usize; 2]>,
    #[serde(default = "plateau_tolerance")]
    pub plateau_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupDiffConfig {
    pub group: GroupConfig,
    pub k: usize,
    pub n_max: usize,
    #[serde(default)]
    pub c_grid: Option<Vec<f64>>,
    #[serde(default = "two")]
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackConfig {
    pub graph: GraphSpec,
    pub center: usize,
    pub r_list: Vec<f64>,
    pub h: f64,
    pub samples: usize,
    pub seed: u64,
    /// Allowed ratio of the largest to the smallest maximum over `r_list`.
    #[serde(default = "two")]
    pub stability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolevConfig {
    pub graph: GraphSpec,
    pub center: usize,
    pub r: f64,
    pub h: f64,
    pub samples: usize,
    pub seed: u64,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_lambdas")]
    pub lambda_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoshConfig {
    pub graphs: Vec<GraphSpec>,
    pub r: f64,
    pub h_list: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_order_range")]
    pub order_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalitiesConfig {
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Experiment {
    Geometry(GeometryConfig),
    Transmute(TransmuteConfig),
    ClassCheck(ClassCheckConfig),
    KernelBound(KernelBoundConfig),
    ExplicitBound(ExplicitBoundConfig),
    GroupSum(GroupSumConfig),
    GroupDiff(GroupDiffConfig),
    Harnack(HarnackConfig),
    Sobolev(SobolevConfig),
    Cosh(CoshConfig),
    Inequalities(InequalitiesConfig),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Geometry(_) => "geometry",
            Experiment::Transmute(_) => "transmute",
            Experiment::ClassCheck(_) => "class-check",
            Experiment::KernelBound(_) => "kernel-bound",
            Experiment::ExplicitBound(_) => "explicit-bound",
            Experiment::GroupSum(_) => "group-sum",
            Experiment::GroupDiff(_) => "group-diff",
            Experiment::Harnack(_) => "harnack",
            Experiment::Sobolev(_) => "sobolev",
            Experiment::Cosh(_) => "cosh",
            Experiment::Inequalities(_) => "inequalities",
        }
    }

    fn set_seed(&mut self, seed: u64) {
        match self {
            Experiment::KernelBound(c) => c.seed = seed,
            Experiment::Harnack(c) => c.seed = seed,
            Experiment::Sobolev(c) => c.seed = seed,
            Experiment::Cosh(c) => c.seed = seed,
            Experiment::Inequalities(c) => c.seed = seed,
            _ => {}
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::ConfigInvalid(msg.to_string()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let grid_ok = |g: &Option<Vec<f64>>| g.as_ref().map_or(true, |g| !g.is_empty() && g.iter().all(|&c| positive(c)));
        match self {
            Experiment::Geometry(c) => {
                if c.graphs.is_empty() && c.products.is_empty() {
                    return bad("geometry needs at least one graph or product");
                }
                if !(c.r0 >= 1.0) || c.stride == 0 {
                    return bad("geometry needs r0 >= 1 and stride >= 1");
                }
            }
            Experiment::Transmute(c) => {
                if c.graphs.is_empty() || c.a_list.is_empty() || c.n_max == 0 {
                    return bad("transmute needs graphs, a_list and n_max >= 1");
                }
                if c.a_list.iter().any(|a| !(a.abs() < 1.0)) {
                    return bad("every a must lie in (-1, 1)");
                }
                if !positive(c.tolerance) {
                    return bad("tolerance must be positive");
                }
            }
            Experiment::ClassCheck(c) => {
                if c.cases.is_empty() || c.n_list.is_empty() || c.n_list.contains(&0) {
                    return bad("class-check needs cases and positive n_list");
                }
                if c.cases.iter().any(|kl| kl.k == 0) || !(c.s > 0.0 && c.s <= 1.0) {
                    return bad("class-check needs k >= 1 and s in (0, 1]");
                }
                if !positive(c.q_factor) || !grid_ok(&c.c_grid) || !(c.slack >= 1.0) || !(c.stability >= 1.0) {
                    return bad("class-check needs positive q_factor and c_grid, slack and stability >= 1");
                }
            }
            Experiment::KernelBound(c) => {
                if c.k == 0 || c.n == 0 || c.pairs.is_empty() || c.trials == 0 {
                    return bad("kernel-bound needs k, n >= 1, pairs and trials >= 1");
                }
                if !(c.s > 0.0 && c.s <= 1.0) || !grid_ok(&c.c_grid) || !(c.slack >= 1.0) {
                    return bad("kernel-bound needs s in (0, 1], positive c_grid and slack >= 1");
                }
            }
            Experiment::ExplicitBound(c) => {
                if c.cases.is_empty() || c.n_list.is_empty() || c.n_list.contains(&0) {
                    return bad("explicit-bound needs cases and positive n_list");
                }
                if c.cases.iter().any(|kl| kl.k == 0) {
                    return bad("explicit-bound needs k >= 1");
                }
                if c.spread_n.iter().any(|n| !c.n_list.contains(n)) {
                    return bad("spread_n must be a subset of n_list");
                }
                if !grid_ok(&c.c_grid) || !(c.slack >= 1.0) || !(c.spread_factor >= 1.0) {
                    return bad("explicit-bound needs positive c_grid, slack and spread_factor >= 1");
                }
                if let Some(f) = c.fixed {
                    if !positive(f.big_c) || !(f.c >= 0.0) {
                        return bad("fixed envelope needs C > 0 and c >= 0");
                    }
                }
            }
            Experiment::GroupSum(c) => {
                if c.k == 0 || c.n_max == 0 {
                    return bad("group-sum needs k, n_max >= 1");
                }
                if let Some([lo, hi]) = c.plateau {
                    if lo == 0 || lo > hi || hi > c.n_max {
                        return bad("plateau must satisfy 1 <= lo <= hi <= n_max");
                    }
                }
            }
            Experiment::GroupDiff(c) => {
                if c.k == 0 || c.n_max == 0 || !grid_ok(&c.c_grid) || !(c.slack >= 1.0) {
                    return bad("group-diff needs k, n_max >= 1, positive c_grid and slack >= 1");
                }
            }
            Experiment::Harnack(c) => {
                if c.r_list.is_empty() || c.r_list.iter().any(|&r| !positive(r)) || !positive(c.h) || c.samples == 0 {
                    return bad("harnack needs positive r_list, h and samples");
                }
                if !(c.stability >= 1.0) {
                    return bad("stability must be at least 1");
                }
            }
            Experiment::Sobolev(c) => {
                if !positive(c.r) || !positive(c.h) || c.samples == 0 {
                    return bad("sobolev needs positive r, h and samples");
                }
                if c.deltas.is_empty() || c.deltas.iter().any(|&d| !(d > 0.0 && d <= 1.0)) {
                    return bad("deltas must lie in (0, 1]");
                }
                if c.deltas.windows(2).any(|w| w[0] >= w[1]) {
                    return bad("deltas must be increasing");
                }
                if c.lambda_grid.is_empty() || c.lambda_grid.iter().any(|&l| !positive(l)) {
                    return bad("lambda_grid must be positive");
                }
            }
            Experiment::Cosh(c) => {
                if c.graphs.is_empty() || c.h_list.len() < 2 || c.h_list.iter().any(|&h| !positive(h)) || !positive(c.r) {
                    return bad("cosh needs graphs, positive r and at least two positive h");
                }
            }
            Experiment::Inequalities(c) => {
                if c.trials == 0 {
                    return bad("inequalities needs trials >= 1");
                }
            }
        }
        Ok(())
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<Experiment> {
    let mut value: Value =
        serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(format!("not valid JSON: {e}")))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::ConfigInvalid("config must be a JSON object".into()))?;
    match obj.remove("schema") {
        Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION) => {}
        Some(other) => return Err(Error::ConfigInvalid(format!("unsupported schema {other}"))),
        None => return Err(Error::ConfigInvalid("missing \"schema\"".into())),
    }
    let experiment: Experiment =
        serde_json::from_value(value).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    experiment.validate()?;
    Ok(experiment)
}

/// What a successful run produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Bound checks that did not hold.
    pub findings: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.findings.is_empty() {
            0
        } else {
            2
        }
    }
}

struct Sink<'a> {
    dir: &'a Path,
    outcome: Outcome,
}

impl Sink<'_> {
    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, content)?;
        self.outcome.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn finding(&mut self, msg: String) {
        self.outcome.findings.push(msg);
    }
}

/// Runs an experiment, writing artifacts under `out`.
pub fn run(experiment: &Experiment, base: &Path, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out)?;
    let mut sink = Sink {
        dir: out,
        outcome: Outcome::default(),
    };
    match experiment {
        Experiment::Geometry(c) => run_geometry(c, base, &mut sink)?,
        Experiment::Transmute(c) => run_transmute(c, base, &mut sink)?,
        Experiment::ClassCheck(c) => run_class_check(c, &mut sink)?,
        Experiment::KernelBound(c) => run_kernel_bound(c, base, &mut sink)?,
        Experiment::ExplicitBound(c) => run_explicit_bound(c, &mut sink)?,
        Experiment::GroupSum(c) => run_group_sum(c, &mut sink)?,
        Experiment::GroupDiff(c) => run_group_diff(c, &mut sink)?,
        Experiment::Harnack(c) => run_harnack(c, base, &mut sink)?,
        Experiment::Sobolev(c) => run_sobolev(c, base, &mut sink)?,
        Experiment::Cosh(c) => run_cosh(c, base, &mut sink)?,
        Experiment::Inequalities(c) => run_inequalities(c, &mut sink)?,
    }
    Ok(sink.outcome)
}

/// Entry point used by the binary: returns the process exit code.
pub fn main_with_args(args: Args) -> i32 {
    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return 1;
        }
    }
    let result = fs::read_to_string(&args.config)
        .map_err(|e| Error::Io(format!("{}: {e}", args.config.display())))
        .and_then(|text| parse_config(&text))
        .and_then(|mut experiment| {
            if let Some(seed) = args.seed {
                experiment.set_seed(seed);
            }
            let base = args.config.parent().unwrap_or(Path::new("."));
            run(&experiment, base, &args.out).map(|o| (experiment, o))
        });
    match result {
        Ok((experiment, outcome)) => {
            for f in &outcome.findings {
                eprintln!("violation: {f}");
            }
            println!(
                "{}: {} file(s) written to {}, {} violation(s)",
                experiment.name(),
                outcome.files.len(),
                args.out.display(),
                outcome.findings.len()
            );
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run_geometry(c: &GeometryConfig, base: &Path, sink: &mut Sink) -> Result<()> {
    let mut graphs = Vec::new();
    for spec in &c.graphs {
        let g = spec.build(base)?;
        graphs.push(json!({"graph": spec.label(), "report": geometry_report(&g, c.r0)?}));
    }
    let mut products = Vec::new();
    for (i, p) in c.products.iter().enumerate() {
        let (a, b) = (p.first.build(base)?, p.second.build(base)?);
        let report = product_geometry_check(&a, &b, c.r0, c.stride)?;
        let name = format!("{}x{}", p.first.label(), p.second.label());
        for r in report.violations() {
            let &(_, d, pc) = report.per_radius.iter().find(|e| e.0 == r).unwrap();
            sink.finding(format!(
                "product {name} radius {r}: doubling {d:.6} (bound {:.6}), poincare {pc:.6} (bound {:.6})",
                report.doubling_bound, report.poincare_bound
            ));
        }
        sink.write(&format!("product_{i}.csv"), &report.to_csv())?;
        let max_bound = 2.0 * report.first.poincare.max(report.second.poincare);
        products.push(json!({
            "product": name,
            "report": report,
            "poincare_two_max_bound": max_bound,
        }));
    }
    sink.json("geometry.json", &json!({"graphs": graphs, "products": products}))
}

fn run_transmute(c: &TransmuteConfig, base: &Path, sink: &mut Sink) -> Result<()> {
    let mut residual_csv = String::from("graph,a,n,residual\n");
    let mut propagation_csv =
        String::from("graph,lazy,n,nonzero_beyond_n,zero_within_n,walk_mismatches,reversibility\n");
    let mut summary = Vec::new();
    for spec in &c.graphs {
        let g = spec.build(base)?;
        let p = MarkovOperator::new(g.clone());
        let mut worst = 0.0_f64;
        for &a in &c.a_list {
            let res = transmutation_residuals(&p, a, c.n_max)?;
            for (n, r) in res.iter().enumerate() {
                residual_csv.push_str(&format!("{},{a},{n},{r:e}\n", spec.label()));
                if *r > c.tolerance {
                    sink.finding(format!("transmutation residual {r:e} on {} at a = {a}, n = {n}", spec.label()));
                }
                worst = worst.max(*r);
            }
        }
        let mut propagation_ok = true;
        if c.propagation {
            let lazy_graph = families::lazy(&g)?;
            for (lazy, graph) in [(false, g.clone()), (true, lazy_graph)] {
                let p = MarkovOperator::new(graph);
                let step = p.to_dense();
                let mut power = DMatrix::<f64>::identity(p.len(), p.len());
                for n in 1..=c.n_max {
                    power = &step * &power;
                    let kernel = KernelMatrix::new(power.clone(), p.measure().to_vec());
                    let rep = propagation_report(&p, &kernel, n);
                    let rev = reversibility_residual(&kernel);
                    propagation_csv.push_str(&format!(
                        "{},{lazy},{n},{},{},{},{rev:e}\n",
                        spec.label(),
                        rep.nonzero_beyond_n,
                        rep.zero_within_n,
                        rep.walk_mismatches
                    ));
                    let support_bad = rep.nonzero_beyond_n > 0 || rep.walk_mismatches > 0 || (lazy && rep.zero_within_n > 0);
                    if support_bad || rev > 1e-12 {
                        propagation_ok = false;
                        sink.finding(format!(
                            "propagation on {}{} at n = {n}: {} beyond n, {} zero within n, {} walk mismatches, reversibility {rev:e}",
                            if lazy { "lazy " } else { "" },
                            spec.label(),
                            rep.nonzero_beyond_n,
                            rep.zero_within_n,
                            rep.walk_mismatches
                        ));
                    }
                }
            }
        }
        summary.push(json!({"graph": spec.label(), "max_residual": worst, "propagation_ok": propagation_ok}));
    }
    sink.write("residuals.csv", &residual_csv)?;
    if c.propagation {
        sink.write("propagation.csv", &propagation_csv)?;
    }
    sink.json("summary.json", &json!({"tolerance": c.tolerance, "graphs": summary}))
}

fn q_max_for(k: usize, n: usize, factor: f64) -> u64 {
    let (sigma, _) = scale_and_gamma(k, n);
    (factor * sigma).ceil() as u64
}

fn run_class_check(c: &ClassCheckConfig, sink: &mut Sink) -> Result<()> {
    let grid = c.c_grid.clone().unwrap_or_else(default_c_grid);
    let mut csv = String::from("k,l,n,C,c,worst_ratio,argmax_j,argmax_q,holds\n");
    let mut fits = Vec::new();
    for kl in &c.cases {
        let mut cs = Vec::new();
        for &n in &c.n_list {
            let fit = fit_class_profile(kl.k, kl.l, n, c.s, c.j_max, q_max_for(kl.k, n, c.q_factor), &grid, c.slack)?;
            let m = &fit.membership;
            csv.push_str(&format!(
                "{},{},{n},{:e},{},{:e},{},{},{}\n",
                kl.k, kl.l, fit.profile.prefactor, fit.profile.c, m.worst_ratio, m.argmax_j, m.argmax_q, m.holds
            ));
            if !m.holds {
                sink.finding(format!(
                    "class membership fails for k = {}, l = {}, n = {n}: ratio {:e} at j = {}, q = {}",
                    kl.k, kl.l, m.worst_ratio, m.argmax_j, m.argmax_q
                ));
            }
            cs.push(fit.profile.c);
            fits.push(fit);
        }
        let hi = cs.iter().copied().fold(f64::MIN, f64::max);
        let lo = cs.iter().copied().fold(f64::MAX, f64::min);
        if !(lo > 0.0) || hi / lo > c.stability {
            sink.finding(format!(
                "fitted c for k = {}, l = {} varies from {lo} to {hi}, beyond factor {}",
                kl.k, kl.l, c.stability
            ));
        }
    }
    sink.write("class.csv", &csv)?;
    sink.json("class.json", &fits)
}

fn run_kernel_bound(c: &KernelBoundConfig, base: &Path, sink: &mut Sink) -> Result<()> {
    let g = c.graph.build(base)?;
    let p = MarkovOperator::new(g);
    let grid = c.c_grid.clone().unwrap_or_else(default_c_grid);
    let j_max = c.k + c.l;
    let fit = fit_class_profile(c.k, c.l, c.n, c.s, j_max, q_max_for(c.k, c.n, 4.0), &grid, c.slack)?;
    let f = AnalyticSeries::example_family(c.k, c.l, c.n);
    let mut rows = Vec::new();
    for (i, &[w1, w2]) in c.pairs.iter().enumerate() {
        let bilinear = bilinear_bound_check(&p, &f, &fit.profile, w1, w2, c.k, c.l, c.trials, c.seed.wrapping_add(i as u64))?;
        let kernel = kernel_bound_check(&p, &f, &fit.profile, w1, w2)?;
        if bilinear.operator_norm_ratio > 1.0 + 1e-12 || bilinear.worst_sampled_ratio > 1.0 + 1e-12 {
            sink.finding(format!(
                "bilinear bound exceeded for balls at ({w1}, {w2}): operator norm ratio {:e}",
                bilinear.operator_norm_ratio
            ));
        }
        rows.push(json!({"w1": w1, "w2": w2, "bilinear": bilinear, "kernel": kernel}));
    }
    let mut csv = String::from("w1,w2,q,operator_norm_ratio,worst_sampled_ratio,c4\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{:e},{:e},{:e}\n",
            r["w1"], r["w2"], r["kernel"]["q"], r["bilinear"]["operator_norm_ratio"].as_f64().unwrap_or(f64::NAN),
            r["bilinear"]["worst_sampled_ratio"].as_f64().unwrap_or(f64::NAN),
            r["kernel"]["c4"].as_f64().unwrap_or(f64::NAN)
        ));
    }
    sink.write("kernel_bound.csv", &csv)?;
    sink.json("kernel_bound.json", &json!({"profile": fit.profile, "pairs": rows}))
}

fn spread_over(fit: &EnvelopeFit, ns: &[usize]) -> f64 {
    let vals: Vec<f64> = fit
        .per_n
        .iter()
        .filter(|(n, c)| ns.contains(n) && *c > 0.0)
        .map(|&(_, c)| c)
        .collect();
    if vals.is_empty() {
        return 1.0;
    }
    vals.iter().copied().fold(f64::MIN, f64::max) / vals.iter().copied().fold(f64::MAX, f64::min)
}

fn run_explicit_bound(c: &ExplicitBoundConfig, sink: &mut Sink) -> Result<()> {
    let grid = c.c_grid.clone().unwrap_or_else(default_c_grid);
    let mut summary = Vec::new();
    for kl in &c.cases {
        let mut data = Vec::new();
        for &n in &c.n_list {
            let (g, center) = explicit_segment(kl.k, n)?;
            data.extend(explicit_bound_data(&g, center, kl.k, kl.l, n)?);
        }
        let (_, gamma) = scale_and_gamma(kl.k, 1);
        let fit = match c.fixed {
            Some(f) => evaluate_envelope(&data, gamma, f.big_c, f.c)?,
            None => fit_envelope(&data, gamma, &grid, c.slack)?,
        };
        let violations = fit.violations();
        for v in &violations {
            sink.finding(format!(
                "k = {}, l = {}: envelope violated at n = {}, d = {} (lhs {:e} > rhs {:e})",
                kl.k, kl.l, v.n, v.d, v.lhs, v.rhs
            ));
        }
        let spread = spread_over(&fit, &c.spread_n);
        if spread > c.spread_factor {
            sink.finding(format!(
                "k = {}, l = {}: prefactor spread {spread:.4} over n = {:?} exceeds {}",
                kl.k, kl.l, c.spread_n, c.spread_factor
            ));
        }
        sink.write(&format!("explicit_k{}_l{}.csv", kl.k, kl.l), &fit.to_csv())?;
        summary.push(json!({
            "k": kl.k,
            "l": kl.l,
            "C": fit.big_c,
            "c": fit.c,
            "gamma": fit.gamma,
            "per_n": fit.per_n,
            "spread": spread,
            "violations": violations.iter().map(|v| json!({"n": v.n, "d": v.d})).collect::<Vec<_>>(),
        }));
    }
    sink.json("explicit.json", &summary)
}

fn run_group_sum(c: &GroupSumConfig, sink: &mut Sink) -> Result<()> {
    let group = c.group.build()?;
    let profile = summability_profile(&group, c.k, c.n_max)?;
    let mut csv = String::from("n,sum,naive\n");
    for (i, s) in profile.sums.iter().enumerate() {
        csv.push_str(&format!("{},{s:e},{:e}\n", i + 1, profile.naive_bound(i + 1)));
    }
    let plateau = c.plateau.map(|[lo, hi]| profile.plateau_ratio(lo, hi));
    if let (Some(ratio), Some([lo, hi])) = (plateau, c.plateau) {
        if ratio > c.plateau_tolerance {
            sink.finding(format!("summability profile not flat on [{lo}, {hi}]: ratio {ratio:.6} > {}", c.plateau_tolerance));
        }
    }
    sink.write("summability.csv", &csv)?;
    sink.json(
        "summability.json",
        &json!({
            "k": c.k,
            "n_max": c.n_max,
            "max": profile.max,
            "naive_base": profile.naive_base,
            "naive_at_n_max": profile.naive_bound(c.n_max),
            "plateau_ratio": plateau,
        }),
    )
}

fn run_group_diff(c: &GroupDiffConfig, sink: &mut Sink) -> Result<()> {
    let group = c.group.build()?;
    let grid = c.c_grid.clone().unwrap_or_else(default_c_grid);
    let report = difference_bound_check(&group, c.k, c.n_max, &grid, c.slack)?;
    for n in &report.identity_failures {
        sink.finding(format!("difference identity fails at n = {n}"));
    }
    for v in report.fit.violations() {
        sink.finding(format!("difference envelope violated at n = {}, |g| = {}", v.n, v.d));
    }
    sink.write("difference.csv", &report.fit.to_csv())?;
    sink.json(
        "difference.json",
        &json!({
            "k": report.k,
            "n_max": report.n_max,
            "identity_exact": report.identity_exact,
            "C": report.fit.big_c,
            "c": report.fit.c,
            "gamma": report.fit.gamma,
            "per_n": report.fit.per_n,
        }),
    )
}

fn check_room(g: &WeightedGraph, center: usize, r: f64) -> Result<()> {
    if center >= g.len() {
        return Err(Error::ConfigInvalid(format!("center {center} is not a vertex")));
    }
    let ecc = g.bfs_distances(center).into_iter().max().unwrap_or(0) as f64;
    if ecc < 2.0 * r {
        return Err(Error::ConfigInvalid(format!(
            "graph reaches only distance {ecc} from the center, need 2r = {}",
            2.0 * r
        )));
    }
    Ok(())
}

fn run_harnack(c: &HarnackConfig, base: &Path, sink: &mut Sink) -> Result<()> {
    let g = c.graph.build(base)?;
    let mut per_r = Vec::new();
    for &r in &c.r_list {
        check_room(&g, c.center, r)?;
        let est = estimate_harnack_constant(&g, c.center, r, c.h, c.samples, c.seed)?;
        let mut csv = String::from("sample_id,spike,ratio,residual\n");
        for s in &est.samples {
            csv.push_str(&format!("{},{},{:e},{:e}\n", s.id, s.spike, s.ratio, s.residual));
        }
        sink.write(&format!("harnack_r{r}.csv"), &csv)?;
        if !est.max_ratio.is_finite() {
            sink.finding(format!("Harnack ratio not finite at r = {r}"));
        }
        per_r.push((r, est.max_ratio));
    }
    let hi = per_r.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let lo = per_r.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    if hi / lo > c.stability {
        sink.finding(format!("Harnack maxima vary by {:.4} across r, beyond {}", hi / lo, c.stability));
    }
    sink.json(
        "harnack.json",
        &json!({
            "graph": c.graph.label(),
            "center": c.center,
            "h": c.h,
            "samples": c.samples,
            "seed": c.seed,
            "max_ratio": per_r.iter().map(|(r, m)| json!({"r": r, "max_ratio": m})).collect::<Vec<_>>(),
            "stability": hi / lo,
        }),
    )
}

fn run_sobolev(c: &SobolevConfig, base: &Path, sink: &mut Sink) -> Result<()> {
    let g = c.graph.build(base)?;
    check_room(&g, c.center, c.r)?;
    let domain = MixedDomain::new(g, c.center, c.r, c.h)?;
    let rows = sobolev_samples(&domain, c.samples, c.seed, &c.deltas, &c.lambda_grid)?;
    let mut csv = String::from("sample_id");
    for d in &c.deltas {
        csv.push_str(&format!(",sobolev_{d}"));
    }
    csv.push_str(",levelset\n");
    for row in &rows {
        csv.push_str(&row.id.to_string());
        for v in &row.sobolev {
            csv.push_str(&format!(",{v:e}"));
        }
        csv.push_str(&format!(",{:e}\n", row.levelset));
        if row.sobolev.iter().any(|v| !v.is_finite()) || !row.levelset.is_finite() {
            sink.finding(format!("sample {}: non-finite constant", row.id));
        }
        if !row.monotone() {
            sink.finding(format!("sample {}: Sobolev ratio not monotone in delta", row.id));
        }
    }
    let col_max = |i: usize| rows.iter().map(|r| r.sobolev[i]).fold(0.0, f64::max);
    sink.write("sobolev.csv", &csv)?;
    sink.json(
        "sobolev.json",
        &json!({
            "deltas": c.deltas,
            "max_sobolev": (0..c.deltas.len()).map(col_max).collect::<Vec<_>>(),
            "max_levelset": rows.iter().map(|r| r.levelset).fold(0.0, f64::max),
        }),
    )
}

fn run_cosh(c: &CoshConfig, base: &Path, sink: &mut Sink) -> Result<()> {
    let mut csv = String::from("graph,h,residual\n");
    let mut summary = Vec::new();
    for (i, spec) in c.graphs.iter().enumerate() {
        let p = MarkovOperator::new(spec.build(base)?);
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(i as u64);
        let g: Vec<f64> = (0..p.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let mut residuals = Vec::new();
        for &h in &c.h_list {
            let xi = cosh_extension(&p, &g, c.r, h, 200)?;
            let res = mixed_residual(&p, &xi);
            csv.push_str(&format!("{},{h},{res:e}\n", spec.label()));
            residuals.push(res);
        }
        let order = convergence_order(&c.h_list, &residuals)?;
        if !(order >= c.order_range[0] && order <= c.order_range[1]) {
            sink.finding(format!("{}: fitted order {order:.4} outside {:?}", spec.label(), c.order_range));
        }
        summary.push(json!({"graph": spec.label(), "order": order, "residuals": residuals}));
    }
    sink.write("cosh.csv", &csv)?;
    sink.json("cosh.json", &summary)
}

fn run_inequalities(c: &InequalitiesConfig, sink: &mut Sink) -> Result<()> {
    let report = inequality_trials(c.trials, c.seed);
    if report.delmotte_violations > 0 {
        sink.finding(format!("{} Delmotte inequality violations", report.delmotte_violations));
    }
    if report.log_violations > 0 {
        sink.finding(format!("{} logarithm inequality violations", report.log_violations));
    }
    sink.json("inequalities.json", &report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_is_required() {
        assert!(matches!(
            parse_config(r#"{"command": "inequalities", "trials": 5, "seed": 1}"#),
            Err(Error::ConfigInvalid(_))
        ));
        assert!(matches!(
            parse_config(r#"{"schema": 2, "command": "inequalities", "trials": 5, "seed": 1}"#),
            Err(Error::ConfigInvalid(_))
        ));
        assert!(parse_config(r#"{"schema": 1, "command": "inequalities", "trials": 5, "seed": 1}"#).is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"schema": 1, "command": "inequalities", "trials": 5, "seed": 1, "extra": 0}"#;
        assert!(matches!(parse_config(text), Err(Error::ConfigInvalid(_))));
        let nested = r#"{"schema": 1, "command": "cosh", "graphs": [{"family": "path", "n": 4, "w": 1}],
            "r": 1, "h_list": [0.5, 0.25], "seed": 0}"#;
        assert!(matches!(parse_config(nested), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn validation_precedes_work() {
        let text = r#"{"schema": 1, "command": "transmute", "graphs": [{"family": "cycle", "n": 5}],
            "a_list": [1.5], "n_max": 3}"#;
        assert!(matches!(parse_config(text), Err(Error::ConfigInvalid(_))));
        assert!(matches!(parse_config(""), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn graph_labels() {
        let spec = GraphSpec::Lazy {
            of: Box::new(GraphSpec::Grid { width: 3, height: 4 }),
        };
        assert_eq!(spec.label(), "lazy_grid3x4");
        assert_eq!(spec.build(Path::new(".")).unwrap().len(), 12);
    }
}
