//! Seeded benchmark runs over generated workloads.
//!
//! A benchmark generates one instance, decomposes it once, then repeats the
//! estimator for every shot budget with per-repetition seeds and compares
//! against the exact value. All randomness flows from the three seeds in the
//! config, so reruns give byte-identical CSV files.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::circuit::AnsatzSpec;
use crate::decompose::{greedy_decompose, Decomposition, OptimizerConfig};
use crate::error::{Error, Result};
use crate::estimate::{self, make_plan, median_batches, Ensemble};
use crate::linalg::{DenseOperator, StateVector};
use crate::rng;
use crate::workloads::{self, SlaterSpec, SparseHamiltonianSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Workload {
    Sparse,
    InnerProduct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub instance: u64,
    pub decompose: u64,
    pub estimate: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub workload: Workload,
    /// Qubits of the sparse Hamiltonian, or fermionic modes of the inner-product workload.
    pub n: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    #[serde(rename = "K")]
    pub max_terms: usize,
    pub eps1: f64,
    pub eps2: f64,
    pub delta: f64,
    pub seeds: Seeds,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Total shots per estimate; empty means the count required for `(eps2, delta)`.
    #[serde(default)]
    pub shots: Vec<usize>,
    pub repetitions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nnz: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    #[serde(default)]
    pub dry_run: bool,
}

const MAX_BENCH_QUBITS: usize = 10;

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Collects every schema violation instead of stopping at the first.
struct Checker<'a> {
    obj: &'a serde_json::Map<String, Value>,
    prefix: &'static str,
    errors: Vec<String>,
}

impl<'a> Checker<'a> {
    fn new(obj: &'a serde_json::Map<String, Value>, prefix: &'static str) -> Self {
        Self { obj, prefix, errors: Vec::new() }
    }

    fn fail(&mut self, key: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{}.{key}: {msg}", self.prefix));
    }

    fn field(&mut self, key: &str, required: bool) -> Option<&'a Value> {
        match self.obj.get(key) {
            None if required => {
                self.fail(key, "missing required field");
                None
            }
            v => v,
        }
    }

    fn uint(&mut self, key: &str, required: bool, min: u64) -> Option<u64> {
        let v = self.field(key, required)?;
        match v.as_u64() {
            Some(x) if x >= min => Some(x),
            Some(x) => {
                self.fail(key, format!("must be at least {min}, got {x}"));
                None
            }
            None => {
                self.fail(key, format!("expected a non-negative integer, got {}", type_name(v)));
                None
            }
        }
    }

    fn real(&mut self, key: &str, required: bool, lo: f64, hi: f64) -> Option<f64> {
        let v = self.field(key, required)?;
        match v.as_f64() {
            Some(x) if x > lo && x < hi => Some(x),
            Some(x) => {
                self.fail(key, format!("must lie in ({lo}, {hi}), got {x}"));
                None
            }
            None => {
                self.fail(key, format!("expected a number, got {}", type_name(v)));
                None
            }
        }
    }

    fn unknown(&mut self, allowed: &[&str]) {
        let extra: Vec<String> = self.obj.keys().filter(|k| !allowed.contains(&k.as_str())).cloned().collect();
        for k in extra {
            self.fail(&k, "unknown field");
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "workload",
    "n",
    "L",
    "K",
    "eps1",
    "eps2",
    "delta",
    "seeds",
    "optimizer",
    "shots",
    "repetitions",
    "nnz",
    "tau",
    "dry_run",
];
const OPTIMIZER_KEYS: &[&str] = &["learning_rate", "max_iters", "restarts", "fd_step", "grad_tol", "rng_seed"];

impl BenchConfig {
    /// Parses and validates a config, reporting every violation with its
    /// JSON path (or the line and column of a syntax error).
    pub fn parse(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(vec![format!("line {}, column {}: {e}", e.line(), e.column())]))?;
        let Some(obj) = root.as_object() else {
            return Err(Error::Config(vec![format!("$: expected an object, got {}", type_name(&root))]));
        };
        let mut c = Checker::new(obj, "$");
        c.unknown(TOP_KEYS);
        let workload = match c.field("workload", true) {
            Some(Value::String(s)) if s == "sparse" || s == "inner_product" => Some(s.as_str()),
            Some(v) => {
                c.fail("workload", format!("expected one of \"sparse\", \"inner_product\", got {v}"));
                None
            }
            None => None,
        };
        let n = c.uint("n", true, 1);
        if let Some(n) = n {
            let limit = if workload == Some("inner_product") { MAX_BENCH_QUBITS - 1 } else { MAX_BENCH_QUBITS };
            if n as usize > limit {
                c.fail("n", format!("at most {limit} for this workload, got {n}"));
            }
        }
        c.uint("L", true, 0);
        c.uint("K", true, 1);
        c.real("eps1", true, 0.0, f64::INFINITY);
        c.real("eps2", true, 0.0, 1.0);
        c.real("delta", true, 0.0, 1.0);
        c.uint("repetitions", true, 1);
        if let Some(nnz) = c.uint("nnz", false, 1) {
            if workload == Some("inner_product") {
                c.fail("nnz", "only applies to the sparse workload");
            } else if let Some(n) = n.filter(|&n| n as usize <= MAX_BENCH_QUBITS) {
                if nnz > 1u64 << (2 * n) {
                    c.fail("nnz", format!("at most 4^n = {} entries, got {nnz}", 1u64 << (2 * n)));
                }
            }
        }
        if let Some(tau) = c.uint("tau", false, 1) {
            if workload == Some("sparse") {
                c.fail("tau", "only applies to the inner_product workload");
            } else if n.is_some_and(|n| tau > n) {
                c.fail("tau", format!("must not exceed n, got {tau}"));
            }
        }
        if let Some(v) = c.field("dry_run", false) {
            if !v.is_boolean() {
                c.fail("dry_run", format!("expected a boolean, got {}", type_name(v)));
            }
        }
        if let Some(v) = c.field("shots", false) {
            match v.as_array() {
                Some(items) => {
                    for (i, s) in items.iter().enumerate() {
                        if !s.as_u64().is_some_and(|x| x >= 1) {
                            c.fail(&format!("shots[{i}]"), format!("expected a positive integer, got {s}"));
                        }
                    }
                }
                None => c.fail("shots", format!("expected an array, got {}", type_name(v))),
            }
        }
        let seeds = c.field("seeds", true);
        let mut errors = std::mem::take(&mut c.errors);
        match seeds {
            Some(Value::Object(seeds)) => {
                let mut s = Checker::new(seeds, "$.seeds");
                s.unknown(&["instance", "decompose", "estimate"]);
                for key in ["instance", "decompose", "estimate"] {
                    s.uint(key, true, 0);
                }
                errors.extend(s.errors);
            }
            Some(v) => errors.push(format!("$.seeds: expected an object, got {}", type_name(v))),
            None => {}
        }
        match obj.get("optimizer") {
            Some(Value::Object(opt)) => {
                let mut o = Checker::new(opt, "$.optimizer");
                o.unknown(OPTIMIZER_KEYS);
                o.real("learning_rate", false, 0.0, f64::INFINITY);
                o.uint("max_iters", false, 1);
                o.uint("restarts", false, 1);
                o.real("fd_step", false, 0.0, f64::INFINITY);
                o.real("grad_tol", false, 0.0, f64::INFINITY);
                o.uint("rng_seed", false, 0);
                errors.extend(o.errors);
            }
            Some(v) => errors.push(format!("$.optimizer: expected an object, got {}", type_name(v))),
            None => {}
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        let cfg: Self = serde_json::from_value(root).map_err(|e| Error::Config(vec![format!("$: {e}")]))?;
        Ok(cfg)
    }

    /// Canonical JSON of the parsed config, used for digests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// The generated instance and its exact reference.
pub struct Instance {
    /// Operator handed to the decomposition.
    pub target: DenseOperator,
    /// State the estimator samples from.
    pub state: StateVector,
    /// Exact value of the benchmark quantity.
    pub exact: C64,
    /// Factor from `tr(rho target)` to the benchmark quantity.
    pub scale: f64,
    /// For the inner-product workload, `|2 tr(rho' O) - <psi|phi>|`.
    pub identity_error: Option<f64>,
}

pub fn build_instance(cfg: &BenchConfig) -> Result<Instance> {
    match cfg.workload {
        Workload::Sparse => {
            let dim = 1usize << cfg.n;
            let spec = SparseHamiltonianSpec {
                n_qubits: cfg.n,
                nnz: cfg.nnz.unwrap_or((cfg.n * cfg.n).min(dim * dim)),
                magnitude_scale: 1.0,
                rng_seed: cfg.seeds.instance,
            };
            let h = workloads::gen_sparse_hamiltonian(&spec)?;
            let (energy, ground) = workloads::ground_state(&h)?;
            Ok(Instance { target: h, state: ground, exact: C64::new(energy, 0.0), scale: 1.0, identity_error: None })
        }
        Workload::InnerProduct => {
            let mut stream = rng::stream(cfg.seeds.instance, &[0]);
            let psi = StateVector::random(cfg.n, &mut stream);
            let slater = SlaterSpec::random(cfg.n, cfg.tau.unwrap_or(1), rng::derive_seed(cfg.seeds.instance, &[1]));
            let phi = workloads::slater_state(&slater)?;
            let exact = psi.inner(&phi)?;
            let lifted = workloads::ancilla_superposition(&psi);
            let o = workloads::inner_product_operator(&phi);
            let via_trace = lifted.expectation(&o)? * 2.0;
            Ok(Instance {
                target: o,
                state: lifted,
                exact,
                scale: 2.0,
                identity_error: Some((via_trace - exact).norm()),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub shots: usize,
    pub batches: usize,
    pub batch_size: usize,
    pub mean_abs_error: f64,
    pub median_abs_error: f64,
    pub p90_abs_error: f64,
    /// Bootstrap 95% interval of the mean absolute error.
    pub mean_abs_error_ci95: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub manifest: String,
    pub workload: Workload,
    pub n_qubits: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    pub terms: usize,
    pub truncated: bool,
    pub exact_re: f64,
    pub exact_im: f64,
    pub identity_error: Option<f64>,
    pub l1_norm: Option<f64>,
    pub residual_fro: Vec<f64>,
    pub residual_spec: Vec<f64>,
    pub budgets: Vec<BudgetSummary>,
}

/// One estimate row of `results.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub budget: usize,
    pub repetition: usize,
    pub rng_seed: u64,
    pub shots_used: usize,
    pub value: C64,
    pub abs_error: f64,
}

pub struct BenchOutcome {
    pub decomposition: Decomposition,
    pub rows: Vec<ResultRow>,
    pub summary: BenchSummary,
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn bootstrap_ci(xs: &[f64], seed: u64, resamples: usize) -> (f64, f64) {
    let mut stream = rng::stream(seed, &[]);
    let n = xs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[(rng::unit_f64(&mut stream) * n as f64) as usize]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    (percentile(&means, 0.025), percentile(&means, 0.975))
}

pub fn run_benchmark(cfg: &BenchConfig, manifest: &str) -> Result<BenchOutcome> {
    let inst = build_instance(cfg)?;
    let spec = AnsatzSpec::new(inst.target.n_qubits(), cfg.depth)?;
    let opt = cfg.optimizer.with_seed(cfg.seeds.decompose);
    let d = greedy_decompose(&inst.target, spec, cfg.eps1, cfg.max_terms, &opt)?;

    let mut summary = BenchSummary {
        manifest: manifest.to_owned(),
        workload: cfg.workload,
        n_qubits: spec.n_qubits,
        depth: cfg.depth,
        terms: d.len(),
        truncated: d.truncated,
        exact_re: inst.exact.re,
        exact_im: inst.exact.im,
        identity_error: inst.identity_error,
        l1_norm: None,
        residual_fro: d.residual_fro.clone(),
        residual_spec: d.residual_spec.clone(),
        budgets: Vec::new(),
    };
    if cfg.dry_run || d.is_empty() {
        return Ok(BenchOutcome { decomposition: d, rows: Vec::new(), summary });
    }

    let plan = make_plan(&d)?;
    summary.l1_norm = Some(plan.l1_norm);
    let batches = median_batches(cfg.delta)?;
    let budgets = if cfg.shots.is_empty() {
        let (b, size) = estimate::required_shots(&plan, cfg.eps2, cfg.delta)?;
        vec![b * size]
    } else {
        cfg.shots.clone()
    };
    let source = Ensemble::pure(inst.state.clone());
    let mut rows = Vec::new();
    for (j, &budget) in budgets.iter().enumerate() {
        // small budgets fall back to fewer, single-shot batches
        let b = batches.min(budget);
        let reps: Vec<ResultRow> = (0..cfg.repetitions)
            .into_par_iter()
            .map(|r| {
                let seed = rng::derive_seed(cfg.seeds.estimate, &[j as u64, r as u64]);
                let report = estimate::estimate_with_budget(&source, &d, budget, b, seed)?;
                let value = report.value() * inst.scale;
                Ok(ResultRow {
                    budget,
                    repetition: r,
                    rng_seed: seed,
                    shots_used: report.shots_used,
                    value,
                    abs_error: (value - inst.exact).norm(),
                })
            })
            .collect::<Result<_>>()?;
        let errors: Vec<f64> = reps.iter().map(|r| r.abs_error).collect();
        let s = sorted(&errors);
        summary.budgets.push(BudgetSummary {
            shots: budget,
            batches: b,
            batch_size: budget / b,
            mean_abs_error: errors.iter().sum::<f64>() / errors.len() as f64,
            median_abs_error: percentile(&s, 0.5),
            p90_abs_error: percentile(&s, 0.9),
            mean_abs_error_ci95: bootstrap_ci(
                &errors,
                rng::derive_seed(cfg.seeds.estimate, &[u64::MAX, j as u64]),
                1000,
            ),
        });
        rows.extend(reps);
    }
    Ok(BenchOutcome { decomposition: d, rows, summary })
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn results_csv(rows: &[ResultRow], manifest: &str) -> String {
    let mut out = format!("# manifest={manifest}\nshots,repetition,rng_seed,shots_used,value_re,value_im,abs_error\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.budget,
            r.repetition,
            r.rng_seed,
            r.shots_used,
            num(r.value.re),
            num(r.value.im),
            num(r.abs_error)
        );
    }
    out
}

pub fn residuals_csv(d: &Decomposition, manifest: &str) -> String {
    let mut out = format!("# manifest={manifest}\nk,fro_norm,spec_norm\n");
    for (k, (f, s)) in d.residual_fro.iter().zip(&d.residual_spec).enumerate() {
        let _ = writeln!(out, "{k},{},{}", num(*f), num(*s));
    }
    out
}

/// Writes `results.csv`, `residuals.csv` and `summary.json` into `dir`.
/// A dry run writes only the residual curves and the summary.
pub fn write_outputs(dir: &Path, outcome: &BenchOutcome, dry_run: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = &outcome.summary.manifest;
    std::fs::write(dir.join("residuals.csv"), residuals_csv(&outcome.decomposition, manifest))?;
    if !dry_run {
        std::fs::write(dir.join("results.csv"), results_csv(&outcome.rows, manifest))?;
    }
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&outcome.summary)?)?;
    Ok(())
}
