use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use obsdecomp::bench::{self, BenchConfig};
use obsdecomp::bound::{self, lower_bound};
use obsdecomp::estimate::{self, Ensemble};
use obsdecomp::io::{self, operator_digest, sha256_hex};
use obsdecomp::pauli::PauliSum;
use obsdecomp::{AnsatzSpec, Decomposition, DenseOperator, OptimizerConfig, StateVector};
use serde_json::{json, Value};

use crate::manifest::RunManifest;
use crate::{OperatorSource, EXIT_DATA, EXIT_TRUNCATED, EXIT_USAGE};

/// Bad flags or flag combinations.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<obsdecomp::Error>() {
        Some(obsdecomp::Error::InvalidArgument(_)) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn load_operator(src: &OperatorSource, n: Option<usize>) -> Result<DenseOperator> {
    let op = match (&src.operator, &src.pauli) {
        (Some(path), _) => io::read_operator(path).with_context(|| format!("reading operator {}", path.display()))?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            PauliSum::parse(&text).with_context(|| format!("parsing Pauli sum {}", path.display()))?.to_dense()
        }
        (None, None) => return Err(usage("one of --operator or --pauli is required")),
    };
    if let Some(n) = n {
        if n != op.n_qubits() {
            return Err(
                obsdecomp::Error::Data(format!("--n {n} but the operator acts on {} qubits", op.n_qubits())).into()
            );
        }
    }
    Ok(op)
}

fn load_optimizer(path: Option<&Path>) -> Result<OptimizerConfig> {
    let Some(path) = path else { return Ok(OptimizerConfig::default()) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: OptimizerConfig = serde_json::from_str(&text)
        .map_err(obsdecomp::Error::from)
        .with_context(|| format!("parsing optimizer config {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Writes via a sibling temp file so an interrupted run never leaves a torn file.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn with_manifest<T: serde::Serialize>(value: &T, digest: &str) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    if let Value::Object(map) = &mut v {
        map.insert("manifest".into(), Value::String(digest.to_owned()));
    }
    Ok(serde_json::to_string_pretty(&v)?)
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[command(flatten)]
    input: OperatorSource,
    /// Expected qubit count; checked against the input.
    #[arg(long)]
    n: Option<usize>,
    /// Entangling layers (required unless resuming).
    #[arg(long = "L")]
    depth: Option<usize>,
    /// Maximum number of terms.
    #[arg(long = "K", default_value_t = 40)]
    max_terms: usize,
    /// Target spectral norm of the residual.
    #[arg(long, default_value_t = 1e-6)]
    eps1: f64,
    /// Optimizer seed (overrides the optimizer file).
    #[arg(long)]
    seed: Option<u64>,
    /// JSON optimizer settings; missing fields take defaults.
    #[arg(long = "optimizer-json")]
    optimizer_json: Option<PathBuf>,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Checkpoint path (defaults to the --resume path, else checkpoint.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Residual history CSV (defaults to residuals.csv next to the checkpoint).
    #[arg(long)]
    residuals: Option<PathBuf>,
}

pub fn decompose(a: DecomposeArgs) -> Result<u8> {
    let target = load_operator(&a.input, a.n)?;
    let mut cfg = load_optimizer(a.optimizer_json.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.rng_seed = seed;
    }
    let prior = match &a.resume {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let d =
                Decomposition::from_json(&text).with_context(|| format!("loading checkpoint {}", path.display()))?;
            if a.depth.is_some_and(|l| l != d.spec.depth) {
                return Err(usage(format!(
                    "--L {} conflicts with the checkpoint's L = {}",
                    a.depth.unwrap(),
                    d.spec.depth
                )));
            }
            d
        }
        None => {
            let depth = a.depth.ok_or_else(|| usage("--L is required unless --resume is given"))?;
            Decomposition::empty(AnsatzSpec::new(target.n_qubits(), depth)?, &target)
        }
    };
    let out = a.out.clone().or_else(|| a.resume.clone()).unwrap_or_else(|| PathBuf::from("checkpoint.json"));
    let residuals = a.residuals.clone().unwrap_or_else(|| out.with_file_name("residuals.csv"));

    let mut manifest = RunManifest::new(
        "decompose",
        json!({ "target": operator_digest(&target), "L": prior.spec.depth, "K": a.max_terms, "eps1": a.eps1, "optimizer": cfg }),
        json!({ "optimizer": cfg.rng_seed }),
    );
    let digest = manifest.digest.clone();
    let d = manifest.timed("decompose", || {
        obsdecomp::resume_decompose(&target, prior, a.eps1, a.max_terms, &cfg, |partial| {
            write_atomic(&out, &partial.to_json(Some(&digest))?).map_err(|e| obsdecomp::Error::Data(format!("{e:#}")))
        })
    })?;
    write_atomic(&out, &d.to_json(Some(&digest))?)?;
    write_atomic(&residuals, &bench::residuals_csv(&d, &digest))?;
    eprintln!(
        "{} terms, residual spectral norm {:.3e}, Frobenius {:.3e}{}",
        d.len(),
        d.final_residual_spec().unwrap_or(0.0),
        d.final_residual_fro().unwrap_or(0.0),
        if d.truncated { " (term budget exhausted)" } else { "" }
    );
    Ok(if d.truncated { EXIT_TRUNCATED } else { 0 })
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Decomposition checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// State JSON (`{"n", "amplitudes": [[re, im], ...]}`).
    #[arg(long, conflicts_with = "basis")]
    state: Option<PathBuf>,
    /// Computational basis state, as an integer index.
    #[arg(long)]
    basis: Option<usize>,
    /// Original operator, for exact reference values; must match the checkpoint.
    #[arg(long)]
    operator: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    eps2: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// JSON report path.
    #[arg(long, default_value = "estimate.json")]
    out: PathBuf,
    /// Per-repetition CSV path.
    #[arg(long, default_value = "estimate.csv")]
    csv: PathBuf,
    /// Append rows to an existing CSV instead of replacing it.
    #[arg(long)]
    append: bool,
}

pub fn estimate(a: EstimateArgs) -> Result<u8> {
    if a.repetitions == 0 {
        return Err(usage("--repetitions must be at least 1"));
    }
    let text = std::fs::read_to_string(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let d =
        Decomposition::from_json(&text).with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    let psi = match (&a.state, a.basis) {
        (Some(path), _) => io::read_state(path).with_context(|| format!("reading state {}", path.display()))?,
        (None, Some(b)) => {
            if b >= d.spec.dim() {
                return Err(obsdecomp::Error::Data(format!(
                    "basis index {b} out of range for {} qubits",
                    d.spec.n_qubits
                ))
                .into());
            }
            StateVector::basis(d.spec.n_qubits, b)
        }
        (None, None) => return Err(usage("one of --state or --basis is required")),
    };
    if psi.n_qubits() != d.spec.n_qubits {
        return Err(obsdecomp::Error::Data(format!(
            "state has {} qubits but the checkpoint has {}",
            psi.n_qubits(),
            d.spec.n_qubits
        ))
        .into());
    }
    let source = Ensemble::pure(psi.clone());
    let (exact, reference) = match &a.operator {
        Some(path) => {
            let h = io::read_operator(path).with_context(|| format!("reading operator {}", path.display()))?;
            if operator_digest(&h) != d.target_hash {
                return Err(
                    obsdecomp::Error::Data("operator does not match the checkpoint's target hash".into()).into()
                );
            }
            (psi.expectation(&h)?, "operator")
        }
        None => (estimate::reconstructed_expectation(&source, &d)?, "reconstruction"),
    };

    let mut manifest = RunManifest::new(
        "estimate",
        json!({ "checkpoint": sha256_hex(text.as_bytes()), "state": io::StateFile::from_state(&psi),
                "eps2": a.eps2, "delta": a.delta, "repetitions": a.repetitions }),
        json!({ "estimate": a.seed }),
    );
    let reports = manifest.timed("estimate", || {
        (0..a.repetitions)
            .map(|r| estimate::estimate(&psi, &d, a.eps2, a.delta, obsdecomp::rng::derive_seed(a.seed, &[r as u64])))
            .collect::<obsdecomp::Result<Vec<_>>>()
    })?;

    let mut csv = String::new();
    let fresh = !a.append || !a.csv.exists();
    if fresh {
        let _ = writeln!(csv, "# manifest={}\nseed,shots,value_re,value_im,abs_error_vs_exact", manifest.digest);
    }
    for r in &reports {
        let err = (r.value() - exact).norm();
        let _ = writeln!(csv, "{},{},{:.16e},{:.16e},{:.16e}", r.rng_seed, r.shots_used, r.value_re, r.value_im, err);
    }
    if fresh {
        std::fs::write(&a.csv, csv).with_context(|| format!("writing {}", a.csv.display()))?;
    } else {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new().append(true).open(&a.csv)?;
        f.write_all(csv.as_bytes())?;
    }
    let body = json!({
        "exact_re": exact.re, "exact_im": exact.im, "exact_reference": reference,
        "eps2": a.eps2, "delta": a.delta, "reports": reports,
    });
    std::fs::write(&a.out, with_manifest(&body, &manifest.digest)?)
        .with_context(|| format!("writing {}", a.out.display()))?;
    for r in &reports {
        println!("{:.12} {:+.12}i  ({} shots, seed {})", r.value_re, r.value_im, r.shots_used, r.rng_seed);
    }
    Ok(0)
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    #[command(flatten)]
    input: OperatorSource,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "L", default_value_t = 1)]
    depth: usize,
    /// Target additive accuracy.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = bound::DEFAULT_BOUND_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn bound(a: BoundArgs) -> Result<u8> {
    let h = load_operator(&a.input, a.n)?;
    let spec = AnsatzSpec::new(h.n_qubits(), a.depth)?;
    let cfg = OptimizerConfig { restarts: a.restarts, rng_seed: a.seed, ..bound::bound_config() };
    cfg.validate()?;
    let manifest = RunManifest::new(
        "bound",
        json!({ "target": operator_digest(&h), "L": a.depth, "epsilon": a.epsilon, "optimizer": cfg }),
        json!({ "optimizer": a.seed }),
    );
    let report = lower_bound(&h, spec, a.epsilon, &cfg)?;
    let text = with_manifest(&report, &manifest.digest)?;
    match &a.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(0)
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Benchmark config JSON.
    #[arg(long)]
    config: PathBuf,
    /// Parent directory for run outputs.
    #[arg(long, default_value = "runs")]
    out_root: PathBuf,
}

pub fn bench(a: BenchArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let cfg = match BenchConfig::parse(&text) {
        Ok(cfg) => cfg,
        Err(e) => return Err(anyhow::Error::from(e).context(format!("invalid config {}", a.config.display()))),
    };
    let mut manifest = RunManifest::new(
        "bench",
        json!({ "config": sha256_hex(cfg.canonical_json().as_bytes()) }),
        serde_json::to_value(&cfg.seeds)?,
    );
    let dir = a.out_root.join(manifest.short());
    let digest = manifest.digest.clone();
    let outcome = manifest.timed("run", || bench::run_benchmark(&cfg, &digest))?;
    manifest.timed("write", || bench::write_outputs(&dir, &outcome, cfg.dry_run))?;
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    if let Some(err) = outcome.summary.identity_error {
        if err > 1e-12 {
            bail!("inner-product identity violated by {err:e}");
        }
    }
    println!("{}", dir.display());
    Ok(0)
}
