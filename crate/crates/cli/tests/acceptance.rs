//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints one PASS/FAIL line; exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;
use obsdecomp::bound::{bound_config, lower_bound};
use obsdecomp::circuit::build_unitary;
use obsdecomp::estimate::{self, make_plan, Ensemble, ShotSampler};
use obsdecomp::linalg::{conjugate, spectral_norm_robust};
use obsdecomp::pauli::{greedy_cover_grouping, grouped_reconstruction, PauliString, PauliSum};
use obsdecomp::rng::{self, unit_f64};
use obsdecomp::workloads::{
    ancilla_superposition, gen_sparse_hamiltonian, inner_product_operator, slater_state, SlaterSpec,
    SparseHamiltonianSpec,
};
use obsdecomp::{
    greedy_decompose, AnsatzSpec, DecompTerm, Decomposition, DenseOperator, DiagObservable, OptimizerConfig,
    ParamVector, StateVector,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Three-sigma binomial allowance on top of the expected failure count.
fn failure_allowance(runs: usize, delta: f64) -> f64 {
    (runs as f64 * delta).ceil() + 3.0 * (runs as f64 * delta * (1.0 - delta)).sqrt()
}

fn random_dense_hermitian(n: usize, seed: u64) -> DenseOperator {
    let dim = 1usize << n;
    gen_sparse_hamiltonian(&SparseHamiltonianSpec { n_qubits: n, nnz: dim * dim, magnitude_scale: 1.0, rng_seed: seed })
        .expect("dense instance")
}

fn random_theta(spec: AnsatzSpec, seed: u64) -> ParamVector {
    let mut s = rng::stream(seed, &[]);
    ParamVector((0..spec.param_count()).map(|_| unit_f64(&mut s) * std::f64::consts::TAU).collect())
}

/// Greedy run shared by the convergence and decay criteria.
fn convergence_run() -> (Decomposition, Duration) {
    let h = random_dense_hermitian(4, 2024);
    let spec = AnsatzSpec::new(4, 2).unwrap();
    let cfg = OptimizerConfig { restarts: 4, ..OptimizerConfig::default() };
    let start = Instant::now();
    let d = greedy_decompose(&h, spec, 1e-9, 30, &cfg).expect("greedy run");
    (d, start.elapsed())
}

fn greedy_convergence(d: &Decomposition, elapsed: Duration) -> Outcome {
    let monotone = d.residual_fro.windows(2).all(|w| w[1] <= w[0]);
    let first = d.residual_spec[0];
    let last = *d.residual_spec.last().unwrap();
    check(
        monotone && last <= 0.5 * first && elapsed <= Duration::from_secs(300) && d.len() == 30,
        format!(
            "{} terms, fro non-increasing: {monotone}, spectral {first:.4} -> {last:.3e}, {:.1}s",
            d.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn frobenius_decay(d: &Decomposition) -> Outcome {
    let pts: Vec<(f64, f64)> = d.residual_fro.iter().enumerate().map(|(k, r)| (k as f64, r.ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|(_, y)| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = sxy * sxy / (sxx * syy);
    check(slope < 0.0 && r2 >= 0.8, format!("log-residual slope {slope:.4} per term, R^2 = {r2:.4}"))
}

fn single_pauli_diagonalization() -> Outcome {
    let spec = AnsatzSpec::new(3, 0).unwrap();
    let cfg = OptimizerConfig { restarts: 8, ..OptimizerConfig::default() };
    let mut s = rng::stream(31, &[]);
    let mut worst: f64 = 0.0;
    let mut names = Vec::new();
    for i in 0..10 {
        let code = 1 + (unit_f64(&mut s) * 63.0) as usize;
        let p = PauliString::from_index(3, code);
        let d = greedy_decompose(&p.to_dense(), spec, 1e-6, 1, &cfg.with_seed(100 + i)).expect("greedy");
        worst = worst.max(d.final_residual_spec().unwrap());
        names.push(p.to_string());
    }
    check(worst <= 1e-6, format!("strings {}: worst one-term residual {worst:.2e}", names.join(",")))
}

fn small_decomposition(n: usize, seed: u64) -> Decomposition {
    let h = random_dense_hermitian(n, seed);
    let cfg = OptimizerConfig { max_iters: 100, restarts: 2, rng_seed: seed, ..OptimizerConfig::default() };
    greedy_decompose(&h, AnsatzSpec::new(n, 1).unwrap(), 1e-9, 5, &cfg).expect("greedy")
}

fn unbiasedness() -> Outcome {
    let start = Instant::now();
    let d = small_decomposition(3, 41);
    let psi = StateVector::random(3, &mut rng::stream(42, &[]));
    let src = Ensemble::pure(psi);
    let exact = estimate::reconstructed_expectation(&src, &d).unwrap();
    let plan = make_plan(&d).unwrap();
    let sampler = ShotSampler::new(&src, &d, &plan).unwrap();
    let n = 1_000_000;
    let values: Vec<f64> = sampler.shots(n, 43).into_iter().map(|(_, v)| v.re).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let gap = (mean - exact.re).abs();
    let limit = 5.0 * sd / (n as f64).sqrt();
    let elapsed = start.elapsed();
    check(
        gap <= limit && elapsed <= Duration::from_secs(120),
        format!("|mean - exact| = {gap:.2e} <= {limit:.2e} over 1e6 shots, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn synthetic_decomposition(n: usize, terms: usize, complex: bool, seed: u64) -> Decomposition {
    let spec = AnsatzSpec::new(n, 1).unwrap();
    let mut s = rng::stream(seed, &[]);
    let mut d = Decomposition::empty(spec, &DenseOperator::zeros(n));
    d.hermitian = !complex;
    for k in 0..terms {
        let theta = random_theta(spec, rng::derive_seed(seed, &[k as u64]));
        let values = (0..spec.dim())
            .map(|_| {
                let re = 2.0 * unit_f64(&mut s) - 1.0;
                let im = if complex { 2.0 * unit_f64(&mut s) - 1.0 } else { 0.0 };
                C64::new(re, im) * (k + 1) as f64
            })
            .collect();
        d.terms.push(DecompTerm { theta, lambda: DiagObservable::new(n, values).unwrap() });
    }
    d
}

fn variance_bound() -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    for case in 0..20u64 {
        let n = 1 + (case % 3) as usize;
        let d = synthetic_decomposition(n, 1 + (case % 5) as usize, case % 2 == 1, 500 + case);
        let src = Ensemble::pure(StateVector::random(n, &mut rng::stream(600 + case, &[])));
        let report = estimate::estimate_with_budget(&src, &d, 50_000, 10, 700 + case).unwrap();
        worst_ratio = worst_ratio.max(report.raw_sample_variance / (report.l1_norm * report.l1_norm));
    }
    check(worst_ratio <= 1.05, format!("max variance / l1^2 over 20 cases = {worst_ratio:.4}"))
}

fn bell() -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::new(2, vec![C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0)]).unwrap()
}

fn end_to_end_contract() -> Outcome {
    let zz = PauliString::from_index(2, 0b1111).to_dense();
    let d = greedy_decompose(&zz, AnsatzSpec::new(2, 0).unwrap(), 1e-6, 5, &OptimizerConfig::default()).unwrap();
    let (eps2, delta, runs) = (0.05, 0.1, 100);
    let psi = bell();
    let misses = (0..runs as u64)
        .filter(|&s| (estimate::estimate(&psi, &d, eps2, delta, s).unwrap().value_re - 1.0).abs() > eps2)
        .count();
    let allowed = failure_allowance(runs, delta);
    check(
        d.final_residual_spec().unwrap() <= 1e-6 && misses as f64 <= allowed,
        format!("{} term(s); {misses}/{runs} estimates off by more than {eps2} (allowed {allowed:.1})", d.len()),
    )
}

fn inner_product_identity() -> Outcome {
    // total error budget eps2 = 0.1: the factor 2 doubles both the
    // decomposition residual (<= 0.02) and the sampling error (<= 0.03)
    let (eps2, eps1, sample_eps, delta) = (0.1, 0.02, 0.03, 0.1);
    let mut worst_identity: f64 = 0.0;
    let mut misses = 0;
    let cases = 20;
    for case in 0..cases as u64 {
        let tau = 1 + (case % 2) as usize;
        let psi = StateVector::random(3, &mut rng::stream(800 + case, &[]));
        let phi = slater_state(&SlaterSpec::random(3, tau, 900 + case)).unwrap();
        let exact = psi.inner(&phi).unwrap();
        let lifted = ancilla_superposition(&psi);
        let o = inner_product_operator(&phi);
        worst_identity = worst_identity.max((lifted.expectation(&o).unwrap() * 2.0 - exact).norm());

        let cfg = OptimizerConfig { rng_seed: 1000 + case, ..OptimizerConfig::default() };
        let d = greedy_decompose(&o, AnsatzSpec::new(4, 2).unwrap(), eps1, 40, &cfg).unwrap();
        let residual = spectral_norm_robust(&d.residual(&o).unwrap());
        let v = estimate::estimate(&lifted, &d, sample_eps, delta, 1100 + case).unwrap().value() * 2.0;
        if residual > eps1 || (v - exact).norm() > eps2 {
            misses += 1;
        }
    }
    let allowed = failure_allowance(cases, delta);
    check(
        worst_identity <= 1e-12 && misses as f64 <= allowed,
        format!("identity error <= {worst_identity:.1e}; {misses}/{cases} sampled estimates off by more than {eps2} (allowed {allowed:.1})"),
    )
}

fn lower_bound_sanity() -> Outcome {
    let spec = AnsatzSpec::new(3, 2).unwrap();
    let u = build_unitary(spec, &random_theta(spec, 1200)).unwrap();
    let zzz = PauliString::from_index(3, 0b111111).to_dense();
    let h = conjugate(&zzz, &u.adjoint()).unwrap();
    let eps = 0.1;
    let r = lower_bound(&h, spec, eps, &bound_config()).unwrap();
    let scaled = r.lower_bound_t.unwrap_or(f64::INFINITY) * eps * eps;
    check(
        r.delta_h0 >= 1.0 - 1e-4 && (0.99..=1.01).contains(&scaled),
        format!("delta(H0) = {:.8}, T * eps^2 = {scaled:.6}", r.delta_h0),
    )
}

fn grouping_baseline() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut s = rng::stream(1300, &[]);
    for _ in 0..10 {
        let count = 1 + (unit_f64(&mut s) * 20.0) as usize;
        let terms = (0..count)
            .map(|_| (2.0 * unit_f64(&mut s) - 1.0, PauliString::from_index(4, (unit_f64(&mut s) * 256.0) as usize)))
            .collect();
        let sum = PauliSum::new(4, terms).unwrap();
        let groups = greedy_cover_grouping(&sum).unwrap();
        worst = worst.max(grouped_reconstruction(&groups, &sum).unwrap().max_abs_diff(&sum.to_dense()));
    }
    let example = PauliSum::parse("1.0 ZXI\n0.5 ZIY\n").unwrap();
    let groups = greedy_cover_grouping(&example).unwrap();
    let cover_ok = groups.len() == 1 && groups[0].cover.to_string() == "ZXY";
    check(
        worst <= 1e-9 && cover_ok,
        format!("max reconstruction error {worst:.1e}; {{ZXI, ZIY}} covered by {}", groups[0].cover),
    )
}

fn run_bench(config: &Path, out_root: &Path) -> Result<String, String> {
    let output = Command::new(env!("CARGO_BIN_EXE_obsdecomp"))
        .args(["--threads", "1", "bench", "--config"])
        .arg(config)
        .arg("--out-root")
        .arg(out_root)
        .output()
        .map_err(|e| e.to_string())?;
    if !output.status.success() {
        return Err(String::from_utf8_lossy(&output.stderr).into_owned());
    }
    Ok(String::from_utf8_lossy(&output.stdout).trim().to_owned())
}

fn bench_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("bench.json");
    std::fs::write(
        &config,
        r#"{"workload": "sparse", "n": 2, "L": 1, "K": 6, "eps1": 1e-6, "eps2": 0.1, "delta": 0.1,
            "seeds": {"instance": 5, "decompose": 6, "estimate": 7},
            "shots": [1000, 10000], "repetitions": 10}"#,
    )
    .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let a = run_bench(&config, &tmp.path().join("a"))?;
    let elapsed = start.elapsed();
    let b = run_bench(&config, &tmp.path().join("b"))?;
    let ra = std::fs::read(Path::new(&a).join("results.csv")).map_err(|e| e.to_string())?;
    let rb = std::fs::read(Path::new(&b).join("results.csv")).map_err(|e| e.to_string())?;
    let same_dir = Path::new(&a).file_name() == Path::new(&b).file_name();
    check(
        ra == rb && same_dir && !ra.is_empty() && elapsed <= Duration::from_secs(60),
        format!("results.csv {} bytes, identical: {}, first run {:.1}s", ra.len(), ra == rb, elapsed.as_secs_f64()),
    )
}

fn main() {
    let (run, elapsed) = convergence_run();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("greedy convergence (n=4, L=2, K=30)", Box::new(|| greedy_convergence(&run, elapsed))),
        ("Frobenius residual decays exponentially", Box::new(|| frobenius_decay(&run))),
        ("single Pauli strings diagonalized at L=0", Box::new(single_pauli_diagonalization)),
        ("estimator unbiased over 1e6 shots", Box::new(unbiasedness)),
        ("raw-sample variance within l1^2", Box::new(variance_bound)),
        ("ZZ on a Bell state meets (eps2, delta)", Box::new(end_to_end_contract)),
        ("inner product via ancilla operator", Box::new(inner_product_identity)),
        ("lower bound for a rotated Z string", Box::new(lower_bound_sanity)),
        ("cover grouping reconstructs H", Box::new(grouping_baseline)),
        ("bench reruns give identical results.csv", Box::new(bench_determinism)),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
