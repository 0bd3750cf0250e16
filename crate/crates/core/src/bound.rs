//! Sample-complexity floor for measuring an observable with circuit-rotated
//! basis measurements.
//!
//! With `H0` the traceless part of `H` and `delta(H0)` the largest squared
//! expectation of `H0` over the states `U(theta)^H |b>`, any such strategy
//! needs on the order of `tr(H0^2)^2 / (eps^2 delta(H0) 4^n)` shots. The
//! supremum over `theta` is approximated by multistart ascent, so the reported
//! `delta` is an achieved value and the floor is an upper estimate of the true
//! floor.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{AnsatzSpec, ParamVector};
use crate::decompose::{Adam, OptimizerConfig, Sweep};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, DenseOperator, HERMITIAN_TOL};
use crate::rng;

pub const DEFAULT_BOUND_RESTARTS: usize = 16;

/// `delta` values at or below this fraction of `||H0||_F^2` count as zero.
const UNRESOLVED_TOL: f64 = 1e-12;

pub const FLOOR_LABEL: &str = "order-of-magnitude floor";

/// Optimizer defaults for the ascent: the decomposition defaults with 16 restarts.
pub fn bound_config() -> OptimizerConfig {
    OptimizerConfig { restarts: DEFAULT_BOUND_RESTARTS, ..OptimizerConfig::default() }
}

/// `H - tr(H)/2^n I`.
pub fn traceless_part(h: &DenseOperator) -> DenseOperator {
    let shift = h.trace() / h.dim() as f64;
    let mut out = h.clone();
    for i in 0..h.dim() {
        out.set(i, i, out.get(i, i) - shift);
    }
    out
}

fn diag_peak(m: &[C64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for b in 0..dim {
        let v = m[b * dim + b].re.powi(2);
        if v > best.1 {
            best = (b, v);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaEstimate {
    pub delta: f64,
    pub theta: ParamVector,
    pub bitstring: usize,
    pub restart: usize,
}

fn ascend(spec: AnsatzSpec, h0: &DenseOperator, start: Vec<f64>, cfg: &OptimizerConfig) -> (Vec<f64>, usize, f64) {
    let dim = h0.dim();
    let mut theta = start;
    let mut adam = Adam::new(theta.len(), cfg.learning_rate);
    let mut best = (theta.clone(), 0, f64::NEG_INFINITY);
    for iter in 0..=cfg.max_iters {
        let sweep = Sweep::new(spec, &theta, h0);
        let (b, value) = diag_peak(sweep.output(), dim);
        if value > best.2 {
            best = (theta.clone(), b, value);
        }
        if iter == cfg.max_iters {
            break;
        }
        let idx = b * dim + b;
        let grad = sweep.gradient(&theta, cfg.fd_step, |m| -m[idx].re.powi(2));
        if grad.iter().map(|g| g * g).sum::<f64>().sqrt() <= cfg.grad_tol {
            break;
        }
        adam.step(&mut theta, &grad);
    }
    best
}

/// Multistart ascent on `max_b (U H0 U^H)_{bb}^2`. Each step follows the
/// gradient of the currently largest diagonal entry (lowest `b` on ties).
pub fn delta_h0(h0: &DenseOperator, spec: AnsatzSpec, cfg: &OptimizerConfig) -> Result<DeltaEstimate> {
    cfg.validate()?;
    if h0.n_qubits() != spec.n_qubits {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: h0.dim() });
    }
    if !h0.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::NotHermitian(h0.max_hermitian_deviation()));
    }
    let tr = h0.trace().norm();
    if tr > 1e-8 * frobenius_norm(h0).max(1.0) {
        return Err(Error::InvalidArgument(format!("operator is not traceless (|tr| = {tr:e})")));
    }
    let runs: Vec<(Vec<f64>, usize, f64)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::stream(cfg.rng_seed, &[r as u64]);
            let start = (0..spec.param_count()).map(|_| rng::unit_f64(&mut stream) * std::f64::consts::TAU).collect();
            ascend(spec, h0, start, cfg)
        })
        .collect();
    let (restart, (theta, bitstring, delta)) = runs
        .into_iter()
        .enumerate()
        .reduce(|best, cur| if cur.1 .2 > best.1 .2 { cur } else { best })
        .expect("at least one restart");
    Ok(DeltaEstimate { delta, theta: ParamVector(theta), bitstring, restart })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    pub delta_h0: f64,
    pub trace_h0_sq: f64,
    pub epsilon: f64,
    /// Absent when the circuits cannot resolve `H0` at all.
    pub lower_bound_t: Option<f64>,
    pub unbounded: bool,
    pub argmax_theta: ParamVector,
    pub argmax_bitstring: usize,
    pub restarts_used: usize,
    /// `delta_h0` is an achieved value, so the floor may overstate the true one.
    pub upper_estimate: bool,
    pub label: String,
    pub note: Option<String>,
}

pub fn lower_bound(h: &DenseOperator, spec: AnsatzSpec, epsilon: f64, cfg: &OptimizerConfig) -> Result<BoundReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if !h.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::NotHermitian(h.max_hermitian_deviation()));
    }
    let h0 = traceless_part(h);
    let trace_h0_sq = frobenius_norm(&h0).powi(2);
    let mut report = BoundReport {
        n: spec.n_qubits,
        depth: spec.depth,
        delta_h0: 0.0,
        trace_h0_sq,
        epsilon,
        lower_bound_t: Some(0.0),
        unbounded: false,
        argmax_theta: spec.zero_params(),
        argmax_bitstring: 0,
        restarts_used: 0,
        upper_estimate: true,
        label: FLOOR_LABEL.to_owned(),
        note: None,
    };
    if h0.is_zero() {
        report.note = Some("observable is proportional to the identity; its expectation needs no shots".into());
        return Ok(report);
    }
    let found = delta_h0(&h0, spec, cfg)?;
    report.delta_h0 = found.delta;
    report.argmax_theta = found.theta;
    report.argmax_bitstring = found.bitstring;
    report.restarts_used = cfg.restarts;
    if found.delta <= UNRESOLVED_TOL * trace_h0_sq {
        report.lower_bound_t = None;
        report.unbounded = true;
        report.note = Some("no tested circuit gives the traceless part a nonzero expectation".into());
    } else {
        let scale = (1u64 << (2 * spec.n_qubits)) as f64;
        report.lower_bound_t = Some(trace_h0_sq * trace_h0_sq / (epsilon * epsilon * found.delta * scale));
    }
    Ok(report)
}
