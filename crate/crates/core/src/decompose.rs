//! Greedy projected decomposition.
//!
//! Starting from `R_0 = H`, each step finds circuit angles that make
//! `U R_k U^H` as diagonal as possible, keeps that diagonal as `Lambda_k`, and
//! subtracts `U^H Lambda_k U` from the residual. Keeping the exact diagonal is
//! the Frobenius-optimal choice of `Lambda` for fixed angles, so
//! `||R_{k+1}||_F^2 = ||R_k||_F^2 - ||Lambda_k||_F^2` and the Frobenius residual
//! never increases. The outer loop stops on the spectral norm of the residual
//! or on the term budget.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{AnsatzSpec, Circuit, GateSlot, ParamVector, PlacedGate};
use crate::error::{Error, Result};
use crate::io::operator_digest;
use crate::linalg::{self, DenseOperator, DiagObservable, HERMITIAN_TOL};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub restarts: usize,
    /// Central-difference half-step, radians.
    pub fd_step: f64,
    /// Descent stops once the gradient norm of the squared cost drops below this.
    pub grad_tol: f64,
    pub rng_seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { learning_rate: 0.05, max_iters: 300, restarts: 4, fd_step: 1e-4, grad_tol: 1e-10, rng_seed: 1 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("optimizer {what} must be positive")));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate");
        }
        if self.max_iters == 0 {
            return bad("max_iters");
        }
        if self.restarts == 0 {
            return bad("restarts");
        }
        if !(self.fd_step > 0.0) {
            return bad("fd_step");
        }
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol");
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { rng_seed: seed, ..self.clone() }
    }
}

/// Adam with bias correction.
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub(crate) fn new(dim: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-12, t: 0, m: vec![0.0; dim], v: vec![0.0; dim] }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

/// Forward conjugation of a target through the circuit, keeping the
/// intermediate operator before every gate so that perturbing one gate only
/// replays the gates after it.
pub(crate) struct Sweep {
    n: usize,
    slots: Vec<GateSlot>,
    gates: Vec<PlacedGate>,
    /// `stages[g]` is the operator before gate `g`; the last entry is `U A U^H`.
    stages: Vec<Vec<C64>>,
}

impl Sweep {
    pub(crate) fn new(spec: AnsatzSpec, theta: &[f64], target: &DenseOperator) -> Self {
        let n = spec.n_qubits;
        let slots = spec.slots();
        let gates: Vec<PlacedGate> = slots.iter().map(|s| PlacedGate::from_slot(*s, theta)).collect();
        let mut stages = Vec::with_capacity(gates.len() + 1);
        let mut cur = target.as_slice().to_vec();
        for g in &gates {
            stages.push(cur.clone());
            g.conjugate(n, &mut cur);
        }
        stages.push(cur);
        Self { n, slots, gates, stages }
    }

    pub(crate) fn output(&self) -> &[C64] {
        self.stages.last().expect("sweep has a final stage")
    }

    /// Conjugated operator with gate `g` rebuilt from `params`.
    fn replay(&self, g: usize, params: &[f64], scratch: &mut Vec<C64>) {
        scratch.clear();
        scratch.extend_from_slice(&self.stages[g]);
        PlacedGate::from_slot(self.slots[g], params).conjugate(self.n, scratch);
        for later in &self.gates[g + 1..] {
            later.conjugate(self.n, scratch);
        }
    }

    /// Central differences of `objective` over every parameter.
    pub(crate) fn gradient(&self, theta: &[f64], h: f64, objective: impl Fn(&[C64]) -> f64) -> Vec<f64> {
        let mut grad = vec![0.0; theta.len()];
        let mut params = theta.to_vec();
        let mut scratch = Vec::with_capacity(self.output().len());
        for (g, slot) in self.slots.iter().enumerate() {
            for i in slot.param_range() {
                let orig = params[i];
                params[i] = orig + h;
                self.replay(g, &params, &mut scratch);
                let plus = objective(&scratch);
                params[i] = orig - h;
                self.replay(g, &params, &mut scratch);
                let minus = objective(&scratch);
                params[i] = orig;
                grad[i] = (plus - minus) / (2.0 * h);
            }
        }
        grad
    }

    /// Central-difference Jacobian of the stacked off-diagonal entries
    /// (real parts, then imaginary parts), one column per parameter.
    fn offdiag_jacobian(&self, theta: &[f64], h: f64) -> Vec<Vec<f64>> {
        let dim = 1usize << self.n;
        let mut cols = Vec::with_capacity(theta.len());
        let mut params = theta.to_vec();
        let mut scratch = Vec::with_capacity(dim * dim);
        for (g, slot) in self.slots.iter().enumerate() {
            for i in slot.param_range() {
                let orig = params[i];
                params[i] = orig + h;
                self.replay(g, &params, &mut scratch);
                let mut col = offdiag_entries(&scratch, dim);
                params[i] = orig - h;
                self.replay(g, &params, &mut scratch);
                for (c, m) in col.iter_mut().zip(offdiag_entries(&scratch, dim)) {
                    *c = (*c - m) / (2.0 * h);
                }
                params[i] = orig;
                cols.push(col);
            }
        }
        cols
    }
}

fn offdiag_entries(data: &[C64], dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * dim * (dim - 1));
    let off = data.iter().enumerate().filter(|(i, _)| i / dim != i % dim).map(|(_, z)| z);
    out.extend(off.clone().map(|z| z.re));
    out.extend(off.map(|z| z.im));
    out
}

/// Levenberg-Marquardt refinement of the off-diagonal residual vector.
///
/// Adam with a fixed step and a biased finite-difference gradient stalls
/// around `1e-8` in the unsquared cost; Gauss-Newton steps converge
/// quadratically when the optimum diagonalizes the target exactly, and
/// otherwise settle at the same local minimum. Only improving steps are
/// accepted, so the returned cost never exceeds the starting cost.
pub(crate) fn lm_polish(
    spec: AnsatzSpec,
    target: &DenseOperator,
    start: (Vec<f64>, f64),
    fd_step: f64,
    max_iters: usize,
) -> (Vec<f64>, f64) {
    let dim = target.dim();
    let (mut theta, mut cost) = start;
    let p = theta.len();
    if p == 0 || dim < 2 {
        return (theta, cost);
    }
    let mut mu = 1e-3;
    for _ in 0..max_iters {
        if cost <= 1e-30 {
            break;
        }
        let sweep = Sweep::new(spec, &theta, target);
        let r = offdiag_entries(sweep.output(), dim);
        let jac = sweep.offdiag_jacobian(&theta, fd_step);
        let jtj = nalgebra::DMatrix::from_fn(p, p, |a, b| jac[a].iter().zip(&jac[b]).map(|(x, y)| x * y).sum());
        let jtr = nalgebra::DVector::from_fn(p, |a, _| jac[a].iter().zip(&r).map(|(x, y)| x * y).sum::<f64>());
        let mut improved = false;
        for _ in 0..12 {
            let mut damped = jtj.clone();
            for a in 0..p {
                damped[(a, a)] += mu * (jtj[(a, a)] + 1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let step = chol.solve(&(-&jtr));
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            let trial_cost = offdiag_sq(Sweep::new(spec, &trial, target).output(), dim);
            if trial_cost < cost {
                let gain = (cost - trial_cost) / cost;
                theta = trial;
                cost = trial_cost;
                mu = (mu / 3.0).max(1e-12);
                improved = gain > 1e-10;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (theta, cost)
}

fn offdiag_sq(data: &[C64], dim: usize) -> f64 {
    let mut acc = 0.0;
    for (r, row) in data.chunks_exact(dim).enumerate() {
        for (c, z) in row.iter().enumerate() {
            if r != c {
                acc += z.norm_sqr();
            }
        }
    }
    acc
}

fn check_target(spec: AnsatzSpec, theta: &ParamVector, a: &DenseOperator) -> Result<()> {
    spec.check(theta)?;
    if a.n_qubits() != spec.n_qubits {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: a.dim() });
    }
    Ok(())
}

/// `||M - diag(M)||_F` for `M = U(theta) A U(theta)^H`.
pub fn offdiag_cost(spec: AnsatzSpec, theta: &ParamVector, a: &DenseOperator) -> Result<f64> {
    check_target(spec, theta, a)?;
    let m = Circuit::new(spec, theta)?.conjugate(a)?;
    Ok(offdiag_sq(m.as_slice(), a.dim()).sqrt())
}

/// Central-difference gradient of the squared off-diagonal cost.
pub fn fd_gradient(spec: AnsatzSpec, theta: &ParamVector, a: &DenseOperator, fd_step: f64) -> Result<Vec<f64>> {
    check_target(spec, theta, a)?;
    if !(fd_step > 0.0) {
        return Err(Error::InvalidArgument(format!("fd_step must be positive, got {fd_step}")));
    }
    let dim = a.dim();
    let sweep = Sweep::new(spec, theta.as_slice(), a);
    Ok(sweep.gradient(theta.as_slice(), fd_step, |m| offdiag_sq(m, dim)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeOutcome {
    pub theta: ParamVector,
    /// Off-diagonal cost (not squared) at `theta`.
    pub cost: f64,
    pub restart: usize,
}

fn uniform_angles(dim: usize, rng: &mut rng::StreamRng) -> Vec<f64> {
    (0..dim).map(|_| rng::unit_f64(rng) * std::f64::consts::TAU).collect()
}

/// Runs one Adam descent on `objective` (minimized), returning the best
/// iterate seen and its value. The starting point always counts as seen.
pub(crate) fn adam_descent(
    spec: AnsatzSpec,
    target: &DenseOperator,
    start: Vec<f64>,
    cfg: &OptimizerConfig,
    objective: impl Fn(&[C64]) -> f64 + Copy,
) -> (Vec<f64>, f64) {
    let mut theta = start;
    let mut adam = Adam::new(theta.len(), cfg.learning_rate);
    let mut best = (theta.clone(), f64::INFINITY);
    for _ in 0..cfg.max_iters {
        let sweep = Sweep::new(spec, &theta, target);
        let value = objective(sweep.output());
        if value < best.1 {
            best = (theta.clone(), value);
        }
        let grad = sweep.gradient(&theta, cfg.fd_step, objective);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm <= cfg.grad_tol {
            return best;
        }
        adam.step(&mut theta, &grad);
    }
    let value = objective(Sweep::new(spec, &theta, target).output());
    if value < best.1 {
        best = (theta, value);
    }
    best
}

/// Cap on Levenberg-Marquardt iterations after each Adam descent.
pub const POLISH_ITERS: usize = 40;

/// Multistart minimization of the off-diagonal cost.
///
/// Restart `r` starts from angles drawn uniformly in `[0, 2pi)` from the
/// stream `(rng_seed, r)`, runs Adam and then a Levenberg-Marquardt polish.
/// The lowest cost wins, ties going to the lowest restart index.
pub fn optimize_theta(spec: AnsatzSpec, a: &DenseOperator, cfg: &OptimizerConfig) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    check_target(spec, &spec.zero_params(), a)?;
    let dim = a.dim();
    let objective = move |m: &[C64]| offdiag_sq(m, dim);
    let runs: Vec<(Vec<f64>, f64)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::stream(cfg.rng_seed, &[r as u64]);
            let start = uniform_angles(spec.param_count(), &mut stream);
            let coarse = adam_descent(spec, a, start, cfg, objective);
            lm_polish(spec, a, coarse, cfg.fd_step, POLISH_ITERS)
        })
        .collect();
    let (restart, (theta, cost2)) = runs
        .into_iter()
        .enumerate()
        .reduce(|best, cur| if cur.1 .1 < best.1 .1 { cur } else { best })
        .expect("at least one restart");
    Ok(OptimizeOutcome { theta: ParamVector(theta), cost: cost2.max(0.0).sqrt(), restart })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompTerm {
    pub theta: ParamVector,
    pub lambda: DiagObservable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub spec: AnsatzSpec,
    pub terms: Vec<DecompTerm>,
    /// `||R_k||_F` for `k = 0..=K`; entry 0 is the target itself.
    pub residual_fro: Vec<f64>,
    /// `||R_k||_2` for `k = 0..=K`.
    pub residual_spec: Vec<f64>,
    pub target_hash: String,
    pub hermitian: bool,
    /// Set when the term budget ran out before the spectral residual met `eps1`.
    pub truncated: bool,
}

impl Decomposition {
    /// Decomposition with no terms yet, bound to `target`.
    pub fn empty(spec: AnsatzSpec, target: &DenseOperator) -> Self {
        Self {
            spec,
            terms: Vec::new(),
            residual_fro: Vec::new(),
            residual_spec: Vec::new(),
            target_hash: operator_digest(target),
            hermitian: target.is_hermitian(HERMITIAN_TOL),
            truncated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn final_residual_fro(&self) -> Option<f64> {
        self.residual_fro.last().copied()
    }

    pub fn final_residual_spec(&self) -> Option<f64> {
        self.residual_spec.last().copied()
    }

    pub fn circuit(&self, k: usize) -> Result<Circuit> {
        Circuit::new(self.spec, &self.terms[k].theta)
    }

    /// `target - reconstruct(self)`.
    pub fn residual(&self, target: &DenseOperator) -> Result<DenseOperator> {
        target.sub(&reconstruct(self)?)
    }
}

/// `sum_k U_k^H Lambda_k U_k`.
pub fn reconstruct(d: &Decomposition) -> Result<DenseOperator> {
    let mut out = DenseOperator::zeros(d.spec.n_qubits);
    for term in &d.terms {
        let piece = Circuit::new(d.spec, &term.theta)?.conjugate_adjoint(&DenseOperator::from_diag(&term.lambda))?;
        out = out.add(&piece)?;
    }
    Ok(out)
}

pub fn greedy_decompose(
    h: &DenseOperator,
    spec: AnsatzSpec,
    eps1: f64,
    max_terms: usize,
    cfg: &OptimizerConfig,
) -> Result<Decomposition> {
    resume_decompose(h, Decomposition::empty(spec, h), eps1, max_terms, cfg, |_| Ok(()))
}

/// Continues a decomposition of `h` from `prior` until the spectral residual
/// is at most `eps1` or `max_terms` terms exist. `on_term` observes the
/// decomposition after every added term (used for checkpointing).
///
/// Step `k` seeds its optimizer from `(cfg.rng_seed, k)`, so a resumed run
/// produces the same terms as an uninterrupted one.
pub fn resume_decompose(
    h: &DenseOperator,
    prior: Decomposition,
    eps1: f64,
    max_terms: usize,
    cfg: &OptimizerConfig,
    mut on_term: impl FnMut(&Decomposition) -> Result<()>,
) -> Result<Decomposition> {
    if !(eps1 > 0.0) {
        return Err(Error::InvalidArgument(format!("eps1 must be positive, got {eps1}")));
    }
    if max_terms == 0 {
        return Err(Error::InvalidArgument("max_terms must be at least 1".into()));
    }
    cfg.validate()?;
    let spec = prior.spec;
    if h.n_qubits() != spec.n_qubits {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: h.dim() });
    }
    let digest = operator_digest(h);
    if prior.target_hash != digest {
        return Err(Error::Data(format!(
            "checkpoint was built for operator {} but the input hashes to {digest}",
            prior.target_hash
        )));
    }

    let mut d = prior;
    d.hermitian = h.is_hermitian(HERMITIAN_TOL);
    let mut approx = reconstruct(&d)?;
    let mut residual = h.sub(&approx)?;
    if d.residual_fro.is_empty() {
        d.residual_fro.push(linalg::frobenius_norm(&residual));
        d.residual_spec.push(linalg::spectral_norm_robust(&residual));
    }

    loop {
        let spec_norm = *d.residual_spec.last().expect("history is seeded");
        if spec_norm <= eps1 || residual.is_zero() {
            d.truncated = false;
            return Ok(d);
        }
        if d.terms.len() >= max_terms {
            d.truncated = true;
            return Ok(d);
        }
        let step = d.terms.len() as u64;
        let found = optimize_theta(spec, &residual, &cfg.with_seed(rng::derive_seed(cfg.rng_seed, &[step])))?;
        let circuit = Circuit::new(spec, &found.theta)?;
        let mut lambda = linalg::diag_of(&circuit.conjugate(&residual)?);
        if d.hermitian {
            lambda = lambda.into_real();
        }
        // the residual is always target minus the running sum, accumulated in
        // term order, so a resumed run reproduces it bit for bit
        approx = approx.add(&circuit.conjugate_adjoint(&DenseOperator::from_diag(&lambda))?)?;
        residual = h.sub(&approx)?;
        d.terms.push(DecompTerm { theta: found.theta, lambda });
        d.residual_fro.push(linalg::frobenius_norm(&residual));
        d.residual_spec.push(linalg::spectral_norm_robust(&residual));
        // the budget may be exhausted; mark it provisionally for observers
        d.truncated = d.terms.len() >= max_terms && *d.residual_spec.last().unwrap() > eps1;
        on_term(&d)?;
    }
}

/// On-disk checkpoint layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    #[serde(rename = "L")]
    pub depth: usize,
    pub hermitian: bool,
    pub target_hash: String,
    pub terms: Vec<CheckpointTerm>,
    pub residual_fro: Vec<f64>,
    pub residual_spec: Vec<f64>,
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTerm {
    pub theta: Vec<f64>,
    pub lambda_re: Vec<f64>,
    pub lambda_im: Vec<f64>,
}

impl From<&Decomposition> for Checkpoint {
    fn from(d: &Decomposition) -> Self {
        Self {
            n: d.spec.n_qubits,
            depth: d.spec.depth,
            hermitian: d.hermitian,
            target_hash: d.target_hash.clone(),
            terms: d
                .terms
                .iter()
                .map(|t| CheckpointTerm {
                    theta: t.theta.0.clone(),
                    lambda_re: t.lambda.values().iter().map(|v| v.re).collect(),
                    lambda_im: t.lambda.values().iter().map(|v| v.im).collect(),
                })
                .collect(),
            residual_fro: d.residual_fro.clone(),
            residual_spec: d.residual_spec.clone(),
            truncated: d.truncated,
            manifest: None,
        }
    }
}

impl TryFrom<Checkpoint> for Decomposition {
    type Error = Error;

    fn try_from(c: Checkpoint) -> Result<Self> {
        let spec = AnsatzSpec::new(c.n, c.depth)?;
        let dim = spec.dim();
        if c.residual_fro.len() != c.residual_spec.len() {
            return Err(Error::Data("residual histories differ in length".into()));
        }
        if !c.residual_fro.is_empty() && c.residual_fro.len() != c.terms.len() + 1 {
            return Err(Error::Data(format!("{} terms but {} residual entries", c.terms.len(), c.residual_fro.len())));
        }
        let terms = c
            .terms
            .into_iter()
            .enumerate()
            .map(|(k, t)| {
                spec.check(&ParamVector(t.theta.clone())).map_err(|e| Error::Data(format!("term {k}: {e}")))?;
                if t.lambda_re.len() != dim || t.lambda_im.len() != dim {
                    return Err(Error::Data(format!("term {k}: lambda must have {dim} entries")));
                }
                let values = t.lambda_re.iter().zip(&t.lambda_im).map(|(&re, &im)| C64::new(re, im)).collect();
                Ok(DecompTerm { theta: ParamVector(t.theta), lambda: DiagObservable::new(spec.n_qubits, values)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            terms,
            residual_fro: c.residual_fro,
            residual_spec: c.residual_spec,
            target_hash: c.target_hash,
            hermitian: c.hermitian,
            truncated: c.truncated,
        })
    }
}

impl Decomposition {
    pub fn to_json(&self, manifest: Option<&str>) -> Result<String> {
        let mut c = Checkpoint::from(self);
        c.manifest = manifest.map(str::to_owned);
        Ok(serde_json::to_string_pretty(&c)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        c.try_into()
    }
}
