//! Importance-sampled expectation estimation over a decomposition.
//!
//! Each shot picks a term `k` with probability `p_k = ||Lambda_k||_2 / l1`,
//! runs that term's circuit on the state, measures a bitstring `b` and
//! records `Lambda_k(b) / p_k`. The shots are unbiased for `tr(rho H_hat)` with
//! second moment at most `l1^2`; a median of batch means turns that into a
//! `(eps2, delta)` guarantee.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::decompose::Decomposition;
use crate::error::{Error, Result};
use crate::linalg::StateVector;
use crate::rng::{self, StreamRng};

/// Shots drawn from one RNG stream; streams are keyed by block index.
pub const SHOT_BLOCK: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub probs: Vec<f64>,
    pub lambda_spec_norms: Vec<f64>,
    pub l1_norm: f64,
    cdf: Vec<f64>,
}

impl SamplingPlan {
    /// Builds a plan directly from term weights (spectral norms of the diagonals).
    pub fn from_norms(norms: Vec<f64>) -> Result<Self> {
        if norms.is_empty() {
            return Err(Error::Empty);
        }
        if norms.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("term norms must be finite and non-negative".into()));
        }
        let l1: f64 = norms.iter().sum();
        if l1 == 0.0 {
            return Err(Error::EmptyPlan);
        }
        let probs: Vec<f64> = norms.iter().map(|w| w / l1).collect();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        // pin the top of the CDF so a draw in [0, 1) always lands on a live term
        let last_live = probs.iter().rposition(|&p| p > 0.0).expect("l1 > 0");
        for c in &mut cdf[last_live..] {
            *c = 1.0;
        }
        Ok(Self { probs, lambda_spec_norms: norms, l1_norm: l1, cdf })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Inverse-CDF lookup of a uniform draw in `[0, 1)`.
    pub fn pick(&self, u: f64) -> usize {
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

pub fn make_plan(d: &Decomposition) -> Result<SamplingPlan> {
    if d.is_empty() {
        return Err(Error::Empty);
    }
    SamplingPlan::from_norms(d.terms.iter().map(|t| t.lambda.spectral_norm()).collect())
}

fn check_dims(psi: &StateVector, d: &Decomposition) -> Result<()> {
    if psi.n_qubits() != d.spec.n_qubits {
        return Err(Error::DimensionMismatch { expected: d.spec.dim(), found: 1 << psi.n_qubits() });
    }
    Ok(())
}

fn cumulative(weights: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .into_iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn pick_cumulative(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().expect("non-empty distribution");
    cdf.partition_point(|&c| c <= u * total).min(cdf.len() - 1)
}

/// One shot, simulated from scratch: picks a term, runs its circuit, samples
/// a basis outcome and returns `Lambda_k(b) / p_k`.
pub fn draw_sample(psi: &StateVector, d: &Decomposition, plan: &SamplingPlan, rng: &mut StreamRng) -> Result<C64> {
    check_dims(psi, d)?;
    let k = plan.pick(rng::unit_f64(rng));
    let out = d.circuit(k)?.apply(psi)?;
    let b = pick_cumulative(&cumulative(out.probabilities()), rng::unit_f64(rng));
    Ok(d.terms[k].lambda.value(b) / plan.probs[k])
}

/// Mixture of pure states; each shot first picks a member by weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    weights: Vec<f64>,
    states: Vec<StateVector>,
}

impl Ensemble {
    pub fn new(members: Vec<(f64, StateVector)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty);
        }
        let total: f64 = members.iter().map(|(w, _)| w).sum();
        if members.iter().any(|(w, _)| !(*w >= 0.0)) || !((total - 1.0).abs() <= 1e-10) {
            return Err(Error::InvalidArgument("ensemble weights must be non-negative and sum to 1".into()));
        }
        let n = members[0].1.n_qubits();
        if members.iter().any(|(_, s)| s.n_qubits() != n) {
            return Err(Error::InvalidArgument("ensemble members differ in qubit count".into()));
        }
        let (weights, states) = members.into_iter().unzip();
        Ok(Self { weights, states })
    }

    pub fn pure(psi: StateVector) -> Self {
        Self { weights: vec![1.0], states: vec![psi] }
    }

    pub fn n_qubits(&self) -> usize {
        self.states[0].n_qubits()
    }

    pub fn members(&self) -> impl Iterator<Item = (f64, &StateVector)> {
        self.weights.iter().copied().zip(&self.states)
    }
}

/// Precomputed measurement distributions for every (member, term) pair.
pub struct ShotSampler<'a> {
    d: &'a Decomposition,
    plan: &'a SamplingPlan,
    member_cdf: Vec<f64>,
    /// `outcome_cdf[m][k]` is the cumulative Born distribution of member `m`
    /// after term `k`'s circuit.
    outcome_cdf: Vec<Vec<Vec<f64>>>,
}

impl<'a> ShotSampler<'a> {
    pub fn new(source: &Ensemble, d: &'a Decomposition, plan: &'a SamplingPlan) -> Result<Self> {
        if source.n_qubits() != d.spec.n_qubits {
            return Err(Error::DimensionMismatch { expected: d.spec.dim(), found: 1 << source.n_qubits() });
        }
        if plan.len() != d.len() {
            return Err(Error::InvalidArgument("plan and decomposition differ in length".into()));
        }
        let circuits = (0..d.len()).map(|k| d.circuit(k)).collect::<Result<Vec<Circuit>>>()?;
        let outcome_cdf = source
            .states
            .iter()
            .map(|psi| {
                circuits
                    .par_iter()
                    .zip(&plan.probs)
                    .map(
                        |(c, &p)| {
                            if p > 0.0 {
                                c.apply(psi).map(|o| cumulative(o.probabilities()))
                            } else {
                                Ok(vec![1.0])
                            }
                        },
                    )
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { d, plan, member_cdf: cumulative(source.weights.iter().copied()), outcome_cdf })
    }

    /// Returns the chosen term and the shot value.
    pub fn shot(&self, rng: &mut StreamRng) -> (usize, C64) {
        let m = if self.member_cdf.len() == 1 { 0 } else { pick_cumulative(&self.member_cdf, rng::unit_f64(rng)) };
        let k = self.plan.pick(rng::unit_f64(rng));
        let b = pick_cumulative(&self.outcome_cdf[m][k], rng::unit_f64(rng));
        (k, self.d.terms[k].lambda.value(b) / self.plan.probs[k])
    }

    /// `count` shots as `(term, value)` pairs; shot `t` comes from block
    /// `t / SHOT_BLOCK`, whose stream is keyed by `(seed, block)`, so the
    /// result does not depend on threading.
    pub fn shots(&self, count: usize, seed: u64) -> Vec<(usize, C64)> {
        let blocks: Vec<Vec<(usize, C64)>> = (0..count.div_ceil(SHOT_BLOCK))
            .into_par_iter()
            .map(|blk| {
                let mut stream = rng::stream(seed, &[blk as u64]);
                let len = SHOT_BLOCK.min(count - blk * SHOT_BLOCK);
                (0..len).map(|_| self.shot(&mut stream)).collect()
            })
            .collect();
        blocks.concat()
    }
}

fn lower_median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[(xs.len() - 1) / 2]
}

/// Componentwise lower median of contiguous batch means. A trailing
/// remainder of `samples.len() % batches` values is ignored.
pub fn median_of_means(samples: &[C64], batches: usize) -> Result<C64> {
    if batches == 0 {
        return Err(Error::InvalidArgument("batches must be at least 1".into()));
    }
    let size = samples.len() / batches;
    if size == 0 {
        return Err(Error::Empty);
    }
    let means: Vec<C64> =
        samples[..size * batches].chunks_exact(size).map(|c| c.iter().sum::<C64>() / size as f64).collect();
    let mut re: Vec<f64> = means.iter().map(|z| z.re).collect();
    let mut im: Vec<f64> = means.iter().map(|z| z.im).collect();
    Ok(C64::new(lower_median(&mut re), lower_median(&mut im)))
}

/// Ceiling that ignores relative rounding noise below `1e-9`, so that
/// `8 ln(e) = 8.000000000000002` still gives 8.
fn tolerant_ceil(x: f64) -> usize {
    (x - 1e-9 * x.abs()).ceil().max(1.0) as usize
}

pub fn median_batches(delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(tolerant_ceil(8.0 * (1.0 / delta).ln()))
}

/// `(batches, batch_size)` with `batches = ceil(8 ln(1/delta))` and
/// `batch_size = ceil(4 l1^2 / eps2^2)`.
pub fn required_shots(plan: &SamplingPlan, eps2: f64, delta: f64) -> Result<(usize, usize)> {
    if !(eps2 > 0.0 && eps2 < 1.0) {
        return Err(Error::InvalidArgument(format!("eps2 must lie in (0, 1), got {eps2}")));
    }
    let batches = median_batches(delta)?;
    Ok((batches, tolerant_ceil(4.0 * plan.l1_norm * plan.l1_norm / (eps2 * eps2))))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub value_re: f64,
    pub value_im: f64,
    pub shots_used: usize,
    pub batches: usize,
    pub batch_size: usize,
    /// Shots drawn but left out of the batches.
    pub dropped: usize,
    pub per_term_counts: Vec<usize>,
    pub rng_seed: u64,
    pub raw_sample_mean_re: f64,
    pub raw_sample_mean_im: f64,
    /// `E|v - mean|^2` over all drawn shots.
    pub raw_sample_variance: f64,
    pub l1_norm: f64,
}

impl EstimateReport {
    pub fn value(&self) -> C64 {
        C64::new(self.value_re, self.value_im)
    }
}

/// Draws `total` shots and aggregates them into `batches` batches.
pub fn estimate_with_budget(
    source: &Ensemble,
    d: &Decomposition,
    total: usize,
    batches: usize,
    rng_seed: u64,
) -> Result<EstimateReport> {
    let plan = make_plan(d)?;
    if batches == 0 || total < batches {
        return Err(Error::InvalidArgument(format!("{total} shots cannot fill {batches} batches")));
    }
    let sampler = ShotSampler::new(source, d, &plan)?;
    let shots = sampler.shots(total, rng_seed);
    let values: Vec<C64> = shots.iter().map(|s| s.1).collect();
    let batch_size = total / batches;
    let used = batch_size * batches;
    let mut value = median_of_means(&values, batches)?;
    if d.hermitian {
        value.im = 0.0;
    }
    let mut per_term_counts = vec![0; plan.len()];
    for (k, _) in &shots[..used] {
        per_term_counts[*k] += 1;
    }
    let mean = values.iter().sum::<C64>() / values.len() as f64;
    let variance = values.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / values.len() as f64;
    Ok(EstimateReport {
        value_re: value.re,
        value_im: value.im,
        shots_used: used,
        batches,
        batch_size,
        dropped: total - used,
        per_term_counts,
        rng_seed,
        raw_sample_mean_re: mean.re,
        raw_sample_mean_im: mean.im,
        raw_sample_variance: variance,
        l1_norm: plan.l1_norm,
    })
}

/// Full estimator: plan, shot count for `(eps2, delta)`, shots, median of means.
pub fn estimate(psi: &StateVector, d: &Decomposition, eps2: f64, delta: f64, rng_seed: u64) -> Result<EstimateReport> {
    estimate_ensemble(&Ensemble::pure(psi.clone()), d, eps2, delta, rng_seed)
}

pub fn estimate_ensemble(
    source: &Ensemble,
    d: &Decomposition,
    eps2: f64,
    delta: f64,
    rng_seed: u64,
) -> Result<EstimateReport> {
    let plan = make_plan(d)?;
    let (batches, batch_size) = required_shots(&plan, eps2, delta)?;
    estimate_with_budget(source, d, batches * batch_size, batches, rng_seed)
}

/// Exact `tr(rho H_hat)` from the same per-term distributions the sampler uses.
pub fn reconstructed_expectation(source: &Ensemble, d: &Decomposition) -> Result<C64> {
    if source.n_qubits() != d.spec.n_qubits {
        return Err(Error::DimensionMismatch { expected: d.spec.dim(), found: 1 << source.n_qubits() });
    }
    let mut total = C64::new(0.0, 0.0);
    for (w, psi) in source.members() {
        for (k, term) in d.terms.iter().enumerate() {
            let probs = d.circuit(k)?.apply(psi)?.probabilities();
            total += w * probs.iter().zip(term.lambda.values()).map(|(p, l)| l * p).sum::<C64>();
        }
    }
    Ok(total)
}
