//! Distributions of output bitstring probabilities and the randomization
//! criterion built on them.
//!
//! Three reference families are compared against pooled samples:
//! Porter–Thomas (global Haar states), the factorized law of independent
//! single-qubit Haar states, and the discrete step distributions produced
//! by Clifford circuits. Continuous references use the one-sample
//! Kolmogorov–Smirnov distance at the 99% threshold `1.63/√N`; discrete
//! references use total-variation distance on their support, thresholded
//! at `1.63/√C` with `C` the number of circuits (pooled values from one
//! circuit are not independent).

use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clifford::{CliffordGroup, C64};
use crate::ensemble::{haar_state, ReferenceEnsemble};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::scalar::{powu, Scalar};
use crate::simulator::ideal_probabilities;

/// 99th percentile of the asymptotic Kolmogorov distribution.
pub const KS_CRITICAL_99: f64 = 1.63;

/// Porter–Thomas density `(d − 1)(1 − P)^(d − 2)`.
pub fn porter_thomas_density<T: Scalar>(p: T, dim: usize) -> T {
    if p < T::zero() || p > T::one() {
        return T::zero();
    }
    T::from_usize_lossy(dim - 1) * powu(T::one() - p, dim.saturating_sub(2))
}

/// Porter–Thomas CDF `1 − (1 − P)^(d − 1)`.
pub fn porter_thomas_cdf<T: Scalar>(p: T, dim: usize) -> T {
    if p <= T::zero() {
        T::zero()
    } else if p >= T::one() {
        T::one()
    } else {
        T::one() - powu(T::one() - p, dim - 1)
    }
}

/// Density of a product of `n` independent single-qubit outcome
/// probabilities, `(−ln P)^(n−1) / (n−1)!`.
pub fn factorized_density<T: Scalar>(p: T, qubits: usize) -> T {
    if p <= T::zero() || p > T::one() {
        return T::zero();
    }
    let minus_log = -p.ln();
    let factorial: T = (1..qubits).map(T::from_usize_lossy).fold(T::one(), |a, b| a * b);
    powu(minus_log, qubits - 1) / factorial
}

/// CDF of the factorized law, `P · Σ_{k<n} (−ln P)^k / k!`.
pub fn factorized_cdf<T: Scalar>(p: T, qubits: usize) -> T {
    if p <= T::zero() {
        return T::zero();
    }
    if p >= T::one() {
        return T::one();
    }
    let minus_log = -p.ln();
    let mut term = T::one();
    let mut sum = T::one();
    for k in 1..qubits {
        term = term * minus_log / T::from_usize_lossy(k);
        sum += term;
    }
    p * sum
}

/// Pooled output probabilities from an ensemble of states or circuits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySample {
    pub values: Vec<f64>,
    pub qubits: usize,
    pub source_tag: String,
    /// Number of states or circuits the values were pooled from.
    pub circuits: usize,
}

impl ProbabilitySample {
    pub fn new(values: Vec<f64>, qubits: usize, source_tag: impl Into<String>, circuits: usize) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(-1e-12..=1.0 + 1e-12).contains(*v)) {
            return Err(Error::OutOfDomain {
                name: "outcome probability",
                value: *v,
                domain: "[0, 1]",
            });
        }
        Ok(Self {
            values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            qubits,
            source_tag: source_tag.into(),
            circuits,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sorted values with their empirical CDF, one row per value.
    pub fn empirical_cdf(&self) -> Vec<(f64, f64)> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        v.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect()
    }
}

fn pooled(states: Vec<Vec<C64>>, qubits: usize, tag: &str) -> Result<ProbabilitySample> {
    let circuits = states.len();
    let values = states.into_iter().flatten().map(|a| a.norm_sqr()).collect();
    ProbabilitySample::new(values, qubits, tag, circuits)
}

/// Outcome probabilities of `num_states` global Haar-random states.
pub fn sample_haar_ensemble<R: Rng + ?Sized>(
    qubits: usize,
    num_states: usize,
    rng: &mut R,
) -> Result<ProbabilitySample> {
    let states = (0..num_states).map(|_| haar_state(1 << qubits, rng)).collect();
    pooled(states, qubits, "haar")
}

/// Outcome probabilities of `num_states` products of independent
/// single-qubit Haar-random states.
pub fn sample_factorized_ensemble<R: Rng + ?Sized>(
    qubits: usize,
    num_states: usize,
    rng: &mut R,
) -> Result<ProbabilitySample> {
    let states = (0..num_states)
        .map(|_| {
            (0..qubits)
                .map(|_| haar_state(2, rng))
                .fold(vec![C64::new(1.0, 0.0)], |acc, q| {
                    acc.iter().flat_map(|a| q.iter().map(move |b| a * b)).collect()
                })
        })
        .collect();
    pooled(states, qubits, "factorized-haar")
}

/// Discrete distribution with exact rational values and weights.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDistribution {
    /// `(value, weight)` sorted by value.
    pub atoms: Vec<(Ratio<u64>, Ratio<u64>)>,
}

impl StepDistribution {
    fn from_counts(counts: BTreeMap<Ratio<u64>, u64>) -> Self {
        let total: u64 = counts.values().sum();
        Self {
            atoms: counts.into_iter().map(|(v, c)| (v, Ratio::new(c, total))).collect(),
        }
    }

    pub fn total_weight(&self) -> Ratio<u64> {
        self.atoms.iter().fold(Ratio::from_integer(0), |acc, (_, w)| acc + w)
    }

    pub fn support(&self) -> Vec<f64> {
        self.atoms.iter().map(|(v, _)| ratio_f64(*v)).collect()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|(v, _)| ratio_f64(*v) <= x)
            .map(|(_, w)| ratio_f64(*w))
            .sum()
    }

    /// Distribution of the product of independent draws from `self` and `other`.
    pub fn product(&self, other: &Self) -> Self {
        let mut acc: BTreeMap<Ratio<u64>, Ratio<u64>> = BTreeMap::new();
        for (va, wa) in &self.atoms {
            for (vb, wb) in &other.atoms {
                *acc.entry(va * vb).or_insert_with(|| Ratio::from_integer(0)) += wa * wb;
            }
        }
        Self {
            atoms: acc.into_iter().collect(),
        }
    }
}

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Exact distribution of diagonal density-matrix elements over all states
/// the full `n`-qubit Clifford group produces from `|0…0⟩`.
pub fn clifford_step_cdf(qubits: usize) -> Result<StepDistribution> {
    let group = CliffordGroup::shared(qubits)?;
    let dim = 1u64 << qubits;
    let mut counts: BTreeMap<Ratio<u64>, u64> = BTreeMap::new();
    for e in group.elements() {
        for row in 0..dim as usize {
            let p = e.matrix.entry(row, 0).norm_sqr();
            // Clifford outputs are 0 or 2^k / 2^n
            let scaled = (p * dim as f64).round() as u64;
            if (p * dim as f64 - scaled as f64).abs() > 1e-9 {
                return Err(Error::SimulationIntegrity(format!("non-dyadic Clifford output {p}")));
            }
            *counts.entry(Ratio::new(scaled, dim)).or_insert(0) += 1;
        }
    }
    Ok(StepDistribution::from_counts(counts))
}

/// Step distribution of `n` independent single-qubit Clifford outputs.
pub fn factorized_clifford_step(qubits: usize) -> Result<StepDistribution> {
    let single = clifford_step_cdf(1)?;
    Ok((1..qubits).fold(single.clone(), |acc, _| acc.product(&single)))
}

/// One-sample Kolmogorov–Smirnov distance between the sample and `cdf`.
pub fn ks_distance(sample: &ProbabilitySample, cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Empty("probability sample"));
    }
    let mut v = sample.values.clone();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < v.len() {
        // ties: the empirical CDF jumps once over the whole run
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] == v[i] {
            j += 1;
        }
        let f = cdf(v[i]);
        let below = i as f64 / n;
        let at = (j + 1) as f64 / n;
        d = d.max((at - f).abs()).max((f - below).abs());
        i = j + 1;
    }
    Ok(d)
}

/// Total-variation distance between the sample's empirical distribution and
/// a discrete reference; mass off the reference support counts in full.
pub fn tv_distance(sample: &ProbabilitySample, reference: &StepDistribution) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Empty("probability sample"));
    }
    let support = reference.support();
    let mut counts = vec![0usize; support.len()];
    let mut off_support = 0usize;
    for &x in &sample.values {
        match support.iter().position(|&s| (s - x).abs() <= 1e-9) {
            Some(i) => counts[i] += 1,
            None => off_support += 1,
        }
    }
    let n = sample.len() as f64;
    let on: f64 = counts
        .iter()
        .zip(&reference.atoms)
        .map(|(&c, (_, w))| (c as f64 / n - ratio_f64(*w)).abs())
        .sum();
    Ok(0.5 * (on + off_support as f64 / n))
}

pub fn ks_threshold(num_values: usize) -> f64 {
    KS_CRITICAL_99 / (num_values as f64).sqrt()
}

pub fn tv_threshold(num_circuits: usize) -> f64 {
    KS_CRITICAL_99 / (num_circuits as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    MultiqubitLike,
    FactorizedLike,
    Indeterminate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    KolmogorovSmirnov,
    TotalVariation,
}

/// Outcome of the randomization test for one ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionVerdict {
    pub ensemble: String,
    pub depth: usize,
    pub qubits: usize,
    pub num_values: usize,
    pub num_circuits: usize,
    /// Always KS against Porter–Thomas with `d = 2ⁿ`.
    pub ks_to_porter_thomas: f64,
    /// Distance to the factorized reference (Haar: KS to the factorized law;
    /// Clifford: TV to the factorized Clifford step distribution).
    pub ks_to_factorized: f64,
    /// Distance to the multi-qubit Clifford step distribution (KS for Haar
    /// ensembles, TV for Clifford ensembles); absent for `n > 2`.
    pub ks_to_clifford_step: Option<f64>,
    /// Metric behind the verdict.
    pub metric: DistanceMetric,
    pub threshold: f64,
    pub verdict: Verdict,
}

fn decide(multi_pass: bool, factorized_pass: bool) -> Verdict {
    match (multi_pass, factorized_pass) {
        (true, false) => Verdict::MultiqubitLike,
        (false, true) => Verdict::FactorizedLike,
        _ => Verdict::Indeterminate,
    }
}

/// Pools ideal output probabilities of `num_circuits` noiseless circuits.
pub fn sample_ensemble(
    ensemble: &ReferenceEnsemble,
    depth: usize,
    num_circuits: usize,
    seed: u64,
) -> Result<ProbabilitySample> {
    let per_circuit: Vec<Vec<f64>> = (0..num_circuits)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, &[tag::ENSEMBLE, depth as u64, k as u64]);
            let circuit = ensemble.sample_circuit(depth, false, &mut r)?;
            ideal_probabilities(&circuit, None)
        })
        .collect::<Result<_>>()?;
    ProbabilitySample::new(
        per_circuit.into_iter().flatten().collect(),
        ensemble.qubits,
        ensemble.label(),
        num_circuits,
    )
}

/// Compares a pooled sample against the three reference families.
pub fn classify_sample(sample: &ProbabilitySample, clifford_type: bool, depth: usize) -> Result<DistributionVerdict> {
    let n = sample.qubits;
    let dim = 1usize << n;
    let ks_pt = ks_distance(sample, |p| porter_thomas_cdf(p, dim))?;
    let step = if n <= 2 { Some(clifford_step_cdf(n)?) } else { None };
    let (ks_fact, ks_step, metric, threshold) = if clifford_type {
        let fact = tv_distance(sample, &factorized_clifford_step(n)?)?;
        let step_d = step.as_ref().map(|s| tv_distance(sample, s)).transpose()?;
        (
            fact,
            step_d,
            DistanceMetric::TotalVariation,
            tv_threshold(sample.circuits),
        )
    } else {
        let fact = ks_distance(sample, |p| factorized_cdf(p, n))?;
        let step_d = step.as_ref().map(|s| ks_distance(sample, |p| s.cdf(p))).transpose()?;
        (
            fact,
            step_d,
            DistanceMetric::KolmogorovSmirnov,
            ks_threshold(sample.len()),
        )
    };
    let multi = if clifford_type { ks_step } else { Some(ks_pt) };
    let verdict = match multi {
        Some(d) => decide(d < threshold, ks_fact < threshold),
        None => Verdict::Indeterminate,
    };
    Ok(DistributionVerdict {
        ensemble: sample.source_tag.clone(),
        depth,
        qubits: n,
        num_values: sample.len(),
        num_circuits: sample.circuits,
        ks_to_porter_thomas: ks_pt,
        ks_to_factorized: ks_fact,
        ks_to_clifford_step: ks_step,
        metric,
        threshold,
        verdict,
    })
}

/// Simulates the noiseless ensemble at `depth`, pools its output
/// probabilities and classifies them.
pub fn validate_reference(
    ensemble: &ReferenceEnsemble,
    depth: usize,
    num_circuits: usize,
    seed: u64,
) -> Result<DistributionVerdict> {
    if num_circuits == 0 {
        return Err(Error::Empty("no circuits requested"));
    }
    let sample = sample_ensemble(ensemble, depth, num_circuits, seed)?;
    let clifford_type = ensemble.layers.is_clifford()
        && ensemble
            .interleaved
            .as_ref()
            .map_or(Ok(true), |g| g.gate.unitary().map(|u| u.is_clifford()))?;
    classify_sample(&sample, clifford_type, depth)
}
