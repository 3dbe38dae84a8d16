//! Complete benchmarking experiments: plan validation, circuit simulation,
//! aggregation into fidelity curves, decay fits, bootstrap uncertainties
//! and target-gate estimates.
//!
//! Every circuit draws its gates from `stream(seed, [CIRCUIT, m, k])` and
//! its shots from `stream(seed, [SHOTS, m, k])`, where `m` is the depth and
//! `k` the circuit index, so results do not depend on thread scheduling or
//! on which other depths are in the plan.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay::{
    leading_order_coefficient, naive_interleaved_fidelity, refined_interleaved_fidelity, DepolarizingParams,
};
use crate::distributions::{validate_reference, DistributionVerdict};
use crate::ensemble::{GateSpec, LayerEnsemble, ReferenceEnsemble};
use crate::error::{Error, Result};
use crate::fit::{fit_decay, DecayFit, DecayModel, FitOptions};
use crate::rng::{self, tag};
use crate::simulator::{ideal_probabilities, run_noisy_circuit, sample_bitstrings, LocalNoiseModel, MAX_QUBITS};
use crate::xeb::{
    circuit_record, estimate_fidelity, survival_probability, survival_to_fidelity, CircuitRecord, FidelityPoint,
};

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;
pub const MIN_BOOTSTRAP_RESAMPLES: usize = 100;
pub const DEFAULT_VERDICT_CIRCUITS: usize = 2000;
/// Roughly log-spaced depths from 1 to 300.
pub const DEFAULT_DEPTHS: [usize; 14] = [1, 2, 3, 5, 8, 12, 18, 27, 40, 60, 90, 135, 200, 300];
pub const DEFAULT_CIRCUITS_PER_DEPTH: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Simultaneous single-qubit Clifford layers, XEB estimator.
    XebSingle,
    /// Full n-qubit Clifford layers, XEB estimator.
    XebMulti,
    /// n-qubit Clifford layers closed by the inverting recovery gate,
    /// survival-probability estimator. Interleaves the target gate when one
    /// is given.
    IrbClifford,
    /// Single-qubit Clifford layers with the target gate after each layer,
    /// XEB estimator.
    XebInterleaved,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Self::XebSingle => "xeb-single",
            Self::XebMulti => "xeb-multi",
            Self::IrbClifford => "irb-clifford",
            Self::XebInterleaved => "xeb-interleaved",
        }
    }

    pub fn default_layers(self) -> LayerEnsemble {
        match self {
            Self::XebSingle | Self::XebInterleaved => LayerEnsemble::SingleQubitClifford,
            Self::XebMulti | Self::IrbClifford => LayerEnsemble::MultiQubitClifford,
        }
    }

    /// Interleaved fits skip depths below the randomization depth; reference
    /// decays are fitted from depth one.
    pub fn default_m_min(self) -> usize {
        match self {
            Self::XebInterleaved => crate::fit::DEFAULT_M_MIN,
            _ => 1,
        }
    }

    pub fn default_models(self, qubits: usize) -> Vec<DecayModel> {
        match self {
            Self::XebSingle => vec![
                DecayModel::FSingle { qubits, shared: false },
                DecayModel::Exponential,
                DecayModel::Additive,
            ],
            _ => vec![DecayModel::Exponential],
        }
    }
}

/// Everything needed to run one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub protocol: Protocol,
    pub qubits: usize,
    pub depths: Vec<usize>,
    pub circuits_per_depth: usize,
    /// Measurement shots per circuit; 0 uses exact probabilities.
    pub shots: u64,
    pub noise: LocalNoiseModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_gate: Option<GateSpec>,
    pub seed: u64,
    /// Defaults to [`Protocol::default_m_min`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_min: Option<usize>,
    /// Defaults to [`Protocol::default_layers`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<LayerEnsemble>,
    /// Defaults to [`Protocol::default_models`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<DecayModel>>,
    /// 0 disables the bootstrap.
    pub bootstrap_resamples: usize,
    /// Circuits pooled for the randomization verdict of interleaved
    /// protocols; 0 skips it.
    pub verdict_circuits: usize,
}

impl ExperimentPlan {
    pub fn new(protocol: Protocol, noise: LocalNoiseModel, depths: Vec<usize>, circuits_per_depth: usize) -> Self {
        Self {
            protocol,
            qubits: noise.qubits(),
            depths,
            circuits_per_depth,
            shots: 0,
            noise,
            target_gate: None,
            seed: 0,
            m_min: None,
            layers: None,
            models: None,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
            verdict_circuits: 0,
        }
    }

    pub fn with_target(mut self, gate: GateSpec) -> Self {
        self.target_gate = Some(gate);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_shots(mut self, shots: u64) -> Self {
        self.shots = shots;
        self
    }

    pub fn with_bootstrap(mut self, resamples: usize) -> Self {
        self.bootstrap_resamples = resamples;
        self
    }

    pub fn m_min(&self) -> usize {
        self.m_min.unwrap_or_else(|| self.protocol.default_m_min())
    }

    pub fn layer_ensemble(&self) -> LayerEnsemble {
        self.layers.unwrap_or_else(|| self.protocol.default_layers())
    }

    pub fn models(&self) -> Vec<DecayModel> {
        self.models
            .clone()
            .unwrap_or_else(|| self.protocol.default_models(self.qubits))
    }

    pub fn ensemble(&self) -> ReferenceEnsemble {
        ReferenceEnsemble {
            qubits: self.qubits,
            layers: self.layer_ensemble(),
            interleaved: self.target_gate.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidPlan(msg));
        if self.qubits == 0 || self.qubits > MAX_QUBITS {
            return invalid(format!("qubit count {} outside 1..={MAX_QUBITS}", self.qubits));
        }
        if self.depths.is_empty() {
            return invalid("depth list is empty".into());
        }
        if self.depths.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("depths must be strictly increasing".into());
        }
        if self.circuits_per_depth == 0 {
            return invalid("circuits_per_depth must be at least 1".into());
        }
        self.noise.validate()?;
        if self.noise.qubits() != self.qubits {
            return invalid(format!(
                "noise model covers {} qubits, plan has {}",
                self.noise.qubits(),
                self.qubits
            ));
        }
        if self.protocol == Protocol::XebInterleaved && self.target_gate.is_none() {
            return invalid("xeb-interleaved requires a target gate".into());
        }
        if matches!(self.protocol, Protocol::XebSingle | Protocol::XebMulti) && self.target_gate.is_some() {
            return invalid(format!("{} does not take a target gate", self.protocol.name()));
        }
        if let Some(g) = &self.target_gate {
            g.resolve(self.qubits)?;
        }
        if self.protocol == Protocol::IrbClifford && !self.layer_ensemble().is_clifford() {
            return invalid("irb-clifford needs Clifford reference layers".into());
        }
        if self.bootstrap_resamples != 0 && self.bootstrap_resamples < MIN_BOOTSTRAP_RESAMPLES {
            return invalid(format!(
                "bootstrap_resamples must be 0 or at least {MIN_BOOTSTRAP_RESAMPLES}"
            ));
        }
        for model in self.models() {
            model.validate()?;
        }
        Ok(())
    }
}

/// Per-circuit outcomes at one depth, ordered by circuit index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "kebab-case")]
pub enum CircuitOutcomes {
    Xeb(Vec<CircuitRecord>),
    /// Per-circuit survival probabilities with the register dimension.
    Survival {
        dim: usize,
        survival: Vec<f64>,
    },
}

impl CircuitOutcomes {
    pub fn len(&self) -> usize {
        match self {
            Self::Xeb(r) => r.len(),
            Self::Survival { survival, .. } => survival.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn subset(&self, indices: &[usize]) -> Self {
        match self {
            Self::Xeb(r) => Self::Xeb(indices.iter().map(|&i| r[i]).collect()),
            Self::Survival { dim, survival } => Self::Survival {
                dim: *dim,
                survival: indices.iter().map(|&i| survival[i]).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthData {
    pub depth: usize,
    pub outcomes: CircuitOutcomes,
}

impl DepthData {
    /// Fidelity estimate from all circuits at this depth.
    pub fn point(&self) -> Result<FidelityPoint> {
        point_from(self.depth, &self.outcomes)
    }
}

fn point_from(depth: usize, outcomes: &CircuitOutcomes) -> Result<FidelityPoint> {
    match outcomes {
        CircuitOutcomes::Xeb(records) => estimate_fidelity(records),
        CircuitOutcomes::Survival { dim, survival } => {
            if survival.is_empty() {
                return Err(Error::Empty("no survival probabilities"));
            }
            let mean = survival.iter().sum::<f64>() / survival.len() as f64;
            Ok(FidelityPoint {
                depth,
                fidelity: survival_to_fidelity(mean, *dim),
                stderr: None,
                num_circuits: survival.len(),
            })
        }
    }
}

/// Simulates every circuit of the plan.
pub fn simulate(plan: &ExperimentPlan) -> Result<Vec<DepthData>> {
    plan.validate()?;
    let ensemble = plan.ensemble();
    let k = plan.circuits_per_depth;
    let recovery = plan.protocol == Protocol::IrbClifford;
    let jobs: Vec<(usize, usize)> = plan.depths.iter().flat_map(|&m| (0..k).map(move |c| (m, c))).collect();
    let outcomes: Vec<Outcome> = jobs
        .into_par_iter()
        .map(|(m, c)| {
            let mut circuit_rng = rng::stream(plan.seed, &[tag::CIRCUIT, m as u64, c as u64]);
            let mut shot_rng = rng::stream(plan.seed, &[tag::SHOTS, m as u64, c as u64]);
            let circuit = ensemble.sample_circuit(m, recovery, &mut circuit_rng)?;
            let rho = run_noisy_circuit(&circuit, &plan.noise, None)?;
            let measured = sample_bitstrings(&rho.probabilities(), plan.shots, &mut shot_rng)?;
            if recovery {
                Ok(Outcome::Survival(survival_probability(&measured)?))
            } else {
                let ideal = ideal_probabilities(&circuit, None)?;
                Ok(Outcome::Record(circuit_record(&ideal, &measured, m)?))
            }
        })
        .collect::<Result<_>>()?;
    Ok(plan
        .depths
        .iter()
        .zip(outcomes.chunks(k))
        .map(|(&depth, chunk)| DepthData {
            depth,
            outcomes: if recovery {
                CircuitOutcomes::Survival {
                    dim: 1 << plan.qubits,
                    survival: chunk.iter().map(Outcome::survival).collect(),
                }
            } else {
                CircuitOutcomes::Xeb(chunk.iter().map(Outcome::record).collect())
            },
        })
        .collect())
}

enum Outcome {
    Record(CircuitRecord),
    Survival(f64),
}

impl Outcome {
    fn record(&self) -> CircuitRecord {
        match self {
            Self::Record(r) => *r,
            Self::Survival(_) => unreachable!("outcome kinds are uniform within a plan"),
        }
    }

    fn survival(&self) -> f64 {
        match self {
            Self::Survival(s) => *s,
            Self::Record(_) => unreachable!("outcome kinds are uniform within a plan"),
        }
    }
}

/// How an uncertainty was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum UncertaintyMethod {
    /// Standard deviation over circuit resamples.
    Bootstrap { resamples: usize },
    /// Square root of the fit covariance diagonal.
    FitCovariance,
    /// First-order propagation of the input uncertainties in quadrature.
    Propagated,
    /// No uncertainty could be estimated.
    Unavailable,
}

/// A fitted model with its bootstrap spread.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub fit: DecayFit,
    /// Per-parameter bootstrap standard deviations.
    pub bootstrap_stderr: Option<Vec<f64>>,
    /// Resamples whose refit converged.
    pub bootstrap_fits: usize,
}

impl FitSummary {
    /// Preferred standard error of parameter `i`: bootstrap when available,
    /// fit covariance otherwise.
    pub fn stderr(&self, i: usize) -> (Option<f64>, UncertaintyMethod) {
        match &self.bootstrap_stderr {
            Some(s) => (
                Some(s[i]),
                UncertaintyMethod::Bootstrap {
                    resamples: self.bootstrap_fits,
                },
            ),
            None => {
                let s = self.fit.param_stderr()[i];
                if s.is_finite() {
                    (Some(s), UncertaintyMethod::FitCovariance)
                } else {
                    (None, UncertaintyMethod::Unavailable)
                }
            }
        }
    }

    pub fn param(&self, i: usize) -> Estimate {
        let (stderr, method) = self.stderr(i);
        Estimate {
            value: self.fit.params[i],
            stderr,
            method,
        }
    }
}

/// Bootstrap standard deviations of per-depth fidelities and of fit
/// parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    /// One entry per depth; `None` where fewer than two circuits exist.
    pub point_stderr: Vec<Option<f64>>,
    /// One entry per model; `None` when fewer than two refits converged.
    pub param_stderr: Vec<Option<Vec<f64>>>,
    pub successful_fits: Vec<usize>,
}

fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn with_stderr(points: &[FidelityPoint], stderr: &[Option<f64>]) -> Vec<FidelityPoint> {
    points
        .iter()
        .zip(stderr)
        .map(|(p, s)| FidelityPoint { stderr: *s, ..*p })
        .collect()
}

/// Resamples circuits with replacement within each depth, re-estimates the
/// fidelities and refits every model.
///
/// Refits weight the resampled points by the bootstrap per-depth spread, as
/// the fit to the full data does. Resamples where some depth has no
/// defined fidelity are dropped.
pub fn bootstrap_uncertainty(
    data: &[DepthData],
    models: &[DecayModel],
    options: &FitOptions,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    if resamples < MIN_BOOTSTRAP_RESAMPLES {
        return Err(Error::InvalidPlan(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_RESAMPLES} resamples, got {resamples}"
        )));
    }
    let curves: Vec<Vec<FidelityPoint>> = (0..resamples)
        .into_par_iter()
        .filter_map(|b| {
            let mut r = rng::stream(seed, &[tag::BOOTSTRAP, b as u64]);
            data.iter()
                .map(|d| {
                    let k = d.outcomes.len();
                    let idx: Vec<usize> = (0..k).map(|_| r.random_range(0..k)).collect();
                    point_from(d.depth, &d.outcomes.subset(&idx))
                })
                .collect::<Result<Vec<_>>>()
                .ok()
        })
        .collect();
    let point_stderr: Vec<Option<f64>> = data
        .iter()
        .enumerate()
        .map(|(j, d)| {
            if d.outcomes.len() < 2 {
                return None;
            }
            sample_std(&curves.iter().map(|c| c[j].fidelity).collect::<Vec<_>>())
        })
        .collect();
    let mut param_stderr = Vec::with_capacity(models.len());
    let mut successful_fits = Vec::with_capacity(models.len());
    for model in models {
        let params: Vec<Vec<f64>> = curves
            .par_iter()
            .filter_map(|c| fit_decay(&with_stderr(c, &point_stderr), model, options).ok())
            .map(|f| f.params)
            .collect();
        successful_fits.push(params.len());
        let spread = (0..model.num_params())
            .map(|i| sample_std(&params.iter().map(|p| p[i]).collect::<Vec<_>>()))
            .collect::<Option<Vec<_>>>();
        param_stderr.push(spread);
    }
    Ok(BootstrapSummary {
        resamples,
        point_stderr,
        param_stderr,
        successful_fits,
    })
}

/// Fidelity curve and fits of already collected data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub fidelity_curve: Vec<FidelityPoint>,
    pub fits: Vec<FitSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSummary>,
}

impl Analysis {
    pub fn fit(&self, model: &DecayModel) -> Option<&FitSummary> {
        self.fits.iter().find(|f| f.fit.model == *model)
    }
}

/// Aggregates per-depth outcomes, runs the bootstrap (when `resamples > 0`)
/// and fits every model.
pub fn analyze(
    data: &[DepthData],
    models: &[DecayModel],
    options: &FitOptions,
    resamples: usize,
    seed: u64,
) -> Result<Analysis> {
    let points = data.iter().map(DepthData::point).collect::<Result<Vec<_>>>()?;
    let bootstrap = if resamples > 0 {
        Some(bootstrap_uncertainty(data, models, options, resamples, seed)?)
    } else {
        None
    };
    let fidelity_curve = match &bootstrap {
        Some(b) => with_stderr(&points, &b.point_stderr),
        None => points,
    };
    let fits = models
        .iter()
        .enumerate()
        .map(|(i, model)| {
            Ok(FitSummary {
                fit: fit_decay(&fidelity_curve, model, options)?,
                bootstrap_stderr: bootstrap.as_ref().and_then(|b| b.param_stderr[i].clone()),
                bootstrap_fits: bootstrap.as_ref().map_or(0, |b| b.successful_fits[i]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Analysis {
        fidelity_curve,
        fits,
        bootstrap,
    })
}

/// A value with its standard error and the method behind it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: Option<f64>,
    #[serde(flatten)]
    pub method: UncertaintyMethod,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: None,
            method: UncertaintyMethod::Unavailable,
        }
    }

    fn scaled(self, factor: f64, offset: f64) -> Self {
        Self {
            value: factor * self.value + offset,
            stderr: self.stderr.map(|s| s * factor.abs()),
            ..self
        }
    }
}

/// Where the per-qubit error rates used by the refined estimator came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorSource {
    /// Separate single-qubit experiments on each qubit alone.
    Isolated,
    /// Per-qubit parameters of the simultaneous joint-decay fit.
    Simultaneous,
    /// Given by the user.
    Supplied,
}

/// Per-qubit depolarizing parameters with uncertainties and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceErrors {
    pub params: DepolarizingParams,
    pub stderr: Vec<Option<f64>>,
    #[serde(flatten)]
    pub method: UncertaintyMethod,
    pub source: ErrorSource,
}

impl ReferenceErrors {
    pub fn supplied(errors: &[f64]) -> Result<Self> {
        Ok(Self {
            params: DepolarizingParams::new(errors.iter().map(|e| 1.0 - e).collect())?,
            stderr: vec![None; errors.len()],
            method: UncertaintyMethod::Unavailable,
            source: ErrorSource::Supplied,
        })
    }

    /// Per-qubit parameters of a joint-decay fit with one parameter per qubit.
    pub fn from_simultaneous_fit(summary: &FitSummary) -> Result<Self> {
        if !matches!(summary.fit.model, DecayModel::FSingle { shared: false, .. }) {
            return Err(Error::MissingFit("per-qubit joint-decay fit".into()));
        }
        let n = summary.fit.params.len();
        let stderr: Vec<_> = (0..n).map(|i| summary.stderr(i)).collect();
        Ok(Self {
            params: DepolarizingParams::new(summary.fit.params.clone())?,
            method: stderr.first().map_or(UncertaintyMethod::Unavailable, |s| s.1),
            stderr: stderr.into_iter().map(|s| s.0).collect(),
            source: ErrorSource::Simultaneous,
        })
    }

    pub fn errors(&self) -> Vec<f64> {
        self.params.errors()
    }
}

/// Which estimator produced a gate fidelity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateEstimator {
    /// `p_int / p_ref` with both decays from the same Clifford reference.
    ReferenceRatio,
    /// `p_int` against simultaneous single-qubit references, with the
    /// joint reference decay rebuilt from per-qubit errors.
    SingleQubitReference,
}

/// Target-gate fidelity estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateFidelity {
    pub estimator: GateEstimator,
    /// Dimension of the gate's Hilbert space.
    pub gate_dim: usize,
    pub p_interleaved: Estimate,
    pub p_reference: Estimate,
    pub p_gate: Estimate,
    pub average_fidelity: Estimate,
    /// Reference decay `1 − Σ e_i` of the uncorrected estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_reference_naive: Option<Estimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_gate_naive: Option<Estimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_fidelity_naive: Option<Estimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_errors: Option<ReferenceErrors>,
}

fn quadrature(terms: &[Option<f64>]) -> Option<f64> {
    terms
        .iter()
        .copied()
        .sum::<Option<f64>>()
        .map(|_| terms.iter().map(|t| t.unwrap_or(0.0).powi(2)).sum::<f64>().sqrt())
}

fn ratio_estimate(num: Estimate, den: Estimate) -> Estimate {
    let value = num.value / den.value;
    let stderr = quadrature(&[
        num.stderr.map(|s| s / den.value),
        den.stderr.map(|s| s * num.value / (den.value * den.value)),
    ]);
    Estimate {
        value,
        stderr,
        method: if stderr.is_some() {
            UncertaintyMethod::Propagated
        } else {
            UncertaintyMethod::Unavailable
        },
    }
}

/// Average gate fidelity of an estimated depolarizing parameter. Estimates
/// may exceed one, so the map is applied without a domain check.
fn average_fidelity(p: Estimate, dim: usize) -> Result<Estimate> {
    if dim < 2 {
        return Err(Error::OutOfDomain {
            name: "gate dimension",
            value: dim as f64,
            domain: "at least 2",
        });
    }
    let d = dim as f64;
    Ok(p.scaled((d - 1.0) / d, 1.0 / d))
}

/// Joint reference decay `1 − c_n Σ e_i` with uncertainty; `c_n = 1` gives
/// the uncorrected `1 − Σ e_i`.
fn reference_decay(errors: &ReferenceErrors, coefficient: f64) -> Estimate {
    let total: f64 = errors.errors().iter().sum();
    let stderr = quadrature(
        &errors
            .stderr
            .iter()
            .map(|s| s.map(|s| s * coefficient))
            .collect::<Vec<_>>(),
    );
    Estimate {
        value: 1.0 - coefficient * total,
        stderr,
        method: if stderr.is_some() {
            UncertaintyMethod::Propagated
        } else {
            UncertaintyMethod::Unavailable
        },
    }
}

/// Target-gate estimate from an interleaved decay measured against
/// simultaneous single-qubit references.
///
/// `interleaved` is the exponential fit of the interleaved experiment;
/// `errors` supplies one error rate per register qubit.
pub fn interleaved_gate_estimate(
    interleaved: &FitSummary,
    errors: &ReferenceErrors,
    gate_dim: usize,
) -> Result<GateFidelity> {
    if interleaved.fit.model != DecayModel::Exponential {
        return Err(Error::MissingFit("exponential fit of the interleaved decay".into()));
    }
    let e = errors.errors();
    let p_int = interleaved.param(0);
    let refined = refined_interleaved_fidelity(p_int.value, &e)?;
    let naive = naive_interleaved_fidelity(p_int.value, &e)?;
    let p_ref = reference_decay(errors, leading_order_coefficient(e.len()));
    let p_ref_naive = reference_decay(errors, 1.0);
    let p_gate = Estimate {
        value: refined,
        ..ratio_estimate(p_int, p_ref)
    };
    let p_gate_naive = Estimate {
        value: naive,
        ..ratio_estimate(p_int, p_ref_naive)
    };
    Ok(GateFidelity {
        estimator: GateEstimator::SingleQubitReference,
        gate_dim,
        p_interleaved: p_int,
        p_reference: p_ref,
        average_fidelity: average_fidelity(p_gate, gate_dim)?,
        p_gate,
        p_reference_naive: Some(p_ref_naive),
        average_fidelity_naive: Some(average_fidelity(p_gate_naive, gate_dim)?),
        p_gate_naive: Some(p_gate_naive),
        reference_errors: Some(errors.clone()),
    })
}

/// Standard interleaved estimate `p_int / p_ref` from two Clifford-reference
/// experiments.
pub fn reference_ratio_estimate(
    reference: &FitSummary,
    interleaved: &FitSummary,
    gate_dim: usize,
) -> Result<GateFidelity> {
    for f in [reference, interleaved] {
        if f.fit.model != DecayModel::Exponential {
            return Err(Error::MissingFit("exponential fits of both decays".into()));
        }
    }
    let p_ref = reference.param(0);
    let p_int = interleaved.param(0);
    if p_ref.value <= 0.0 {
        return Err(Error::NonPositiveDenominator(p_ref.value));
    }
    let p_gate = ratio_estimate(p_int, p_ref);
    Ok(GateFidelity {
        estimator: GateEstimator::ReferenceRatio,
        gate_dim,
        p_interleaved: p_int,
        p_reference: p_ref,
        average_fidelity: average_fidelity(p_gate, gate_dim)?,
        p_gate,
        p_reference_naive: None,
        p_gate_naive: None,
        average_fidelity_naive: None,
        reference_errors: None,
    })
}

/// Outcome of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub plan: ExperimentPlan,
    pub fidelity_curve: Vec<FidelityPoint>,
    pub fits: Vec<FitSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<DistributionVerdict>,
    /// Raw per-circuit outcomes.
    #[serde(skip)]
    pub data: Vec<DepthData>,
}

impl ExperimentResult {
    pub fn fit(&self, model: &DecayModel) -> Option<&FitSummary> {
        self.fits.iter().find(|f| f.fit.model == *model)
    }

    pub fn exponential(&self) -> Result<&FitSummary> {
        self.fit(&DecayModel::Exponential)
            .ok_or_else(|| Error::MissingFit("exponential".into()))
    }
}

/// Runs the plan: simulation, aggregation, bootstrap, fits and, for
/// interleaved plans with `verdict_circuits > 0`, the randomization verdict
/// at depth `m_min`.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    let data = simulate(plan)?;
    let options = FitOptions::with_m_min(plan.m_min());
    let analysis = analyze(&data, &plan.models(), &options, plan.bootstrap_resamples, plan.seed)?;
    let verdict = match (&plan.target_gate, plan.verdict_circuits) {
        (Some(_), c) if c > 0 => Some(validate_reference(
            &plan.ensemble(),
            plan.m_min(),
            c,
            rng::derive_seed(plan.seed, &[tag::ENSEMBLE]),
        )?),
        _ => None,
    };
    Ok(ExperimentResult {
        plan: plan.clone(),
        fidelity_curve: analysis.fidelity_curve,
        fits: analysis.fits,
        verdict,
        data,
    })
}

/// Settings shared by the per-qubit isolated experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolatedSettings {
    pub depths: Vec<usize>,
    pub circuits_per_depth: usize,
    pub shots: u64,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

/// Benchmarks each qubit alone with single-qubit Clifford XEB and fits
/// `F = p_iᵐ`.
pub fn isolated_single_qubit_fit(noise: &LocalNoiseModel, settings: &IsolatedSettings) -> Result<ReferenceErrors> {
    let fits = noise
        .per_qubit_p
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let plan = ExperimentPlan {
                models: Some(vec![DecayModel::Exponential]),
                shots: settings.shots,
                seed: rng::derive_seed(settings.seed, &[tag::ISOLATED, i as u64]),
                bootstrap_resamples: settings.bootstrap_resamples,
                ..ExperimentPlan::new(
                    Protocol::XebSingle,
                    LocalNoiseModel::new(vec![p], None)?,
                    settings.depths.clone(),
                    settings.circuits_per_depth,
                )
            };
            Ok(run_experiment(&plan)?.exponential()?.param(0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceErrors {
        params: DepolarizingParams::new(fits.iter().map(|f| f.value.clamp(0.0, 1.0)).collect())?,
        stderr: fits.iter().map(|f| f.stderr).collect(),
        method: fits.first().map_or(UncertaintyMethod::Unavailable, |f| f.method),
        source: ErrorSource::Isolated,
    })
}
