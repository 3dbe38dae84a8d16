//! End-to-end interleaved benchmarking of a target gate against
//! simultaneous single-qubit references, optionally alongside a standard
//! Clifford IRB pair for comparison.

use serde::{Deserialize, Serialize};

use crate::distributions::DistributionVerdict;
use crate::ensemble::GateSpec;
use crate::error::{Error, Result};
use crate::fit::DecayModel;
use crate::protocol::{
    interleaved_gate_estimate, isolated_single_qubit_fit, reference_ratio_estimate, run_experiment, ErrorSource,
    ExperimentPlan, ExperimentResult, GateFidelity, IsolatedSettings, Protocol, ReferenceErrors,
    DEFAULT_BOOTSTRAP_RESAMPLES, DEFAULT_VERDICT_CIRCUITS,
};
use crate::rng::derive_seed;
use crate::simulator::LocalNoiseModel;

/// Sub-experiment labels used to derive independent seeds.
mod part {
    pub const REFERENCE: u64 = 0x10;
    pub const INTERLEAVED: u64 = 0x11;
    pub const ISOLATED: u64 = 0x12;
    pub const IRB_REFERENCE: u64 = 0x13;
    pub const IRB_INTERLEAVED: u64 = 0x14;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterleavedStudy {
    /// Per-qubit layer noise plus the target gate's own depolarizing
    /// parameter.
    pub noise: LocalNoiseModel,
    pub target: GateSpec,
    pub depths: Vec<usize>,
    pub circuits_per_depth: usize,
    pub shots: u64,
    pub seed: u64,
    /// Smallest depth used in the interleaved fit and the depth of the
    /// randomization verdict.
    pub m_min: usize,
    pub bootstrap_resamples: usize,
    pub verdict_circuits: usize,
    /// Source of the error rates in the refined estimator.
    pub error_source: ErrorSource,
    /// Error rates used when `error_source` is `Supplied`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supplied_errors: Option<Vec<f64>>,
    /// Also run reference and interleaved Clifford IRB.
    pub include_irb: bool,
}

impl InterleavedStudy {
    pub fn new(noise: LocalNoiseModel, target: GateSpec, depths: Vec<usize>, circuits_per_depth: usize) -> Self {
        Self {
            noise,
            target,
            depths,
            circuits_per_depth,
            shots: 0,
            seed: 0,
            m_min: crate::fit::DEFAULT_M_MIN,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
            verdict_circuits: DEFAULT_VERDICT_CIRCUITS,
            error_source: ErrorSource::Isolated,
            supplied_errors: None,
            include_irb: false,
        }
    }

    fn plan(&self, protocol: Protocol, part: u64) -> ExperimentPlan {
        ExperimentPlan {
            shots: self.shots,
            seed: derive_seed(self.seed, &[part]),
            bootstrap_resamples: self.bootstrap_resamples,
            ..ExperimentPlan::new(
                protocol,
                self.noise.clone(),
                self.depths.clone(),
                self.circuits_per_depth,
            )
        }
    }
}

/// Comparison run of standard Clifford IRB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrbComparison {
    pub reference: ExperimentResult,
    pub interleaved: ExperimentResult,
    pub gate: GateFidelity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub study: InterleavedStudy,
    pub reference: ExperimentResult,
    pub interleaved: ExperimentResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isolated: Option<ReferenceErrors>,
    pub gate: GateFidelity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<DistributionVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irb: Option<IrbComparison>,
}

pub fn run_interleaved_study(study: &InterleavedStudy) -> Result<StudyResult> {
    let n = study.noise.qubits();
    let gate_dim = study.target.dim()?;
    let reference = run_experiment(&study.plan(Protocol::XebSingle, part::REFERENCE))?;
    let interleaved = run_experiment(&ExperimentPlan {
        m_min: Some(study.m_min),
        verdict_circuits: study.verdict_circuits,
        ..study
            .plan(Protocol::XebInterleaved, part::INTERLEAVED)
            .with_target(study.target.clone())
    })?;

    let isolated = match study.error_source {
        ErrorSource::Isolated => Some(isolated_single_qubit_fit(
            &study.noise,
            &IsolatedSettings {
                depths: study.depths.clone(),
                circuits_per_depth: study.circuits_per_depth,
                shots: study.shots,
                bootstrap_resamples: study.bootstrap_resamples,
                seed: derive_seed(study.seed, &[part::ISOLATED]),
            },
        )?),
        _ => None,
    };
    let errors = match study.error_source {
        ErrorSource::Isolated => isolated.clone().expect("isolated fits were run"),
        ErrorSource::Simultaneous => {
            let joint = reference
                .fit(&DecayModel::FSingle {
                    qubits: n,
                    shared: false,
                })
                .ok_or_else(|| Error::MissingFit("per-qubit joint-decay fit".into()))?;
            ReferenceErrors::from_simultaneous_fit(joint)?
        }
        ErrorSource::Supplied => ReferenceErrors::supplied(
            study
                .supplied_errors
                .as_deref()
                .ok_or_else(|| Error::InvalidPlan("error_source = supplied needs supplied_errors".into()))?,
        )?,
    };
    if errors.params.qubits() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: errors.params.qubits(),
        });
    }
    let gate = interleaved_gate_estimate(interleaved.exponential()?, &errors, gate_dim)?;

    let irb = if study.include_irb {
        let reference = run_experiment(&study.plan(Protocol::IrbClifford, part::IRB_REFERENCE))?;
        let inter = run_experiment(
            &study
                .plan(Protocol::IrbClifford, part::IRB_INTERLEAVED)
                .with_target(study.target.clone()),
        )?;
        let gate = reference_ratio_estimate(reference.exponential()?, inter.exponential()?, gate_dim)?;
        Some(IrbComparison {
            reference,
            interleaved: inter,
            gate,
        })
    } else {
        None
    };

    Ok(StudyResult {
        study: study.clone(),
        verdict: interleaved.verdict.clone(),
        reference,
        interleaved,
        isolated,
        gate,
        irb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::NamedGate;
    use crate::distributions::Verdict;

    #[test]
    fn noiseless_study_gives_unit_gate_fidelity() {
        let mut study = InterleavedStudy::new(
            LocalNoiseModel::noiseless(2),
            GateSpec::named(NamedGate::Cz),
            vec![1, 2, 4, 8, 12, 16],
            10,
        );
        study.bootstrap_resamples = 0;
        study.verdict_circuits = 500;
        study.include_irb = true;
        let r = run_interleaved_study(&study).unwrap();
        assert!((r.gate.p_gate.value - 1.0).abs() < 1e-12);
        assert!((r.irb.unwrap().gate.p_gate.value - 1.0).abs() < 1e-12);
        assert_eq!(r.verdict.unwrap().verdict, Verdict::MultiqubitLike);
    }

    #[test]
    fn supplied_errors_are_required_and_checked() {
        let mut study = InterleavedStudy::new(
            LocalNoiseModel::noiseless(2),
            GateSpec::named(NamedGate::Cz),
            vec![4, 8, 12],
            5,
        );
        study.bootstrap_resamples = 0;
        study.verdict_circuits = 0;
        study.error_source = ErrorSource::Supplied;
        assert!(matches!(run_interleaved_study(&study), Err(Error::InvalidPlan(_))));
        study.supplied_errors = Some(vec![0.01]);
        assert!(matches!(
            run_interleaved_study(&study),
            Err(Error::DimensionMismatch { .. })
        ));
        study.supplied_errors = Some(vec![0.0, 0.0]);
        let r = run_interleaved_study(&study).unwrap();
        assert_eq!(r.gate.reference_errors.unwrap().source, ErrorSource::Supplied);
    }
}
