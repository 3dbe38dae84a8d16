//! Random circuit families: reference layers, interleaved target gates and
//! recovery gates.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::clifford::{CliffordGroup, CliffordLayer, NamedGate, UnitaryMatrix, C64};
use crate::error::{Error, Result};
use crate::simulator::{Circuit, InterleavedGate, Layer};

/// Gate set a reference layer is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerEnsemble {
    /// Independent uniformly random single-qubit Cliffords on every qubit.
    SingleQubitClifford,
    /// Independent Haar-random single-qubit unitaries on every qubit.
    SingleQubitHaar,
    /// Uniformly random element of the full n-qubit Clifford group.
    MultiQubitClifford,
    /// Haar-random unitary on the whole register.
    MultiQubitHaar,
}

impl LayerEnsemble {
    pub fn is_clifford(self) -> bool {
        matches!(self, Self::SingleQubitClifford | Self::MultiQubitClifford)
    }

    pub fn is_factorized(self) -> bool {
        matches!(self, Self::SingleQubitClifford | Self::SingleQubitHaar)
    }
}

/// Target gate given by name or by explicit matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetGate {
    Named(NamedGate),
    /// Row-major entries as `[re, im]` pairs.
    Matrix(Vec<Vec<[f64; 2]>>),
}

impl TargetGate {
    pub fn unitary(&self) -> Result<UnitaryMatrix> {
        match self {
            Self::Named(g) => Ok(g.unitary()),
            Self::Matrix(rows) => {
                let dim = rows.len();
                if rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidPlan("target gate matrix must be square".into()));
                }
                let entries: Vec<C64> = rows.iter().flatten().map(|&[re, im]| C64::new(re, im)).collect();
                UnitaryMatrix::from_row_slice(dim, &entries)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Named(g) => g.name().to_string(),
            Self::Matrix(rows) => format!("custom-{}x{}", rows.len(), rows.len()),
        }
    }
}

/// Target gate plus the register qubits it acts on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub gate: TargetGate,
    /// Defaults to the leading qubits `0..k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<usize>>,
}

impl GateSpec {
    pub fn named(gate: NamedGate) -> Self {
        Self {
            gate: TargetGate::Named(gate),
            targets: None,
        }
    }

    pub fn resolve(&self, qubits: usize) -> Result<InterleavedGate> {
        let unitary = self.gate.unitary()?;
        let targets = self.targets.clone().unwrap_or_else(|| (0..unitary.qubits()).collect());
        // validates the targets
        unitary.embed(&targets, qubits)?;
        Ok(InterleavedGate { unitary, targets })
    }

    /// Dimension of the gate's own Hilbert space.
    pub fn dim(&self) -> Result<usize> {
        Ok(self.gate.unitary()?.dim())
    }
}

/// A family of random benchmarking circuits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEnsemble {
    pub qubits: usize,
    pub layers: LayerEnsemble,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interleaved: Option<GateSpec>,
}

impl ReferenceEnsemble {
    pub fn new(qubits: usize, layers: LayerEnsemble) -> Self {
        Self {
            qubits,
            layers,
            interleaved: None,
        }
    }

    pub fn with_interleaved(mut self, gate: GateSpec) -> Self {
        self.interleaved = Some(gate);
        self
    }

    pub fn label(&self) -> String {
        let base = match self.layers {
            LayerEnsemble::SingleQubitClifford => "1q-clifford",
            LayerEnsemble::SingleQubitHaar => "1q-haar",
            LayerEnsemble::MultiQubitClifford => "nq-clifford",
            LayerEnsemble::MultiQubitHaar => "nq-haar",
        };
        match &self.interleaved {
            Some(g) => format!("{base}+{}", g.gate.label()),
            None => base.to_string(),
        }
    }

    /// Samples one layer.
    pub fn sample_layer<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Layer> {
        let n = self.qubits;
        match self.layers {
            LayerEnsemble::SingleQubitClifford => Layer::from_clifford(&CliffordLayer::sample_factorized(n, rng)?),
            LayerEnsemble::MultiQubitClifford => Layer::from_clifford(&CliffordLayer::sample_global(n, rng)?),
            LayerEnsemble::SingleQubitHaar => Ok(Layer::Local((0..n).map(|_| haar_unitary(2, rng)).collect())),
            LayerEnsemble::MultiQubitHaar => Ok(Layer::Global(haar_unitary(1 << n, rng))),
        }
    }

    /// Samples a depth-`depth` circuit; with `recovery`, appends the inverse
    /// of the whole sequence (requires every gate to be Clifford).
    pub fn sample_circuit<R: Rng + ?Sized>(&self, depth: usize, recovery: bool, rng: &mut R) -> Result<Circuit> {
        let layers = (0..depth).map(|_| self.sample_layer(rng)).collect::<Result<Vec<_>>>()?;
        let mut circuit = Circuit::new(self.qubits, layers);
        circuit.interleaved = self.interleaved.as_ref().map(|g| g.resolve(self.qubits)).transpose()?;
        if recovery {
            circuit.recovery = Some(recovery_gate(&circuit)?);
        }
        Ok(circuit)
    }
}

/// Clifford inverse of the circuit's ideal unitary.
pub fn recovery_gate(circuit: &Circuit) -> Result<UnitaryMatrix> {
    let group = CliffordGroup::shared(circuit.qubits)?;
    let total = circuit.ideal_unitary()?;
    let index = group.find(&total).ok_or(Error::NotClifford)?;
    Ok(group.invert(group.element(index))?.matrix.clone())
}

/// Haar-random unitary via QR decomposition of a complex Gaussian matrix,
/// with the phases of `R`'s diagonal folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> UnitaryMatrix {
    let z = DMatrix::from_fn(dim, dim, |_, _| {
        C64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        )
    });
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    UnitaryMatrix::from_raw(q)
}

/// Haar-random pure state of dimension `dim`.
pub fn haar_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<C64> {
    let v: Vec<C64> = (0..dim)
        .map(|_| {
            C64::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::gates;
    use crate::rng;
    use crate::simulator::ideal_probabilities;

    #[test]
    fn haar_unitaries_are_unitary() {
        let mut r = rng::stream(3, &[]);
        for dim in [2, 4, 8] {
            assert!(haar_unitary(dim, &mut r).is_unitary(1e-12));
        }
        let s = haar_state(4, &mut r);
        assert!((s.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn recovery_returns_to_ground_state() {
        let mut r = rng::stream(12, &[]);
        let ensembles = [
            ReferenceEnsemble::new(1, LayerEnsemble::MultiQubitClifford),
            ReferenceEnsemble::new(2, LayerEnsemble::MultiQubitClifford),
            ReferenceEnsemble::new(2, LayerEnsemble::MultiQubitClifford)
                .with_interleaved(GateSpec::named(NamedGate::Cz)),
            ReferenceEnsemble::new(2, LayerEnsemble::SingleQubitClifford)
                .with_interleaved(GateSpec::named(NamedGate::Cnot)),
        ];
        for e in &ensembles {
            for depth in [0, 1, 5, 20] {
                let c = e.sample_circuit(depth, true, &mut r).unwrap();
                let p = ideal_probabilities(&c, None).unwrap();
                assert!((p[0] - 1.0).abs() < 1e-12, "{} depth {depth}", e.label());
            }
        }
    }

    #[test]
    fn non_clifford_target_has_no_recovery() {
        let mut r = rng::stream(1, &[]);
        let e = ReferenceEnsemble::new(2, LayerEnsemble::MultiQubitClifford)
            .with_interleaved(GateSpec::named(NamedGate::SqrtIswap));
        assert_eq!(e.sample_circuit(3, true, &mut r).unwrap_err(), Error::NotClifford);
        assert!(e.sample_circuit(3, false, &mut r).is_ok());
    }

    #[test]
    fn custom_matrix_gate() {
        let z = [0.0, 0.0];
        let one = [1.0, 0.0];
        let cz = TargetGate::Matrix(vec![
            vec![one, z, z, z],
            vec![z, one, z, z],
            vec![z, z, one, z],
            vec![z, z, z, [-1.0, 0.0]],
        ]);
        assert_eq!(cz.unitary().unwrap(), gates::cz());
        let bad = TargetGate::Matrix(vec![vec![one, one], vec![one, one]]);
        assert!(bad.unitary().is_err());
        let spec = GateSpec {
            gate: TargetGate::Named(NamedGate::Cz),
            targets: Some(vec![0, 3]),
        };
        assert!(spec.resolve(2).is_err());
        assert!(spec.resolve(4).is_ok());
    }
}
