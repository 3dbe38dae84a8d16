//! Exact density-matrix evolution under local depolarizing noise.
//!
//! Qubit 0 is the most significant bit of a basis index, matching the
//! Kronecker-product order used by [`UnitaryMatrix::kron`].

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::clifford::{CliffordLayer, UnitaryMatrix, C64};
use crate::error::{check_unit_interval, Error, Result};

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 4;
/// Trace and Hermiticity tolerance.
pub const STATE_TOL: f64 = 1e-12;
/// Smallest eigenvalue tolerated before a state counts as non-positive.
pub const POSITIVITY_TOL: f64 = 1e-10;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Density matrix of an `n ≤ 4` qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    qubits: usize,
    data: DMatrix<C64>,
}

impl DensityMatrix {
    /// `|0…0⟩⟨0…0|`.
    pub fn ground(qubits: usize) -> Result<Self> {
        check_qubits(qubits)?;
        let dim = 1 << qubits;
        let mut data = DMatrix::from_element(dim, dim, zero());
        data[(0, 0)] = C64::new(1.0, 0.0);
        Ok(Self { qubits, data })
    }

    /// `|ψ⟩⟨ψ|` for a normalized state vector.
    pub fn from_pure(state: &[C64]) -> Result<Self> {
        let dim = state.len();
        if !dim.is_power_of_two() || dim < 2 {
            return Err(Error::DimensionMismatch {
                expected: dim.next_power_of_two().max(2),
                found: dim,
            });
        }
        let qubits = dim.trailing_zeros() as usize;
        check_qubits(qubits)?;
        let v = DVector::from_column_slice(state);
        let rho = Self {
            qubits,
            data: &v * v.adjoint(),
        };
        rho.check_integrity()?;
        Ok(rho)
    }

    /// Wraps a matrix, validating the density-matrix invariants.
    pub fn from_matrix(data: DMatrix<C64>) -> Result<Self> {
        let dim = data.nrows();
        if data.ncols() != dim || !dim.is_power_of_two() || dim < 2 {
            return Err(Error::DimensionMismatch {
                expected: dim.next_power_of_two().max(2),
                found: data.ncols(),
            });
        }
        let qubits = dim.trailing_zeros() as usize;
        check_qubits(qubits)?;
        let rho = Self { qubits, data };
        rho.check_integrity()?;
        Ok(rho)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    /// Computational-basis populations.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.data[(i, i)].re).collect()
    }

    /// Measurement probabilities: the populations with round-off negatives
    /// clipped to zero.
    pub fn probabilities(&self) -> Vec<f64> {
        self.diagonal().into_iter().map(|p| p.max(0.0)).collect()
    }

    /// Bloch vector `(x, y, z)` of a single-qubit state.
    pub fn bloch_vector(&self) -> Option<[f64; 3]> {
        if self.qubits != 1 {
            return None;
        }
        let r01 = self.data[(0, 1)];
        Some([2.0 * r01.re, -2.0 * r01.im, self.data[(0, 0)].re - self.data[(1, 1)].re])
    }

    /// `ρ → U ρ U†`.
    pub fn apply_unitary(&mut self, u: &UnitaryMatrix) -> Result<()> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.dim(),
            });
        }
        let m = u.matrix();
        self.data = m * &self.data * m.adjoint();
        Ok(())
    }

    /// Single-qubit depolarizing channel with Pauli-transfer diagonal
    /// `(1, p, p, p)` on `qubit`.
    pub fn apply_local_depolarizing(&mut self, qubit: usize, p: f64) -> Result<()> {
        self.apply_depolarizing(&[qubit], p)
    }

    /// `ρ → p ρ + (1 − p) Tr_Q(ρ) ⊗ I_Q / 2^|Q|` on the qubit subset `Q`.
    pub fn apply_depolarizing(&mut self, qubits: &[usize], p: f64) -> Result<()> {
        check_unit_interval("depolarizing parameter", p)?;
        let mut mask = 0usize;
        for &q in qubits {
            if q >= self.qubits {
                return Err(Error::DimensionMismatch {
                    expected: self.qubits,
                    found: q + 1,
                });
            }
            mask |= 1 << (self.qubits - 1 - q);
        }
        if p == 1.0 || mask == 0 {
            return Ok(());
        }
        let dim = self.dim();
        let k = qubits.len();
        let norm = (1usize << k) as f64;
        // enumerate all settings of the masked bits
        let subsets: Vec<usize> = (0..dim).filter(|s| s & !mask == 0).collect();
        let old = &self.data;
        let data = DMatrix::from_fn(dim, dim, |i, j| {
            let mut value = old[(i, j)] * p;
            if i & mask == j & mask {
                let (bi, bj) = (i & !mask, j & !mask);
                let traced: C64 = subsets.iter().map(|&s| old[(bi | s, bj | s)]).sum();
                value += traced * ((1.0 - p) / norm);
            }
            value
        });
        self.data = data;
        Ok(())
    }

    /// Checks Hermiticity and unit trace to [`STATE_TOL`], and positivity to
    /// [`POSITIVITY_TOL`].
    pub fn check_integrity(&self) -> Result<()> {
        self.check_trace_hermitian()?;
        self.check_positive()
    }

    fn check_trace_hermitian(&self) -> Result<()> {
        let dim = self.dim();
        let trace = self.data.trace();
        if (trace - C64::new(1.0, 0.0)).norm() > STATE_TOL {
            return Err(Error::SimulationIntegrity(format!("trace {trace} != 1")));
        }
        for i in 0..dim {
            for j in i..dim {
                if (self.data[(i, j)] - self.data[(j, i)].conj()).norm() > STATE_TOL {
                    return Err(Error::SimulationIntegrity(format!("not Hermitian at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    fn check_positive(&self) -> Result<()> {
        // ρ + tol·I admits a Cholesky factorization iff λ_min(ρ) > −tol.
        let dim = self.dim();
        let hermitian = (&self.data + self.data.adjoint()) * C64::new(0.5, 0.0);
        let shifted = hermitian + DMatrix::<C64>::identity(dim, dim) * C64::new(POSITIVITY_TOL, 0.0);
        if Cholesky::new(shifted).is_none() {
            return Err(Error::SimulationIntegrity(
                "density matrix has a negative eigenvalue".into(),
            ));
        }
        Ok(())
    }

    /// Smallest eigenvalue (for diagnostics and tests).
    pub fn min_eigenvalue(&self) -> f64 {
        let hermitian = (&self.data + self.data.adjoint()) * C64::new(0.5, 0.0);
        hermitian
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_qubits(qubits: usize) -> Result<()> {
    if (1..=MAX_QUBITS).contains(&qubits) {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            name: "qubit count",
            value: qubits as f64,
            domain: "[1, 4]",
        })
    }
}

/// Per-qubit depolarizing parameters plus an optional parameter for the
/// interleaved gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalNoiseModel {
    pub per_qubit_p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interleaved_gate_p: Option<f64>,
}

impl LocalNoiseModel {
    pub fn new(per_qubit_p: Vec<f64>, interleaved_gate_p: Option<f64>) -> Result<Self> {
        let model = Self {
            per_qubit_p,
            interleaved_gate_p,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn noiseless(qubits: usize) -> Self {
        Self {
            per_qubit_p: vec![1.0; qubits],
            interleaved_gate_p: None,
        }
    }

    /// Model from per-qubit error rates `e_i = 1 − p_i`.
    pub fn from_errors(errors: &[f64], interleaved_gate_p: Option<f64>) -> Result<Self> {
        Self::new(errors.iter().map(|e| 1.0 - e).collect(), interleaved_gate_p)
    }

    pub fn validate(&self) -> Result<()> {
        for &p in &self.per_qubit_p {
            check_unit_interval("per-qubit depolarizing parameter", p)?;
        }
        if let Some(p) = self.interleaved_gate_p {
            check_unit_interval("interleaved gate depolarizing parameter", p)?;
        }
        Ok(())
    }

    pub fn qubits(&self) -> usize {
        self.per_qubit_p.len()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.per_qubit_p.iter().map(|p| 1.0 - p).collect()
    }
}

/// Gate inserted after every reference layer.
#[derive(Clone, Debug, PartialEq)]
pub struct InterleavedGate {
    pub unitary: UnitaryMatrix,
    /// Register qubits the gate acts on, most significant first.
    pub targets: Vec<usize>,
}

/// One reference layer.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    /// Independent single-qubit gates, one per qubit.
    Local(Vec<UnitaryMatrix>),
    /// A gate on the whole register.
    Global(UnitaryMatrix),
}

impl Layer {
    pub fn unitary(&self) -> UnitaryMatrix {
        match self {
            Self::Local(gates) => gates
                .iter()
                .cloned()
                .reduce(|acc, g| acc.kron(&g))
                .unwrap_or_else(|| UnitaryMatrix::identity(1)),
            Self::Global(u) => u.clone(),
        }
    }

    pub fn qubits(&self) -> usize {
        match self {
            Self::Local(gates) => gates.len(),
            Self::Global(u) => u.qubits(),
        }
    }

    pub fn from_clifford(layer: &CliffordLayer) -> Result<Self> {
        match layer.local_unitaries()? {
            Some(local) => Ok(Self::Local(local)),
            None => Ok(Self::Global(layer.unitary()?)),
        }
    }
}

/// A benchmarking circuit of `depth` reference layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub qubits: usize,
    pub layers: Vec<Layer>,
    pub interleaved: Option<InterleavedGate>,
    /// Applied noiselessly at the end.
    pub recovery: Option<UnitaryMatrix>,
}

impl Circuit {
    pub fn new(qubits: usize, layers: Vec<Layer>) -> Self {
        Self {
            qubits,
            layers,
            interleaved: None,
            recovery: None,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_qubits(self.qubits)?;
        for layer in &self.layers {
            if layer.qubits() != self.qubits {
                return Err(Error::DimensionMismatch {
                    expected: self.qubits,
                    found: layer.qubits(),
                });
            }
        }
        if let Some(gate) = &self.interleaved {
            if gate.unitary.qubits() != gate.targets.len() {
                return Err(Error::DimensionMismatch {
                    expected: gate.unitary.qubits(),
                    found: gate.targets.len(),
                });
            }
        }
        if let Some(r) = &self.recovery {
            if r.qubits() != self.qubits {
                return Err(Error::DimensionMismatch {
                    expected: self.qubits,
                    found: r.qubits(),
                });
            }
        }
        Ok(())
    }

    fn interleaved_full(&self) -> Result<Option<UnitaryMatrix>> {
        self.interleaved
            .as_ref()
            .map(|g| g.unitary.embed(&g.targets, self.qubits))
            .transpose()
    }

    /// Ideal unitary of everything before the recovery gate.
    pub fn ideal_unitary(&self) -> Result<UnitaryMatrix> {
        self.validate()?;
        let inter = self.interleaved_full()?;
        let mut total = UnitaryMatrix::identity(1 << self.qubits);
        for layer in &self.layers {
            total = layer.unitary().mul(&total)?;
            if let Some(g) = &inter {
                total = g.mul(&total)?;
            }
        }
        Ok(total)
    }
}

/// Evolves `initial` (default `|0…0⟩`) through `circuit` with noise after
/// every layer and after every interleaved gate.
pub fn run_noisy_circuit(
    circuit: &Circuit,
    noise: &LocalNoiseModel,
    initial: Option<&DensityMatrix>,
) -> Result<DensityMatrix> {
    circuit.validate()?;
    noise.validate()?;
    if noise.qubits() != circuit.qubits {
        return Err(Error::DimensionMismatch {
            expected: circuit.qubits,
            found: noise.qubits(),
        });
    }
    let mut rho = match initial {
        Some(r) if r.qubits() != circuit.qubits => {
            return Err(Error::DimensionMismatch {
                expected: circuit.qubits,
                found: r.qubits(),
            })
        }
        Some(r) => r.clone(),
        None => DensityMatrix::ground(circuit.qubits)?,
    };
    let inter = circuit.interleaved_full()?;
    let step_check = |rho: &DensityMatrix| -> Result<()> {
        rho.check_trace_hermitian()?;
        if cfg!(debug_assertions) {
            rho.check_positive()?;
        }
        Ok(())
    };
    for layer in &circuit.layers {
        rho.apply_unitary(&layer.unitary())?;
        for (q, &p) in noise.per_qubit_p.iter().enumerate() {
            rho.apply_local_depolarizing(q, p)?;
        }
        step_check(&rho)?;
        if let (Some(g), Some(gate)) = (&inter, &circuit.interleaved) {
            rho.apply_unitary(g)?;
            if let Some(pg) = noise.interleaved_gate_p {
                rho.apply_depolarizing(&gate.targets, pg)?;
            }
            step_check(&rho)?;
        }
    }
    if let Some(r) = &circuit.recovery {
        rho.apply_unitary(r)?;
        step_check(&rho)?;
    }
    Ok(rho)
}

/// Final pure state of the noiseless circuit.
pub fn ideal_state(circuit: &Circuit, initial: Option<&[C64]>) -> Result<Vec<C64>> {
    circuit.validate()?;
    let dim = 1usize << circuit.qubits;
    let mut psi = match initial {
        Some(v) if v.len() != dim => {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
            })
        }
        Some(v) => DVector::from_column_slice(v),
        None => {
            let mut v = DVector::from_element(dim, zero());
            v[0] = C64::new(1.0, 0.0);
            v
        }
    };
    let inter = circuit.interleaved_full()?;
    for layer in &circuit.layers {
        psi = layer.unitary().matrix() * psi;
        if let Some(g) = &inter {
            psi = g.matrix() * psi;
        }
    }
    if let Some(r) = &circuit.recovery {
        psi = r.matrix() * psi;
    }
    Ok(psi.iter().copied().collect())
}

/// Ideal output distribution, computed on the pure-state path.
pub fn ideal_probabilities(circuit: &Circuit, initial: Option<&[C64]>) -> Result<Vec<f64>> {
    Ok(ideal_state(circuit, initial)?.iter().map(|a| a.norm_sqr()).collect())
}

/// Multinomial counts for `shots` draws from `probabilities`.
pub fn sample_counts<R: Rng + ?Sized>(probabilities: &[f64], shots: u64, rng: &mut R) -> Result<Vec<u64>> {
    validate_probabilities(probabilities)?;
    let mut counts = vec![0u64; probabilities.len()];
    let mut remaining = shots;
    let mut mass_left = 1.0f64;
    for (i, &p) in probabilities.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probabilities.len() || mass_left <= 0.0 {
            counts[i] = remaining;
            break;
        }
        let q = (p / mass_left).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, q)
            .map_err(|e| Error::InvalidDistribution(e.to_string()))?
            .sample(rng);
        counts[i] = draw;
        remaining -= draw;
        mass_left -= p;
    }
    Ok(counts)
}

/// Measured frequencies: multinomial with `shots` draws, or the
/// probabilities themselves when `shots == 0` (exact mode).
pub fn sample_bitstrings<R: Rng + ?Sized>(probabilities: &[f64], shots: u64, rng: &mut R) -> Result<Vec<f64>> {
    if shots == 0 {
        validate_probabilities(probabilities)?;
        return Ok(probabilities.to_vec());
    }
    let counts = sample_counts(probabilities, shots, rng)?;
    Ok(counts.iter().map(|&c| c as f64 / shots as f64).collect())
}

fn validate_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty".into()));
    }
    if p.iter().any(|&x| x.is_nan() || x < -1e-12) {
        return Err(Error::InvalidDistribution("negative entry".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("sums to {total}")));
    }
    Ok(())
}
