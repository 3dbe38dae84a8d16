//! Unitary matrices and the one- and two-qubit Clifford groups.
//!
//! Groups are built by breadth-first closure over a generator set, with every
//! element stored as a phase-canonical matrix. Lookup goes through a hash of
//! the canonical matrix rounded to a 1e-9 grid, which keeps deep products
//! (accumulated rounding error ~1e-15) mapping onto the right table entry.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Entries smaller than this are treated as zero when fixing the global phase.
const PHASE_EPS: f64 = 1e-9;
/// Grid used to hash canonical matrices.
const KEY_SCALE: f64 = 1e9;
/// Unitarity tolerance per entry.
pub const UNITARY_TOL: f64 = 1e-12;

/// Square complex matrix with power-of-two dimension and `U†U = I`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix {
    data: DMatrix<C64>,
}

impl UnitaryMatrix {
    /// Wraps `data`, checking shape and unitarity.
    pub fn new(data: DMatrix<C64>) -> Result<Self> {
        let dim = data.nrows();
        if data.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.ncols(),
            });
        }
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::DimensionMismatch {
                expected: dim.next_power_of_two().max(2),
                found: dim,
            });
        }
        let u = Self { data };
        if !u.is_unitary(UNITARY_TOL) {
            return Err(Error::SimulationIntegrity("matrix is not unitary to 1e-12".into()));
        }
        Ok(u)
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_slice(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub(crate) fn from_raw(data: DMatrix<C64>) -> Self {
        Self { data }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            data: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.data[(row, col)]
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            data: self.data.adjoint(),
        }
    }

    /// Matrix product `self · rhs` (apply `rhs` first).
    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        if self.dim() != rhs.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: rhs.dim(),
            });
        }
        Ok(Self {
            data: &self.data * &rhs.data,
        })
    }

    /// Tensor product `self ⊗ rhs`; `self` acts on the more significant qubits.
    pub fn kron(&self, rhs: &Self) -> Self {
        Self {
            data: self.data.kronecker(&rhs.data),
        }
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = self.data.adjoint() * &self.data;
        let dim = self.dim();
        (0..dim).all(|i| {
            (0..dim).all(|j| {
                let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                (prod[(i, j)] - target).norm() <= tol
            })
        })
    }

    /// Rescales by a global phase so that the first nonzero entry in
    /// row-major order is real and positive.
    pub fn canonical_phase(&self) -> Self {
        let dim = self.dim();
        let pivot = (0..dim)
            .flat_map(|i| (0..dim).map(move |j| (i, j)))
            .map(|(i, j)| self.data[(i, j)])
            .find(|z| z.norm() > PHASE_EPS);
        match pivot {
            Some(z) => {
                let phase = z / z.norm();
                Self {
                    data: self.data.map(|w| w / phase),
                }
            }
            None => self.clone(),
        }
    }

    /// True if the two matrices agree up to a global phase, entrywise to `tol`.
    pub fn equal_up_to_phase(&self, other: &Self, tol: f64) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let a = self.canonical_phase();
        let b = other.canonical_phase();
        a.data.iter().zip(b.data.iter()).all(|(x, y)| (x - y).norm() <= tol)
    }

    /// True if the matrix is an element of the Clifford group on its own
    /// qubits (up to phase); false for registers too large to enumerate.
    pub fn is_clifford(&self) -> bool {
        CliffordGroup::shared(self.qubits()).is_ok_and(|g| g.find(self).is_some())
    }

    /// Lifts a gate acting on `targets` (first target = most significant
    /// qubit of the gate) into the full `qubits`-qubit space.
    pub fn embed(&self, targets: &[usize], qubits: usize) -> Result<Self> {
        if targets.len() != self.qubits() {
            return Err(Error::DimensionMismatch {
                expected: self.qubits(),
                found: targets.len(),
            });
        }
        let mut seen = 0usize;
        for &t in targets {
            if t >= qubits || seen & (1 << t) != 0 {
                return Err(Error::InvalidPlan(format!(
                    "invalid target qubit {t} for a {qubits}-qubit register"
                )));
            }
            seen |= 1 << t;
        }
        if targets.len() == qubits && targets.iter().enumerate().all(|(i, &t)| i == t) {
            return Ok(self.clone());
        }
        let dim = 1usize << qubits;
        let k = targets.len();
        let bit = |q: usize| 1usize << (qubits - 1 - q);
        let target_mask: usize = targets.iter().map(|&t| bit(t)).sum();
        let local_index = |x: usize| -> usize {
            targets
                .iter()
                .enumerate()
                .map(|(pos, &t)| usize::from(x & bit(t) != 0) << (k - 1 - pos))
                .sum()
        };
        let data = DMatrix::from_fn(dim, dim, |i, j| {
            if i & !target_mask == j & !target_mask {
                self.data[(local_index(i), local_index(j))]
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Ok(Self { data })
    }

    fn phase_key(&self) -> Vec<(i64, i64)> {
        self.canonical_phase()
            .data
            .iter()
            .map(|z| ((z.re * KEY_SCALE).round() as i64, (z.im * KEY_SCALE).round() as i64))
            .collect()
    }
}

/// Standard gates.
pub mod gates {
    use super::{UnitaryMatrix, C64};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn build(dim: usize, entries: &[C64]) -> UnitaryMatrix {
        UnitaryMatrix::from_row_slice(dim, entries).expect("standard gate is unitary")
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    pub fn h() -> UnitaryMatrix {
        let r = FRAC_1_SQRT_2;
        build(2, &[c(r, 0.0), c(r, 0.0), c(r, 0.0), c(-r, 0.0)])
    }

    pub fn s() -> UnitaryMatrix {
        build(2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)])
    }

    pub fn x() -> UnitaryMatrix {
        build(2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
    }

    pub fn y() -> UnitaryMatrix {
        build(2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
    }

    pub fn z() -> UnitaryMatrix {
        build(2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
    }

    fn diag4(d: [C64; 4]) -> UnitaryMatrix {
        let o = c(0.0, 0.0);
        build(
            4,
            &[
                d[0], o, o, o, //
                o, d[1], o, o, //
                o, o, d[2], o, //
                o, o, o, d[3],
            ],
        )
    }

    pub fn cz() -> UnitaryMatrix {
        let one = c(1.0, 0.0);
        diag4([one, one, one, c(-1.0, 0.0)])
    }

    pub fn cnot() -> UnitaryMatrix {
        let (o, l) = (c(0.0, 0.0), c(1.0, 0.0));
        build(4, &[l, o, o, o, o, l, o, o, o, o, o, l, o, o, l, o])
    }

    pub fn swap() -> UnitaryMatrix {
        let (o, l) = (c(0.0, 0.0), c(1.0, 0.0));
        build(4, &[l, o, o, o, o, o, l, o, o, l, o, o, o, o, o, l])
    }

    pub fn iswap() -> UnitaryMatrix {
        let (o, l, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
        build(4, &[l, o, o, o, o, o, i, o, o, i, o, o, o, o, o, l])
    }

    /// Square root of iSWAP (not a Clifford gate).
    pub fn sqrt_iswap() -> UnitaryMatrix {
        let r = FRAC_1_SQRT_2;
        let (o, l) = (c(0.0, 0.0), c(1.0, 0.0));
        let (a, b) = (c(r, 0.0), c(0.0, r));
        build(4, &[l, o, o, o, o, a, b, o, o, b, a, o, o, o, o, l])
    }
}

/// Named target gates accepted in experiment plans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedGate {
    Cz,
    Cnot,
    Swap,
    Iswap,
    SqrtIswap,
    H,
    S,
    X,
    Y,
    Z,
}

impl NamedGate {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cz => "cz",
            Self::Cnot => "cnot",
            Self::Swap => "swap",
            Self::Iswap => "iswap",
            Self::SqrtIswap => "sqrt-iswap",
            Self::H => "h",
            Self::S => "s",
            Self::X => "x",
            Self::Y => "y",
            Self::Z => "z",
        }
    }

    pub fn unitary(self) -> UnitaryMatrix {
        match self {
            Self::Cz => gates::cz(),
            Self::Cnot => gates::cnot(),
            Self::Swap => gates::swap(),
            Self::Iswap => gates::iswap(),
            Self::SqrtIswap => gates::sqrt_iswap(),
            Self::H => gates::h(),
            Self::S => gates::s(),
            Self::X => gates::x(),
            Self::Y => gates::y(),
            Self::Z => gates::z(),
        }
    }
}

/// A Clifford group element: its table index and phase-canonical matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CliffordElement {
    pub index: usize,
    pub matrix: UnitaryMatrix,
}

/// Complete Clifford group on one or two qubits, modulo global phase.
#[derive(Debug)]
pub struct CliffordGroup {
    qubits: usize,
    elements: Vec<CliffordElement>,
    lookup: HashMap<Vec<(i64, i64)>, usize>,
    inverses: Vec<usize>,
}

static SINGLE_QUBIT: OnceLock<CliffordGroup> = OnceLock::new();
static TWO_QUBIT: OnceLock<CliffordGroup> = OnceLock::new();

fn generators(qubits: usize) -> Result<Vec<UnitaryMatrix>> {
    use gates::*;
    match qubits {
        1 => Ok(vec![h(), s()]),
        2 => {
            let id = UnitaryMatrix::identity(2);
            Ok(vec![h().kron(&id), id.kron(&h()), s().kron(&id), id.kron(&s()), cz()])
        }
        _ => Err(Error::UnsupportedEnumeration { qubits }),
    }
}

impl CliffordGroup {
    /// Enumerates the group by breadth-first closure of the generator set.
    /// Indices follow discovery order, starting with the identity at 0.
    pub fn enumerate(qubits: usize) -> Result<Self> {
        let gens = generators(qubits)?;
        let dim = 1usize << qubits;
        let identity = UnitaryMatrix::identity(dim);
        let mut elements = vec![CliffordElement {
            index: 0,
            matrix: identity.clone(),
        }];
        let mut lookup = HashMap::new();
        lookup.insert(identity.phase_key(), 0);
        let mut queue = VecDeque::from([0usize]);
        while let Some(current) = queue.pop_front() {
            for g in &gens {
                let product = g.mul(&elements[current].matrix)?.canonical_phase();
                let key = product.phase_key();
                if let Entry::Vacant(slot) = lookup.entry(key) {
                    let index = elements.len();
                    slot.insert(index);
                    elements.push(CliffordElement { index, matrix: product });
                    queue.push_back(index);
                }
            }
        }
        let mut group = Self {
            qubits,
            elements,
            lookup,
            inverses: Vec::new(),
        };
        group.inverses = group
            .elements
            .iter()
            .map(|e| group.find(&e.matrix.adjoint()).ok_or(Error::CanonicalizationFailure))
            .collect::<Result<_>>()?;
        Ok(group)
    }

    /// Process-wide table for `qubits` ∈ {1, 2}, built on first use.
    pub fn shared(qubits: usize) -> Result<&'static Self> {
        let cell = match qubits {
            1 => &SINGLE_QUBIT,
            2 => &TWO_QUBIT,
            _ => return Err(Error::UnsupportedEnumeration { qubits }),
        };
        if let Some(g) = cell.get() {
            return Ok(g);
        }
        let built = Self::enumerate(qubits)?;
        Ok(cell.get_or_init(|| built))
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[CliffordElement] {
        &self.elements
    }

    pub fn element(&self, index: usize) -> &CliffordElement {
        &self.elements[index]
    }

    pub fn identity(&self) -> &CliffordElement {
        &self.elements[0]
    }

    /// Table index of `u` (up to global phase), if it is a group element.
    pub fn find(&self, u: &UnitaryMatrix) -> Option<usize> {
        if u.dim() != 1 << self.qubits {
            return None;
        }
        self.lookup.get(&u.phase_key()).copied()
    }

    /// Uniformly random element.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &CliffordElement {
        &self.elements[rng.random_range(0..self.elements.len())]
    }

    /// The product `b ∘ a` (apply `a`, then `b`).
    pub fn compose(&self, a: &CliffordElement, b: &CliffordElement) -> Result<&CliffordElement> {
        let product = b.matrix.mul(&a.matrix)?;
        self.find(&product)
            .map(|i| &self.elements[i])
            .ok_or(Error::CanonicalizationFailure)
    }

    pub fn invert(&self, g: &CliffordElement) -> Result<&CliffordElement> {
        match self.find(&g.matrix) {
            Some(i) => Ok(&self.elements[self.inverses[i]]),
            None => Err(Error::CanonicalizationFailure),
        }
    }
}

/// One reference layer drawn from a Clifford ensemble.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CliffordLayer {
    /// One single-qubit Clifford index per qubit.
    Factorized(Vec<usize>),
    /// One element of the multi-qubit group.
    Global { qubits: usize, index: usize },
}

impl CliffordLayer {
    pub fn sample_factorized<R: Rng + ?Sized>(qubits: usize, rng: &mut R) -> Result<Self> {
        let group = CliffordGroup::shared(1)?;
        Ok(Self::Factorized((0..qubits).map(|_| group.sample(rng).index).collect()))
    }

    pub fn sample_global<R: Rng + ?Sized>(qubits: usize, rng: &mut R) -> Result<Self> {
        let group = CliffordGroup::shared(qubits)?;
        Ok(Self::Global {
            qubits,
            index: group.sample(rng).index,
        })
    }

    pub fn qubits(&self) -> usize {
        match self {
            Self::Factorized(v) => v.len(),
            Self::Global { qubits, .. } => *qubits,
        }
    }

    /// Per-qubit matrices for factorized layers.
    pub fn local_unitaries(&self) -> Result<Option<Vec<UnitaryMatrix>>> {
        match self {
            Self::Factorized(v) => {
                let group = CliffordGroup::shared(1)?;
                Ok(Some(v.iter().map(|&i| group.element(i).matrix.clone()).collect()))
            }
            Self::Global { .. } => Ok(None),
        }
    }

    /// Full-register unitary of the layer.
    pub fn unitary(&self) -> Result<UnitaryMatrix> {
        match self {
            Self::Factorized(v) => {
                let group = CliffordGroup::shared(1)?;
                Ok(v.iter()
                    .map(|&i| group.element(i).matrix.clone())
                    .reduce(|acc, m| acc.kron(&m))
                    .unwrap_or_else(|| UnitaryMatrix::identity(1)))
            }
            Self::Global { qubits, index } => Ok(CliffordGroup::shared(*qubits)?.element(*index).matrix.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn one() -> &'static CliffordGroup {
        CliffordGroup::shared(1).unwrap()
    }

    #[test]
    fn group_orders() {
        assert_eq!(one().order(), 24);
        assert_eq!(CliffordGroup::shared(2).unwrap().order(), 11520);
    }

    #[test]
    fn unsupported_sizes_are_rejected() {
        assert_eq!(
            CliffordGroup::enumerate(3).unwrap_err(),
            Error::UnsupportedEnumeration { qubits: 3 }
        );
        assert!(CliffordGroup::enumerate(0).is_err());
    }

    #[test]
    fn elements_are_canonical_and_unitary() {
        for e in one().elements() {
            assert!(e.matrix.is_unitary(UNITARY_TOL));
            let first = e
                .matrix
                .matrix()
                .transpose()
                .iter()
                .copied()
                .find(|z| z.norm() > 1e-9)
                .unwrap();
            assert!(first.im.abs() < 1e-12 && first.re > 0.0);
            assert_eq!(e.matrix.canonical_phase(), e.matrix.canonical_phase().canonical_phase());
        }
    }

    #[test]
    fn enumeration_is_deterministic() {
        let a = CliffordGroup::enumerate(1).unwrap();
        let b = CliffordGroup::enumerate(1).unwrap();
        for (x, y) in a.elements().iter().zip(b.elements()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn closure_over_single_qubit_table() {
        let g = one();
        for a in g.elements() {
            for b in g.elements() {
                g.compose(a, b).unwrap();
            }
        }
    }

    #[test]
    fn identity_inverse_and_hadamard() {
        let g = one();
        let id = g.identity();
        assert_eq!(g.invert(id).unwrap().index, id.index);
        for e in g.elements() {
            assert_eq!(g.compose(e, id).unwrap().index, e.index);
            assert_eq!(g.compose(e, g.invert(e).unwrap()).unwrap().index, id.index);
        }
        let h = &g.element(g.find(&gates::h()).unwrap());
        assert_eq!(g.compose(h, h).unwrap().index, 0);
    }

    #[test]
    fn inverse_of_s_is_s_cubed() {
        let g = one();
        let s = g.element(g.find(&gates::s()).unwrap());
        let s3 = gates::s().mul(&gates::s()).unwrap().mul(&gates::s()).unwrap();
        assert!(g.invert(s).unwrap().matrix.equal_up_to_phase(&s3, 1e-12));
    }

    #[test]
    fn hermitian_elements_are_self_inverse() {
        let g = one();
        let mut hermitian = 0;
        for e in g.elements() {
            let inv = g.invert(e).unwrap();
            if e.matrix.equal_up_to_phase(&e.matrix.adjoint(), 1e-12) {
                hermitian += 1;
                assert_eq!(inv.index, e.index);
            }
            assert_eq!(g.invert(inv).unwrap().index, e.index);
        }
        // identity, 3 Paulis, 6 Hadamard-like: involutions up to phase
        assert_eq!(hermitian, 10);
    }

    #[test]
    fn two_design_fourth_moment() {
        let g = one();
        let avg: f64 = g
            .elements()
            .iter()
            .map(|e| e.matrix.entry(0, 0).norm().powi(4))
            .sum::<f64>()
            / g.order() as f64;
        assert!((avg - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn sampling_is_uniform_and_reproducible() {
        let g = one();
        let mut r = rng::stream(11, &[0]);
        let mut counts = [0usize; 24];
        for _ in 0..24_000 {
            counts[g.sample(&mut r).index] += 1;
        }
        let sigma: f64 = (24_000.0_f64 * (1.0 / 24.0) * (23.0 / 24.0)).sqrt();
        for c in counts {
            assert!((c as f64 - 1000.0).abs() < 5.0 * sigma, "count {c}");
        }
        let draw = |seed| {
            let mut r = rng::stream(seed, &[0]);
            (0..50).map(|_| g.sample(&mut r).index).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn two_qubit_sampled_trace_matches_group_average() {
        let g = CliffordGroup::shared(2).unwrap();
        let exact: f64 = g.elements().iter().map(|e| e.matrix.trace().re).sum::<f64>() / g.order() as f64;
        let var: f64 = g
            .elements()
            .iter()
            .map(|e| (e.matrix.trace().re - exact).powi(2))
            .sum::<f64>()
            / g.order() as f64;
        let mut r = rng::stream(5, &[1]);
        let draws = 100_000;
        let mean: f64 = (0..draws).map(|_| g.sample(&mut r).matrix.trace().re).sum::<f64>() / draws as f64;
        assert!((mean - exact).abs() < 5.0 * (var / draws as f64).sqrt());
    }

    #[test]
    fn embed_places_gate_on_targets() {
        let x_on_1 = gates::x().embed(&[1], 2).unwrap();
        let expected = UnitaryMatrix::identity(2).kron(&gates::x());
        assert_eq!(x_on_1, expected);
        let cnot_rev = gates::cnot().embed(&[1, 0], 2).unwrap();
        let h2 = gates::h().kron(&gates::h());
        let conj = h2.mul(&gates::cnot()).unwrap().mul(&h2).unwrap();
        assert!(cnot_rev.equal_up_to_phase(&conj, 1e-12));
        assert!(gates::x().embed(&[2], 2).is_err());
    }

    #[test]
    fn layers_build_tensor_products() {
        let mut r = rng::stream(1, &[]);
        let layer = CliffordLayer::sample_factorized(3, &mut r).unwrap();
        assert_eq!(layer.qubits(), 3);
        assert_eq!(layer.unitary().unwrap().dim(), 8);
        let global = CliffordLayer::sample_global(2, &mut r).unwrap();
        assert!(global.unitary().unwrap().is_unitary(1e-12));
        assert!(CliffordLayer::sample_global(3, &mut r).is_err());
    }
}
