//! Analytic decay laws and fidelity conversions.
//!
//! All functions take depolarizing parameters `p_i` or error rates
//! `e_i = 1 − p_i` per qubit; the qubit count is the slice length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{powu, Scalar};

/// Estimated per-qubit depolarizing parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepolarizingParams<T = f64> {
    pub per_qubit_p: Vec<T>,
}

impl<T: Scalar> DepolarizingParams<T> {
    pub fn new(per_qubit_p: Vec<T>) -> Result<Self> {
        for &p in &per_qubit_p {
            check_p(p)?;
        }
        Ok(Self { per_qubit_p })
    }

    pub fn qubits(&self) -> usize {
        self.per_qubit_p.len()
    }

    pub fn errors(&self) -> Vec<T> {
        self.per_qubit_p.iter().map(|&p| T::one() - p).collect()
    }
}

fn check_p<T: Scalar>(p: T) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            name: "depolarizing parameter",
            value: p.to_f64_lossy(),
            domain: "[0, 1]",
        })
    }
}

fn check_all<T: Scalar>(ps: &[T]) -> Result<()> {
    if ps.is_empty() {
        return Err(Error::Empty("no qubits"));
    }
    ps.iter().try_for_each(|&p| check_p(p))
}

fn pow_usize<T: Scalar>(base: usize, exp: usize) -> T {
    powu(T::from_usize_lossy(base), exp)
}

/// `pᵐ`.
pub fn f_exponential<T: Scalar>(p: T, m: usize) -> Result<T> {
    check_p(p)?;
    Ok(powu(p, m))
}

/// Coefficient `(3/4) / (1 − 4⁻ⁿ)` multiplying `Σ e_i` in the leading-order
/// multi-qubit Clifford decay; `4/5` for two qubits.
pub fn leading_order_coefficient<T: Scalar>(qubits: usize) -> T {
    let quarter_n = powu(T::lit(0.25), qubits);
    T::lit(0.75) / (T::one() - quarter_n)
}

/// Leading-order effective decay of an n-qubit Clifford sequence under
/// independent local depolarizing noise.
pub fn p_multi_leading<T: Scalar>(errors: &[T]) -> T {
    let total: T = errors.iter().copied().sum();
    T::one() - leading_order_coefficient::<T>(errors.len()) * total
}

/// Exact twirled decay `(∏(1 + 3 p_i) − 1) / (4ⁿ − 1)`.
pub fn p_multi_exact<T: Scalar>(per_qubit_p: &[T]) -> Result<T> {
    check_all(per_qubit_p)?;
    let three = T::lit(3.0);
    let prod: T = per_qubit_p
        .iter()
        .fold(T::one(), |acc, &p| acc * (T::one() + three * p));
    Ok((prod - T::one()) / (pow_usize::<T>(4, per_qubit_p.len()) - T::one()))
}

fn f_single_denominator<T: Scalar>(n: usize) -> T {
    pow_usize::<T>(6, n) + pow_usize::<T>(3, n) - T::lit(2.0) * pow_usize::<T>(4, n)
}

/// Joint fidelity decay of simultaneous single-qubit Clifford sequences,
/// as seen by the least-squares cross-entropy estimator.
pub fn f_single<T: Scalar>(per_qubit_p: &[T], m: usize) -> Result<T> {
    check_all(per_qubit_p)?;
    let n = per_qubit_p.len();
    let (two, three) = (T::lit(2.0), T::lit(3.0));
    let (mut with_two, mut with_three) = (T::one(), T::one());
    for &p in per_qubit_p {
        let a = powu(p, m);
        with_two *= two + a;
        with_three *= three + a;
    }
    let numerator = pow_usize::<T>(2, n) * with_two + pow_usize::<T>(3, n) - with_three - pow_usize::<T>(4, n);
    Ok(numerator / f_single_denominator::<T>(n))
}

/// `∂ f_single / ∂ p_j` for every qubit `j`.
pub fn f_single_gradient<T: Scalar>(per_qubit_p: &[T], m: usize) -> Result<Vec<T>> {
    check_all(per_qubit_p)?;
    let n = per_qubit_p.len();
    let (two, three) = (T::lit(2.0), T::lit(3.0));
    let powers: Vec<T> = per_qubit_p.iter().map(|&p| powu(p, m)).collect();
    let den = f_single_denominator::<T>(n);
    let two_n = pow_usize::<T>(2, n);
    Ok((0..n)
        .map(|j| {
            if m == 0 {
                return T::zero();
            }
            let (mut with_two, mut with_three) = (T::one(), T::one());
            for (i, &a) in powers.iter().enumerate() {
                if i != j {
                    with_two *= two + a;
                    with_three *= three + a;
                }
            }
            let da = T::from_usize_lossy(m) * powu(per_qubit_p[j], m - 1);
            (two_n * with_two - with_three) * da / den
        })
        .collect())
}

/// Initial slope factor: `f_single ≈ 1 − c_n · m · Σ e_i` for small errors.
pub fn f_single_slope<T: Scalar>(n: usize) -> T {
    let a = pow_usize::<T>(2, n) * pow_usize::<T>(3, n.saturating_sub(1));
    let b = pow_usize::<T>(4, n.saturating_sub(1));
    (a - b) / f_single_denominator::<T>(n)
}

/// Additive approximation `(1 − Σ e_i)ᵐ`.
pub fn f_additive<T: Scalar>(errors: &[T], m: usize) -> Result<T> {
    let total: T = errors.iter().copied().sum();
    if errors.iter().any(|&e| e < T::zero()) || total > T::one() {
        return Err(Error::OutOfDomain {
            name: "total error",
            value: total.to_f64_lossy(),
            domain: "[0, 1]",
        });
    }
    Ok(powu(T::one() - total, m))
}

/// Average gate fidelity `((d − 1)/d) p + 1/d`.
pub fn depolarizing_to_average_fidelity<T: Scalar>(p: T, dim: usize) -> Result<T> {
    check_p(p)?;
    if dim < 2 {
        return Err(Error::OutOfDomain {
            name: "dimension",
            value: dim as f64,
            domain: "d >= 2",
        });
    }
    let d = T::from_usize_lossy(dim);
    Ok((d - T::one()) / d * p + T::one() / d)
}

/// Target-gate decay from an interleaved decay measured against
/// simultaneous single-qubit references: `p_int / p_multi_leading(e)`.
pub fn refined_interleaved_fidelity<T: Scalar>(p_int: T, errors: &[T]) -> Result<T> {
    let reference = p_multi_leading(errors);
    if reference <= T::zero() {
        return Err(Error::NonPositiveDenominator(reference.to_f64_lossy()));
    }
    Ok(p_int / reference)
}

/// Uncorrected estimator `p_int / (1 − Σ e_i)`.
pub fn naive_interleaved_fidelity<T: Scalar>(p_int: T, errors: &[T]) -> Result<T> {
    let reference = T::one() - errors.iter().copied().sum::<T>();
    if reference <= T::zero() {
        return Err(Error::NonPositiveDenominator(reference.to_f64_lossy()));
    }
    Ok(p_int / reference)
}
