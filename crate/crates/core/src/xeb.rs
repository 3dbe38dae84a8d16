//! Cross-entropy benchmarking statistics and the least-squares fidelity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Overlap sums of one random circuit at one depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitRecord<T = f64> {
    pub depth: usize,
    /// `Σ p_ideal · p_meas`
    pub m_u: T,
    /// `Σ p_ideal²`
    pub e_u: T,
    /// `2⁻ⁿ`
    pub u_u: T,
}

/// Estimated fidelity at one depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityPoint<T = f64> {
    pub depth: usize,
    pub fidelity: T,
    /// `None` until an uncertainty has been estimated, and when it cannot be.
    pub stderr: Option<T>,
    pub num_circuits: usize,
}

impl<T: Scalar> FidelityPoint<T> {
    pub fn new(depth: usize, fidelity: T) -> Self {
        Self {
            depth,
            fidelity,
            stderr: None,
            num_circuits: 1,
        }
    }

    pub fn with_stderr(mut self, stderr: T) -> Self {
        self.stderr = Some(stderr);
        self
    }
}

const NORMALIZATION_TOL: f64 = 1e-9;

fn check_distribution<T: Scalar>(name: &str, v: &[T]) -> Result<()> {
    if v.iter().any(|&x| x < T::zero() || !x.is_finite()) {
        return Err(Error::InvalidDistribution(format!(
            "{name} has a negative or non-finite entry"
        )));
    }
    let total: T = v.iter().copied().sum();
    let tol = T::lit(NORMALIZATION_TOL).max(T::epsilon() * T::from_usize_lossy(4 * v.len()));
    if (total - T::one()).abs() > tol {
        return Err(Error::InvalidDistribution(format!("{name} sums to {total}")));
    }
    Ok(())
}

/// Builds the `(m_U, e_U, u_U)` triple from ideal and measured distributions.
pub fn circuit_record<T: Scalar>(ideal: &[T], measured: &[T], depth: usize) -> Result<CircuitRecord<T>> {
    if ideal.len() != measured.len() {
        return Err(Error::DimensionMismatch {
            expected: ideal.len(),
            found: measured.len(),
        });
    }
    if ideal.is_empty() || !ideal.len().is_power_of_two() {
        return Err(Error::InvalidDistribution(format!(
            "length {} is not a power of two",
            ideal.len()
        )));
    }
    check_distribution("ideal distribution", ideal)?;
    check_distribution("measured distribution", measured)?;
    let m_u = ideal.iter().zip(measured).map(|(&a, &b)| a * b).sum();
    let e_u = ideal.iter().map(|&a| a * a).sum();
    Ok(CircuitRecord {
        depth,
        m_u,
        e_u,
        u_u: T::one() / T::from_usize_lossy(ideal.len()),
    })
}

/// Least-squares fidelity over records that share one depth:
/// `F = Σ(m−u)(e−u) / Σ(e−u)²`.
pub fn estimate_fidelity<T: Scalar>(records: &[CircuitRecord<T>]) -> Result<FidelityPoint<T>> {
    let first = records.first().ok_or(Error::Empty("no circuit records"))?;
    if let Some(other) = records.iter().find(|r| r.depth != first.depth) {
        return Err(Error::MixedDepths {
            first: first.depth,
            other: other.depth,
        });
    }
    let (num, den) = records.iter().fold((T::zero(), T::zero()), |(n, d), r| {
        let x = r.e_u - r.u_u;
        (n + (r.m_u - r.u_u) * x, d + x * x)
    });
    let floor = T::lit(1e3) * T::epsilon();
    if den <= T::from_usize_lossy(records.len()) * floor * floor {
        return Err(Error::IndeterminateFidelity { depth: first.depth });
    }
    Ok(FidelityPoint {
        depth: first.depth,
        fidelity: num / den,
        stderr: None,
        num_circuits: records.len(),
    })
}

/// Probability of the all-zeros outcome.
pub fn survival_probability<T: Scalar>(measured: &[T]) -> Result<T> {
    check_distribution("measured distribution", measured)?;
    Ok(measured[0])
}

/// Maps an average survival probability onto the depolarizing scale,
/// `(s − 1/d) / (1 − 1/d)`.
pub fn survival_to_fidelity<T: Scalar>(survival: T, dim: usize) -> T {
    let inv_d = T::one() / T::from_usize_lossy(dim);
    (survival - inv_d) / (T::one() - inv_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn record_examples() {
        let r = circuit_record(&[1.0, 0.0], &[1.0, 0.0], 3).unwrap();
        assert_eq!((r.m_u, r.e_u, r.u_u), (1.0, 1.0, 0.5));
        let r = circuit_record(&[0.3, 0.7], &[0.5, 0.5], 1).unwrap();
        assert_abs_diff_eq!(r.m_u, 0.5, epsilon = 1e-15);
        assert_eq!(r.u_u, 0.5);
        let r = circuit_record(&[1.0, 0.0], &[0.75, 0.25], 1).unwrap();
        assert_eq!((r.m_u, r.e_u, r.u_u), (0.75, 1.0, 0.5));
    }

    #[test]
    fn record_errors() {
        assert!(matches!(
            circuit_record(&[1.0, 0.0], &[1.0, 0.0, 0.0, 0.0], 1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            circuit_record(&[0.6, 0.6], &[0.5, 0.5], 1),
            Err(Error::InvalidDistribution(_))
        ));
    }

    #[test]
    fn estimator_examples() {
        let single = CircuitRecord {
            depth: 1,
            m_u: 0.75,
            e_u: 1.0,
            u_u: 0.5,
        };
        assert_eq!(estimate_fidelity(&[single]).unwrap().fidelity, 0.5);

        let ideal = [[1.0, 0.0, 0.0, 0.0], [0.5, 0.5, 0.0, 0.0], [0.25; 4]];
        let same: Vec<_> = ideal.iter().map(|p| circuit_record(p, p, 2).unwrap()).collect();
        assert_abs_diff_eq!(estimate_fidelity(&same).unwrap().fidelity, 1.0, epsilon = 1e-15);
        let uniform: Vec<_> = ideal
            .iter()
            .map(|p| circuit_record(p, &[0.25; 4], 2).unwrap())
            .collect();
        assert_abs_diff_eq!(estimate_fidelity(&uniform).unwrap().fidelity, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn estimator_errors() {
        assert!(estimate_fidelity::<f64>(&[]).is_err());
        let flat = circuit_record(&[0.5, 0.5], &[0.5, 0.5], 4).unwrap();
        assert_eq!(
            estimate_fidelity(&[flat, flat]),
            Err(Error::IndeterminateFidelity { depth: 4 })
        );
        let a = CircuitRecord {
            depth: 1,
            m_u: 0.75,
            e_u: 1.0,
            u_u: 0.5,
        };
        let b = CircuitRecord { depth: 2, ..a };
        assert_eq!(
            estimate_fidelity(&[a, b]),
            Err(Error::MixedDepths { first: 1, other: 2 })
        );
    }

    #[test]
    fn survival() {
        assert_eq!(survival_probability(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(survival_probability(&[0.25f32; 4]).unwrap(), 0.25);
        assert_eq!(survival_to_fidelity(1.0, 4), 1.0);
        assert_eq!(survival_to_fidelity(0.25, 4), 0.0);
    }

    fn mixture(ideal: &[f64], f: f64) -> Vec<f64> {
        let u = 1.0 / ideal.len() as f64;
        ideal.iter().map(|&p| f * p + (1.0 - f) * u).collect()
    }

    fn distribution(raw: Vec<f64>) -> Vec<f64> {
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| x / total).collect()
    }

    proptest! {
        #[test]
        fn depolarizing_mixture_recovers_mixing_weight(
            f in 0.0f64..=1.0,
            raw in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 1..8),
        ) {
            let records: Vec<_> = std::iter::once(vec![0.7, 0.1, 0.1, 0.1])
                .chain(raw)
                .map(|r| {
                    let ideal = distribution(r);
                    circuit_record(&ideal, &mixture(&ideal, f), 5).unwrap()
                })
                .collect();
            let est = estimate_fidelity(&records).unwrap().fidelity;
            prop_assert!((est - f).abs() < 1e-12);

            let doubled: Vec<_> = records.iter().chain(records.iter()).copied().collect();
            let est2 = estimate_fidelity(&doubled).unwrap().fidelity;
            prop_assert!((est2 - est).abs() < 1e-13);
        }
    }
}
