//! Weighted nonlinear least-squares fits of fidelity decay curves.
//!
//! Damped Gauss–Newton (Levenberg–Marquardt) with analytic Jacobians and
//! parameters clamped to the physical interval `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::decay::{f_single_gradient, f_single_slope};
use crate::error::{Error, Result};
use crate::scalar::{powu, Scalar};
use crate::xeb::FidelityPoint;

/// Default first depth used in fits.
pub const DEFAULT_M_MIN: usize = 4;

/// Decay law to fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DecayModel {
    /// `F = pᵐ`; one parameter `p`.
    Exponential,
    /// Joint simultaneous single-qubit decay; `qubits` parameters `p_i`,
    /// or a single shared `p` when `shared` is set.
    FSingle { qubits: usize, shared: bool },
    /// `F = (1 − s)ᵐ`; one parameter, the total error `s = Σ e_i`.
    Additive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    Exponential,
    FSingle,
    Additive,
}

impl DecayModel {
    pub fn id(&self) -> ModelId {
        match self {
            Self::Exponential => ModelId::Exponential,
            Self::FSingle { .. } => ModelId::FSingle,
            Self::Additive => ModelId::Additive,
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Self::FSingle { qubits, shared: false } => *qubits,
            _ => 1,
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            Self::Exponential => vec!["p".into()],
            Self::Additive => vec!["total_error".into()],
            Self::FSingle { shared: true, .. } => vec!["p".into()],
            Self::FSingle { qubits, .. } => (0..*qubits).map(|i| format!("p_{i}")).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::FSingle { qubits, .. } if !(1..=4).contains(qubits) => Err(Error::OutOfDomain {
                name: "f_single qubit count",
                value: *qubits as f64,
                domain: "[1, 4]",
            }),
            _ => Ok(()),
        }
    }

    fn per_qubit<T: Scalar>(&self, params: &[T]) -> Vec<T> {
        match self {
            Self::FSingle { qubits, shared: true } => vec![params[0]; *qubits],
            _ => params.to_vec(),
        }
    }

    /// Model value at depth `m`.
    pub fn evaluate<T: Scalar>(&self, params: &[T], m: usize) -> T {
        match self {
            Self::Exponential => powu(params[0], m),
            Self::Additive => powu(T::one() - params[0], m),
            Self::FSingle { .. } => {
                // clamped parameters never leave the domain
                crate::decay::f_single(&self.per_qubit(params), m).unwrap_or(T::nan())
            }
        }
    }

    /// Analytic derivative of [`Self::evaluate`] with respect to each parameter.
    pub fn gradient<T: Scalar>(&self, params: &[T], m: usize) -> Vec<T> {
        let mf = T::from_usize_lossy(m);
        match self {
            Self::Exponential if m == 0 => vec![T::zero()],
            Self::Exponential => vec![mf * powu(params[0], m - 1)],
            Self::Additive if m == 0 => vec![T::zero()],
            Self::Additive => vec![-mf * powu(T::one() - params[0], m - 1)],
            Self::FSingle { shared, .. } => {
                let g = f_single_gradient(&self.per_qubit(params), m).unwrap_or_else(|_| vec![T::nan(); params.len()]);
                if *shared {
                    vec![g.into_iter().sum()]
                } else {
                    g
                }
            }
        }
    }

    fn initial_guess<T: Scalar>(&self, p0: T) -> Vec<T> {
        let clamp = |x: T| x.max(T::zero()).min(T::one());
        match self {
            Self::Exponential => vec![p0],
            Self::Additive => vec![T::one() - p0],
            Self::FSingle { qubits, shared } => {
                let n = *qubits;
                let mean_error = (T::one() - p0) / (T::from_usize_lossy(n) * f_single_slope::<T>(n));
                if *shared || n == 1 {
                    vec![clamp(T::one() - mean_error); self.num_params()]
                } else {
                    // asymmetric start; equal p_i is a symmetric stationary set
                    (0..n)
                        .map(|i| {
                            let offset =
                                T::lit(0.4) * (T::from_usize_lossy(i) / T::from_usize_lossy(n - 1) - T::lit(0.5));
                            clamp(T::one() - mean_error * (T::one() + offset))
                        })
                        .collect()
                }
            }
        }
    }
}

/// Fit configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Points with depth below this are discarded.
    pub m_min: usize,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            m_min: DEFAULT_M_MIN,
            max_iterations: 500,
        }
    }
}

impl FitOptions {
    pub fn with_m_min(m_min: usize) -> Self {
        Self {
            m_min,
            ..Self::default()
        }
    }
}

/// Result of a decay fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit<T = f64> {
    pub model: DecayModel,
    pub model_id: ModelId,
    pub params: Vec<T>,
    /// Parameter covariance from the Jacobian at the optimum.
    pub covariance: Vec<Vec<T>>,
    /// `sqrt(Σ wᵢ rᵢ²)` over the depths used.
    pub residual_norm: T,
    pub depths_used: Vec<usize>,
    /// Whether inverse-variance weights were applied.
    pub weighted: bool,
    pub iterations: usize,
}

impl<T: Scalar> DecayFit<T> {
    pub fn predict(&self, m: usize) -> T {
        self.model.evaluate(&self.params, m)
    }

    /// Square roots of the covariance diagonal.
    pub fn param_stderr(&self) -> Vec<T> {
        (0..self.params.len())
            .map(|i| self.covariance[i][i].max(T::zero()).sqrt())
            .collect()
    }
}

struct Problem<'a, T> {
    model: &'a DecayModel,
    depths: Vec<usize>,
    values: Vec<T>,
    sqrt_w: Vec<T>,
}

impl<T: Scalar> Problem<'_, T> {
    fn residuals(&self, params: &[T]) -> Vec<T> {
        self.depths
            .iter()
            .zip(&self.values)
            .zip(&self.sqrt_w)
            .map(|((&m, &y), &w)| (y - self.model.evaluate(params, m)) * w)
            .collect()
    }

    fn cost(&self, params: &[T]) -> T {
        self.residuals(params).iter().map(|&r| r * r).sum()
    }

    fn jacobian(&self, params: &[T]) -> Vec<Vec<T>> {
        self.depths
            .iter()
            .zip(&self.sqrt_w)
            .map(|(&m, &w)| self.model.gradient(params, m).into_iter().map(|g| g * w).collect())
            .collect()
    }
}

fn normal_equations<T: Scalar>(jac: &[Vec<T>], res: &[T], k: usize) -> (Vec<Vec<T>>, Vec<T>) {
    let mut a = vec![vec![T::zero(); k]; k];
    let mut g = vec![T::zero(); k];
    for (row, &r) in jac.iter().zip(res) {
        for i in 0..k {
            g[i] += row[i] * r;
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    (a, g)
}

/// Fits `model` to `points` with depth at least `options.m_min`.
///
/// Points are weighted by `1/stderr²` when every used point carries a
/// positive standard error; otherwise all weights are one.
pub fn fit_decay<T: Scalar>(
    points: &[FidelityPoint<T>],
    model: &DecayModel,
    options: &FitOptions,
) -> Result<DecayFit<T>> {
    model.validate()?;
    let used: Vec<&FidelityPoint<T>> = points.iter().filter(|p| p.depth >= options.m_min).collect();
    let k = model.num_params();
    let needed = 3.max(k + 1);
    if used.len() < needed {
        return Err(Error::InsufficientPoints {
            needed,
            found: used.len(),
            m_min: options.m_min,
        });
    }
    if let Some(bad) = used.iter().find(|p| !p.fidelity.is_finite()) {
        return Err(Error::OutOfDomain {
            name: "fidelity",
            value: bad.fidelity.to_f64_lossy(),
            domain: "finite",
        });
    }
    let weighted = used
        .iter()
        .all(|p| matches!(p.stderr, Some(s) if s > T::zero() && s.is_finite()));
    let problem = Problem {
        model,
        depths: used.iter().map(|p| p.depth).collect(),
        values: used.iter().map(|p| p.fidelity).collect(),
        sqrt_w: used
            .iter()
            .map(|p| match (weighted, p.stderr) {
                (true, Some(s)) => T::one() / s,
                _ => T::one(),
            })
            .collect(),
    };

    let mut params = model.initial_guess(log_linear_guess(&used));
    let (params, iterations) = levenberg_marquardt(&problem, &mut params, options.max_iterations)?;

    let residuals = problem.residuals(&params);
    let cost: T = residuals.iter().map(|&r| r * r).sum();
    let jac = problem.jacobian(&params);
    let (a, _) = normal_equations(&jac, &residuals, k);
    let mut covariance = symmetric_pseudo_inverse(&a);
    if !weighted {
        let dof = problem.depths.len().saturating_sub(k);
        let scale = if dof > 0 {
            cost / T::from_usize_lossy(dof)
        } else {
            T::zero()
        };
        for row in covariance.iter_mut() {
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
    }
    Ok(DecayFit {
        model: *model,
        model_id: model.id(),
        params,
        covariance,
        residual_norm: cost.sqrt(),
        depths_used: problem.depths.clone(),
        weighted,
        iterations,
    })
}

/// `p₀ = exp(Σ m ln F / Σ m²)` over strictly positive points.
fn log_linear_guess<T: Scalar>(points: &[&FidelityPoint<T>]) -> T {
    let (num, den) =
        points
            .iter()
            .filter(|p| p.fidelity > T::zero() && p.depth > 0)
            .fold((T::zero(), T::zero()), |(n, d), p| {
                let m = T::from_usize_lossy(p.depth);
                (n + m * p.fidelity.ln(), d + m * m)
            });
    if den > T::zero() {
        (num / den).exp().max(T::lit(0.01)).min(T::one())
    } else {
        T::lit(0.5)
    }
}

fn levenberg_marquardt<T: Scalar>(
    problem: &Problem<'_, T>,
    params: &mut Vec<T>,
    max_iterations: usize,
) -> Result<(Vec<T>, usize)> {
    let k = params.len();
    let eps = T::epsilon();
    let xtol = T::lit(100.0) * eps;
    let ftol = T::lit(100.0) * eps;
    let max_damping = T::lit(1e16);
    let mut damping = T::lit(1e-3);
    let mut cost = problem.cost(params);
    if !cost.is_finite() {
        return Err(Error::FitFailure {
            iterations: 0,
            cost: cost.to_f64_lossy(),
            damping: damping.to_f64_lossy(),
            reason: "non-finite cost at the initial guess".into(),
        });
    }
    for iteration in 1..=max_iterations {
        let residuals = problem.residuals(params);
        let jac = problem.jacobian(params);
        let (a, g) = normal_equations(&jac, &residuals, k);
        let max_diag = (0..k).map(|i| a[i][i]).fold(T::zero(), T::max);
        let floor = (max_diag * eps).max(T::min_positive_value().sqrt());
        loop {
            let mut damped = a.clone();
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] += damping * a[i][i].max(floor);
            }
            let step = solve(&damped, &g);
            let candidate: Vec<T> = match &step {
                Some(delta) => params
                    .iter()
                    .zip(delta)
                    .map(|(&p, &d)| (p + d).max(T::zero()).min(T::one()))
                    .collect(),
                None => params.clone(),
            };
            let new_cost = problem.cost(&candidate);
            if step.is_some() && new_cost.is_finite() && new_cost < cost {
                let moved = candidate
                    .iter()
                    .zip(params.iter())
                    .map(|(&c, &p)| (c - p).abs() / (p.abs() + xtol))
                    .fold(T::zero(), T::max);
                let decrease = (cost - new_cost) / cost.max(T::min_positive_value());
                *params = candidate;
                cost = new_cost;
                damping = (damping / T::lit(10.0)).max(T::lit(1e-12));
                if moved <= xtol || decrease <= ftol {
                    return Ok((params.clone(), iteration));
                }
                break;
            }
            damping *= T::lit(10.0);
            if damping > max_damping {
                // no downhill step exists at this resolution
                return Ok((params.clone(), iteration));
            }
        }
    }
    Err(Error::FitFailure {
        iterations: max_iterations,
        cost: cost.to_f64_lossy(),
        damping: damping.to_f64_lossy(),
        reason: "iteration limit reached".into(),
    })
}

/// Gaussian elimination with partial pivoting; `None` if singular.
#[allow(clippy::needless_range_loop)]
fn solve<T: Scalar>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    let mut m: Vec<Vec<T>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    let scale = a.iter().flatten().fold(T::zero(), |acc, &x| acc.max(x.abs()));
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        // also rejects NaN pivots
        if m[pivot][col].abs().partial_cmp(&(scale * T::epsilon())) != Some(std::cmp::Ordering::Greater) {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let factor = m[row][col] / m[col][col];
                for c in col..=n {
                    let v = m[col][c];
                    m[row][c] -= factor * v;
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix.
#[allow(clippy::needless_range_loop)]
fn symmetric_eigen<T: Scalar>(a: &[Vec<T>]) -> (Vec<T>, Vec<Vec<T>>) {
    let n = a.len();
    let mut m = a.to_vec();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let diag: T = (0..n).map(|i| m[i][i] * m[i][i]).sum();
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q] == T::zero() {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (T::lit(2.0) * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i][i]).collect(), v)
}

/// Moore–Penrose inverse of a symmetric positive semidefinite matrix;
/// eigenvalues below a relative cutoff are dropped.
fn symmetric_pseudo_inverse<T: Scalar>(a: &[Vec<T>]) -> Vec<Vec<T>> {
    let n = a.len();
    let (vals, vecs) = symmetric_eigen(a);
    let largest = vals.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()));
    let cutoff = largest * T::epsilon() * T::from_usize_lossy(n.max(1)) * T::lit(10.0);
    let mut out = vec![vec![T::zero(); n]; n];
    for (k, &lambda) in vals.iter().enumerate() {
        if lambda > cutoff {
            for i in 0..n {
                for j in 0..n {
                    out[i][j] += vecs[i][k] * vecs[j][k] / lambda;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decay::f_single;

    fn curve(f: impl Fn(usize) -> f64, depths: impl IntoIterator<Item = usize>) -> Vec<FidelityPoint> {
        depths.into_iter().map(|m| FidelityPoint::new(m, f(m))).collect()
    }

    #[test]
    fn exponential_round_trip() {
        let pts = curve(|m| 0.99f64.powi(m as i32), 1..=100);
        let fit = fit_decay(&pts, &DecayModel::Exponential, &FitOptions::default()).unwrap();
        assert!((fit.params[0] - 0.99).abs() < 1e-9, "{:?}", fit.params);
        assert_eq!(fit.depths_used.first(), Some(&4));
        assert!(!fit.weighted);
    }

    #[test]
    fn additive_round_trip() {
        let pts = curve(|m| 0.985f64.powi(m as i32), [1, 2, 5, 10, 20, 50, 100]);
        let fit = fit_decay(&pts, &DecayModel::Additive, &FitOptions::with_m_min(1)).unwrap();
        assert!((fit.params[0] - 0.015).abs() < 1e-9);
    }

    #[test]
    fn f_single_round_trip_per_qubit() {
        let truth = [0.994, 0.996];
        let pts = curve(|m| f_single(&truth, m).unwrap(), (1..=60).map(|i| i * 5));
        let model = DecayModel::FSingle {
            qubits: 2,
            shared: false,
        };
        let fit = fit_decay(&pts, &model, &FitOptions::default()).unwrap();
        let mut got = fit.params.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(
            (got[0] - 0.994).abs() < 1e-6 && (got[1] - 0.996).abs() < 1e-6,
            "{got:?}"
        );
    }

    #[test]
    fn f_single_round_trip_three_qubits_and_shared() {
        let truth = [0.99, 0.995, 0.998];
        let pts = curve(|m| f_single(&truth, m).unwrap(), (1..=50).map(|i| i * 8));
        let fit = fit_decay(
            &pts,
            &DecayModel::FSingle {
                qubits: 3,
                shared: false,
            },
            &FitOptions::default(),
        )
        .unwrap();
        let mut got = fit.params.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, t) in got.iter().zip(truth) {
            assert!((g - t).abs() < 1e-6, "{got:?}");
        }
        let pts = curve(|m| f_single(&[0.993; 2], m).unwrap(), 1..=200);
        let fit = fit_decay(
            &pts,
            &DecayModel::FSingle {
                qubits: 2,
                shared: true,
            },
            &FitOptions::default(),
        )
        .unwrap();
        assert!((fit.params[0] - 0.993).abs() < 1e-9);
    }

    #[test]
    fn weighted_fit_uses_stderr() {
        let pts: Vec<_> = curve(|m| 0.98f64.powi(m as i32), 1..=30)
            .into_iter()
            .map(|p| p.with_stderr(0.01))
            .collect();
        let fit = fit_decay(&pts, &DecayModel::Exponential, &FitOptions::default()).unwrap();
        assert!(fit.weighted);
        assert!((fit.params[0] - 0.98).abs() < 1e-9);
        assert!(fit.param_stderr()[0] > 0.0);
    }

    #[test]
    fn insufficient_points() {
        let pts = curve(|m| 0.9f64.powi(m as i32), [1, 2, 3, 4, 5]);
        assert!(matches!(
            fit_decay(&pts, &DecayModel::Exponential, &FitOptions::default()),
            Err(Error::InsufficientPoints {
                needed: 3,
                found: 2,
                m_min: 4
            })
        ));
    }

    #[test]
    fn negative_tail_points_are_kept() {
        let mut pts = curve(|m| 0.9f64.powi(m as i32), 1..=40);
        pts.push(FidelityPoint::new(60, -0.001));
        let fit = fit_decay(&pts, &DecayModel::Exponential, &FitOptions::with_m_min(1)).unwrap();
        assert_eq!(fit.depths_used.len(), 41);
        assert!((fit.params[0] - 0.9).abs() < 1e-4);
    }

    #[test]
    fn single_precision_fit() {
        let pts: Vec<FidelityPoint<f32>> = (1..=50)
            .map(|m| FidelityPoint::new(m, 0.97f32.powi(m as i32)))
            .collect();
        let fit = fit_decay(&pts, &DecayModel::Exponential, &FitOptions::default()).unwrap();
        assert!((fit.params[0] - 0.97).abs() < 1e-5);
    }

    #[test]
    fn gradients_match_central_differences() {
        let h: f64 = 1e-7;
        let models = [
            (DecayModel::Exponential, vec![0.97f64]),
            (DecayModel::Additive, vec![0.02]),
            (
                DecayModel::FSingle {
                    qubits: 2,
                    shared: false,
                },
                vec![0.994, 0.996],
            ),
            (
                DecayModel::FSingle {
                    qubits: 3,
                    shared: true,
                },
                vec![0.99],
            ),
        ];
        for (model, params) in models {
            for m in [1usize, 4, 30, 200] {
                let g = model.gradient(&params, m);
                for j in 0..params.len() {
                    let mut up = params.clone();
                    let mut down = params.clone();
                    up[j] += h;
                    down[j] -= h;
                    let fd = (model.evaluate(&up, m) - model.evaluate(&down, m)) / (2.0 * h);
                    assert!(
                        (g[j] - fd).abs() <= 1e-6 * fd.abs(),
                        "{model:?} m={m}: {} vs {fd}",
                        g[j]
                    );
                }
            }
        }
    }

    #[test]
    fn linear_algebra_helpers() {
        let a: Vec<Vec<f64>> = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let x = solve(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!(solve(&[vec![1.0f64, 1.0], vec![1.0, 1.0]], &[1.0, 1.0]).is_none());
        let inv = symmetric_pseudo_inverse(&a);
        let det: f64 = 11.0;
        assert!((inv[0][0] - 3.0 / det).abs() < 1e-14 && (inv[0][1] + 1.0 / det).abs() < 1e-14);
        let singular = symmetric_pseudo_inverse(&[vec![1.0f64, 1.0], vec![1.0, 1.0]]);
        assert!((singular[0][0] - 0.25).abs() < 1e-14);
    }
}
