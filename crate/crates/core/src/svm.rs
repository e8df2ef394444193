//! Kernel support vector machines trained with sequential minimal
//! optimization.
//!
//! Both the binary soft-margin classifier and the ν one-class detector reduce
//! to the same dual problem
//!
//! ```text
//! minimize  ½ αᵀQα + pᵀα   subject to  yᵀα = Δ,  0 ≤ αᵢ ≤ Cᵢ
//! ```
//!
//! which [`solve_dual`] handles with maximal-violating-pair working-set
//! selection. Inputs are z-scored before training and the scaling travels with
//! the model, so a serialized [`SvmModel`] is a self-contained decision
//! boundary.

use serde::{Deserialize, Serialize};

use crate::error::SvmError;

/// Kernel with resolved parameters, as stored in a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Kernel choice before training; `Rbf { gamma: None }` resolves to
/// `1 / (n_features * variance)` of the (standardized) training inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Linear,
    Rbf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Rbf { gamma: None }
    }
}

impl KernelSpec {
    fn resolve(&self, inputs: &[Vec<f64>]) -> Result<Kernel, SvmError> {
        match *self {
            KernelSpec::Linear => Ok(Kernel::Linear),
            KernelSpec::Rbf { gamma: Some(g) } if g > 0.0 && g.is_finite() => {
                Ok(Kernel::Rbf { gamma: g })
            }
            KernelSpec::Rbf { gamma: Some(g) } => Err(SvmError::ParameterDomain(format!(
                "gamma must be positive, got {g}"
            ))),
            KernelSpec::Rbf { gamma: None } => {
                let n_features = inputs.first().map_or(1, Vec::len).max(1);
                let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
                let var = crate::stats::std_dev(&flat).powi(2);
                let gamma = if var > 0.0 {
                    1.0 / (n_features as f64 * var)
                } else {
                    1.0 / n_features as f64
                };
                Ok(Kernel::Rbf { gamma })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmParams {
    pub kernel: KernelSpec,
    /// Box constraint of the binary classifier.
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub standardize: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            c: 1.0,
            tol: 1e-3,
            max_iter: 10_000,
            standardize: true,
        }
    }
}

impl SvmParams {
    pub fn linear(c: f64) -> Self {
        Self {
            kernel: KernelSpec::Linear,
            c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SvmError> {
        if let KernelSpec::Rbf { gamma: Some(g) } = self.kernel {
            if !(g > 0.0 && g.is_finite()) {
                return Err(SvmError::ParameterDomain(format!(
                    "gamma must be positive, got {g}"
                )));
            }
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SvmError::ParameterDomain(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(SvmError::ParameterDomain(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Per-feature z-score transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub mean: f64,
    pub scale: f64,
}

impl FeatureScale {
    const IDENTITY: FeatureScale = FeatureScale {
        mean: 0.0,
        scale: 1.0,
    };
}

/// A trained kernel expansion `f(x) = Σ dual_coefs[i]·K(sv[i], z(x)) + bias`.
///
/// Support vectors are stored in standardized coordinates; `decision`
/// applies the stored scaling to raw queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub kernel: Kernel,
    pub feature_standardization: Vec<FeatureScale>,
}

impl SvmModel {
    pub fn n_features(&self) -> usize {
        self.feature_standardization.len()
    }

    pub fn n_support(&self) -> usize {
        self.support_vectors.len()
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_standardization)
            .map(|(v, s)| (v - s.mean) / s.scale)
            .collect()
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64, SvmError> {
        if x.len() != self.n_features() {
            return Err(SvmError::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        let z = self.standardize(x);
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, coef)| coef * self.kernel.eval(sv, &z))
            .sum::<f64>()
            + self.bias)
    }

    /// Sign of the decision value; exactly zero maps to `+1`.
    pub fn classify(&self, x: &[f64]) -> Result<i8, SvmError> {
        Ok(if self.decision(x)? >= 0.0 { 1 } else { -1 })
    }
}

/// ν one-class detector. Negative decision values flag outliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassModel {
    pub boundary: SvmModel,
    pub nu: f64,
}

impl OneClassModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64, SvmError> {
        self.boundary.decision(x)
    }

    pub fn is_outlier(&self, x: &[f64]) -> Result<bool, SvmError> {
        Ok(self.decision(x)? < 0.0)
    }

    pub fn n_features(&self) -> usize {
        self.boundary.n_features()
    }
}

/// Solver diagnostics returned alongside a binary model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Dual variables in training-sample order.
    pub alphas: Vec<f64>,
    pub iterations: usize,
    /// Kernel evaluations spent filling the Gram matrix.
    pub kernel_evals: u64,
}

/// KKT violation of one training point given its dual variable and its
/// functional margin `y·f(x)`.
pub fn kkt_residual(alpha: f64, margin: f64, c: f64) -> f64 {
    let eps = 1e-9 * c.max(1.0);
    if alpha <= eps {
        (1.0 - margin).max(0.0)
    } else if alpha >= c - eps {
        (margin - 1.0).max(0.0)
    } else {
        (margin - 1.0).abs()
    }
}

fn check_dims(samples: &[Vec<f64>]) -> Result<usize, SvmError> {
    let dim = samples.first().ok_or(SvmError::Empty)?.len();
    if dim == 0 {
        return Err(SvmError::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    for s in samples {
        if s.len() != dim {
            return Err(SvmError::DimensionMismatch {
                expected: dim,
                got: s.len(),
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::ParameterDomain("non-finite feature".into()));
        }
    }
    Ok(dim)
}

fn fit_scaling(samples: &[Vec<f64>], dim: usize, enabled: bool) -> Vec<FeatureScale> {
    if !enabled {
        return vec![FeatureScale::IDENTITY; dim];
    }
    (0..dim)
        .map(|k| {
            let col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let sd = crate::stats::std_dev(&col);
            FeatureScale {
                mean: crate::stats::mean(&col),
                scale: if sd > 0.0 { sd } else { 1.0 },
            }
        })
        .collect()
}

fn apply_scaling(samples: &[Vec<f64>], scaling: &[FeatureScale]) -> Vec<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            s.iter()
                .zip(scaling)
                .map(|(v, sc)| (v - sc.mean) / sc.scale)
                .collect()
        })
        .collect()
}

fn gram(kernel: &Kernel, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&xs[i], &xs[j]);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

struct DualSolution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
}

const TAU: f64 = 1e-12;

/// SMO over the generic dual. `q` is the signed Gram matrix `yᵢyⱼKᵢⱼ`.
fn solve_dual(
    q: &[Vec<f64>],
    p: &[f64],
    y: &[f64],
    upper: f64,
    mut alpha: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DualSolution, SvmError> {
    let n = p.len();
    let mut grad: Vec<f64> = (0..n)
        .map(|i| p[i] + (0..n).map(|j| q[i][j] * alpha[j]).sum::<f64>())
        .collect();
    let at_upper = |a: f64| a >= upper;
    let at_lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    loop {
        // i maximizes -y·G over I_up, j minimizes it over I_low; ties keep the
        // lowest index.
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let mut sel_i = None;
        let mut sel_j = None;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = if y[t] > 0.0 {
                !at_upper(alpha[t])
            } else {
                !at_lower(alpha[t])
            };
            let in_low = if y[t] > 0.0 {
                !at_lower(alpha[t])
            } else {
                !at_upper(alpha[t])
            };
            if in_up && v > gmax {
                gmax = v;
                sel_i = Some(t);
            }
            if in_low && v < gmin {
                gmin = v;
                sel_j = Some(t);
            }
        }
        let (Some(i), Some(j)) = (sel_i, sel_j) else {
            break;
        };
        if gmax - gmin < tol {
            break;
        }
        if iterations >= max_iter {
            return Err(SvmError::IterationLimit(max_iter));
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q[i][i] + q[j][j] + 2.0 * q[i][j]).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > upper {
                    alpha[i] = upper;
                    alpha[j] = upper - diff;
                }
            } else if alpha[j] > upper {
                alpha[j] = upper;
                alpha[i] = upper + diff;
            }
        } else {
            let quad = (q[i][i] + q[j][j] - 2.0 * q[i][j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > upper {
                if alpha[i] > upper {
                    alpha[i] = upper;
                    alpha[j] = sum - upper;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > upper {
                if alpha[j] > upper {
                    alpha[j] = upper;
                    alpha[i] = sum - upper;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q[i][t] * di + q[j][t] * dj;
        }
    }

    // Offset: mean of y·G over free variables, else midpoint of the bounds.
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if at_upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 {
        free_sum / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    Ok(DualSolution {
        alpha,
        rho,
        iterations,
    })
}

/// Trains a soft-margin binary classifier. Labels must be `-1` or `+1`.
pub fn train_binary(
    samples: &[Vec<f64>],
    labels: &[i8],
    params: &SvmParams,
) -> Result<SvmModel, SvmError> {
    train_binary_with_report(samples, labels, params).map(|(m, _)| m)
}

pub fn train_binary_with_report(
    samples: &[Vec<f64>],
    labels: &[i8],
    params: &SvmParams,
) -> Result<(SvmModel, TrainReport), SvmError> {
    params.validate()?;
    let dim = check_dims(samples)?;
    if labels.len() != samples.len() {
        return Err(SvmError::DimensionMismatch {
            expected: samples.len(),
            got: labels.len(),
        });
    }
    if labels.iter().any(|&l| l != 1 && l != -1) {
        return Err(SvmError::ParameterDomain("labels must be -1 or +1".into()));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(SvmError::SingleClass);
    }

    let scaling = fit_scaling(samples, dim, params.standardize);
    let xs = apply_scaling(samples, &scaling);
    let kernel = params.kernel.resolve(&xs)?;
    let k = gram(&kernel, &xs);
    let n = xs.len();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j]).collect())
        .collect();

    let sol = solve_dual(
        &q,
        &vec![-1.0; n],
        &y,
        params.c,
        vec![0.0; n],
        params.tol,
        params.max_iter,
    )?;

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(xs[t].clone());
            dual_coefs.push(a * y[t]);
        }
    }
    let model = SvmModel {
        support_vectors,
        dual_coefs,
        bias: -sol.rho,
        kernel,
        feature_standardization: scaling,
    };
    let report = TrainReport {
        alphas: sol.alpha,
        iterations: sol.iterations,
        kernel_evals: (n * (n + 1) / 2) as u64,
    };
    Ok((model, report))
}

/// Trains a ν one-class detector on inliers only.
pub fn train_one_class(
    samples: &[Vec<f64>],
    nu: f64,
    params: &SvmParams,
) -> Result<OneClassModel, SvmError> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(SvmError::ParameterDomain(format!(
            "nu must lie in (0, 1], got {nu}"
        )));
    }
    if !(params.tol > 0.0 && params.tol.is_finite()) {
        return Err(SvmError::ParameterDomain("tol must be positive".into()));
    }
    let dim = check_dims(samples)?;
    if samples.len() < 2 {
        return Err(SvmError::ParameterDomain(
            "one-class training needs at least 2 samples".into(),
        ));
    }

    let scaling = fit_scaling(samples, dim, params.standardize);
    let xs = apply_scaling(samples, &scaling);
    let kernel = params.kernel.resolve(&xs)?;
    let k = gram(&kernel, &xs);
    let n = xs.len();

    // Box [0, 1] with Σα = ν·n; the first ⌊ν·n⌋ variables start saturated.
    let budget = nu * n as f64;
    let full = budget.floor() as usize;
    let mut alpha = vec![0.0; n];
    for a in alpha.iter_mut().take(full.min(n)) {
        *a = 1.0;
    }
    if full < n {
        alpha[full] = budget - full as f64;
    }

    let sol = solve_dual(
        &k,
        &vec![0.0; n],
        &vec![1.0; n],
        1.0,
        alpha,
        params.tol,
        params.max_iter.max(10 * n),
    )?;

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for (t, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(xs[t].clone());
            dual_coefs.push(a);
        }
    }
    Ok(OneClassModel {
        boundary: SvmModel {
            support_vectors,
            dual_coefs,
            bias: -sol.rho,
            kernel,
            feature_standardization: scaling,
        },
        nu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points() -> (Vec<Vec<f64>>, Vec<i8>) {
        (vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![-1, 1])
    }

    #[test]
    fn single_class_is_rejected() {
        let (xs, _) = two_points();
        let err = train_binary(&xs, &[1, 1], &SvmParams::linear(10.0)).unwrap_err();
        assert_eq!(err, SvmError::SingleClass);
    }

    #[test]
    fn ragged_inputs_are_rejected() {
        let xs = vec![vec![0.0, 0.0], vec![1.0]];
        let err = train_binary(&xs, &[-1, 1], &SvmParams::linear(1.0)).unwrap_err();
        assert!(matches!(err, SvmError::DimensionMismatch { .. }));
    }

    #[test]
    fn decision_checks_dimension() {
        let (xs, ys) = two_points();
        let m = train_binary(&xs, &ys, &SvmParams::linear(10.0)).unwrap();
        assert!(matches!(
            m.decision(&[1.0]),
            Err(SvmError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn label_flip_negates_decision() {
        let (xs, ys) = two_points();
        let flipped: Vec<i8> = ys.iter().map(|l| -l).collect();
        let a = train_binary(&xs, &ys, &SvmParams::linear(10.0)).unwrap();
        let b = train_binary(&xs, &flipped, &SvmParams::linear(10.0)).unwrap();
        for p in [[0.2, 0.9], [3.0, -1.0], [0.5, 0.5], [-2.0, 0.1]] {
            let (fa, fb) = (a.decision(&p).unwrap(), b.decision(&p).unwrap());
            assert!((fa + fb).abs() < 1e-9, "{fa} vs {fb}");
        }
    }

    #[test]
    fn zero_decision_classifies_positive() {
        let m = SvmModel {
            support_vectors: vec![vec![1.0]],
            dual_coefs: vec![1.0],
            bias: 0.0,
            kernel: Kernel::Linear,
            feature_standardization: vec![FeatureScale::IDENTITY],
        };
        assert_eq!(m.classify(&[0.0]).unwrap(), 1);
        assert_eq!(m.classify(&[1.0]).unwrap(), 1);
        assert_eq!(m.classify(&[-1.0]).unwrap(), -1);
    }

    #[test]
    fn nu_outside_unit_interval_is_rejected() {
        let xs = vec![vec![0.0], vec![1.0], vec![2.0]];
        for nu in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                train_one_class(&xs, nu, &SvmParams::default()),
                Err(SvmError::ParameterDomain(_))
            ));
        }
    }

    #[test]
    fn invalid_c_is_rejected() {
        let (xs, ys) = two_points();
        assert!(matches!(
            train_binary(&xs, &ys, &SvmParams::linear(0.0)),
            Err(SvmError::ParameterDomain(_))
        ));
    }

    #[test]
    fn binary_dual_coefficients_sum_to_zero() {
        let xs: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let ys: Vec<i8> = xs
            .iter()
            .map(|x| if x[0] + 0.3 * x[1] > 0.1 { 1 } else { -1 })
            .collect();
        let params = SvmParams {
            c: 2.0,
            ..SvmParams::default()
        };
        let m = train_binary(&xs, &ys, &params).unwrap();
        assert!(!m.support_vectors.is_empty());
        assert!(m.dual_coefs.iter().sum::<f64>().abs() < 1e-9);
        assert!(m.dual_coefs.iter().all(|c| c.abs() <= 2.0 + 1e-12));
    }

    #[test]
    fn training_is_deterministic() {
        let xs: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![i as f64, (i * i % 7) as f64])
            .collect();
        let ys: Vec<i8> = (0..30).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let a = train_binary(&xs, &ys, &SvmParams::default()).unwrap();
        let b = train_binary(&xs, &ys, &SvmParams::default()).unwrap();
        assert_eq!(a, b);
    }
}
