use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot size below which an unregularised normal matrix is
/// treated as singular.
const SINGULAR_TOL: f64 = 1e-12;

/// Least-squares fit with intercept. `weights[0]` is the intercept,
/// `weights[1..]` the per-feature coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRegression {
    pub weights: Vec<f64>,
}

impl LinearRegression {
    pub fn feature_dim(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.weights[0]
            + self.weights[1..]
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        x.chunks(self.feature_dim())
            .map(|r| self.predict_row(r))
            .collect()
    }
}

/// Accumulates `[1 x]ᵀ[1 x]` and `[1 x]ᵀ y` one row at a time.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    dim: usize,
    rows: usize,
    xtx: Vec<f64>,
    xty: Vec<f64>,
}

impl NormalEquations {
    pub fn new(feature_dim: usize) -> Self {
        let dim = feature_dim + 1;
        Self {
            dim,
            rows: 0,
            xtx: vec![0.0; dim * dim],
            xty: vec![0.0; dim],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn push(&mut self, x: &[f64], y: f64) {
        debug_assert_eq!(x.len() + 1, self.dim);
        let d = self.dim;
        let aug = |i: usize| if i == 0 { 1.0 } else { x[i - 1] };
        for i in 0..d {
            let xi = aug(i);
            self.xty[i] += xi * y;
            for j in i..d {
                self.xtx[i * d + j] += xi * aug(j);
            }
        }
        self.rows += 1;
    }

    /// Solves `(XᵀX + ridge·D) w = Xᵀy` with `D = diag(0, 1, …, 1)`.
    pub fn solve(&self, ridge: f64) -> Result<LinearRegression> {
        if ridge.is_nan() || ridge < 0.0 {
            return Err(Error::contract(format!("ridge must be >= 0, got {ridge}")));
        }
        let d = self.dim;
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                a[i * d + j] = self.xtx[i * d + j];
                a[j * d + i] = self.xtx[i * d + j];
            }
            if i > 0 {
                a[i * d + i] += ridge;
            }
        }
        let max_diag = (0..d).map(|i| a[i * d + i].abs()).fold(0.0, f64::max);
        let l = cholesky(&a, d, |pivot| {
            if ridge == 0.0 {
                pivot > SINGULAR_TOL * max_diag
            } else {
                pivot > 0.0
            }
        })
        .ok_or_else(|| {
            Error::contract(
                "normal matrix is singular (collinear or constant features); use ridge > 0",
            )
        })?;
        Ok(LinearRegression {
            weights: cholesky_solve(&l, d, &self.xty),
        })
    }
}

fn cholesky(a: &[f64], d: usize, accept: impl Fn(f64) -> bool) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let mut pivot = a[j * d + j];
        for k in 0..j {
            pivot -= l[j * d + k] * l[j * d + k];
        }
        if !accept(pivot) {
            return None;
        }
        let ljj = pivot.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = s / ljj;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; d];
    for i in 0..d {
        let s: f64 = (0..i).map(|k| l[i * d + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let s: f64 = (i + 1..d).map(|k| l[k * d + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * d + i];
    }
    x
}

/// Closed-form ridge regression over a row-major `[N×F]` matrix.
pub fn linear_regression_fit(
    x: &[f64],
    feature_dim: usize,
    y: &[f64],
    ridge: f64,
) -> Result<LinearRegression> {
    if feature_dim == 0 || x.len() != y.len() * feature_dim {
        return Err(Error::Shape {
            op: "linear_regression_fit",
            lhs: vec![x.len() / feature_dim.max(1), feature_dim],
            rhs: vec![y.len()],
        });
    }
    if y.len() <= feature_dim {
        return Err(Error::contract(format!(
            "need more rows than features: {} rows, {feature_dim} features",
            y.len()
        )));
    }
    let mut ne = NormalEquations::new(feature_dim);
    for (row, &target) in x.chunks(feature_dim).zip(y) {
        ne.push(row, target);
    }
    ne.solve(ridge)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn exact_linear_data_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (n, f) = (40, 3);
        let true_w = [0.7, -2.0, 0.5, 3.0];
        let x: Vec<f64> = (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x
            .chunks(f)
            .map(|r| true_w[0] + r.iter().zip(&true_w[1..]).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let model = linear_regression_fit(&x, f, &y, 0.0).unwrap();
        let pred = model.predict(&x);
        let resid: f64 = pred
            .iter()
            .zip(&y)
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(resid < 1e-8, "residual {resid}");
    }

    #[test]
    fn duplicated_ones_column_is_singular() {
        let x = vec![1.0; 10];
        let y: Vec<f64> = (0..5).map(f64::from).collect();
        let err = linear_regression_fit(&x, 2, &y, 0.0).unwrap_err();
        assert!(err.to_string().contains("ridge > 0"), "{err}");
        assert!(linear_regression_fit(&x, 2, &y, 1e-3).is_ok());
    }

    #[test]
    fn too_few_rows() {
        assert!(linear_regression_fit(&[1.0, 2.0, 3.0, 4.0], 2, &[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn matches_gradient_descent_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, f) = (60, 3);
        let ridge = 0.5;
        let x: Vec<f64> = (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let closed = linear_regression_fit(&x, f, &y, ridge).unwrap();

        // Gradient descent on ||Xw - y||^2 + ridge ||w_{1..}||^2.
        let mut w = vec![0.0; f + 1];
        let lr = 2e-3;
        for _ in 0..200_000 {
            let mut grad = vec![0.0; f + 1];
            for (row, &t) in x.chunks(f).zip(&y) {
                let r = w[0] + row.iter().zip(&w[1..]).map(|(a, b)| a * b).sum::<f64>() - t;
                grad[0] += 2.0 * r;
                for k in 0..f {
                    grad[k + 1] += 2.0 * r * row[k];
                }
            }
            for k in 1..=f {
                grad[k] += 2.0 * ridge * w[k];
            }
            for (wk, gk) in w.iter_mut().zip(&grad) {
                *wk -= lr * gk;
            }
        }
        for (a, b) in closed.weights.iter().zip(&w) {
            assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", closed.weights, w);
        }
    }
}
