//! Central finite-difference check of reverse-mode gradients.

use super::dense::Tensor;
use super::graph::{Graph, Var};
use crate::error::{Error, Result};
use crate::parallel;

/// Outcome of [`grad_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

/// Denominator floor used by the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.value(out).item()
}

/// Compares autodiff gradients of the scalar function `f` against
/// `(f(x+eps) - f(x-eps)) / (2 eps)` at every coordinate of every input.
///
/// `f` receives the inputs as graph nodes and must return a single-element
/// node. The function is evaluated twice at the base point; differing
/// results mean it is not deterministic and the check is refused.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var> + Sync + Send,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::contract(format!(
            "grad_check eps must be > 0, got {eps}"
        )));
    }
    let first = evaluate(&f, inputs)?;
    let second = evaluate(&f, inputs)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::contract(format!(
            "function under grad_check is not deterministic ({first} vs {second})"
        )));
    }

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let analytic: Vec<&Tensor> = vars
        .iter()
        .map(|v| grads.get(*v).expect("every input is a trainable leaf"))
        .collect();

    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |k| (i, k)))
        .collect();

    let errors = parallel::map(&coords, |&(i, k)| -> Result<f64> {
        let mut shifted = inputs.to_vec();
        let base = shifted[i].data()[k];
        shifted[i].data_mut()[k] = base + eps;
        let plus = evaluate(&f, &shifted)?;
        shifted[i].data_mut()[k] = base - eps;
        let minus = evaluate(&f, &shifted)?;
        let numeric = (plus - minus) / (2.0 * eps);
        Ok(relative_error(analytic[i].data()[k], numeric))
    });

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: coords.len(),
    };
    for (&coord, err) in coords.iter().zip(errors) {
        let err = err?;
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst = Some(coord);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_exact_enough() {
        let x = Tensor::vector(vec![0.4, -0.9, 0.1, 0.75]);
        let report = grad_check(
            |g, v| {
                let sq = g.mul(v[0], v[0])?;
                Ok(g.sum(sq))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
        assert_eq!(report.coordinates, 4);
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        let report = grad_check(|g, _| Ok(g.constant(Tensor::scalar(3.5))), &[x], 1e-5).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn nondeterministic_function_is_refused() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let calls = AtomicUsize::new(0);
        let x = Tensor::vector(vec![1.0]);
        let res = grad_check(
            |g, v| {
                let n = calls.fetch_add(1, Ordering::SeqCst) as f64;
                let s = g.sum(v[0]);
                let c = g.constant(Tensor::scalar(n));
                g.add(s, c)
            },
            &[x],
            1e-5,
        );
        assert!(matches!(res, Err(Error::Contract(_))));
    }

    #[test]
    fn rejects_non_positive_eps() {
        let x = Tensor::vector(vec![1.0]);
        assert!(grad_check(|g, v| Ok(g.sum(v[0])), &[x], 0.0).is_err());
    }
}
