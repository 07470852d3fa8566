use thiserror::Error;

use super::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error, PartialEq)]
pub enum GradCheckError {
    #[error("step {0} outside (0, 1e-2]")]
    InvalidStep(f64),
    #[error("function returned non-finite value {value} while probing coordinate {coordinate}")]
    NonFinite { coordinate: usize, value: f64 },
    #[error("analytic gradient has {analytic} entries, point has {point}")]
    LengthMismatch { analytic: usize, point: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Finite-difference formula used to estimate each partial derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`
    #[default]
    Central,
    /// `(f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h`, fourth-order accurate.
    CentralFourth,
}

/// Max relative error between the autodiff gradient of `f` at `point` and a
/// central-difference estimate.
///
/// `f` receives the probe point as a trainable rank-1 leaf and must return a
/// scalar.
pub fn grad_check<F>(f: F, point: &[f64], step: f64) -> Result<f64, GradCheckError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>, TensorError>,
{
    grad_check_with(f, point, step, Stencil::Central)
}

pub fn grad_check_with<F>(
    f: F,
    point: &[f64],
    step: f64,
    stencil: Stencil,
) -> Result<f64, GradCheckError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>, TensorError>,
{
    let pairs = grad_check_pairs(f, point, step, stencil)?;
    Ok(pairs
        .iter()
        .map(|&(a, n)| relative_error(a, n))
        .fold(0.0, f64::max))
}

/// `(analytic, numeric)` per coordinate of `point`.
pub fn grad_check_pairs<F>(
    f: F,
    point: &[f64],
    step: f64,
    stencil: Stencil,
) -> Result<Vec<(f64, f64)>, GradCheckError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>, TensorError>,
{
    check_step(step)?;
    let analytic = {
        let tape = Tape::new();
        let x = tape.param(Tensor::vector(point.to_vec()));
        let y = f(&tape, x)?;
        let v = y.item();
        if !v.is_finite() {
            return Err(GradCheckError::NonFinite {
                coordinate: 0,
                value: v,
            });
        }
        tape.backward(y)?.get_or_zeros(x).into_data()
    };
    let value = |p: &[f64]| -> f64 {
        let tape = Tape::new();
        let x = tape.constant(Tensor::vector(p.to_vec()));
        match f(&tape, x) {
            Ok(y) => y.item(),
            Err(_) => f64::NAN,
        }
    };
    finite_difference_pairs(value, &analytic, point, step, stencil)
}

/// Compares a precomputed `analytic` gradient against finite differences of
/// `value` around `point`. Evaluation failures should be reported as NaN.
pub fn finite_difference_error(
    value: impl FnMut(&[f64]) -> f64,
    analytic: &[f64],
    point: &[f64],
    step: f64,
    stencil: Stencil,
) -> Result<f64, GradCheckError> {
    let pairs = finite_difference_pairs(value, analytic, point, step, stencil)?;
    Ok(pairs
        .iter()
        .map(|&(a, n)| relative_error(a, n))
        .fold(0.0, f64::max))
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// `(analytic, numeric)` per coordinate.
pub fn finite_difference_pairs(
    mut value: impl FnMut(&[f64]) -> f64,
    analytic: &[f64],
    point: &[f64],
    step: f64,
    stencil: Stencil,
) -> Result<Vec<(f64, f64)>, GradCheckError> {
    check_step(step)?;
    if analytic.len() != point.len() {
        return Err(GradCheckError::LengthMismatch {
            analytic: analytic.len(),
            point: point.len(),
        });
    }
    let mut probe = point.to_vec();
    let mut out = Vec::with_capacity(point.len());
    for (i, &a) in analytic.iter().enumerate() {
        let mut eval = |offset: f64| -> Result<f64, GradCheckError> {
            probe[i] = point[i] + offset;
            let v = value(&probe);
            probe[i] = point[i];
            if v.is_finite() {
                Ok(v)
            } else {
                Err(GradCheckError::NonFinite {
                    coordinate: i,
                    value: v,
                })
            }
        };
        let numeric = match stencil {
            Stencil::Central => (eval(step)? - eval(-step)?) / (2.0 * step),
            Stencil::CentralFourth => {
                let (m2, m1, p1, p2) = (
                    eval(-2.0 * step)?,
                    eval(-step)?,
                    eval(step)?,
                    eval(2.0 * step)?,
                );
                (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * step)
            }
        };
        out.push((a, numeric));
    }
    Ok(out)
}

fn check_step(step: f64) -> Result<(), GradCheckError> {
    if step > 0.0 && step <= 1e-2 {
        Ok(())
    } else {
        Err(GradCheckError::InvalidStep(step))
    }
}
