//! Central-difference gradient checking.

use crate::error::{Error, Result};
use crate::numcore::ParamSet;
use crate::scalar::Scalar;

/// Denominator floor for the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max_i |analytic_i − numeric_i| / max(1e-8, |numeric_i|)
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub coordinates: usize,
}

/// Compares the analytic gradient returned by `loss_fn` with central differences.
///
/// `loss_fn` returns the loss and its analytic gradient at the given
/// parameters; the analytic gradient is read once at `params`, and every
/// coordinate is then perturbed by ±`h`.
pub fn grad_check<T, F>(mut loss_fn: F, params: &ParamSet<T>, h: T) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&ParamSet<T>) -> Result<(T, ParamSet<T>)>,
{
    let (value, analytic) = loss_fn(params)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("loss at the base point".into()));
    }
    params.require_same_layout(&analytic)?;
    let analytic = analytic.flatten();
    let mut probe = params.clone();
    let mut worst = (0.0f64, 0usize);
    for (i, &a) in analytic.iter().enumerate() {
        let original = *probe.flat_mut(i).expect("index in range");
        *probe.flat_mut(i).unwrap() = original + h;
        let plus = loss_fn(&probe)?.0;
        *probe.flat_mut(i).unwrap() = original - h;
        let minus = loss_fn(&probe)?.0;
        *probe.flat_mut(i).unwrap() = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss at perturbed coordinate {i}")));
        }
        let numeric = ((plus - minus) / (h + h)).to_f64_lossy();
        let rel = (a.to_f64_lossy() - numeric).abs() / numeric.abs().max(REL_ERROR_FLOOR);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        coordinates: analytic.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Matrix;

    #[test]
    fn quadratic_is_exact() {
        let mut p = ParamSet::new();
        p.push("a", Matrix::new(2, 3, vec![0.5, -1.0, 2.0, 3.0, -0.25, 1.5]).unwrap())
            .unwrap();
        let report = grad_check(
            |p: &ParamSet<f64>| Ok((0.5 * p.dot(p)?, p.clone())),
            &p,
            1e-4,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
        assert_eq!(report.coordinates, 6);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut p = ParamSet::new();
        p.push("a", Matrix::row_vector(vec![1.0, 2.0])).unwrap();
        let report = grad_check(
            |p: &ParamSet<f64>| {
                let mut g = p.clone();
                g.scale(2.0);
                Ok((0.5 * p.dot(p)?, g))
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error > 0.5);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut p = ParamSet::new();
        p.push("a", Matrix::row_vector(vec![1.0])).unwrap();
        let r = grad_check(|p: &ParamSet<f64>| Ok((f64::NAN, p.clone())), &p, 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
