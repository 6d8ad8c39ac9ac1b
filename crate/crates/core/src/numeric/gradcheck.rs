use super::{check_len, NumericError};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max_k |a_k − n_k| / max(1, |a_k|, |n_k|)`.
    pub max_rel_error: f64,
    /// Coordinate where the maximum occurred.
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub coordinates: usize,
}

/// Compares `analytic` against central differences of `loss` at `params`.
pub fn grad_check<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    step: f64,
) -> Result<GradCheckReport, NumericError>
where
    F: FnMut(&[f64]) -> f64,
{
    check_len(
        "grad_check",
        "analytic gradient",
        params.len(),
        analytic.len(),
    )?;
    let base = loss(params);
    if !base.is_finite() {
        return Err(NumericError::NonFinite(format!(
            "loss at base point ({base})"
        )));
    }
    let mut probe = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic_at_worst: analytic.first().copied().unwrap_or(0.0),
        numeric_at_worst: 0.0,
        coordinates: params.len(),
    };
    for k in 0..params.len() {
        let orig = probe[k];
        probe[k] = orig + step;
        let plus = loss(&probe);
        probe[k] = orig - step;
        let minus = loss(&probe);
        probe[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NumericError::NonFinite(format!(
                "loss while perturbing coordinate {k}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[k];
        let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        if rel > report.max_rel_error || k == 0 {
            report.max_rel_error = rel;
            report.worst_index = k;
            report.analytic_at_worst = a;
            report.numeric_at_worst = numeric;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let r = grad_check(|x| x[0] * x[0], &[3.0], &[6.0], DEFAULT_FD_STEP).unwrap();
        assert!(r.max_rel_error < 1e-9);
        assert!((r.numeric_at_worst - 6.0).abs() < 1e-8);
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let r = grad_check(
            |x| x[0] * x[0] + x[1],
            &[3.0, 1.0],
            &[6.0, 2.0],
            DEFAULT_FD_STEP,
        )
        .unwrap();
        assert_eq!(r.worst_index, 1);
        assert!((r.max_rel_error - 0.5).abs() < 1e-6);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        assert!(matches!(
            grad_check(|x| x[0].ln(), &[-1.0], &[0.0], DEFAULT_FD_STEP),
            Err(NumericError::NonFinite(_))
        ));
    }
}
