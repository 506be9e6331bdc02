use std::collections::BTreeSet;

use super::EvalError;

/// Unweighted mean of per-class F1 over the classes present in `actuals`.
pub fn score_classification(predictions: &[u32], actuals: &[u32]) -> Result<f64, EvalError> {
    if predictions.len() != actuals.len() || actuals.is_empty() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            actuals: actuals.len(),
        });
    }
    let classes: BTreeSet<u32> = actuals.iter().copied().collect();
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for (&p, &a) in predictions.iter().zip(actuals) {
                match (p == c, a == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                (2 * tp) as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / classes.len() as f64)
}

/// One minus relative absolute error, clamped at 0.
pub fn score_regression(predictions: &[f64], actuals: &[f64]) -> Result<f64, EvalError> {
    if predictions.len() != actuals.len() || actuals.is_empty() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            actuals: actuals.len(),
        });
    }
    let mean = actuals.iter().sum::<f64>() / actuals.len() as f64;
    let reference: f64 = actuals.iter().map(|a| (a - mean).abs()).sum();
    if reference == 0.0 {
        return Err(EvalError::ConstantActuals);
    }
    let err: f64 = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a).abs())
        .sum();
    Ok((1.0 - err / reference).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier() {
        assert_eq!(
            score_classification(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap(),
            1.0
        );
    }

    #[test]
    fn half_right_binary() {
        // P=1, N=0: actuals (P,P,N,N), predictions (P,N,P,N)
        let s = score_classification(&[1, 0, 1, 0], &[1, 1, 0, 0]).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_prediction_on_balanced_binary() {
        let s = score_classification(&[1, 1, 1, 1], &[1, 1, 0, 0]).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            score_classification(&[1], &[1, 0]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            score_regression(&[], &[]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn regression_reference_points() {
        assert_eq!(
            score_regression(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap(),
            1.0
        );
        let mean = 7.0 / 3.0;
        assert_eq!(score_regression(&[mean; 3], &[1.0, 2.0, 4.0]).unwrap(), 0.0);
        assert_eq!(score_regression(&[1.0, 1.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(
            score_regression(&[1.0, 1.0], &[3.0, 3.0]),
            Err(EvalError::ConstantActuals)
        ));
    }

    #[test]
    fn regression_clamps_at_zero() {
        assert_eq!(score_regression(&[10.0, -10.0], &[0.0, 2.0]).unwrap(), 0.0);
    }
}
