use crate::error::{Error, Result};

/// Mean squared error and its gradient with respect to each prediction.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predictions.is_empty() || targets.is_empty() {
        return Err(Error::EmptyInput("mse_loss"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::Dimension {
            op: "mse_loss",
            expected: format!("{} targets", predictions.len()),
            found: format!("{} targets", targets.len()),
        });
    }
    let n = predictions.len() as f64;
    let mut sum = 0.0;
    let grad = predictions
        .iter()
        .zip(targets)
        .map(|(&y, &t)| {
            let d = y - t;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((sum / n, grad))
}
