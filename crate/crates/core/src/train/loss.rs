use crate::autodiff::BCE_EPSILON;

/// `(pred − target)²`.
pub fn loss_mse(pred: f64, target: f64) -> f64 {
    let d = pred - target;
    d * d
}

/// Mean of [`loss_mse`] over pairs.
pub fn mean_mse(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|&(p, t)| loss_mse(p, t)).sum::<f64>() / pairs.len() as f64
}

/// `−(y ln p̂ + (1−y) ln(1−p̂))` with `p̂` clamped to `[ε, 1−ε]`.
pub fn loss_bce(p_hat: f64, y: f64) -> f64 {
    let p = p_hat.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}
