/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy `-[y ln p + (1 - y) ln(1 - p)]` of one prediction.
pub fn bce_loss(p: f64, y: u8) -> f64 {
    let p = clamp(p);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Derivative of [`bce_loss`] with respect to `p`. Zero where the clamp is
/// active, matching the clamped function.
pub fn bce_grad(p: f64, y: u8) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        return 0.0;
    }
    if y == 1 {
        -1.0 / p
    } else {
        1.0 / (1.0 - p)
    }
}

/// Mean loss over a batch and the gradient of that mean w.r.t. each `p`.
pub fn bce_batch(p: &[f64], y: &[u8]) -> (f64, Vec<f64>) {
    assert_eq!(p.len(), y.len());
    let n = p.len() as f64;
    let loss = p.iter().zip(y).map(|(&p, &y)| bce_loss(p, y)).sum::<f64>() / n;
    let grad = p.iter().zip(y).map(|(&p, &y)| bce_grad(p, y) / n).collect();
    (loss, grad)
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((bce_loss(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.5, 0) - 0.693147).abs() < 1e-6);
        assert!((bce_loss(0.9, 1) - 0.105361).abs() < 1e-6);
        assert!((bce_loss(0.9, 0) - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn clamp_keeps_loss_finite() {
        let l = bce_loss(1.0, 1);
        assert!(l > 0.0 && l <= 1.2e-7);
        assert!(bce_loss(0.0, 1).is_finite());
        assert!(bce_loss(1.0, 0).is_finite());
        assert_eq!(bce_grad(1.0, 1), 0.0);
        assert_eq!(bce_grad(0.0, 0), 0.0);
    }

    #[test]
    fn batch_mean() {
        let (l, g) = bce_batch(&[0.9, 0.5], &[1, 0]);
        assert!((l - (0.105361 + 0.693147) / 2.0).abs() < 1e-6);
        assert!((g[0] - (-1.0 / 0.9) / 2.0).abs() < 1e-12);
        assert!((g[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_difference() {
        let h = 1e-6;
        for &p in &[0.01, 0.2, 0.5, 0.77, 0.99] {
            for y in [0u8, 1] {
                let fd = (bce_loss(p + h, y) - bce_loss(p - h, y)) / (2.0 * h);
                let an = bce_grad(p, y);
                assert!((fd - an).abs() / an.abs() < 1e-6, "p={p} y={y}");
            }
        }
    }
}
