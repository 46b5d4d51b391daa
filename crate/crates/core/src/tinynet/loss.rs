use crate::error::{Error, Result};

/// Probabilities are clamped to `[ε, 1 − ε]` before taking logs.
pub const BCE_EPSILON: f64 = 1e-7;

pub fn sigmoid(z: f32) -> f32 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy over the batch and its gradient with respect to
/// each probability.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p.len() != y.len() {
        return Err(Error::Dimension(format!("{} probabilities vs {} labels", p.len(), y.len())));
    }
    if p.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = p.len() as f64;
    let mut loss = 0.0;
    let grad = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| {
            let q = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            loss -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
            (-y / q + (1.0 - y) / (1.0 - q)) / n
        })
        .collect();
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let (l, _) = bce_loss(&[0.5, 0.5], &[0.0, 1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let (l, _) = bce_loss(&[1.0 - BCE_EPSILON], &[1.0]).unwrap();
        assert!(l < 1e-6);
        assert!(bce_loss(&[0.5], &[]).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-100.0) >= 0.0 && sigmoid(-100.0) < 1e-30);
        assert_eq!(sigmoid(100.0), 1.0);
    }
}
