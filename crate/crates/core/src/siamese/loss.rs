//! Twin distances and the contrastive objective.

use crate::error::{Error, Result};

/// `1 - cos(f1, f2)`, clamped to `[0, 2]` against rounding.
pub fn cosine_distance(f1: &[f64], f2: &[f64]) -> Result<f64> {
    Ok(cosine_distance_grad(f1, f2)?.0)
}

/// Cosine distance with its gradients with respect to both inputs.
pub fn cosine_distance_grad(f1: &[f64], f2: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if f1.len() != f2.len() {
        return Err(Error::param(format!("feature length mismatch: {} vs {}", f1.len(), f2.len())));
    }
    let n1 = f1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n2 = f2.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::numerical("cosine distance of a zero vector is undefined"));
    }
    let dot: f64 = f1.iter().zip(f2).map(|(a, b)| a * b).sum();
    let sim = dot / (n1 * n2);
    let d = (1.0 - sim).clamp(0.0, 2.0);
    let g1 = f1.iter().zip(f2).map(|(a, b)| -(b / (n1 * n2) - sim * a / (n1 * n1))).collect();
    let g2 = f1.iter().zip(f2).map(|(a, b)| -(a / (n1 * n2) - sim * b / (n2 * n2))).collect();
    Ok((d, g1, g2))
}

/// Euclidean distance with gradients (zero subgradient at coincident inputs).
pub fn euclidean_distance_grad(f1: &[f64], f2: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if f1.len() != f2.len() {
        return Err(Error::param(format!("feature length mismatch: {} vs {}", f1.len(), f2.len())));
    }
    let d = f1.iter().zip(f2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if d == 0.0 {
        return Ok((0.0, vec![0.0; f1.len()], vec![0.0; f1.len()]));
    }
    let g1: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| (a - b) / d).collect();
    let g2 = g1.iter().map(|g| -g).collect();
    Ok((d, g1, g2))
}

/// `y * d^2 + (1 - y) * max(0, m - d)^2`.
pub fn contrastive_loss(y: u8, d: f64, margin: f64) -> f64 {
    if y == 1 {
        d * d
    } else {
        let gap = (margin - d).max(0.0);
        gap * gap
    }
}

/// Derivative of [`contrastive_loss`] with respect to `d`.
pub fn contrastive_loss_grad(y: u8, d: f64, margin: f64) -> f64 {
    if y == 1 {
        2.0 * d
    } else if margin - d > 0.0 {
        -2.0 * (margin - d)
    } else {
        0.0
    }
}
