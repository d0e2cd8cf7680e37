use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::gp::Gp;

/// Expected improvement over `best` for a maximisation problem, with no
/// exploration offset.
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let gap = mean - best;
    if !(std > 0.0) || !std.is_finite() {
        return gap.max(0.0);
    }
    let z = gap / std;
    let n = Normal::standard();
    (gap * n.cdf(z) + std * n.pdf(z)).max(0.0)
}

pub fn expected_improvement_at(gp: &Gp, x: &[f64], best: f64) -> f64 {
    let (mean, var) = gp.predict(x);
    expected_improvement(mean, var.max(0.0).sqrt(), best)
}
