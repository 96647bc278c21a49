use serde::Serialize;

use crate::{Error, Result};

/// Predicted cost exponent and sample schedule for the multilevel lattice estimator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityPrediction {
    /// cost ≲ ε^{−θ}.
    pub theta: f64,
    /// Set when βλ = d: the bound carries an extra (ln ε⁻¹)^{λ+1}.
    pub log_factor: bool,
    /// Finest level L.
    pub levels: usize,
    /// N_0, …, N_L.
    pub n_schedule: Vec<u64>,
}

/// Cost exponent, number of levels and N_ℓ for rates α (bias), α′ (truncation),
/// β (variance), QMC exponent λ ∈ (1/2, 1] and spatial dimension d.
///
/// L = ⌈log₂(ε⁻¹)/α + c1⌉, N_ℓ = ⌈N_0 2^{−ℓ(d+β)λ/(λ+1)}⌉ with
/// N_0 = (2^{2αL} E_L / c2)^λ.
#[allow(clippy::too_many_arguments)]
pub fn complexity_predictor(
    alpha: f64,
    alpha_prime: f64,
    beta: f64,
    lambda: f64,
    d: usize,
    eps: f64,
    c1: f64,
    c2: f64,
) -> Result<ComplexityPrediction> {
    if !(alpha > 0.0 && alpha_prime > 0.0 && beta > 0.0 && eps > 0.0 && c2 > 0.0) {
        return Err(Error::domain("rates, ε and c2 must be positive"));
    }
    if !(lambda > 0.5 && lambda <= 1.0) && lambda != 0.5 {
        return Err(Error::domain(format!("λ = {lambda} outside (1/2, 1]")));
    }
    let d = d as f64;
    let gap = d - beta * lambda;
    let critical = gap.abs() <= 1e-12 * d.max(1.0);
    let mut theta = 2.0 * lambda + 1.0 / alpha_prime;
    if !critical && gap > 0.0 {
        theta += gap / alpha;
    }
    let levels = ((1.0 / eps).log2() / alpha + c1).ceil().max(0.0) as usize;
    let big_l = levels as f64;
    let e_l = if critical {
        big_l.max(1.0)
    } else if gap < 0.0 {
        1.0
    } else {
        (big_l * gap / (lambda + 1.0)).exp2()
    };
    let n0 = ((2.0 * alpha * big_l).exp2() * e_l / c2).powf(lambda);
    let decay = (d + beta) * lambda / (lambda + 1.0);
    let n_schedule = (0..=levels)
        .map(|l| (n0 * (-(l as f64) * decay).exp2()).ceil().max(1.0) as u64)
        .collect();
    Ok(ComplexityPrediction {
        theta,
        log_factor: critical,
        levels,
        n_schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_regimes() {
        let a = complexity_predictor(2.0, 2.0, 4.0, 0.5, 1, 1e-3, 0.0, 1.0).unwrap();
        assert!((a.theta - 1.5).abs() < 1e-15);
        assert!(!a.log_factor);
        let b = complexity_predictor(2.0, 2.0, 4.0, 0.5, 2, 1e-3, 0.0, 1.0).unwrap();
        assert!((b.theta - 1.5).abs() < 1e-15);
        assert!(b.log_factor);
        let c = complexity_predictor(2.0, 2.0, 2.0, 1.0, 3, 1e-3, 0.0, 1.0).unwrap();
        assert!((c.theta - 3.0).abs() < 1e-15);
        assert!(!c.log_factor);
    }

    #[test]
    fn schedule_shape() {
        let p = complexity_predictor(2.0, 2.0, 4.0, 1.0, 1, 1.0 / 1024.0, 0.0, 1.0).unwrap();
        assert_eq!(p.levels, 5);
        assert_eq!(p.n_schedule.len(), 6);
        // N_0 = 2^{2·2·5} and the ratio 2^{−(1+4)/2}
        assert_eq!(p.n_schedule[0], 1 << 20);
        assert_eq!(p.n_schedule[2], 1 << 15);
        assert!(p.n_schedule.windows(2).all(|w| w[0] >= w[1]));
        let shifted = complexity_predictor(2.0, 2.0, 4.0, 1.0, 1, 1.0 / 1024.0, 1.0, 1.0).unwrap();
        assert_eq!(shifted.levels, 6);
        assert!(complexity_predictor(2.0, 2.0, 4.0, 0.3, 1, 1e-3, 0.0, 1.0).is_err());
    }
}
