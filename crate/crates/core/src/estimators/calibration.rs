use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PdeModel;
use crate::{Error, Result};

/// A priori bias bound C_FE h^α + C_trunc s^{−α′}.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasModel {
    pub c_fe: f64,
    pub c_trunc: f64,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub nu: f64,
    pub d: usize,
    pub warnings: Vec<String>,
}

impl BiasModel {
    /// α = 2 and α′ = 2ν/d.
    pub fn new(c_fe: f64, c_trunc: f64, nu: f64, d: usize) -> Result<Self> {
        if !(c_fe > 0.0 && c_trunc > 0.0 && nu > 0.0) || d == 0 {
            return Err(Error::domain(format!(
                "bias constants must be positive (C_FE = {c_fe}, C_trunc = {c_trunc}, ν = {nu}, d = {d})"
            )));
        }
        Ok(Self {
            c_fe,
            c_trunc,
            alpha: 2.0,
            alpha_prime: 2.0 * nu / d as f64,
            nu,
            d,
            warnings: Vec::new(),
        })
    }

    pub fn bias(&self, h: f64, s: usize) -> f64 {
        self.c_fe * h.powf(self.alpha) + self.c_trunc * (s as f64).powf(-self.alpha_prime)
    }

    /// (C_trunc / C_FE)^{d/(2ν)}.
    pub fn c_bal(&self) -> f64 {
        (self.c_trunc / self.c_fe).powf(self.d as f64 / (2.0 * self.nu))
    }

    pub fn choose_s(&self, h: f64) -> usize {
        choose_sl(self.c_bal(), h, self.d, self.nu)
    }
}

/// s_L = ⌈C_bal h_L^{−d/ν}⌉, at least 1.
///
/// Products that land within a relative 1e-12 of an integer are rounded to it.
pub fn choose_sl(c_bal: f64, h: f64, d: usize, nu: f64) -> usize {
    let x = c_bal * h.powf(-(d as f64) / nu);
    let r = x.round();
    let s = if (x - r).abs() <= 1e-12 * r.max(1.0) { r } else { x.ceil() };
    (s as usize).max(1)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationOptions {
    /// Model levels making up the h ladder.
    pub h_levels: Vec<usize>,
    /// Level of the reference mesh h*.
    pub reference_level: usize,
    pub s_ladder: Vec<usize>,
    pub s_star: usize,
    pub n_mc: usize,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            h_levels: vec![0, 1, 2, 3, 4],
            reference_level: 6,
            s_ladder: vec![2, 4, 8, 16, 32, 64],
            s_star: 200,
            n_mc: 1000,
            seed: 0,
        }
    }
}

/// Estimated mean differences to the reference solution with standard errors.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CalibrationLadder {
    pub h: Vec<f64>,
    pub h_err: Vec<f64>,
    pub h_se: Vec<f64>,
    pub s: Vec<usize>,
    pub s_err: Vec<f64>,
    pub s_se: Vec<f64>,
    pub h_star: f64,
    pub s_star: usize,
    pub n_mc: usize,
}

const CALIBRATION_STREAM: u64 = 1 << 62;
const BATCH: usize = 1024;

fn monotone_warnings(name: &str, err: &[f64], se: &[f64]) -> Vec<String> {
    let mut out = Vec::new();
    for i in 1..err.len() {
        let (a, b) = (err[i - 1].abs(), err[i].abs());
        if b > a + 2.0 * (se[i - 1] + se[i]) {
            out.push(format!(
                "{name} ladder not decreasing at step {i}: {a:.3e} -> {b:.3e} (standard errors {:.1e}, {:.1e})",
                se[i - 1], se[i]
            ));
        }
    }
    out
}

/// Estimates C_FE and C_trunc from coupled Monte Carlo differences.
///
/// Every sample y ∈ R^{s*} is shared by all solves. The h ladder uses
/// F_{h,s*} − F_{h*,s*}; the s ladder uses F_{h*,s} − F_{h*,s*}, averaged with
/// the reflected tail (y_1..y_s, −y_{s+1}..) to cancel the leading-order noise.
/// Each mean difference is scaled by the reference correction
/// 1/(h² − h*²) or 1/(s^{−α′} − s*^{−α′}) and the constants are the largest
/// such ratio on each ladder.
pub fn calibrate_bias<M: PdeModel>(model: &M, nu: f64, opts: &CalibrationOptions) -> Result<(BiasModel, CalibrationLadder)> {
    let d = model.spatial_dim();
    if opts.n_mc < 2 {
        return Err(Error::config("calibration needs at least two samples"));
    }
    if opts.h_levels.is_empty() || opts.s_ladder.is_empty() {
        return Err(Error::config("calibration ladders must be non-empty"));
    }
    if let Some(&l) = opts.h_levels.iter().find(|&&l| l >= opts.reference_level) {
        return Err(Error::config(format!(
            "ladder level {l} is not coarser than the reference level {}",
            opts.reference_level
        )));
    }
    if let Some(&s) = opts.s_ladder.iter().find(|&&s| s == 0 || s >= opts.s_star) {
        return Err(Error::config(format!("ladder dimension {s} must lie in 1..{}", opts.s_star)));
    }
    let alpha_prime = 2.0 * nu / d as f64;
    let s_star = opts.s_star;
    let n_h = opts.h_levels.len();
    let n_terms = n_h + opts.s_ladder.len();

    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    rng.set_stream(CALIBRATION_STREAM);
    let mut sum = vec![0.0; n_terms];
    let mut sum_sq = vec![0.0; n_terms];
    let mut left = opts.n_mc;
    while left > 0 {
        let batch = left.min(BATCH);
        let ys: Vec<f64> = (0..batch * s_star).map(|_| StandardNormal.sample(&mut rng)).collect();
        let rows: Vec<Vec<f64>> = (0..batch)
            .into_par_iter()
            .map(|b| -> Result<Vec<f64>> {
                let y = &ys[b * s_star..(b + 1) * s_star];
                let reference = model.functional(opts.reference_level, y)?;
                let mut row = Vec::with_capacity(n_terms);
                for &l in &opts.h_levels {
                    row.push(model.functional(l, y)? - reference);
                }
                let mut reflected = y.to_vec();
                for &s in &opts.s_ladder {
                    for (k, v) in reflected.iter_mut().enumerate() {
                        *v = if k < s { y[k] } else { -y[k] };
                    }
                    let paired = 0.5 * (reference + model.functional(opts.reference_level, &reflected)?);
                    row.push(model.functional(opts.reference_level, &y[..s])? - paired);
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        for row in &rows {
            for (k, v) in row.iter().enumerate() {
                sum[k] += v;
                sum_sq[k] += v * v;
            }
        }
        left -= batch;
    }
    let n = opts.n_mc as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let se: Vec<f64> = sum_sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| ((q / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
        .collect();

    let h_star = model.mesh_width(opts.reference_level);
    let ladder = CalibrationLadder {
        h: opts.h_levels.iter().map(|&l| model.mesh_width(l)).collect(),
        h_err: mean[..n_h].to_vec(),
        h_se: se[..n_h].to_vec(),
        s: opts.s_ladder.clone(),
        s_err: mean[n_h..].to_vec(),
        s_se: se[n_h..].to_vec(),
        h_star,
        s_star,
        n_mc: opts.n_mc,
    };
    let c_fe = ladder
        .h
        .iter()
        .zip(&ladder.h_err)
        .map(|(h, e)| e.abs() / (h * h - h_star * h_star))
        .fold(0.0, f64::max);
    let tail_star = (s_star as f64).powf(-alpha_prime);
    let c_trunc = ladder
        .s
        .iter()
        .zip(&ladder.s_err)
        .map(|(&s, e)| e.abs() / ((s as f64).powf(-alpha_prime) - tail_star))
        .fold(0.0, f64::max);
    let mut model_out = BiasModel::new(c_fe, c_trunc, nu, d).map_err(|e| match e {
        Error::Domain(msg) => Error::numerical(format!("calibration produced degenerate constants: {msg}")),
        other => other,
    })?;
    model_out.warnings.extend(monotone_warnings("h", &ladder.h_err, &ladder.h_se));
    model_out.warnings.extend(monotone_warnings("s", &ladder.s_err, &ladder.s_se));
    Ok((model_out, ladder))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{PdeProblem, ProblemKind};
    use crate::random_field::{nystrom_eigendecomposition, MaternParams};
    use std::sync::Arc;

    #[test]
    fn choose_sl_examples() {
        assert_eq!(choose_sl(0.38, 1.0 / 128.0, 1, 1.0), 49);
        assert_eq!(choose_sl(0.76, 1.0 / 128.0, 1, 2.0), 9);
        assert_eq!(choose_sl(1.0, 1.0 / 128.0, 1, 1.0), 128);
        assert_eq!(choose_sl(1.0, 1.0 / 64.0, 1, 2.0), 8);
        assert_eq!(choose_sl(1.0, 1.0 / 64.0, 2, 1.0), 4096);
    }

    #[test]
    fn s_l_balances_the_bound() {
        let m = BiasModel::new(0.3, 0.02, 1.5, 1).unwrap();
        for k in 3..10 {
            let h = (-(k as f64)).exp2();
            let s = m.choose_s(h);
            assert!(m.c_trunc * (s as f64).powf(-m.alpha_prime) <= m.c_fe * h * h * (1.0 + 1e-12));
            assert!(m.bias(h, s) <= 2.0 * m.c_fe * h * h * (1.0 + 1e-12));
        }
        assert!(BiasModel::new(0.0, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn unit_coefficient_recovers_known_constant() {
        // a ≈ 1 gives F_h = 1/9 − h²/9 at x = 1/3
        let p = MaternParams::new(1.0, 1e-8, 1.0, 1).unwrap();
        let basis = Arc::new(nystrom_eigendecomposition(&p, 64).unwrap());
        let problem = PdeProblem::new(ProblemKind::OneD, 3, basis, 20).unwrap();
        let opts = CalibrationOptions {
            h_levels: vec![0, 1, 2],
            reference_level: 5,
            s_ladder: vec![2, 4],
            s_star: 20,
            n_mc: 16,
            seed: 1,
        };
        let (bias, ladder) = calibrate_bias(&problem, 1.0, &opts).unwrap();
        assert!((bias.c_fe * 9.0 - 1.0).abs() < 0.1, "C_FE = {}", bias.c_fe);
        assert_eq!(ladder.h, vec![0.125, 0.0625, 0.03125]);
        assert!(bias.warnings.is_empty());
    }

    #[test]
    fn rejects_bad_ladders() {
        let p = MaternParams::new(1.0, 1.0, 1.0, 1).unwrap();
        let basis = Arc::new(nystrom_eigendecomposition(&p, 32).unwrap());
        let problem = PdeProblem::new(ProblemKind::OneD, 3, basis, 10).unwrap();
        let bad = CalibrationOptions {
            h_levels: vec![0, 4],
            reference_level: 4,
            s_ladder: vec![2],
            s_star: 10,
            n_mc: 4,
            seed: 0,
        };
        assert!(calibrate_bias(&problem, 1.0, &bad).is_err());
        let bad = CalibrationOptions {
            h_levels: vec![0],
            s_ladder: vec![10],
            ..bad
        };
        assert!(calibrate_bias(&problem, 1.0, &bad).is_err());
    }

    #[test]
    fn warnings_flag_growth_beyond_noise() {
        assert!(monotone_warnings("h", &[1.0, 0.5, 0.2], &[0.01; 3]).is_empty());
        assert_eq!(monotone_warnings("h", &[1.0, 0.5, 0.9], &[0.01; 3]).len(), 1);
        assert!(monotone_warnings("h", &[1.0, 0.5, 0.55], &[0.1; 3]).is_empty());
    }
}
