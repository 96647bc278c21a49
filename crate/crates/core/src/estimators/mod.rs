//! Single-level and multilevel MC / QMC estimators, sample allocation, bias
//! calibration and cost models.

mod adaptive;
mod calibration;
mod complexity;
mod level;
mod pde;

pub use adaptive::{
    mlmc_run, mlqmc_adaptive, single_level_mc, single_level_qmc, AdaptiveOptions, Allocator,
    BiasEstimator, LevelMode,
};
pub use calibration::{calibrate_bias, choose_sl, BiasModel, CalibrationLadder, CalibrationOptions};
pub use complexity::{complexity_predictor, ComplexityPrediction};
pub use level::{mc_stream, McLevel, QmcLevel};
pub use pde::{PdeProblem, ProblemKind};

use serde::Serialize;

use crate::{Error, Result};

/// A hierarchy of approximations F_0, F_1, … of one quantity of interest.
pub trait MultilevelProblem: Sync {
    /// Number of Gaussian parameters s_ℓ used on level ℓ.
    fn dimension(&self, level: usize) -> usize;

    /// F_ℓ(y) − F_{ℓ−1}(y) with F_{−1} = 0; `y.len() == dimension(level)`.
    fn difference(&self, level: usize, y: &[f64]) -> Result<f64>;

    /// Model cost of one evaluation of the level-ℓ difference.
    fn cost(&self, level: usize) -> Result<f64>;

    /// A priori bias bound when `finest` is the finest level, if known.
    fn bias(&self, _finest: usize) -> Option<f64> {
        None
    }
}

/// Spatial discretisations indexed by refinement level.
pub trait PdeModel: Sync {
    fn spatial_dim(&self) -> usize;

    /// Mesh width h of refinement level `level`.
    fn mesh_width(&self, level: usize) -> f64;

    /// Quantity of interest on `level` with the KL expansion truncated at `y.len()` terms.
    fn functional(&self, level: usize, y: &[f64]) -> Result<f64>;

    /// Cost of a fine/coarse pair on `level` (coarse uses `s_coarse` terms).
    fn difference_cost(&self, level: usize, s_fine: usize, s_coarse: usize) -> Result<f64>;

    /// Cost of one evaluation on `level`, without a coarse partner.
    fn single_cost(&self, level: usize, s: usize) -> Result<f64>;
}

/// Truncation dimension across levels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SPolicy {
    /// The same s on every level.
    Fixed(usize),
    /// s_ℓ = ⌈C_bal h_ℓ^{−d/ν}⌉, capped at `cap`.
    Variable { c_bal: f64, nu: f64, cap: usize },
}

/// Multilevel view of a [`PdeModel`].
pub struct Hierarchy<'a, M: PdeModel> {
    pub model: &'a M,
    pub s_policy: SPolicy,
    pub bias_model: Option<BiasModel>,
}

impl<'a, M: PdeModel> Hierarchy<'a, M> {
    pub fn new(model: &'a M, s_policy: SPolicy, bias_model: Option<BiasModel>) -> Self {
        Self {
            model,
            s_policy,
            bias_model,
        }
    }

    pub fn s(&self, level: usize) -> usize {
        match self.s_policy {
            SPolicy::Fixed(s) => s,
            SPolicy::Variable { c_bal, nu, cap } => {
                let d = self.model.spatial_dim();
                choose_sl(c_bal, self.model.mesh_width(level), d, nu).clamp(1, cap)
            }
        }
    }
}

impl<M: PdeModel> MultilevelProblem for Hierarchy<'_, M> {
    fn dimension(&self, level: usize) -> usize {
        self.s(level)
    }

    fn difference(&self, level: usize, y: &[f64]) -> Result<f64> {
        let fine = self.model.functional(level, y)?;
        if level == 0 {
            return Ok(fine);
        }
        let s_coarse = self.s(level - 1).min(y.len());
        Ok(fine - self.model.functional(level - 1, &y[..s_coarse])?)
    }

    fn cost(&self, level: usize) -> Result<f64> {
        let s_coarse = if level == 0 { 0 } else { self.s(level - 1) };
        self.model.difference_cost(level, self.s(level), s_coarse)
    }

    fn bias(&self, finest: usize) -> Option<f64> {
        self.bias_model
            .as_ref()
            .map(|b| b.bias(self.model.mesh_width(finest), self.s(finest)))
    }
}

/// One-level view: level 0 evaluates F on the given refinement level.
pub struct SingleLevel<'a, M: PdeModel> {
    pub model: &'a M,
    pub level: usize,
    pub s: usize,
    pub bias_model: Option<BiasModel>,
}

impl<M: PdeModel> MultilevelProblem for SingleLevel<'_, M> {
    fn dimension(&self, _level: usize) -> usize {
        self.s
    }

    fn difference(&self, level: usize, y: &[f64]) -> Result<f64> {
        if level != 0 {
            return Err(Error::config("single-level problem has only level 0"));
        }
        self.model.functional(self.level, y)
    }

    fn cost(&self, _level: usize) -> Result<f64> {
        self.model.single_cost(self.level, self.s)
    }

    fn bias(&self, _finest: usize) -> Option<f64> {
        self.bias_model
            .as_ref()
            .map(|b| b.bias(self.model.mesh_width(self.level), self.s))
    }
}

/// Summary of one level of an estimator.
#[derive(Clone, Debug, Default, Serialize)]
pub struct LevelEstimate {
    pub level: usize,
    pub s: usize,
    pub mean: f64,
    /// Variance of the level estimator (not of a single sample).
    pub shift_var: f64,
    /// Points per shift (QMC) or samples (MC).
    pub n: u64,
    /// Number of random shifts; 1 for MC.
    pub r: usize,
    pub cost_model: f64,
    pub cost_wall: f64,
    pub evaluations: u64,
}

/// Result of a multilevel (or single-level) run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct MlResult {
    pub estimate: f64,
    pub levels: Vec<LevelEstimate>,
    pub total_variance: f64,
    pub bias_estimate: f64,
    pub total_cost_model: f64,
    pub total_cost_wall: f64,
    pub eps: f64,
    pub seed: u64,
}

impl MlResult {
    pub(crate) fn from_levels(levels: Vec<LevelEstimate>, bias_estimate: f64, eps: f64, seed: u64) -> Self {
        let estimate = levels.iter().map(|l| l.mean).sum();
        let total_variance = levels.iter().map(|l| l.shift_var).sum();
        let total_cost_model = levels.iter().map(|l| l.cost_model).sum();
        let total_cost_wall = levels.iter().map(|l| l.cost_wall).sum();
        Self {
            estimate,
            levels,
            total_variance,
            bias_estimate,
            total_cost_model,
            total_cost_wall,
            eps,
            seed,
        }
    }

    /// √(variance + bias²).
    pub fn rmse(&self) -> f64 {
        (self.total_variance + self.bias_estimate * self.bias_estimate).sqrt()
    }
}

/// (1/(R(R−1))) Σ_k (Q_k − mean)².
pub fn shift_variance(per_shift_means: &[f64]) -> Result<f64> {
    let r = per_shift_means.len();
    if r < 2 {
        return Err(Error::config("variance over random shifts needs at least two shifts"));
    }
    let mean = per_shift_means.iter().sum::<f64>() / r as f64;
    let ss: f64 = per_shift_means.iter().map(|q| (q - mean) * (q - mean)).sum();
    Ok(ss / (r as f64 * (r as f64 - 1.0)))
}

/// |e / mean|.
pub fn relative_std_error(e: f64, mean: f64) -> Result<f64> {
    if mean == 0.0 {
        return Err(Error::domain("relative error undefined for a zero mean"));
    }
    Ok((e / mean).abs())
}

/// N_ℓ = ⌈2 ε⁻² √(V_ℓ/C_ℓ) Σ_k √(V_k C_k)⌉ (variance budget ε²/2).
pub fn giles_sample_sizes(v: &[f64], c: &[f64], eps: f64) -> Result<Vec<u64>> {
    if v.len() != c.len() || v.is_empty() {
        return Err(Error::config("variance and cost sequences must be non-empty and equal in length"));
    }
    if !(eps > 0.0) || c.iter().any(|x| !(*x > 0.0)) || v.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::domain("need ε > 0, C_ℓ > 0 and V_ℓ ≥ 0"));
    }
    let total: f64 = v.iter().zip(c).map(|(v, c)| (v * c).sqrt()).sum();
    Ok(v.iter()
        .zip(c)
        .map(|(v, c)| {
            let n = 2.0 / (eps * eps) * (v / c).sqrt() * total;
            // guard against 15.999999… from rounding
            let r = n.round();
            if (n - r).abs() <= 1e-9 * r.max(1.0) {
                r as u64
            } else {
                n.ceil() as u64
            }
        })
        .collect())
}

/// (2 s_L + 13) h_ℓ⁻¹ N R.
pub fn cost_model_1d(s_l: usize, h: f64, n: u64, r: usize) -> f64 {
    (2.0 * s_l as f64 + 13.0) / h * n as f64 * r as f64
}

/// (2 s + 9) h⁻¹ N R for a single-level solve.
pub fn cost_model_1d_single(s: usize, h: f64, n: u64, r: usize) -> f64 {
    (2.0 * s as f64 + 9.0) / h * n as f64 * r as f64
}
