use super::level::{McLevel, QmcLevel};
use super::{giles_sample_sizes, LevelEstimate, MlResult, MultilevelProblem};
use crate::qmc_points::GeneratingVector;
use crate::{Error, Result};

/// How the bias is estimated when deciding whether to add a level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BiasEstimator {
    /// The problem's a priori bound, falling back to Richardson when it has none.
    Model,
    /// |Q_L(F_L − F_{L−1})| / (2^α − 1).
    Richardson { alpha: f64 },
}

/// Level selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LevelMode {
    /// Add levels while L < 2 or the bias exceeds ε/√2, up to L = cap.
    Adaptive { cap: usize },
    /// Exactly this many levels, all present from the start.
    Fixed(usize),
}

/// Sample allocation for multilevel Monte Carlo.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Allocator {
    /// Closed-form optimal N_ℓ from estimated variances, re-estimated until stable.
    Giles,
    /// Greedy doubling on the level with the largest variance-to-cost ratio.
    GreedyGw,
}

#[derive(Clone, Copy, Debug)]
pub struct AdaptiveOptions {
    /// Random shifts R.
    pub shifts: usize,
    pub levels: LevelMode,
    pub bias: BiasEstimator,
    /// Initial Monte Carlo samples on every new level.
    pub warmup: u64,
    pub record_wall: bool,
    pub seed: u64,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            shifts: 16,
            levels: LevelMode::Adaptive { cap: 12 },
            bias: BiasEstimator::Model,
            warmup: 100,
            record_wall: false,
            seed: 0,
        }
    }
}

fn bias_estimate<P: MultilevelProblem + ?Sized>(problem: &P, opts: &AdaptiveOptions, finest: usize, finest_mean: f64) -> f64 {
    let richardson = |alpha: f64| {
        if finest == 0 {
            0.0
        } else {
            finest_mean.abs() / (alpha.exp2() - 1.0)
        }
    };
    match opts.bias {
        BiasEstimator::Model => problem.bias(finest).unwrap_or_else(|| richardson(2.0)),
        BiasEstimator::Richardson { alpha } => richardson(alpha),
    }
}

enum Step {
    AddLevel,
    Done,
}

fn next_step<P: MultilevelProblem + ?Sized>(
    problem: &P,
    opts: &AdaptiveOptions,
    eps: f64,
    levels: &[LevelEstimate],
) -> Result<Step> {
    let finest = levels.len() - 1;
    match opts.levels {
        LevelMode::Fixed(n) => Ok(if levels.len() < n { Step::AddLevel } else { Step::Done }),
        LevelMode::Adaptive { cap } => {
            let bias = bias_estimate(problem, opts, finest, levels[finest].mean);
            if finest < 2 || bias > eps / std::f64::consts::SQRT_2 {
                if finest + 1 > cap {
                    let partial = MlResult::from_levels(levels.to_vec(), bias, eps, opts.seed);
                    return Err(Error::LevelCap {
                        cap,
                        partial: Box::new(partial),
                    });
                }
                Ok(Step::AddLevel)
            } else {
                Ok(Step::Done)
            }
        }
    }
}

/// Levels to add next: all of them up front when the count is fixed, else one.
fn new_levels(opts: &AdaptiveOptions, have: usize) -> usize {
    match opts.levels {
        LevelMode::Fixed(n) if have == 0 => n.max(1),
        _ => 1,
    }
}

fn argmax_profit(v: &[f64], c: &[f64]) -> usize {
    let mut best = 0;
    let mut best_ratio = f64::NEG_INFINITY;
    for (l, (v, c)) in v.iter().zip(c).enumerate() {
        let ratio = v / c;
        if ratio > best_ratio {
            best = l;
            best_ratio = ratio;
        }
    }
    best
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {eps}")));
    }
    Ok(())
}

/// Multilevel randomly shifted lattice rules with greedy doubling of N_ℓ.
///
/// Starting from one point per shift on each new level, N is doubled on the
/// level with the largest V_ℓ/C_ℓ (lowest level on ties) until Σ V_ℓ ≤ ε²/2.
/// Adaptive mode adds one level at a time; fixed mode starts with all of them.
pub fn mlqmc_adaptive<P: MultilevelProblem + ?Sized>(
    problem: &P,
    z: &GeneratingVector,
    eps: f64,
    opts: &AdaptiveOptions,
) -> Result<MlResult> {
    check_eps(eps)?;
    let mut levels: Vec<QmcLevel> = Vec::new();
    let mut unit_costs: Vec<f64> = Vec::new();
    let budget = eps * eps / 2.0;
    let r = opts.shifts as f64;
    loop {
        for l in levels.len()..levels.len() + new_levels(opts, levels.len()) {
            let mut fresh = QmcLevel::new(l, problem.dimension(l), opts.shifts, opts.seed)?;
            fresh.extend(problem, z, 1, opts.record_wall)?;
            levels.push(fresh);
            unit_costs.push(problem.cost(l)?);
        }
        loop {
            let v: Vec<f64> = levels.iter().map(|q| q.variance()).collect::<Result<_>>()?;
            if v.iter().sum::<f64>() <= budget {
                break;
            }
            let c: Vec<f64> = levels
                .iter()
                .zip(&unit_costs)
                .map(|(q, k)| k * q.n as f64 * r)
                .collect();
            let best = argmax_profit(&v, &c);
            let n = levels[best].n * 2;
            levels[best].extend(problem, z, n, opts.record_wall)?;
        }
        let estimates: Vec<LevelEstimate> = levels
            .iter()
            .zip(&unit_costs)
            .map(|(q, k)| q.estimate(*k))
            .collect::<Result<_>>()?;
        if let Step::Done = next_step(problem, opts, eps, &estimates)? {
            let finest = estimates.len() - 1;
            let bias = bias_estimate(problem, opts, finest, estimates[finest].mean);
            return Ok(MlResult::from_levels(estimates, bias, eps, opts.seed));
        }
    }
}

/// Multilevel Monte Carlo with 100 warm-up samples per new level and either allocator.
pub fn mlmc_run<P: MultilevelProblem + ?Sized>(
    problem: &P,
    eps: f64,
    opts: &AdaptiveOptions,
    allocator: Allocator,
) -> Result<MlResult> {
    check_eps(eps)?;
    if opts.warmup < 2 {
        return Err(Error::config("Monte Carlo warm-up needs at least two samples"));
    }
    let mut levels: Vec<McLevel> = Vec::new();
    let mut unit_costs: Vec<f64> = Vec::new();
    let budget = eps * eps / 2.0;
    loop {
        for l in levels.len()..levels.len() + new_levels(opts, levels.len()) {
            let mut fresh = McLevel::new(l, problem.dimension(l), opts.seed);
            fresh.add_samples(problem, opts.warmup, opts.record_wall)?;
            levels.push(fresh);
            unit_costs.push(problem.cost(l)?);
        }
        match allocator {
            Allocator::Giles => loop {
                let v: Vec<f64> = levels.iter().map(|m| m.sample_variance()).collect();
                let target = giles_sample_sizes(&v, &unit_costs, eps)?;
                let mut grew = false;
                for (m, &t) in levels.iter_mut().zip(&target) {
                    if t > m.count {
                        m.add_samples(problem, t - m.count, opts.record_wall)?;
                        grew = true;
                    }
                }
                if !grew {
                    break;
                }
            },
            Allocator::GreedyGw => loop {
                let v: Vec<f64> = levels.iter().map(|m| m.variance()).collect();
                if v.iter().sum::<f64>() <= budget {
                    break;
                }
                let c: Vec<f64> = levels
                    .iter()
                    .zip(&unit_costs)
                    .map(|(m, k)| k * m.count as f64)
                    .collect();
                let best = argmax_profit(&v, &c);
                let extra = levels[best].count;
                levels[best].add_samples(problem, extra, opts.record_wall)?;
            },
        }
        let estimates: Vec<LevelEstimate> = levels
            .iter()
            .zip(&unit_costs)
            .map(|(m, k)| m.estimate(*k))
            .collect();
        if let Step::Done = next_step(problem, opts, eps, &estimates)? {
            let finest = estimates.len() - 1;
            let bias = bias_estimate(problem, opts, finest, estimates[finest].mean);
            return Ok(MlResult::from_levels(estimates, bias, eps, opts.seed));
        }
    }
}

/// Single-level randomly shifted lattice rule, N doubled until the shift variance is ≤ ε²/2.
pub fn single_level_qmc<P: MultilevelProblem + ?Sized>(
    problem: &P,
    z: &GeneratingVector,
    eps: f64,
    opts: &AdaptiveOptions,
) -> Result<MlResult> {
    let opts = AdaptiveOptions {
        levels: LevelMode::Fixed(1),
        ..*opts
    };
    mlqmc_adaptive(problem, z, eps, &opts)
}

/// Single-level Monte Carlo with N = ⌈2 V ε⁻²⌉ re-estimated after the warm-up.
pub fn single_level_mc<P: MultilevelProblem + ?Sized>(problem: &P, eps: f64, opts: &AdaptiveOptions) -> Result<MlResult> {
    let opts = AdaptiveOptions {
        levels: LevelMode::Fixed(1),
        ..*opts
    };
    mlmc_run(problem, eps, &opts, Allocator::Giles)
}
