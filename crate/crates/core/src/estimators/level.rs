use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{shift_variance, LevelEstimate, MultilevelProblem};
use crate::qmc_points::{draw_shift, gaussian_lattice_point_into, GeneratingVector};
use crate::{Error, Result};

/// Randomly shifted embedded lattice rule on one level, grown by doubling.
#[derive(Clone, Debug)]
pub struct QmcLevel {
    pub level: usize,
    pub s: usize,
    /// Points per shift evaluated so far.
    pub n: u64,
    shifts: Vec<Vec<f64>>,
    sums: Vec<f64>,
    pub evaluations: u64,
    pub wall: f64,
}

impl QmcLevel {
    pub fn new(level: usize, s: usize, r: usize, seed: u64) -> Result<Self> {
        if r < 2 {
            return Err(Error::config("at least two random shifts are needed"));
        }
        let shifts = (0..r)
            .map(|k| draw_shift::<f64>(seed, level, k, s).delta)
            .collect();
        Ok(Self {
            level,
            s,
            n: 0,
            shifts,
            sums: vec![0.0; r],
            evaluations: 0,
            wall: 0.0,
        })
    }

    pub fn shifts(&self) -> usize {
        self.shifts.len()
    }

    /// Grows every shifted rule to `n` points, evaluating only points that are
    /// new in the larger embedded rule.
    pub fn extend<P: MultilevelProblem + ?Sized>(
        &mut self,
        problem: &P,
        z: &GeneratingVector,
        n: u64,
        record_wall: bool,
    ) -> Result<()> {
        if !n.is_power_of_two() || n < self.n.max(1) {
            return Err(Error::config(format!(
                "cannot grow a {}-point rule to {n} points",
                self.n
            )));
        }
        if n > z.n_points() {
            return Err(Error::Resource(format!(
                "{n} points requested but the generating vector supports {}",
                z.n_points()
            )));
        }
        if self.s > z.dimension() {
            return Err(Error::config(format!(
                "level needs {} dimensions, generating vector has {}",
                self.s,
                z.dimension()
            )));
        }
        if n == self.n {
            return Ok(());
        }
        let start = Instant::now();
        // indices of the n-point rule not already in the old rule
        let stride = if self.n == 0 { u64::MAX } else { n / self.n };
        let r = self.shifts.len();
        let tasks: Vec<(usize, u64)> = (0..r)
            .flat_map(|k| (1..=n).filter(move |i| i % stride != 0).map(move |i| (k, i)))
            .collect();
        let s = self.s;
        let level = self.level;
        let shifts = &self.shifts;
        let values: Vec<f64> = tasks
            .par_iter()
            .map(|&(k, i)| {
                let mut y = vec![0.0; s];
                gaussian_lattice_point_into(i, z, n, &shifts[k], &mut y);
                problem.difference(level, &y)
            })
            .collect::<Result<_>>()?;
        for (&(k, _), v) in tasks.iter().zip(&values) {
            self.sums[k] += v;
        }
        self.evaluations += values.len() as u64;
        self.n = n;
        if record_wall {
            self.wall += start.elapsed().as_secs_f64();
        }
        Ok(())
    }

    pub fn per_shift_means(&self) -> Vec<f64> {
        self.sums.iter().map(|s| s / self.n as f64).collect()
    }

    pub fn mean(&self) -> f64 {
        let q = self.per_shift_means();
        q.iter().sum::<f64>() / q.len() as f64
    }

    pub fn variance(&self) -> Result<f64> {
        shift_variance(&self.per_shift_means())
    }

    pub fn estimate(&self, cost_per_sample: f64) -> Result<LevelEstimate> {
        Ok(LevelEstimate {
            level: self.level,
            s: self.s,
            mean: self.mean(),
            shift_var: self.variance()?,
            n: self.n,
            r: self.shifts.len(),
            cost_model: cost_per_sample * self.n as f64 * self.shifts.len() as f64,
            cost_wall: self.wall,
            evaluations: self.evaluations,
        })
    }
}

/// ChaCha stream id of the Monte Carlo sampler on `level`, disjoint from shift streams.
pub fn mc_stream(level: usize) -> u64 {
    (1u64 << 63) | level as u64
}

const MC_BATCH: usize = 4096;

/// Plain Monte Carlo on one level with running mean and variance.
#[derive(Clone, Debug)]
pub struct McLevel {
    pub level: usize,
    pub s: usize,
    rng: ChaCha20Rng,
    pub count: u64,
    mean: f64,
    m2: f64,
    pub wall: f64,
}

impl McLevel {
    pub fn new(level: usize, s: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(mc_stream(level));
        Self {
            level,
            s,
            rng,
            count: 0,
            mean: 0.0,
            m2: 0.0,
            wall: 0.0,
        }
    }

    /// Draws `extra` further samples.
    pub fn add_samples<P: MultilevelProblem + ?Sized>(&mut self, problem: &P, extra: u64, record_wall: bool) -> Result<()> {
        let start = Instant::now();
        let mut left = extra;
        while left > 0 {
            let batch = left.min(MC_BATCH as u64) as usize;
            let ys: Vec<f64> = (0..batch * self.s)
                .map(|_| StandardNormal.sample(&mut self.rng))
                .collect();
            let s = self.s;
            let level = self.level;
            let values: Vec<f64> = (0..batch)
                .into_par_iter()
                .map(|b| problem.difference(level, &ys[b * s..(b + 1) * s]))
                .collect::<Result<_>>()?;
            for v in values {
                self.count += 1;
                let delta = v - self.mean;
                self.mean += delta / self.count as f64;
                self.m2 += delta * (v - self.mean);
            }
            left -= batch as u64;
        }
        if record_wall {
            self.wall += start.elapsed().as_secs_f64();
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance of one sample.
    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2 / (self.count - 1) as f64
    }

    /// Variance of the sample mean.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        self.sample_variance() / self.count as f64
    }

    pub fn estimate(&self, cost_per_sample: f64) -> LevelEstimate {
        LevelEstimate {
            level: self.level,
            s: self.s,
            mean: self.mean,
            shift_var: self.variance(),
            n: self.count,
            r: 1,
            cost_model: cost_per_sample * self.count as f64,
            cost_wall: self.wall,
            evaluations: self.count,
        }
    }
}
