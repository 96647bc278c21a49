//! Weight schedules and component-by-component lattice construction.
//!
//! The weights are of product-and-order-dependent (POD) form
//! `γ_u = Γ_{|u|} Π_{j∈u} γ_j` with `γ_∅ = 1`. Construction minimises the
//! shift-averaged worst-case error of the weighted shift-invariant kernel
//! built from the Bernoulli polynomial `B2(x) = x² - x + 1/6`:
//!
//! ```text
//! e²(z) = Σ_{∅≠u} γ_u (1/N) Σ_k Π_{j∈u} B2(frac(k z_j / N))
//! ```

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::qmc_points::GeneratingVector;
use crate::{Error, Result};

/// Λ_n from `Λ_0 = 1`, `Λ_n = Σ_{i<n} C(n,i) Λ_i` (ordered set partitions).
pub fn fubini_lambda(n: usize) -> Result<u128> {
    let overflow = || Error::Range(format!("Λ_{n} overflows 128-bit integers"));
    let mut lambda: Vec<u128> = vec![1];
    // Pascal row, extended as n grows
    let mut binom: Vec<u128> = vec![1];
    for m in 1..=n {
        let mut next = vec![1u128; m + 1];
        for i in 1..m {
            next[i] = binom[i - 1].checked_add(binom[i]).ok_or_else(overflow)?;
        }
        binom = next;
        let mut acc: u128 = 0;
        for i in 0..m {
            let term = binom[i].checked_mul(lambda[i]).ok_or_else(overflow)?;
            acc = acc.checked_add(term).ok_or_else(overflow)?;
        }
        lambda.push(acc);
    }
    Ok(lambda[n])
}

/// Whether `Λ_n ≤ n! / α^n`, for `0 < α ≤ ln 2`.
pub fn check_lambda_bound(n: usize, alpha: f64) -> Result<bool> {
    if !(alpha > 0.0 && alpha <= std::f64::consts::LN_2) {
        return Err(Error::domain(format!("α must lie in (0, ln 2], got {alpha}")));
    }
    let lambda = fubini_lambda(n)? as f64;
    let bound_ln = ln_gamma(n as f64 + 1.0) - n as f64 * alpha.ln();
    Ok(lambda.ln() <= bound_ln + 1e-12 * bound_ln.abs().max(1.0))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// |{1 ≤ z ≤ N-1 : gcd(z, N) = 1}|.
pub fn euler_totient(n: u64) -> Result<u64> {
    if n < 2 {
        return Err(Error::domain(format!("totient defined here for N ≥ 2, got {n}")));
    }
    let mut result = n;
    let mut m = n;
    let mut p = 2;
    while p * p <= m {
        if m % p == 0 {
            while m % p == 0 {
                m /= p;
            }
            result -= result / p;
        }
        p += 1;
    }
    if m > 1 {
        result -= result / m;
    }
    Ok(result)
}

/// Riemann zeta for x > 1: direct sum to 10^6 plus Euler–Maclaurin tail.
pub fn zeta(x: f64) -> Result<f64> {
    if !(x > 1.0) {
        return Err(Error::domain(format!("ζ(x) needs x > 1, got {x}")));
    }
    const K: u32 = 1_000_000;
    let head: f64 = (1..=K).rev().map(|k| (k as f64).powf(-x)).sum();
    let kf = K as f64;
    let tail = kf.powf(1.0 - x) / (x - 1.0) - 0.5 * kf.powf(-x) + x * kf.powf(-x - 1.0) / 12.0;
    Ok(head + tail)
}

/// η_* = (2λ - 1) / (4λ).
pub fn eta_star(lambda: f64) -> f64 {
    (2.0 * lambda - 1.0) / (4.0 * lambda)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.5 && lambda <= 1.0) {
        return Err(Error::domain(format!("λ must lie in (1/2, 1], got {lambda}")));
    }
    Ok(())
}

/// ρ_j(λ) = 2 (√(2π) exp(α_j²/η_*) / (π^{2-2η_*} (1-η_*) η_*))^λ ζ(λ + 1/2).
pub fn rho_factor(alpha_j: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(alpha_j > 0.0) {
        return Err(Error::domain(format!("α_j must be positive, got {alpha_j}")));
    }
    let eta = eta_star(lambda);
    let pi = std::f64::consts::PI;
    let base = (2.0 * pi).sqrt() * (alpha_j * alpha_j / eta).exp()
        / (pi.powf(2.0 - 2.0 * eta) * (1.0 - eta) * eta);
    Ok(2.0 * base.powf(lambda) * zeta(lambda + 0.5)?)
}

/// γ_u for the index set `u` (1-based indices into `b_bar`); 1 for the empty set.
pub fn pod_weight(u: &[usize], lambda: f64, b_bar: &[f64], j_bar: f64, rho_max: f64) -> Result<f64> {
    if !(j_bar > 0.0) {
        return Err(Error::config(format!(
            "J̄ = {j_bar} must be positive (α_j too small relative to b̄_j)"
        )));
    }
    if u.is_empty() {
        return Ok(1.0);
    }
    let k = u.len() as f64;
    let mut ln_num = 2.0 * ln_gamma(k + 6.0);
    for &j in u {
        let b = *b_bar
            .get(j.wrapping_sub(1))
            .ok_or_else(|| Error::config(format!("index {j} outside b̄ sequence")))?;
        ln_num += (4.0 * b * b / j_bar).ln();
    }
    Ok(((ln_num - k * rho_max.ln()) / (1.0 + lambda)).exp())
}

/// λ from the summability exponent q of b̄ (δ used on the q < 2/3 branch).
pub fn lambda_from_summability(q: f64, delta: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("q must lie in (0,1), got {q}")));
    }
    if q == 2.0 / 3.0 {
        return Err(Error::domain(
            "q = 2/3 sits on the branch boundary; choose a branch explicitly",
        ));
    }
    if q < 2.0 / 3.0 {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::domain(format!("δ must lie in (0,1/2), got {delta}")));
        }
        Ok(1.0 / (2.0 - 2.0 * delta))
    } else {
        Ok(q / (2.0 - q))
    }
}

/// Weight parameters tied to the regularity sequence b̄.
#[derive(Clone, Debug)]
pub struct WeightSchedule {
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub b_bar: Vec<f64>,
    /// inf_j (α_j - 11 b̄_j).
    pub j_bar: f64,
    pub rho_max: f64,
}

impl WeightSchedule {
    pub fn new(lambda: f64, alpha: Vec<f64>, b_bar: Vec<f64>) -> Result<Self> {
        check_lambda(lambda)?;
        if alpha.len() != b_bar.len() || alpha.is_empty() {
            return Err(Error::config("α and b̄ must be non-empty and of equal length"));
        }
        let j_bar = alpha
            .iter()
            .zip(&b_bar)
            .map(|(a, b)| a - 11.0 * b)
            .fold(f64::INFINITY, f64::min);
        if !(j_bar > 0.0) {
            return Err(Error::config(format!(
                "need α_j > 11 b̄_j for every j (inf is {j_bar})"
            )));
        }
        let alpha_max = alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let rho_max = rho_factor(alpha_max, lambda)?;
        Ok(Self {
            lambda,
            alpha,
            b_bar,
            j_bar,
            rho_max,
        })
    }

    /// Schedule with α_j = 11 b̄_j + margin.
    pub fn with_margin(lambda: f64, b_bar: Vec<f64>, margin: f64) -> Result<Self> {
        let alpha = b_bar.iter().map(|b| 11.0 * b + margin).collect();
        Self::new(lambda, alpha, b_bar)
    }

    pub fn dimension(&self) -> usize {
        self.b_bar.len()
    }

    pub fn gamma(&self, u: &[usize]) -> Result<f64> {
        pod_weight(u, self.lambda, &self.b_bar, self.j_bar, self.rho_max)
    }

    /// Order factor Γ_ℓ, with Γ_0 = 1.
    pub fn order_weight(&self, order: usize) -> f64 {
        if order == 0 {
            return 1.0;
        }
        let k = order as f64;
        ((2.0 * ln_gamma(k + 6.0) - k * self.rho_max.ln()) / (1.0 + self.lambda)).exp()
    }

    /// Product factor γ_j (1-based j).
    pub fn product_weight(&self, j: usize) -> f64 {
        let b = self.b_bar[j - 1];
        (4.0 * b * b / self.j_bar).powf(1.0 / (1.0 + self.lambda))
    }

    /// POD weights truncated at interaction order `u_max`.
    pub fn weights(&self, u_max: usize) -> Weights {
        Weights::Pod {
            order: (0..=u_max).map(|l| self.order_weight(l)).collect(),
            product: (1..=self.dimension()).map(|j| self.product_weight(j)).collect(),
        }
    }

    pub fn rho(&self, j: usize) -> Result<f64> {
        rho_factor(self.alpha[j - 1], self.lambda)
    }
}

/// Weights accepted by the CBC search.
#[derive(Clone, Debug)]
pub enum Weights {
    /// γ_u = Π_{j∈u} γ_j.
    Product(Vec<f64>),
    /// γ_u = Γ_{|u|} Π_{j∈u} γ_j for |u| < order.len(), zero beyond.
    Pod { order: Vec<f64>, product: Vec<f64> },
}

impl Weights {
    fn dimension(&self) -> usize {
        match self {
            Weights::Product(p) => p.len(),
            Weights::Pod { product, .. } => product.len(),
        }
    }

    fn product(&self, j: usize) -> f64 {
        match self {
            Weights::Product(p) => p[j],
            Weights::Pod { product, .. } => product[j],
        }
    }

    /// Order factors Γ_0..=Γ_{u_max} for an `s`-dimensional search.
    fn order_factors(&self, s: usize) -> Vec<f64> {
        match self {
            Weights::Product(_) => vec![1.0; s + 1],
            Weights::Pod { order, .. } => order[..order.len().min(s + 1)].to_vec(),
        }
    }

    /// γ_u for a set of 0-based indices.
    pub fn gamma(&self, u: &[usize]) -> f64 {
        let prod: f64 = u.iter().map(|&j| self.product(j)).product();
        match self {
            Weights::Product(_) => prod,
            Weights::Pod { order, .. } => order.get(u.len()).map_or(0.0, |g| g * prod),
        }
    }
}

/// Bernoulli polynomial B2 on the grid r/N, exactly symmetric in r ↔ N - r.
pub fn bernoulli_table(n: u64) -> Vec<f64> {
    let n_us = n as usize;
    let mut table = vec![0.0; n_us];
    for r in 0..=n_us / 2 {
        let x = r as f64 / n as f64;
        let v = x * x - x + 1.0 / 6.0;
        table[r] = v;
        if r > 0 {
            table[n_us - r] = v;
        }
    }
    table
}

/// Output of [`cbc_construct`].
#[derive(Clone, Debug)]
pub struct CbcResult {
    pub z: GeneratingVector,
    /// Squared shift-averaged worst-case error after each chosen component.
    pub error_bound_by_dim: Vec<f64>,
}

/// Component-by-component search over admissible z_j (coprime to N).
///
/// Ties are broken towards the smallest candidate; candidate scoring runs in
/// parallel but the reduction is sequential, so results do not depend on the
/// thread count.
pub fn cbc_construct(n: u64, s: usize, weights: &Weights) -> Result<CbcResult> {
    if n < 2 {
        return Err(Error::domain(format!("CBC needs N ≥ 2, got {n}")));
    }
    if s == 0 || s > weights.dimension() {
        return Err(Error::config(format!(
            "dimension {s} not covered by {} weights",
            weights.dimension()
        )));
    }
    let n_us = usize::try_from(n).map_err(|_| Error::Range("N too large".into()))?;
    let candidates: Vec<u64> = (1..n).filter(|&z| gcd(z, n) == 1).collect();
    let table = bernoulli_table(n);
    let order = weights.order_factors(s);
    let u_max = order.len() - 1;

    // esym[k * (u_max+1) + l]: elementary symmetric polynomial of order l in
    // γ_j B2(x_kj) over the components chosen so far
    let width = u_max + 1;
    let mut esym = vec![0.0; n_us * width];
    for k in 0..n_us {
        esym[k * width] = 1.0;
    }
    let mut z = Vec::with_capacity(s);
    let mut errors = Vec::with_capacity(s);
    let mut current = 0.0;
    for dim in 0..s {
        let gamma_j = weights.product(dim);
        // q_k = Σ_{l≥1} Γ_l e_{l-1}(k)
        let q: Vec<f64> = (0..n_us)
            .map(|k| {
                let row = &esym[k * width..(k + 1) * width];
                (1..width).map(|l| order[l] * row[l - 1]).sum()
            })
            .collect();
        let scores: Vec<f64> = candidates
            .par_iter()
            .map(|&cand| {
                let mut acc = 0.0;
                let mut r: u64 = 0;
                for qk in &q {
                    acc += qk * table[r as usize];
                    r += cand;
                    if r >= n {
                        r -= n;
                    }
                }
                acc
            })
            .collect();
        let mut best = 0;
        for (idx, &score) in scores.iter().enumerate() {
            if score < scores[best] {
                best = idx;
            }
        }
        let chosen = candidates[best];
        current += gamma_j * scores[best] / n as f64;
        errors.push(current);
        z.push(chosen);
        let mut r: u64 = 0;
        for k in 0..n_us {
            let w = gamma_j * table[r as usize];
            let row = &mut esym[k * width..(k + 1) * width];
            for l in (1..width).rev() {
                row[l] += w * row[l - 1];
            }
            r = (r + chosen) % n;
        }
    }
    Ok(CbcResult {
        z: GeneratingVector::new(z, n)?,
        error_bound_by_dim: errors,
    })
}

/// Bound on the shift variance of a randomly shifted lattice rule.
#[derive(Clone, Debug)]
pub struct VarianceBound {
    pub value: f64,
    /// Largest interaction order included in the sum over u.
    pub cutoff: usize,
    /// Ratio-test estimate of the neglected part of the sum over u
    /// (infinite when the ratio does not fall below one).
    pub tail_estimate: f64,
}

/// R^{-1} (Σ_{u, |u|≤u_max} γ_u^λ Π_{j∈u} ρ_j(λ))^{1/λ} φ_tot(N)^{-1/λ} ‖F‖².
pub fn variance_bound(
    schedule: &WeightSchedule,
    n: u64,
    r: usize,
    norm_sq: f64,
    s: usize,
    u_max: usize,
) -> Result<VarianceBound> {
    if s > schedule.dimension() {
        return Err(Error::config("dimension exceeds weight schedule"));
    }
    let lambda = schedule.lambda;
    let terms: Vec<f64> = (1..=s)
        .map(|j| Ok(schedule.product_weight(j).powf(lambda) * schedule.rho(j)?))
        .collect::<Result<_>>()?;
    // elementary symmetric sums up to order u_max + 1 (the extra one feeds the tail)
    let top = (u_max + 1).min(s);
    let mut e = vec![0.0; top + 1];
    e[0] = 1.0;
    for t in &terms {
        for l in (1..=top).rev() {
            e[l] += t * e[l - 1];
        }
    }
    let order_terms: Vec<f64> = (0..=top)
        .map(|l| schedule.order_weight(l).powf(lambda) * e[l])
        .collect();
    let included = u_max.min(s);
    let sum: f64 = order_terms[..=included].iter().sum();
    let tail_estimate = if included == s {
        0.0
    } else {
        let last = order_terms[included];
        let next = order_terms[included + 1];
        let ratio = if last > 0.0 { next / last } else { f64::INFINITY };
        if ratio < 1.0 {
            next / (1.0 - ratio)
        } else {
            f64::INFINITY
        }
    };
    let phi = euler_totient(n)? as f64;
    let value = sum.powf(1.0 / lambda) * phi.powf(-1.0 / lambda) * norm_sq / r as f64;
    Ok(VarianceBound {
        value,
        cutoff: included,
        tail_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Ordered set partitions of {1..n} counted by brute force over block labellings.
    fn ordered_partitions_brute_force(n: usize) -> u128 {
        // count surjections from n elements onto k ordered blocks, summed over k
        let mut total = 0u128;
        for k in 0..=n {
            let mut count = 0u128;
            let mut labels = vec![0usize; n];
            let combos = k.pow(n as u32);
            if n == 0 {
                return 1;
            }
            for code in 0..combos {
                let mut c = code;
                for l in labels.iter_mut() {
                    *l = c % k;
                    c /= k;
                }
                let mut used = vec![false; k];
                for &l in &labels {
                    used[l] = true;
                }
                if used.iter().all(|&u| u) {
                    count += 1;
                }
            }
            total += count;
        }
        total
    }

    #[test]
    fn fubini_values() {
        assert_eq!(fubini_lambda(0).unwrap(), 1);
        assert_eq!(fubini_lambda(3).unwrap(), 13);
        assert_eq!(fubini_lambda(5).unwrap(), 541);
        for n in 0..=8 {
            assert_eq!(fubini_lambda(n).unwrap(), ordered_partitions_brute_force(n), "n={n}");
        }
        assert!(fubini_lambda(20).is_ok());
        assert!(matches!(fubini_lambda(200), Err(Error::Range(_))));
    }

    #[test]
    fn lambda_bound_holds() {
        let ln2 = std::f64::consts::LN_2;
        assert!(check_lambda_bound(3, ln2).unwrap());
        assert!(check_lambda_bound(0, 0.3).unwrap());
        for n in 0..=12 {
            assert!(check_lambda_bound(n, ln2).unwrap(), "n={n}");
        }
        assert!(check_lambda_bound(3, 1.0).is_err());
    }

    #[test]
    fn totient_values() {
        assert_eq!(euler_totient(7).unwrap(), 6);
        assert_eq!(euler_totient(8).unwrap(), 4);
        assert_eq!(euler_totient(12).unwrap(), 4);
        for n in 2..200u64 {
            let brute = (1..n).filter(|&z| gcd(z, n) == 1).count() as u64;
            assert_eq!(euler_totient(n).unwrap(), brute);
        }
        assert!(euler_totient(1).is_err());
    }

    #[test]
    fn zeta_known_values() {
        let pi = std::f64::consts::PI;
        assert!((zeta(2.0).unwrap() - pi * pi / 6.0).abs() < 1e-12);
        assert!((zeta(1.5).unwrap() - 2.612_375_348_685_488).abs() < 1e-12);
        assert!(zeta(1.0).is_err());
    }

    #[test]
    fn rho_examples() {
        assert_eq!(eta_star(1.0), 0.25);
        assert!((eta_star(0.75) - 1.0 / 6.0).abs() < 1e-15);
        // direct evaluation with ζ(3/2) = 2.612375348685488
        let pi = std::f64::consts::PI;
        let base = (2.0 * pi).sqrt() * 4f64.exp() / (pi.powf(1.5) * 0.75 * 0.25);
        let expected = 2.0 * base * 2.612_375_348_685_488;
        let rho = rho_factor(1.0, 1.0).unwrap();
        assert!((rho - expected).abs() < 1e-9 * expected);
        assert!((rho - 685.0).abs() < 1.0);
        assert!(rho_factor(1.0, 0.5).is_err());
        let mut prev = 0.0;
        for k in 1..20 {
            let r = rho_factor(0.1 * k as f64, 0.8).unwrap();
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn pod_weight_examples() {
        let b = [0.01, 0.02, 0.01];
        let lambda = 0.75;
        let rho_max = rho_factor(1.0, lambda).unwrap();
        assert_eq!(pod_weight(&[], lambda, &b, 0.1, rho_max).unwrap(), 1.0);

        // single index with λ = 1/2 (exponent 2/3), checked numerically
        let rho_half = 123.0;
        let g = pod_weight(&[1], 0.5, &b, 0.1, rho_half).unwrap();
        let expected = (720.0f64.powi(2) * 4.0 * 0.01 * 0.01 / (0.1 * rho_half)).powf(2.0 / 3.0);
        assert!((g - expected).abs() < 1e-10 * expected);

        // symmetric in indices with equal b̄
        let g13 = pod_weight(&[1, 2], lambda, &b, 0.1, rho_max).unwrap();
        let g32 = pod_weight(&[3, 2], lambda, &b, 0.1, rho_max).unwrap();
        assert!((g13 - g32).abs() < 1e-12 * g13);
        assert!(pod_weight(&[1], lambda, &b, 0.0, rho_max).is_err());
    }

    #[test]
    fn schedule_factorises_into_pod_form() {
        let b_bar = vec![0.05, 0.03, 0.02, 0.01];
        let sched = WeightSchedule::with_margin(0.8, b_bar, 0.5).unwrap();
        let u = [1, 3, 4];
        let direct = sched.gamma(&u).unwrap();
        let factored = sched.order_weight(3) * u.iter().map(|&j| sched.product_weight(j)).product::<f64>();
        assert!((direct - factored).abs() < 1e-10 * direct);
        assert!(WeightSchedule::new(0.8, vec![0.1], vec![0.01]).is_err());
    }

    #[test]
    fn summability_lambda() {
        assert!((lambda_from_summability(0.5, 0.1).unwrap() - 1.0 / 1.8).abs() < 1e-15);
        assert!((lambda_from_summability(0.8, 0.1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((lambda_from_summability(1.0 - 1e-9, 0.1).unwrap() - 1.0).abs() < 1e-8);
        assert!(lambda_from_summability(2.0 / 3.0, 0.1).is_err());
    }

    // Direct evaluation by explicit subset enumeration, independent of the CBC recursion.
    fn brute_error(z: &[u64], n: u64, weights: &Weights) -> f64 {
        let s = z.len();
        let mut total = 0.0;
        for mask in 1u32..(1 << s) {
            let u: Vec<usize> = (0..s).filter(|j| mask & (1 << j) != 0).collect();
            let g = weights.gamma(&u);
            if g == 0.0 {
                continue;
            }
            let mut avg = 0.0;
            for k in 0..n {
                let mut prod = 1.0;
                for &j in &u {
                    let x = ((k * z[j]) % n) as f64 / n as f64;
                    prod *= x * x - x + 1.0 / 6.0;
                }
                avg += prod;
            }
            total += g * avg / n as f64;
        }
        total
    }

    #[test]
    fn one_dimensional_cbc_picks_one() {
        for n in [2u64, 8, 13, 32] {
            let res = cbc_construct(n, 1, &Weights::Product(vec![1.0])).unwrap();
            assert_eq!(res.z.components(), &[1]);
        }
        assert!(cbc_construct(1, 1, &Weights::Product(vec![1.0])).is_err());
    }

    #[test]
    fn two_dimensional_cbc_matches_exhaustive_pairs() {
        let n = 8;
        let w = Weights::Product(vec![1.0, 1.0]);
        let res = cbc_construct(n, 2, &w).unwrap();
        let admissible: Vec<u64> = (1..n).filter(|&z| gcd(z, n) == 1).collect();
        let mut best = f64::INFINITY;
        for &a in &admissible {
            for &b in &admissible {
                best = best.min(brute_error(&[a, b], n, &w));
            }
        }
        assert!((res.error_bound_by_dim[1] - best).abs() < 1e-12);
    }

    #[test]
    fn pod_cbc_errors_are_nondecreasing_and_match_direct_sum() {
        let w = Weights::Pod {
            order: vec![1.0, 0.9, 0.4, 0.1],
            product: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
        };
        let res = cbc_construct(31, 5, &w).unwrap();
        assert!(res.error_bound_by_dim.windows(2).all(|p| p[1] >= p[0]));
        let direct = brute_error(res.z.components(), 31, &w);
        assert!((direct - res.error_bound_by_dim[4]).abs() < 1e-12);
    }

    #[test]
    fn variance_bound_properties() {
        let sched = WeightSchedule::with_margin(0.75, vec![0.05, 0.03, 0.02, 0.01], 0.5).unwrap();
        let zero = variance_bound(&sched, 64, 16, 0.0, 4, 6).unwrap();
        assert_eq!(zero.value, 0.0);
        let a = variance_bound(&sched, 64, 8, 1.0, 4, 6).unwrap();
        let b = variance_bound(&sched, 64, 16, 1.0, 4, 6).unwrap();
        assert!((a.value / b.value - 2.0).abs() < 1e-12);
        assert_eq!(a.tail_estimate, 0.0);
        // prime N: totient is N - 1
        let p = variance_bound(&sched, 61, 1, 1.0, 4, 6).unwrap();
        let q = variance_bound(&sched, 64, 1, 1.0, 4, 6).unwrap();
        let ratio = p.value / q.value;
        let expected = (60.0f64 / 32.0).powf(-1.0 / 0.75);
        assert!((ratio - expected).abs() < 1e-12 * expected);
        let cut = variance_bound(&sched, 64, 1, 1.0, 4, 2).unwrap();
        assert_eq!(cut.cutoff, 2);
        assert!(cut.value <= q.value);
        assert!(cut.tail_estimate > 0.0);
    }
}
