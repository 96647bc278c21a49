//! Modified Bessel function of the second kind K_ν(x) for real order ν ≥ 0.
//!
//! The order is split as ν = μ + n with |μ| ≤ 1/2. K_μ and K_{μ+1} come from
//! Temme's series for x < 2 and Steed's continued fraction (CF2) otherwise;
//! forward recurrence in the order is stable for K and supplies K_ν.

use crate::{Error, Result};

const EPS: f64 = f64::EPSILON;

// Chebyshev expansions of Temme's gamma auxiliaries on [-1, 1], argument 4|μ| - 1.
const G1_CHEB: [f64; 14] = [
    -1.145_164_083_662_683_1,
    0.006_360_853_113_470_842,
    0.001_862_451_930_072_068_5,
    0.000_152_833_085_873_453_5,
    0.000_017_017_464_011_802_04,
    -6.459_750_292_334_725e-7,
    -5.181_984_843_251_938e-8,
    4.518_909_289_485_818e-10,
    3.243_322_737_102_087_3e-11,
    6.830_943_402_494_752e-13,
    2.835_350_275_517_210_3e-14,
    -7.988_390_576_932_359e-16,
    -3.372_667_730_077_195e-17,
    -3.658_633_480_921_052e-20,
];
const G2_CHEB: [f64; 15] = [
    1.882_645_524_949_671_8,
    -0.077_490_658_396_167_52,
    -0.018_256_714_847_324_93,
    0.000_633_803_020_907_489_6,
    0.000_076_229_054_350_872_9,
    -9.550_164_756_172_044e-7,
    -8.892_726_810_788_635e-8,
    -1.952_133_477_231_961_4e-9,
    -9.400_305_273_588_516e-11,
    4.687_513_384_953_239e-12,
    2.265_853_574_692_576e-13,
    -1.172_550_969_848_801_5e-15,
    -7.044_133_820_024_522e-17,
    -2.437_787_831_010_769_4e-18,
    -7.522_524_321_825_39e-20,
];

fn chebyshev(coeffs: &[f64], t: f64) -> f64 {
    let t2 = 2.0 * t;
    let (mut d, mut dd) = (0.0, 0.0);
    for &c in coeffs[1..].iter().rev() {
        let tmp = d;
        d = t2 * d - dd + c;
        dd = tmp;
    }
    t * d - dd + 0.5 * coeffs[0]
}

/// Returns (Γ(1+μ), Γ(1-μ), g1, g2) for |μ| ≤ 1/2.
fn temme_gamma(mu: f64) -> (f64, f64, f64, f64) {
    let t = 4.0 * mu.abs() - 1.0;
    let g1 = chebyshev(&G1_CHEB, t);
    let g2 = chebyshev(&G2_CHEB, t);
    let gamma_1mmu = 1.0 / (g2 + mu * g1);
    let gamma_1pmu = 1.0 / (g2 - mu * g1);
    (gamma_1pmu, gamma_1mmu, g1, g2)
}

/// e^x K_μ(x), e^x K_{μ+1}(x) via Temme's series; intended for x < 2.
fn scaled_temme(mu: f64, x: f64) -> Result<(f64, f64)> {
    const MAX_ITER: usize = 15_000;
    let half_x = 0.5 * x;
    let ln_half_x = half_x.ln();
    let half_x_mu = (mu * ln_half_x).exp();
    let pi_mu = std::f64::consts::PI * mu;
    let sigma = -mu * ln_half_x;
    let sinrat = if pi_mu.abs() < EPS { 1.0 } else { pi_mu / pi_mu.sin() };
    let sinhrat = if sigma.abs() < EPS { 1.0 } else { sigma.sinh() / sigma };
    let ex = x.exp();

    let (gamma_1pmu, gamma_1mmu, g1, g2) = temme_gamma(mu);

    let mut fk = sinrat * (sigma.cosh() * g1 - sinhrat * ln_half_x * g2);
    let mut pk = 0.5 / half_x_mu * gamma_1pmu;
    let mut qk = 0.5 * half_x_mu * gamma_1mmu;
    let mut ck = 1.0;
    let mut sum0 = fk;
    let mut sum1 = pk;
    for k in 1..=MAX_ITER {
        let kf = k as f64;
        fk = (kf * fk + pk + qk) / (kf * kf - mu * mu);
        ck *= half_x * half_x / kf;
        pk /= kf - mu;
        qk /= kf + mu;
        let hk = -kf * fk + pk;
        let del0 = ck * fk;
        sum0 += del0;
        sum1 += ck * hk;
        if del0.abs() < 0.5 * sum0.abs() * EPS {
            return Ok((sum0 * ex, sum1 * 2.0 / x * ex));
        }
    }
    Err(Error::numerical(format!(
        "Temme series for K_{mu}({x}) did not converge"
    )))
}

/// e^x K_μ(x), e^x K_{μ+1}(x) via Steed's continued fraction; intended for x ≥ 2.
fn scaled_cf2(mu: f64, x: f64) -> Result<(f64, f64)> {
    const MAX_ITER: usize = 10_000;
    let mut bi = 2.0 * (1.0 + x);
    let mut di = 1.0 / bi;
    let mut delhi = di;
    let mut hi = di;
    let mut qi = 0.0;
    let mut qip1 = 1.0;
    let mut ai = -(0.25 - mu * mu);
    let a1 = ai;
    let mut ci = -ai;
    let mut bqi = -ai;
    let mut s = 1.0 + bqi * delhi;
    let mut converged = false;
    for i in 2..=MAX_ITER {
        ai -= 2.0 * (i - 1) as f64;
        ci = -ai * ci / i as f64;
        let tmp = (qi - bi * qip1) / ai;
        qi = qip1;
        qip1 = tmp;
        bqi += ci * qip1;
        bi += 2.0;
        di = 1.0 / (bi + ai * di);
        delhi *= bi * di - 1.0;
        hi += delhi;
        let dels = bqi * delhi;
        s += dels;
        if (dels / s).abs() < EPS {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::numerical(format!(
            "continued fraction for K_{mu}({x}) did not converge"
        )));
    }
    hi *= -a1;
    let k_mu = (std::f64::consts::PI / (2.0 * x)).sqrt() / s;
    let k_mup1 = k_mu * (mu + x + 0.5 - hi) / x;
    Ok((k_mu, k_mup1))
}

/// K_ν(x) for ν ≥ 0 and x > 0.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::domain(format!("Bessel order must be ≥ 0, got {nu}")));
    }
    if !(x > 0.0) {
        return Err(Error::domain(format!("Bessel argument must be > 0, got {x}")));
    }
    if let Some(v) = bessel_k_half_integer(nu, x) {
        return Ok(v);
    }
    let n = (nu + 0.5).floor() as usize;
    let mu = nu - n as f64;
    let (mut k_cur, mut k_next) = if x < 2.0 {
        scaled_temme(mu, x)?
    } else {
        scaled_cf2(mu, x)?
    };
    for i in 0..n {
        let k_prev = k_cur;
        k_cur = k_next;
        k_next = 2.0 * (mu + i as f64 + 1.0) / x * k_cur + k_prev;
    }
    Ok(k_cur * (-x).exp())
}

/// Closed form for half-integer orders ν = p + 1/2, `None` otherwise.
///
/// K_{p+1/2}(x) = sqrt(π/(2x)) e^{-x} Σ_{k=0}^{p} (p+k)! / (k! (p-k)!) (2x)^{-k}.
pub fn bessel_k_half_integer(nu: f64, x: f64) -> Option<f64> {
    let p = nu - 0.5;
    if p < 0.0 || p.fract() != 0.0 || p > 30.0 {
        return None;
    }
    let p = p as u32;
    let inv_2x = 1.0 / (2.0 * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..p {
        // ratio of consecutive coefficients (p+k+1)(p-k) / (k+1)
        let kf = k as f64;
        let pf = p as f64;
        term *= (pf + kf + 1.0) * (pf - kf) / (kf + 1.0) * inv_2x;
        sum += term;
    }
    Some((std::f64::consts::PI * inv_2x).sqrt() * (-x).exp() * sum)
}
