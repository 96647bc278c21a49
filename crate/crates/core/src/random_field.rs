//! Matérn covariance, Nyström Karhunen–Loève basis and lognormal coefficient
//! evaluation on the unit interval or unit square.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::quadrature::tensor_gauss_legendre;
use crate::special::bessel_k;
use crate::{Error, Result};

/// Parameters of the isotropic Matérn covariance on `[0,1]^d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaternParams {
    pub nu: f64,
    pub sigma2: f64,
    pub lambda_c: f64,
    pub d: usize,
}

impl MaternParams {
    pub fn new(nu: f64, sigma2: f64, lambda_c: f64, d: usize) -> Result<Self> {
        let p = Self {
            nu,
            sigma2,
            lambda_c,
            d,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.sigma2 > 0.0 && self.lambda_c > 0.0) {
            return Err(Error::config(format!(
                "Matérn parameters must be positive: {self:?}"
            )));
        }
        if !(self.d == 1 || self.d == 2) {
            return Err(Error::config(format!("spatial dimension must be 1 or 2, got {}", self.d)));
        }
        Ok(())
    }
}

/// ρ(r) = σ² 2^{1-ν}/Γ(ν) z^ν K_ν(z), z = 2√ν r / λ_C.
pub fn matern_cov(r: f64, p: &MaternParams) -> f64 {
    Matern::new(p).eval(r)
}

#[derive(Clone, Copy, Debug)]
struct Matern {
    sigma2: f64,
    nu: f64,
    coef: f64,
    scale: f64,
}

impl Matern {
    fn new(p: &MaternParams) -> Self {
        Self {
            sigma2: p.sigma2,
            nu: p.nu,
            coef: p.sigma2 * 2f64.powf(1.0 - p.nu) / gamma(p.nu),
            scale: 2.0 * p.nu.sqrt() / p.lambda_c,
        }
    }

    fn eval(&self, r: f64) -> f64 {
        let z = self.scale * r.abs();
        if z < 1e-12 {
            return self.sigma2;
        }
        match bessel_k(self.nu, z) {
            Ok(k) => (self.coef * z.powf(self.nu) * k).min(self.sigma2),
            Err(_) => 0.0,
        }
    }
}

/// Stationary covariance kernels understood by the Nyström solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CovarianceKernel {
    Matern(MaternParams),
    /// ρ ≡ σ², a rank-one kernel used for sanity checks.
    Constant { sigma2: f64, d: usize },
}

impl CovarianceKernel {
    pub fn dimension(&self) -> usize {
        match self {
            CovarianceKernel::Matern(p) => p.d,
            CovarianceKernel::Constant { d, .. } => *d,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            CovarianceKernel::Matern(p) => p.sigma2,
            CovarianceKernel::Constant { sigma2, .. } => *sigma2,
        }
    }

    fn evaluator(&self) -> Evaluator {
        match self {
            CovarianceKernel::Matern(p) => Evaluator::Matern(Matern::new(p)),
            CovarianceKernel::Constant { sigma2, .. } => Evaluator::Constant(*sigma2),
        }
    }

    fn tag(&self) -> [f64; 4] {
        match self {
            CovarianceKernel::Matern(p) => [p.nu, p.sigma2, p.lambda_c, p.d as f64],
            CovarianceKernel::Constant { sigma2, d } => [-1.0, *sigma2, 0.0, *d as f64],
        }
    }

    fn from_tag(tag: [f64; 4]) -> Result<Self> {
        let d = tag[3] as usize;
        if tag[0] < 0.0 {
            Ok(CovarianceKernel::Constant { sigma2: tag[1], d })
        } else {
            Ok(CovarianceKernel::Matern(MaternParams::new(tag[0], tag[1], tag[2], d)?))
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Evaluator {
    Matern(Matern),
    Constant(f64),
}

impl Evaluator {
    fn at(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Evaluator::Matern(m) => {
                let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                m.eval(r2.sqrt())
            }
            Evaluator::Constant(s) => *s,
        }
    }
}

/// Default Nyström quadrature order per dimension.
pub fn default_quadrature_order(d: usize) -> usize {
    if d == 1 {
        200
    } else {
        48
    }
}

/// Eigenvalues relative to μ_1 at or below this are not treated as resolved.
pub const RELATIVE_EIGENVALUE_FLOOR: f64 = 1e-12;

/// Discrete KL basis from a Nyström discretisation.
#[derive(Clone, Debug)]
pub struct KlBasis {
    pub kernel: CovarianceKernel,
    pub q_per_dim: usize,
    /// All Nyström eigenvalues, descending, negatives clamped to zero.
    pub mu: Vec<f64>,
    /// Flattened quadrature nodes, `d` coordinates per node.
    pub quad_nodes: Vec<f64>,
    pub quad_weights: Vec<f64>,
    /// ξ_j(x_k) stored column-major: entry `j * n_q + k`, for j < s_star.
    pub eigvecs: Vec<f64>,
    pub s_star: usize,
}

/// Nyström eigenpairs of the Matérn covariance operator on `[0,1]^d`.
pub fn nystrom_eigendecomposition(p: &MaternParams, q_per_dim: usize) -> Result<KlBasis> {
    p.validate()?;
    KlBasis::compute(CovarianceKernel::Matern(*p), q_per_dim)
}

impl KlBasis {
    pub fn compute(kernel: CovarianceKernel, q_per_dim: usize) -> Result<Self> {
        if q_per_dim < 2 {
            return Err(Error::config("quadrature order must be at least 2"));
        }
        let d = kernel.dimension();
        let (nodes, weights) = tensor_gauss_legendre(q_per_dim, d);
        let n_q = weights.len();
        let eval = kernel.evaluator();
        let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let columns: Vec<Vec<f64>> = (0..n_q)
            .into_par_iter()
            .map(|j| {
                let xj = &nodes[j * d..(j + 1) * d];
                (0..n_q)
                    .map(|i| sqrt_w[i] * eval.at(&nodes[i * d..(i + 1) * d], xj) * sqrt_w[j])
                    .collect()
            })
            .collect();
        let mut a = DMatrix::<f64>::zeros(n_q, n_q);
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                a[(i, j)] = *v;
            }
        }
        // exact symmetry before the solver sees it
        for j in 0..n_q {
            for i in 0..j {
                let m = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = m;
                a[(j, i)] = m;
            }
        }
        let diag_max = (0..n_q).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let eig = SymmetricEigen::try_new(a, f64::EPSILON, 0).ok_or_else(|| {
            Error::numerical(format!(
                "symmetric eigensolver did not converge (n = {n_q}, max diagonal {diag_max:e})"
            ))
        })?;
        let mut order: Vec<usize> = (0..n_q).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let mu1 = eig.eigenvalues[order[0]];
        if !(mu1 > 0.0) {
            return Err(Error::numerical(format!("leading eigenvalue {mu1:e} is not positive")));
        }
        let mu: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let s_star = mu.iter().take_while(|&&m| m > RELATIVE_EIGENVALUE_FLOOR * mu1).count();
        let mut eigvecs = vec![0.0; s_star * n_q];
        for (j, &col) in order.iter().take(s_star).enumerate() {
            let v = eig.eigenvectors.column(col);
            let integral: f64 = (0..n_q).map(|k| sqrt_w[k] * v[k]).sum();
            let flip = if integral.abs() > 1e-8 {
                integral < 0.0
            } else {
                v[0] < 0.0
            };
            let sign = if flip { -1.0 } else { 1.0 };
            for k in 0..n_q {
                eigvecs[j * n_q + k] = sign * v[k] / sqrt_w[k];
            }
        }
        Ok(Self {
            kernel,
            q_per_dim,
            mu,
            quad_nodes: nodes,
            quad_weights: weights,
            eigvecs,
            s_star,
        })
    }

    pub fn dimension(&self) -> usize {
        self.kernel.dimension()
    }

    pub fn n_quad(&self) -> usize {
        self.quad_weights.len()
    }

    fn node(&self, k: usize) -> &[f64] {
        let d = self.dimension();
        &self.quad_nodes[k * d..(k + 1) * d]
    }

    /// ξ_j at quadrature node k (0-based j and k).
    pub fn eigvec(&self, j: usize, k: usize) -> f64 {
        self.eigvecs[j * self.n_quad() + k]
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.s_star {
            return Err(Error::domain(format!(
                "eigenfunction index {j} outside 1..={} (μ_j not resolved)",
                self.s_star
            )));
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::domain(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.dimension()
            )));
        }
        Ok(())
    }

    /// Nyström extension ξ_j(x) = μ_j^{-1} Σ_k w_k ρ(|x - x_k|) ξ_j(x_k), 1-based j.
    pub fn eigenfunction_eval(&self, j: usize, x: &[f64]) -> Result<f64> {
        self.check_index(j)?;
        self.check_point(x)?;
        let eval = self.kernel.evaluator();
        let col = &self.eigvecs[(j - 1) * self.n_quad()..j * self.n_quad()];
        let sum: f64 = (0..self.n_quad())
            .map(|k| self.quad_weights[k] * eval.at(x, self.node(k)) * col[k])
            .sum();
        Ok(sum / self.mu[j - 1])
    }

    /// ξ_1(x), …, ξ_s(x) at once.
    pub fn eigenfunctions_at(&self, x: &[f64], s: usize) -> Result<Vec<f64>> {
        if s > self.s_star {
            return Err(Error::domain(format!("requested {s} terms, only {} resolved", self.s_star)));
        }
        self.check_point(x)?;
        let eval = self.kernel.evaluator();
        let n_q = self.n_quad();
        let kx: Vec<f64> = (0..n_q)
            .map(|k| self.quad_weights[k] * eval.at(x, self.node(k)))
            .collect();
        Ok((0..s)
            .map(|j| {
                let col = &self.eigvecs[j * n_q..(j + 1) * n_q];
                kx.iter().zip(col).map(|(a, b)| a * b).sum::<f64>() / self.mu[j]
            })
            .collect())
    }

    /// Table of √μ_j ξ_j(x) for j ≤ s at the given points (flattened, `d` per point).
    pub fn eval_table(&self, points: &[f64], s: usize) -> Result<KlTable> {
        if s > self.s_star {
            return Err(Error::domain(format!("requested {s} terms, only {} resolved", self.s_star)));
        }
        let d = self.dimension();
        if points.len() % d != 0 {
            return Err(Error::domain("point array length is not a multiple of d"));
        }
        let n_points = points.len() / d;
        let n_q = self.n_quad();
        // coef[j * n_q + k] = w_k ξ_j(x_k) / √μ_j
        let coef: Vec<f64> = (0..s)
            .flat_map(|j| {
                let inv = 1.0 / self.mu[j].sqrt();
                (0..n_q).map(move |k| (j, k, inv))
            })
            .map(|(j, k, inv)| self.quad_weights[k] * self.eigvec(j, k) * inv)
            .collect();
        let eval = self.kernel.evaluator();
        let rows: Vec<Vec<f64>> = (0..n_points)
            .into_par_iter()
            .map(|p| {
                let x = &points[p * d..(p + 1) * d];
                let kx: Vec<f64> = (0..n_q).map(|k| eval.at(x, self.node(k))).collect();
                (0..s)
                    .map(|j| {
                        let c = &coef[j * n_q..(j + 1) * n_q];
                        kx.iter().zip(c).map(|(a, b)| a * b).sum()
                    })
                    .collect()
            })
            .collect();
        Ok(KlTable {
            n_points,
            s,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// a_*(x) + a_0(x) exp(Σ_{j≤s} √μ_j ξ_j(x) y_j), with s = y.len().
    pub fn kl_coefficient(&self, y: &[f64], x: &[f64], a0: f64, a_star: f64) -> Result<f64> {
        let xi = self.eigenfunctions_at(x, y.len())?;
        let exponent: f64 = xi
            .iter()
            .zip(y)
            .enumerate()
            .map(|(j, (v, yj))| self.mu[j].sqrt() * v * yj)
            .sum();
        Ok(a_star + a0 * exponent.exp())
    }

    /// Probe-grid lower bounds for b_j = √μ_j ‖ξ_j‖_∞ and
    /// b̄_j = √μ_j max(‖ξ_j‖_∞, ‖∇ξ_j‖_∞), j ≤ s.
    ///
    /// Gradients use central differences of step `fd_step`, one-sided at the boundary.
    pub fn b_sequences(&self, probes: &[f64], s: usize, fd_step: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dimension();
        if probes.len() % d != 0 || probes.is_empty() {
            return Err(Error::domain("probe array length must be a positive multiple of d"));
        }
        let per_probe: Vec<(Vec<f64>, Vec<f64>)> = probes
            .par_chunks(d)
            .map(|x| {
                let val = self.eigenfunctions_at(x, s)?;
                let mut grad2 = vec![0.0; s];
                for axis in 0..d {
                    let mut lo = x.to_vec();
                    let mut hi = x.to_vec();
                    lo[axis] = (x[axis] - fd_step).max(0.0);
                    hi[axis] = (x[axis] + fd_step).min(1.0);
                    let span = hi[axis] - lo[axis];
                    let f_lo = self.eigenfunctions_at(&lo, s)?;
                    let f_hi = self.eigenfunctions_at(&hi, s)?;
                    for j in 0..s {
                        let g = (f_hi[j] - f_lo[j]) / span;
                        grad2[j] += g * g;
                    }
                }
                Ok((val, grad2))
            })
            .collect::<Result<_>>()?;
        let mut b = vec![0.0f64; s];
        let mut b_bar = vec![0.0f64; s];
        for (val, grad2) in &per_probe {
            for j in 0..s {
                b[j] = b[j].max(val[j].abs());
                b_bar[j] = b_bar[j].max(val[j].abs()).max(grad2[j].sqrt());
            }
        }
        for j in 0..s {
            let r = self.mu[j].sqrt();
            b[j] *= r;
            b_bar[j] *= r;
        }
        Ok((b, b_bar))
    }

    const MAGIC: &'static [u8; 8] = b"MLQMCKL1";

    /// Writes the basis in a little-endian binary format that reloads bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(Self::MAGIC)?;
        for v in self.kernel.tag() {
            w.write_all(&v.to_le_bytes())?;
        }
        for n in [self.q_per_dim, self.n_quad(), self.s_star] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for arr in [&self.mu, &self.quad_nodes, &self.quad_weights, &self.eigvecs] {
            for v in arr.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: msg.to_string(),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(bad("not a KL basis cache"));
        }
        let mut buf = [0u8; 8];
        let mut next_f64 = |r: &mut BufReader<File>| -> Result<f64> {
            r.read_exact(&mut buf)?;
            Ok(f64::from_le_bytes(buf))
        };
        let mut tag = [0.0; 4];
        for t in tag.iter_mut() {
            *t = next_f64(&mut r)?;
        }
        let kernel = CovarianceKernel::from_tag(tag)?;
        let read_usize = |r: &mut BufReader<File>| -> Result<usize> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b) as usize)
        };
        let q_per_dim = read_usize(&mut r)?;
        let n_q = read_usize(&mut r)?;
        let s_star = read_usize(&mut r)?;
        let d = kernel.dimension();
        if n_q != q_per_dim.pow(d as u32) || s_star > n_q {
            return Err(bad("inconsistent header"));
        }
        let mut read_vec = |len: usize| -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let mu = read_vec(n_q)?;
        let quad_nodes = read_vec(n_q * d)?;
        let quad_weights = read_vec(n_q)?;
        let eigvecs = read_vec(n_q * s_star)?;
        Ok(Self {
            kernel,
            q_per_dim,
            mu,
            quad_nodes,
            quad_weights,
            eigvecs,
            s_star,
        })
    }

    /// Loads a cached basis keyed by kernel and quadrature order, computing and
    /// storing it on a miss.
    pub fn load_or_compute(cache_dir: &Path, kernel: CovarianceKernel, q_per_dim: usize) -> Result<Self> {
        let [a, b, c, d] = kernel.tag();
        let name = format!(
            "kl_{:016x}_{:016x}_{:016x}_{}_{}.bin",
            a.to_bits(),
            b.to_bits(),
            c.to_bits(),
            d as usize,
            q_per_dim
        );
        let path = cache_dir.join(name);
        if path.exists() {
            if let Ok(basis) = Self::load(&path) {
                if basis.kernel == kernel && basis.q_per_dim == q_per_dim {
                    return Ok(basis);
                }
            }
        }
        let basis = Self::compute(kernel, q_per_dim)?;
        std::fs::create_dir_all(cache_dir)?;
        basis.save(&path)?;
        Ok(basis)
    }
}

/// Precomputed √μ_j ξ_j(x_p) at a fixed point set, row-major by point.
#[derive(Clone, Debug)]
pub struct KlTable {
    pub n_points: usize,
    pub s: usize,
    pub data: Vec<f64>,
}

impl KlTable {
    pub fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.s..(p + 1) * self.s]
    }

    /// Σ_{j≤len(y)} √μ_j ξ_j(x_p) y_j; `y` may be shorter than the table width.
    pub fn log_field(&self, p: usize, y: &[f64]) -> f64 {
        self.row(p).iter().zip(y).map(|(a, b)| a * b).sum()
    }

    /// a_* + a_0 exp(log field) at every table point.
    pub fn coefficients_into(&self, y: &[f64], a0: f64, a_star: f64, out: &mut [f64]) {
        for (p, o) in out.iter_mut().enumerate().take(self.n_points) {
            *o = a_star + a0 * self.log_field(p, y).exp();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre_unit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn params(nu: f64) -> MaternParams {
        MaternParams::new(nu, 1.0, 1.0, 1).unwrap()
    }

    #[test]
    fn covariance_closed_forms() {
        let p = MaternParams::new(0.5, 2.0, 0.3, 1).unwrap();
        assert_eq!(matern_cov(0.0, &p), 2.0);
        for r in [0.1, 1.0, 3.0] {
            let exact = 2.0 * (-(2f64).sqrt() * r / 0.3).exp();
            assert!((matern_cov(r, &p) - exact).abs() < 1e-13 * exact.max(1e-300), "r={r}");
        }
        // ν = 3/2: (1 + z) e^{-z}, z = √6 r/λ
        let p = MaternParams::new(1.5, 1.0, 0.5, 1).unwrap();
        for r in [0.05, 0.4, 2.0] {
            let z = 6f64.sqrt() * r / 0.5;
            let exact = (1.0 + z) * (-z).exp();
            assert!((matern_cov(r, &p) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn covariance_is_decreasing_and_psd() {
        for nu in [0.5, 1.0, 2.0, 2.5, 0.7] {
            let p = MaternParams::new(nu, 1.3, 0.2, 2).unwrap();
            let mut prev = f64::INFINITY;
            for i in 0..200 {
                let v = matern_cov(i as f64 * 0.01, &p);
                assert!(v <= prev + 1e-15);
                prev = v;
            }
            let pts: [[f64; 2]; 5] = [[0.1, 0.2], [0.15, 0.22], [0.8, 0.9], [0.5, 0.5], [0.12, 0.18]];
            let k = DMatrix::from_fn(5, 5, |i, j| {
                let r = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
                matern_cov(r, &p)
            });
            let min = SymmetricEigen::new(k).eigenvalues.min();
            assert!(min >= -1e-10 * 1.3);
        }
    }

    #[test]
    fn trace_and_orthonormality() {
        let basis = nystrom_eigendecomposition(&params(1.0), 64).unwrap();
        let trace: f64 = basis.mu.iter().sum();
        assert!((trace - 1.0).abs() < 1e-6);
        assert!(basis.mu.windows(2).all(|w| w[0] >= w[1]));
        let n_q = basis.n_quad();
        let s = basis.s_star;
        let mut frob = 0.0;
        for i in 0..s {
            for j in 0..s {
                let ip: f64 = (0..n_q)
                    .map(|k| basis.quad_weights[k] * basis.eigvec(i, k) * basis.eigvec(j, k))
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                frob += (ip - target).powi(2);
            }
        }
        assert!(frob.sqrt() < 1e-8);
    }

    #[test]
    fn eigenvalue_decay_slope() {
        let basis = nystrom_eigendecomposition(&params(1.0), default_quadrature_order(1)).unwrap();
        let (xs, ys): (Vec<f64>, Vec<f64>) = (5..=40)
            .map(|j| ((j as f64).ln(), basis.mu[j - 1].ln()))
            .unzip();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope + 3.0).abs() < 0.3, "slope {slope}");
    }

    #[test]
    fn extension_matches_nodes_and_fine_quadrature() {
        let basis = nystrom_eigendecomposition(&params(1.0), default_quadrature_order(1)).unwrap();
        for k in [0, 17, 199] {
            let x = [basis.quad_nodes[k]];
            let v = basis.eigenfunction_eval(3, &x).unwrap();
            assert!((v - basis.eigvec(2, k)).abs() < 1e-9);
        }
        // independent composite Gauss rule with 100 panels of 8 points
        let (gx, gw) = gauss_legendre_unit(8);
        let mut g11 = 0.0;
        let mut g12 = 0.0;
        for panel in 0..100 {
            for (x, w) in gx.iter().zip(&gw) {
                let xx = [(panel as f64 + x) / 100.0];
                let f = basis.eigenfunctions_at(&xx, 2).unwrap();
                g11 += w / 100.0 * f[0] * f[0];
                g12 += w / 100.0 * f[0] * f[1];
            }
        }
        assert!((g11 - 1.0).abs() < 1e-6, "{g11}");
        assert!(g12.abs() < 1e-6, "{g12}");
        assert!(basis.eigenfunction_eval(0, &[0.5]).is_err());
        assert!(basis.eigenfunction_eval(basis.s_star + 1, &[0.5]).is_err());
    }

    #[test]
    fn coefficient_and_table_agree() {
        let basis = nystrom_eigendecomposition(&params(1.0), 48).unwrap();
        assert_eq!(basis.kl_coefficient(&[0.0; 5], &[0.3], 1.0, 0.0).unwrap(), 1.0);
        let y = [0.7];
        let x = [0.41];
        let a = basis.kl_coefficient(&y, &x, 2.0, 0.0).unwrap();
        let xi = basis.eigenfunction_eval(1, &x).unwrap();
        assert!(((a / 2.0).ln() - basis.mu[0].sqrt() * xi * 0.7).abs() < 1e-12);

        let pts = [0.05, 0.41, 0.77];
        let yy = [0.3, -1.2, 0.8, 2.0];
        let table = basis.eval_table(&pts, 4).unwrap();
        for (p, &x) in pts.iter().enumerate() {
            let direct = basis.kl_coefficient(&yy, &[x], 1.0, 0.5).unwrap();
            let tab = 0.5 + table.log_field(p, &yy).exp();
            assert!((direct - tab).abs() < 1e-12 * direct);
        }
    }

    #[test]
    fn mercer_partial_sums_bounded() {
        let basis = nystrom_eigendecomposition(&params(1.0), 64).unwrap();
        for i in 0..=50 {
            let x = [i as f64 / 50.0];
            let xi = basis.eigenfunctions_at(&x, basis.s_star.min(40)).unwrap();
            let sum: f64 = xi.iter().enumerate().map(|(j, v)| basis.mu[j] * v * v).sum();
            assert!(sum <= 1.0 + 1e-6, "x={} sum={sum}", x[0]);
        }
    }

    #[test]
    fn empirical_covariance_matches_truncated_mercer() {
        let basis = nystrom_eigendecomposition(&params(1.0), 48).unwrap();
        let s = 10;
        let (x1, x2) = ([0.3], [0.35]);
        let f1 = basis.eigenfunctions_at(&x1, s).unwrap();
        let f2 = basis.eigenfunctions_at(&x2, s).unwrap();
        let exact: f64 = (0..s).map(|j| basis.mu[j] * f1[j] * f2[j]).sum();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let n = 10_000;
        let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut prods = Vec::with_capacity(n);
        for _ in 0..n {
            let y: Vec<f64> = (0..s).map(|_| StandardNormal.sample(&mut rng)).collect();
            let a = (0..s).map(|j| basis.mu[j].sqrt() * f1[j] * y[j]).sum::<f64>();
            let b = (0..s).map(|j| basis.mu[j].sqrt() * f2[j] * y[j]).sum::<f64>();
            sa += a;
            sb += b;
            sab += a * b;
            saa += a * a;
            sbb += b * b;
            prods.push(a * b);
        }
        let nf = n as f64;
        let cov = sab / nf - (sa / nf) * (sb / nf);
        let var_prod = prods.iter().map(|p| (p - sab / nf).powi(2)).sum::<f64>() / (nf - 1.0);
        let se = (var_prod / nf).sqrt();
        assert!((cov - exact).abs() < 3.0 * se, "cov {cov} exact {exact} se {se}");
        assert!(saa > 0.0 && sbb > 0.0);
    }

    #[test]
    fn b_sequences_properties() {
        let basis = nystrom_eigendecomposition(&params(1.0), 64).unwrap();
        let probes: Vec<f64> = (0..=640).map(|i| i as f64 / 640.0).collect();
        let s = 20;
        let (b, b_bar) = basis.b_sequences(&probes, s, 1e-4).unwrap();
        assert!(b.iter().zip(&b_bar).all(|(x, y)| y >= x));
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            (1..=s).map(|j| ((j as f64).ln(), b[j - 1].ln())).unzip();
        let mx = xs.iter().sum::<f64>() / s as f64;
        let my = ys.iter().sum::<f64>() / s as f64;
        let slope: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        assert!(slope < 0.0);

        let constant = KlBasis::compute(CovarianceKernel::Constant { sigma2: 2.0, d: 1 }, 16).unwrap();
        assert_eq!(constant.s_star, 1);
        assert!((constant.mu[0] - 2.0).abs() < 1e-12);
        let (b, b_bar) = constant.b_sequences(&probes, 1, 1e-4).unwrap();
        assert!((b[0] - 2f64.sqrt()).abs() < 1e-10);
        assert!((b_bar[0] - b[0]).abs() < 1e-10);
    }

    #[test]
    fn two_dimensional_basis() {
        let p = MaternParams::new(1.0, 1.0, 0.3, 2).unwrap();
        let basis = nystrom_eigendecomposition(&p, 12).unwrap();
        let trace: f64 = basis.mu.iter().sum();
        assert!((trace - 1.0).abs() < 1e-9);
        let k = 40;
        let x = [basis.quad_nodes[2 * k], basis.quad_nodes[2 * k + 1]];
        assert!((basis.eigenfunction_eval(2, &x).unwrap() - basis.eigvec(1, k)).abs() < 1e-9);
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let kernel = CovarianceKernel::Matern(params(2.0));
        let a = KlBasis::load_or_compute(dir.path(), kernel, 32).unwrap();
        let b = KlBasis::load_or_compute(dir.path(), kernel, 32).unwrap();
        assert_eq!(a.s_star, b.s_star);
        assert!(a.mu.iter().zip(&b.mu).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.eigvecs.iter().zip(&b.eigvecs).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
