//! Piecewise linear finite elements for `-(a u')' = f` on (0,1) with
//! homogeneous Dirichlet conditions and midpoint coefficient sampling.

use crate::{Error, Real, Result};

/// Uniform mesh of `2^(level + ell0)` cells on (0,1).
#[derive(Clone, Debug)]
pub struct Mesh1D<T> {
    pub level: usize,
    pub ell0: usize,
    pub n_cells: usize,
    pub h: T,
    pub midpoints: Vec<T>,
}

impl<T: Real> Mesh1D<T> {
    pub fn new(level: usize, ell0: usize) -> Result<Self> {
        let k = level + ell0;
        if k == 0 || k > 40 {
            return Err(Error::config(format!("mesh exponent ℓ + ℓ0 = {k} outside 1..=40")));
        }
        let n_cells = 1usize << k;
        let h = T::one() / T::from_usize_lossy(n_cells);
        let half = T::lit(0.5);
        let midpoints = (0..n_cells)
            .map(|i| (T::from_usize_lossy(i) + half) * h)
            .collect();
        Ok(Self {
            level,
            ell0,
            n_cells,
            h,
            midpoints,
        })
    }

    /// Interior degrees of freedom, `1/h - 1`.
    pub fn n_dofs(&self) -> usize {
        self.n_cells - 1
    }
}

/// Right-hand side of the 1D problem.
#[derive(Clone, Debug)]
pub enum Source1D<T> {
    Constant(T),
    /// f sampled at element midpoints (midpoint rule per element).
    Midpoint(Vec<T>),
}

/// Interior nodal values; the boundary values are zero.
#[derive(Clone, Debug)]
pub struct FeSolution1D<T> {
    pub h: T,
    pub nodal_values: Vec<T>,
}

impl<T: Real> FeSolution1D<T> {
    /// Value of the FE function at x0 ∈ (0,1) by linear interpolation.
    pub fn point_value(&self, x0: T) -> Result<T> {
        point_value(&self.nodal_values, self.h, x0)
    }
}

fn point_value<T: Real>(u: &[T], h: T, x0: T) -> Result<T> {
    if !(x0 > T::zero() && x0 < T::one()) {
        return Err(Error::domain(format!("evaluation point {x0} outside (0,1)")));
    }
    let n_cells = u.len() + 1;
    let scaled = x0 / h;
    let e = scaled.floor().to_usize().unwrap_or(0).min(n_cells - 1);
    let t = scaled - T::from_usize_lossy(e);
    let node = |i: usize| {
        if i == 0 || i == n_cells {
            T::zero()
        } else {
            u[i - 1]
        }
    };
    Ok((T::one() - t) * node(e) + t * node(e + 1))
}

/// Reusable tridiagonal solver for a fixed mesh.
#[derive(Clone, Debug)]
pub struct Solver1D<T> {
    n_cells: usize,
    h: T,
    c_prime: Vec<T>,
    u: Vec<T>,
}

impl<T: Real> Solver1D<T> {
    pub fn new(mesh: &Mesh1D<T>) -> Self {
        let m = mesh.n_dofs();
        Self {
            n_cells: mesh.n_cells,
            h: mesh.h,
            c_prime: vec![T::zero(); m],
            u: vec![T::zero(); m],
        }
    }

    /// Assembles and solves with the Thomas algorithm; returns interior nodal values.
    pub fn solve(&mut self, a_mid: &[T], f: &Source1D<T>) -> Result<&[T]> {
        let n = self.n_cells;
        if a_mid.len() != n {
            return Err(Error::domain(format!(
                "expected {n} midpoint coefficients, got {}",
                a_mid.len()
            )));
        }
        if let Some(bad) = a_mid.iter().find(|a| !(**a > T::zero())) {
            return Err(Error::domain(format!("coefficient {bad} is not positive")));
        }
        let h = self.h;
        let inv_h = T::one() / h;
        let half_h = h * T::lit(0.5);
        let load = |i: usize| match f {
            Source1D::Constant(c) => h * *c,
            Source1D::Midpoint(fm) => half_h * (fm[i] + fm[i + 1]),
        };
        if let Source1D::Midpoint(fm) = f {
            if fm.len() != n {
                return Err(Error::domain("source must be given at every midpoint"));
            }
        }
        let m = n - 1;
        // forward sweep: node i+1 couples cells i and i+1, off-diagonal -a_{i+1}/h
        let mut prev_c = T::zero();
        let mut prev_d = T::zero();
        for i in 0..m {
            let diag = (a_mid[i] + a_mid[i + 1]) * inv_h;
            let lower = if i == 0 { T::zero() } else { -a_mid[i] * inv_h };
            let upper = -a_mid[i + 1] * inv_h;
            let denom = diag - lower * prev_c;
            prev_c = upper / denom;
            prev_d = (load(i) - lower * prev_d) / denom;
            self.c_prime[i] = prev_c;
            self.u[i] = prev_d;
        }
        for i in (0..m.saturating_sub(1)).rev() {
            let next = self.u[i + 1];
            self.u[i] = self.u[i] - self.c_prime[i] * next;
        }
        Ok(&self.u)
    }

    /// Solves and evaluates the solution at x0.
    pub fn solve_point(&mut self, a_mid: &[T], f: &Source1D<T>, x0: T) -> Result<T> {
        let h = self.h;
        let u = self.solve(a_mid, f)?;
        point_value(u, h, x0)
    }
}

/// Assembles and solves the 1D system.
pub fn assemble_solve_1d<T: Real>(mesh: &Mesh1D<T>, a_mid: &[T], f: &Source1D<T>) -> Result<FeSolution1D<T>> {
    let mut solver = Solver1D::new(mesh);
    let u = solver.solve(a_mid, f)?.to_vec();
    Ok(FeSolution1D {
        h: mesh.h,
        nodal_values: u,
    })
}

/// u_h(x0) by exact evaluation of the piecewise linear function.
pub fn point_functional<T: Real>(sol: &FeSolution1D<T>, x0: T) -> Result<T> {
    sol.point_value(x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn dense_oracle(a: &[f64], h: f64) -> Vec<f64> {
        let m = a.len() - 1;
        let mut k = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            k[(i, i)] = (a[i] + a[i + 1]) / h;
            if i + 1 < m {
                k[(i, i + 1)] = -a[i + 1] / h;
                k[(i + 1, i)] = -a[i + 1] / h;
            }
        }
        let b = DVector::from_element(m, h);
        k.lu().solve(&b).unwrap().iter().cloned().collect()
    }

    #[test]
    fn constant_coefficient_is_nodally_exact() {
        let mesh = Mesh1D::<f64>::new(0, 2).unwrap();
        let sol = assemble_solve_1d(&mesh, &[1.0; 4], &Source1D::Constant(1.0)).unwrap();
        for (i, v) in sol.nodal_values.iter().enumerate() {
            let x = (i + 1) as f64 * 0.25;
            assert!((v - x * (1.0 - x) / 2.0).abs() < 1e-15);
        }
        assert!((sol.point_value(0.5).unwrap() - 0.125).abs() < 1e-15);
        let twice = assemble_solve_1d(&mesh, &[2.0; 4], &Source1D::Constant(1.0)).unwrap();
        for (a, b) in sol.nodal_values.iter().zip(&twice.nodal_values) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_dense_solve_and_residual() {
        let mesh = Mesh1D::<f64>::new(3, 2).unwrap();
        let a: Vec<f64> = mesh.midpoints.iter().map(|&x| if x < 0.5 { 1.0 } else { 4.0 }).collect();
        let sol = assemble_solve_1d(&mesh, &a, &Source1D::Constant(1.0)).unwrap();
        let dense = dense_oracle(&a, mesh.h);
        for (x, y) in sol.nodal_values.iter().zip(&dense) {
            assert!((x - y).abs() < 1e-13);
        }
        let u = &sol.nodal_values;
        let h = mesh.h;
        let m = u.len();
        let mut res: f64 = 0.0;
        for i in 0..m {
            let mut r = (a[i] + a[i + 1]) / h * u[i] - h;
            if i > 0 {
                r -= a[i] / h * u[i - 1];
            }
            if i + 1 < m {
                r -= a[i + 1] / h * u[i + 1];
            }
            res = res.max(r.abs());
        }
        assert!(res < 1e-12 * h);
    }

    #[test]
    fn point_functional_interpolates() {
        let sol = FeSolution1D {
            h: 0.25,
            nodal_values: vec![3.0, 6.0, 9.0],
        };
        assert_eq!(point_functional(&sol, 0.5).unwrap(), 6.0);
        let v = point_functional(&sol, 1.0 / 3.0).unwrap();
        assert!((v - (2.0 / 3.0 * 3.0 + 1.0 / 3.0 * 6.0f64)).abs() < 1e-14);
        assert!(point_functional(&sol, 0.0).is_err());
    }

    #[test]
    fn point_value_converges_at_second_order() {
        let mut pts = Vec::new();
        for k in 3..=8 {
            let mesh = Mesh1D::<f64>::new(k, 0).unwrap();
            let a = vec![1.0; mesh.n_cells];
            let sol = assemble_solve_1d(&mesh, &a, &Source1D::Constant(1.0)).unwrap();
            let err = (sol.point_value(1.0 / 3.0).unwrap() - 1.0 / 9.0).abs();
            pts.push((mesh.h.ln(), err.ln()));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn symmetry_and_maximum_principle() {
        let mesh = Mesh1D::<f64>::new(4, 2).unwrap();
        let a: Vec<f64> = mesh.midpoints.iter().map(|&x| 1.0 + (x - 0.5).powi(2) * 7.0).collect();
        let sol = assemble_solve_1d(&mesh, &a, &Source1D::Constant(1.0)).unwrap();
        let u = &sol.nodal_values;
        for i in 0..u.len() {
            assert!((u[i] - u[u.len() - 1 - i]).abs() < 1e-12);
            assert!(u[i] >= 0.0);
        }
    }

    #[test]
    fn midpoint_source_and_f32() {
        let mesh = Mesh1D::<f64>::new(2, 2).unwrap();
        let f = Source1D::Midpoint(vec![1.0; mesh.n_cells]);
        let a = vec![1.5; mesh.n_cells];
        let s1 = assemble_solve_1d(&mesh, &a, &f).unwrap();
        let s2 = assemble_solve_1d(&mesh, &a, &Source1D::Constant(1.0)).unwrap();
        assert_eq!(s1.nodal_values, s2.nodal_values);

        let mesh32 = Mesh1D::<f32>::new(0, 2).unwrap();
        let sol = assemble_solve_1d(&mesh32, &[1.0f32; 4], &Source1D::Constant(1.0)).unwrap();
        assert!((sol.point_value(0.5).unwrap() - 0.125).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_coefficients() {
        let mesh = Mesh1D::<f64>::new(0, 2).unwrap();
        assert!(assemble_solve_1d(&mesh, &[1.0, 0.0, 1.0, 1.0], &Source1D::Constant(1.0)).is_err());
        assert!(assemble_solve_1d(&mesh, &[1.0; 3], &Source1D::Constant(1.0)).is_err());
    }
}
