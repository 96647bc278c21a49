//! Piecewise linear finite elements on structured triangulations of the unit
//! square, with pure Dirichlet or flow-cell boundary conditions.
//!
//! Each of the `n × n` cells is split along its lower-left to upper-right
//! diagonal. Nodes are numbered `j * (n + 1) + i`, elements `2 * (j * n + i)`
//! (lower triangle) and `2 * (j * n + i) + 1` (upper triangle).

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::{Error, Real, Result};

/// Local stiffness matrices for unit coefficient. They do not depend on the
/// cell width in two dimensions.
const LOWER_K: [[f64; 3]; 3] = [[0.5, -0.5, 0.0], [-0.5, 1.0, -0.5], [0.0, -0.5, 0.5]];
const UPPER_K: [[f64; 3]; 3] = [[0.5, 0.0, -0.5], [0.0, 0.5, -0.5], [-0.5, -0.5, 1.0]];

/// Uniform triangulation with `2^(level + ell0)` cells per side.
#[derive(Clone, Debug)]
pub struct Mesh2D<T> {
    pub level: usize,
    pub ell0: usize,
    /// Cells per side.
    pub n: usize,
    /// Element diameter √2 / n.
    pub h: T,
    /// Element centroids, two coordinates per element.
    pub centroids: Vec<T>,
}

impl<T: Real> Mesh2D<T> {
    pub fn new(level: usize, ell0: usize) -> Result<Self> {
        let k = level + ell0;
        if k == 0 || k > 14 {
            return Err(Error::config(format!("mesh exponent ℓ + ℓ0 = {k} outside 1..=14")));
        }
        let n = 1usize << k;
        let delta = T::one() / T::from_usize_lossy(n);
        let third = T::one() / T::lit(3.0);
        let mut centroids = Vec::with_capacity(4 * n * n);
        for j in 0..n {
            for i in 0..n {
                let x = T::from_usize_lossy(i);
                let y = T::from_usize_lossy(j);
                let two = T::lit(2.0);
                centroids.push((x + two * third) * delta);
                centroids.push((y + third) * delta);
                centroids.push((x + third) * delta);
                centroids.push((y + two * third) * delta);
            }
        }
        Ok(Self {
            level,
            ell0,
            n,
            h: T::lit(std::f64::consts::SQRT_2) * delta,
            centroids,
        })
    }

    pub fn n_elements(&self) -> usize {
        2 * self.n * self.n
    }

    pub fn n_nodes(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    /// Vertex node indices of element `e`, in the order used by the local matrices.
    pub fn element_nodes(&self, e: usize) -> [usize; 3] {
        element_nodes(self.n, e)
    }

    pub fn node_coords(&self, node: usize) -> (T, T) {
        let delta = T::one() / T::from_usize_lossy(self.n);
        let i = node % (self.n + 1);
        let j = node / (self.n + 1);
        (T::from_usize_lossy(i) * delta, T::from_usize_lossy(j) * delta)
    }
}

fn element_nodes(n: usize, e: usize) -> [usize; 3] {
    let cell = e / 2;
    let i = cell % n;
    let j = cell / n;
    let ll = j * (n + 1) + i;
    let lr = ll + 1;
    let ur = ll + n + 2;
    let ul = ll + n + 1;
    if e % 2 == 0 {
        [ll, lr, ur]
    } else {
        [ll, ur, ul]
    }
}

fn local_k(e: usize) -> &'static [[f64; 3]; 3] {
    if e % 2 == 0 {
        &LOWER_K
    } else {
        &UPPER_K
    }
}

/// Boundary conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundarySpec {
    /// u = 0 on the whole boundary.
    AllDirichletZero,
    /// u = 1 on x₁ = 0, u = 0 on x₁ = 1, zero flux on x₂ ∈ {0, 1}.
    FlowCell,
}

/// Right-hand side of the 2D problem.
#[derive(Clone, Debug)]
pub enum Source2D<T> {
    Constant(T),
    /// f at element centroids (one-point rule).
    Centroid(Vec<T>),
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct CsrMatrix<T> {
    pub n_rows: usize,
    pub row_ptr: Arc<Vec<usize>>,
    pub col_idx: Arc<Vec<usize>>,
    pub values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        for (row, out) in y.iter_mut().enumerate().take(self.n_rows) {
            let mut acc = T::zero();
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc = acc + self.values[k] * x[self.col_idx[k]];
            }
            *out = acc;
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        let cols = &self.col_idx[self.row_ptr[row]..self.row_ptr[row + 1]];
        match cols.binary_search(&col) {
            Ok(k) => self.values[self.row_ptr[row] + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows).map(|i| self.get(i, i)).collect()
    }

    /// max |A_ij - A_ji| over stored entries.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for row in 0..self.n_rows {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                let col = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(col, row)).abs());
            }
        }
        worst
    }

    pub fn to_triplets(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::with_capacity(self.nnz());
        for row in 0..self.n_rows {
            for k in self.row_ptr[row]..self.row_ptr[row + 1] {
                out.push((row, self.col_idx[k], self.values[k]));
            }
        }
        out
    }

    /// Writes `row col value` lines.
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (r, c, v) in self.to_triplets() {
            writeln!(w, "{r} {c} {:e}", v.as_f64())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Assembled constrained system.
#[derive(Clone, Debug)]
pub struct SparseSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
    layout: Arc<DofLayout>,
}

/// Nodal solution including boundary values.
#[derive(Clone, Debug)]
pub struct FeSolution2D<T> {
    /// Cells per side.
    pub n: usize,
    pub bc: BoundarySpec,
    /// Values at all `(n + 1)²` nodes.
    pub nodal: Vec<T>,
    /// Conjugate gradient iterations used.
    pub iterations: usize,
}

#[derive(Debug)]
struct DofLayout {
    n: usize,
    bc: BoundarySpec,
    /// Dof index per node, `usize::MAX` for Dirichlet nodes.
    dof_of_node: Vec<usize>,
    node_of_dof: Vec<usize>,
    /// Dirichlet nodes carrying the value one.
    lifted: Vec<bool>,
}

impl DofLayout {
    fn new(n: usize, bc: BoundarySpec) -> Self {
        let nodes = (n + 1) * (n + 1);
        let mut dof_of_node = vec![usize::MAX; nodes];
        let mut node_of_dof = Vec::new();
        let mut lifted = vec![false; nodes];
        for j in 0..=n {
            for i in 0..=n {
                let node = j * (n + 1) + i;
                let free = match bc {
                    BoundarySpec::AllDirichletZero => i > 0 && i < n && j > 0 && j < n,
                    BoundarySpec::FlowCell => i > 0 && i < n,
                };
                if free {
                    dof_of_node[node] = node_of_dof.len();
                    node_of_dof.push(node);
                } else if bc == BoundarySpec::FlowCell && i == 0 {
                    lifted[node] = true;
                }
            }
        }
        Self {
            n,
            bc,
            dof_of_node,
            node_of_dof,
            lifted,
        }
    }
}

/// Assembler and solver for a fixed mesh and boundary specification.
///
/// The sparsity pattern and the element-to-slot map are built once, so each
/// sample only scatters element contributions.
#[derive(Clone, Debug)]
pub struct Fe2d<T> {
    mesh: Mesh2D<T>,
    layout: Arc<DofLayout>,
    row_ptr: Arc<Vec<usize>>,
    col_idx: Arc<Vec<usize>>,
    /// CSR slot per element and local (p, q) pair; `usize::MAX` when either node is constrained.
    slots: Vec<[usize; 9]>,
}

impl<T: Real> Fe2d<T> {
    pub fn new(mesh: Mesh2D<T>, bc: BoundarySpec) -> Self {
        let layout = DofLayout::new(mesh.n, bc);
        let m = layout.node_of_dof.len();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for e in 0..mesh.n_elements() {
            let nodes = mesh.element_nodes(e);
            for &a in &nodes {
                let ra = layout.dof_of_node[a];
                if ra == usize::MAX {
                    continue;
                }
                for &b in &nodes {
                    let cb = layout.dof_of_node[b];
                    if cb != usize::MAX {
                        rows[ra].push(cb);
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(m + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let slots = (0..mesh.n_elements())
            .map(|e| {
                let nodes = mesh.element_nodes(e);
                let mut s = [usize::MAX; 9];
                for p in 0..3 {
                    let r = layout.dof_of_node[nodes[p]];
                    if r == usize::MAX {
                        continue;
                    }
                    for q in 0..3 {
                        let c = layout.dof_of_node[nodes[q]];
                        if c == usize::MAX {
                            continue;
                        }
                        let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
                        s[3 * p + q] = row_ptr[r] + cols.binary_search(&c).expect("pattern entry");
                    }
                }
                s
            })
            .collect();
        Self {
            mesh,
            layout: Arc::new(layout),
            row_ptr: Arc::new(row_ptr),
            col_idx: Arc::new(col_idx),
            slots,
        }
    }

    pub fn mesh(&self) -> &Mesh2D<T> {
        &self.mesh
    }

    pub fn boundary(&self) -> BoundarySpec {
        self.layout.bc
    }

    pub fn n_dofs(&self) -> usize {
        self.layout.node_of_dof.len()
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    fn check_coefficients(&self, a: &[T]) -> Result<()> {
        if a.len() != self.mesh.n_elements() {
            return Err(Error::domain(format!(
                "expected {} element coefficients, got {}",
                self.mesh.n_elements(),
                a.len()
            )));
        }
        if let Some(bad) = a.iter().find(|v| !(**v > T::zero())) {
            return Err(Error::domain(format!("coefficient {bad} is not positive")));
        }
        Ok(())
    }

    /// Assembles the constrained system for element coefficients `a`.
    pub fn assemble(&self, a: &[T], f: &Source2D<T>) -> Result<SparseSystem<T>> {
        self.check_coefficients(a)?;
        if let Source2D::Centroid(v) = f {
            if v.len() != self.mesh.n_elements() {
                return Err(Error::domain("source must be given at every centroid"));
            }
        }
        let m = self.n_dofs();
        let mut values = vec![T::zero(); self.nnz()];
        let mut rhs = vec![T::zero(); m];
        let delta = T::one() / T::from_usize_lossy(self.mesh.n);
        let load_scale = delta * delta / T::lit(6.0);
        for e in 0..self.mesh.n_elements() {
            let nodes = self.mesh.element_nodes(e);
            let k = local_k(e);
            let slots = &self.slots[e];
            let fe = match f {
                Source2D::Constant(c) => *c,
                Source2D::Centroid(v) => v[e],
            };
            for p in 0..3 {
                let r = self.layout.dof_of_node[nodes[p]];
                if r == usize::MAX {
                    continue;
                }
                rhs[r] = rhs[r] + fe * load_scale;
                for q in 0..3 {
                    let kpq = a[e] * T::lit(k[p][q]);
                    let slot = slots[3 * p + q];
                    if slot != usize::MAX {
                        values[slot] = values[slot] + kpq;
                    } else if self.layout.lifted[nodes[q]] {
                        rhs[r] = rhs[r] - kpq;
                    }
                }
            }
        }
        Ok(SparseSystem {
            matrix: CsrMatrix {
                n_rows: m,
                row_ptr: Arc::clone(&self.row_ptr),
                col_idx: Arc::clone(&self.col_idx),
                values,
            },
            rhs,
            layout: Arc::clone(&self.layout),
        })
    }

    /// Assembles and solves in one call.
    pub fn solve(&self, a: &[T], f: &Source2D<T>, tol: T) -> Result<FeSolution2D<T>> {
        let sys = self.assemble(a, f)?;
        solve_2d(&sys, tol)
    }

    /// Stiffness matrix over all nodes with no boundary conditions applied.
    pub fn assemble_unconstrained(&self, a: &[T]) -> Result<CsrMatrix<T>> {
        self.check_coefficients(a)?;
        let nodes_total = self.mesh.n_nodes();
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); nodes_total];
        for e in 0..self.mesh.n_elements() {
            let nodes = self.mesh.element_nodes(e);
            let k = local_k(e);
            for p in 0..3 {
                for q in 0..3 {
                    rows[nodes[p]].push((nodes[q], a[e] * T::lit(k[p][q])));
                }
            }
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut r in rows {
            r.sort_by_key(|x| x.0);
            let mut iter = r.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v = v + v2;
                    iter.next();
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            n_rows: nodes_total,
            row_ptr: Arc::new(row_ptr),
            col_idx: Arc::new(col_idx),
            values,
        })
    }
}

/// Assembles the constrained system on `mesh`.
pub fn assemble_2d<T: Real>(mesh: &Mesh2D<T>, a_centroid: &[T], f: &Source2D<T>, bc: BoundarySpec) -> Result<SparseSystem<T>> {
    Fe2d::new(mesh.clone(), bc).assemble(a_centroid, f)
}

/// Jacobi-preconditioned conjugate gradients to relative residual `tol`,
/// at most `20 √M` iterations.
pub fn solve_2d<T: Real>(sys: &SparseSystem<T>, tol: T) -> Result<FeSolution2D<T>> {
    let a = &sys.matrix;
    let m = a.n_rows;
    let max_iter = ((20.0 * (m as f64).sqrt()).ceil() as usize).max(20);
    let b_norm = sys.rhs.iter().map(|v| *v * *v).sum::<T>().sqrt();
    let mut x = vec![T::zero(); m];
    let mut iterations = 0;
    if b_norm > T::zero() {
        let inv_diag: Vec<T> = a.diagonal().iter().map(|d| T::one() / *d).collect();
        let mut r = sys.rhs.clone();
        let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(r, d)| *r * *d).collect();
        let mut p = z.clone();
        let mut ap = vec![T::zero(); m];
        let mut rz: T = r.iter().zip(&z).map(|(a, b)| *a * *b).sum();
        let target = tol * b_norm;
        loop {
            let r_norm = r.iter().map(|v| *v * *v).sum::<T>().sqrt();
            if r_norm <= target {
                break;
            }
            if iterations >= max_iter {
                return Err(Error::numerical(format!(
                    "CG did not reach relative residual {tol} in {max_iter} iterations (at {})",
                    r_norm / b_norm
                )));
            }
            a.matvec_into(&p, &mut ap);
            let pap: T = p.iter().zip(&ap).map(|(a, b)| *a * *b).sum();
            let alpha = rz / pap;
            for i in 0..m {
                x[i] = x[i] + alpha * p[i];
                r[i] = r[i] - alpha * ap[i];
            }
            for i in 0..m {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new: T = r.iter().zip(&z).map(|(a, b)| *a * *b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..m {
                p[i] = z[i] + beta * p[i];
            }
            iterations += 1;
        }
    }
    let layout = &sys.layout;
    let mut nodal: Vec<T> = layout
        .lifted
        .iter()
        .map(|&l| if l { T::one() } else { T::zero() })
        .collect();
    for (dof, &node) in layout.node_of_dof.iter().enumerate() {
        nodal[node] = x[dof];
    }
    Ok(FeSolution2D {
        n: layout.n,
        bc: layout.bc,
        nodal,
        iterations,
    })
}

/// Axis-aligned rectangle `(x0, x1) × (y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

/// The quantity-of-interest region (3/4, 7/8) × (7/8, 1).
pub const D_STAR: Rect = Rect {
    x0: 0.75,
    x1: 0.875,
    y0: 0.875,
    y1: 1.0,
};

fn grid_index(v: f64, n: usize) -> Result<usize> {
    let s = v * n as f64;
    let r = s.round();
    if (s - r).abs() > 1e-9 || r < 0.0 || r > n as f64 {
        return Err(Error::config(format!(
            "region edge {v} is not on a mesh line of a {n}×{n} grid"
        )));
    }
    Ok(r as usize)
}

/// Mean of u_h over a mesh-aligned rectangle, integrated exactly.
pub fn average_functional<T: Real>(sol: &FeSolution2D<T>, region: &Rect) -> Result<T> {
    let n = sol.n;
    let (i0, i1) = (grid_index(region.x0, n)?, grid_index(region.x1, n)?);
    let (j0, j1) = (grid_index(region.y0, n)?, grid_index(region.y1, n)?);
    if i1 <= i0 || j1 <= j0 {
        return Err(Error::config("empty averaging region"));
    }
    // each triangle contributes (area/3) Σ vertex values; area is the same for all
    let mut acc = T::zero();
    for j in j0..j1 {
        for i in i0..i1 {
            for half in 0..2 {
                let e = 2 * (j * n + i) + half;
                for node in element_nodes(n, e) {
                    acc = acc + sol.nodal[node];
                }
            }
        }
    }
    let cells = T::from_usize_lossy((i1 - i0) * (j1 - j0));
    Ok(acc / (T::lit(6.0) * cells))
}

/// Outflow −Σ_T a_T ∫_T ∇u_h·∇φ with φ the FE function equal to one on x₁ = 1.
pub fn flux_functional<T: Real>(sol: &FeSolution2D<T>, a_centroid: &[T]) -> Result<T> {
    if sol.bc != BoundarySpec::FlowCell {
        return Err(Error::config("flux functional needs flow-cell boundary conditions"));
    }
    let n = sol.n;
    if a_centroid.len() != 2 * n * n {
        return Err(Error::domain("coefficient length does not match the mesh"));
    }
    let mut acc = T::zero();
    for j in 0..n {
        for half in 0..2 {
            let e = 2 * (j * n + n - 1) + half;
            let nodes = element_nodes(n, e);
            let k = local_k(e);
            let mut local = T::zero();
            for p in 0..3 {
                for q in 0..3 {
                    if nodes[q] % (n + 1) == n {
                        local = local + T::lit(k[p][q]) * sol.nodal[nodes[p]];
                    }
                }
            }
            acc = acc + a_centroid[e] * local;
        }
    }
    Ok(-acc)
}
