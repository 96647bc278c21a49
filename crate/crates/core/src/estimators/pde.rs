use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::PdeModel;
use crate::fem1d::{Mesh1D, Solver1D, Source1D};
use crate::fem2d::{average_functional, flux_functional, BoundarySpec, Fe2d, Mesh2D, Source2D, D_STAR};
use crate::random_field::{KlBasis, KlTable};
use crate::{Error, Result};

/// The three model problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// −(a u′)′ = 1 on (0,1), zero Dirichlet data, F = u(1/3).
    OneD,
    /// −∇·(a∇u) = 1 on (0,1)², zero Dirichlet data, F = mean of u over D*.
    TwoDDirichlet,
    /// Flow cell, F = outflow through x₁ = 1.
    TwoDFlowCell,
}

impl ProblemKind {
    pub fn spatial_dim(self) -> usize {
        match self {
            ProblemKind::OneD => 1,
            _ => 2,
        }
    }
}

/// Relative residual for the 2D solves.
pub const CG_TOLERANCE: f64 = 1e-10;
const LEVEL_SLOTS: usize = 32;

enum LevelMesh {
    OneD(Mesh1D<f64>),
    TwoD { fe: Fe2d<f64>, probe_iterations: usize },
}

struct LevelData {
    table: KlTable,
    mesh: LevelMesh,
}

/// Lognormal diffusion problem with a KL-expanded coefficient a = exp(Σ √μ_j ξ_j y_j).
///
/// Level ℓ uses `2^(ℓ + ell0)` cells per side. Per-level coefficient tables hold
/// `s_max` KL terms at the element midpoints or centroids and are built on first use.
pub struct PdeProblem {
    pub kind: ProblemKind,
    pub ell0: usize,
    pub s_max: usize,
    basis: Arc<KlBasis>,
    levels: Vec<OnceLock<Arc<LevelData>>>,
    build_lock: Mutex<()>,
}

impl PdeProblem {
    pub fn new(kind: ProblemKind, ell0: usize, basis: Arc<KlBasis>, s_max: usize) -> Result<Self> {
        if basis.dimension() != kind.spatial_dim() {
            return Err(Error::config(format!(
                "{kind:?} needs a {}-dimensional KL basis",
                kind.spatial_dim()
            )));
        }
        if s_max == 0 || s_max > basis.s_star {
            return Err(Error::config(format!(
                "s_max = {s_max} outside 1..={} resolved KL terms",
                basis.s_star
            )));
        }
        if kind == ProblemKind::TwoDDirichlet && ell0 < 3 {
            return Err(Error::config("the averaging region needs ℓ0 ≥ 3"));
        }
        Ok(Self {
            kind,
            ell0,
            s_max,
            basis,
            levels: (0..LEVEL_SLOTS).map(|_| OnceLock::new()).collect(),
            build_lock: Mutex::new(()),
        })
    }

    pub fn basis(&self) -> &KlBasis {
        &self.basis
    }

    fn level_data(&self, level: usize) -> Result<Arc<LevelData>> {
        let slot = self
            .levels
            .get(level)
            .ok_or_else(|| Error::Resource(format!("level {level} beyond supported range")))?;
        if let Some(d) = slot.get() {
            return Ok(Arc::clone(d));
        }
        let _guard = self.build_lock.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(d) = slot.get() {
            return Ok(Arc::clone(d));
        }
        let data = Arc::new(self.build(level)?);
        let _ = slot.set(Arc::clone(&data));
        Ok(data)
    }

    fn build(&self, level: usize) -> Result<LevelData> {
        match self.kind {
            ProblemKind::OneD => {
                let mesh = Mesh1D::<f64>::new(level, self.ell0)?;
                let table = self.basis.eval_table(&mesh.midpoints, self.s_max)?;
                Ok(LevelData {
                    table,
                    mesh: LevelMesh::OneD(mesh),
                })
            }
            ProblemKind::TwoDDirichlet | ProblemKind::TwoDFlowCell => {
                let mesh = Mesh2D::<f64>::new(level, self.ell0)?;
                let table = self.basis.eval_table(&mesh.centroids, self.s_max)?;
                let bc = if self.kind == ProblemKind::TwoDFlowCell {
                    BoundarySpec::FlowCell
                } else {
                    BoundarySpec::AllDirichletZero
                };
                let fe = Fe2d::new(mesh, bc);
                let ones = vec![1.0; fe.mesh().n_elements()];
                let probe = fe.solve(&ones, &self.source_2d(), CG_TOLERANCE)?;
                Ok(LevelData {
                    table,
                    mesh: LevelMesh::TwoD {
                        fe,
                        probe_iterations: probe.iterations,
                    },
                })
            }
        }
    }

    fn source_2d(&self) -> Source2D<f64> {
        match self.kind {
            ProblemKind::TwoDFlowCell => Source2D::Constant(0.0),
            _ => Source2D::Constant(1.0),
        }
    }

    /// Builds the coefficient tables for levels `0..=level` ahead of parallel use.
    pub fn prepare(&self, level: usize) -> Result<()> {
        for l in 0..=level {
            self.level_data(l)?;
        }
        Ok(())
    }
}

impl PdeModel for PdeProblem {
    fn spatial_dim(&self) -> usize {
        self.kind.spatial_dim()
    }

    fn mesh_width(&self, level: usize) -> f64 {
        let delta = (-((level + self.ell0) as f64)).exp2();
        match self.kind {
            ProblemKind::OneD => delta,
            _ => std::f64::consts::SQRT_2 * delta,
        }
    }

    fn functional(&self, level: usize, y: &[f64]) -> Result<f64> {
        if y.len() > self.s_max {
            return Err(Error::config(format!(
                "{} parameters given, problem was built for at most {}",
                y.len(),
                self.s_max
            )));
        }
        let data = self.level_data(level)?;
        let table = &data.table;
        let mut a = vec![0.0; table.n_points];
        table.coefficients_into(y, 1.0, 0.0, &mut a);
        match &data.mesh {
            LevelMesh::OneD(mesh) => {
                Solver1D::new(mesh).solve_point(&a, &Source1D::Constant(1.0), 1.0 / 3.0)
            }
            LevelMesh::TwoD { fe, .. } => {
                let sol = fe.solve(&a, &self.source_2d(), CG_TOLERANCE)?;
                match self.kind {
                    ProblemKind::TwoDFlowCell => flux_functional(&sol, &a),
                    _ => average_functional(&sol, &D_STAR),
                }
            }
        }
    }

    fn difference_cost(&self, level: usize, s_fine: usize, s_coarse: usize) -> Result<f64> {
        match self.kind {
            ProblemKind::OneD => Ok((2.0 * s_fine as f64 + 13.0) / self.mesh_width(level)),
            _ => {
                let fine = self.single_cost(level, s_fine)?;
                let coarse = if level == 0 {
                    0.0
                } else {
                    self.single_cost(level - 1, s_coarse)?
                };
                Ok(fine + coarse)
            }
        }
    }

    fn single_cost(&self, level: usize, s: usize) -> Result<f64> {
        match self.kind {
            ProblemKind::OneD => Ok((2.0 * s as f64 + 9.0) / self.mesh_width(level)),
            _ => {
                let data = self.level_data(level)?;
                match &data.mesh {
                    LevelMesh::TwoD { fe, probe_iterations } => Ok(s as f64
                        * fe.mesh().n_elements() as f64
                        + *probe_iterations as f64 * fe.nnz() as f64),
                    LevelMesh::OneD(_) => unreachable!("2D kinds build 2D meshes"),
                }
            }
        }
    }
}
