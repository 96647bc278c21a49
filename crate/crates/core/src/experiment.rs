//! Experiment configuration, tolerance sweeps and CSV output.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::estimators::{
    calibrate_bias, mlmc_run, mlqmc_adaptive, relative_std_error, single_level_mc, single_level_qmc, AdaptiveOptions,
    Allocator, BiasEstimator, BiasModel, CalibrationLadder, CalibrationOptions, Hierarchy, LevelMode, MlResult,
    PdeModel, PdeProblem, ProblemKind, SPolicy, SingleLevel,
};
use crate::qmc_points::GeneratingVector;
use crate::random_field::{default_quadrature_order, CovarianceKernel, KlBasis, MaternParams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "mc")]
    Mc,
    #[serde(rename = "qmc")]
    Qmc,
    #[serde(rename = "mlmc_g")]
    MlmcG,
    #[serde(rename = "mlmc_gw")]
    MlmcGw,
    #[serde(rename = "mlqmc")]
    Mlqmc,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Mc => "MC",
            Method::Qmc => "QMC",
            Method::MlmcG => "MLMC(G)",
            Method::MlmcGw => "MLMC(GW)",
            Method::Mlqmc => "MLQMC",
        }
    }

    fn uses_lattice(self) -> bool {
        matches!(self, Method::Qmc | Method::Mlqmc)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelModeConfig {
    /// L + 1 levels for the row with finest level L.
    #[default]
    Fixed,
    /// Levels added by the bias test, capped by `level_cap`.
    Adaptive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SPolicyConfig {
    /// s_L on every level.
    #[default]
    Fixed,
    /// s_ℓ = ⌈C_bal h_ℓ^{−d/ν}⌉ per level.
    Variable,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasConfig {
    #[default]
    Model,
    Richardson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    #[serde(default = "default_ell0")]
    pub ell0: usize,
    /// Finest levels L, one sweep point each.
    pub levels: Vec<usize>,
    #[serde(default)]
    pub level_mode: LevelModeConfig,
    #[serde(default)]
    pub s_policy: SPolicyConfig,
}

fn default_ell0() -> usize {
    3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaternSection {
    pub nu: f64,
    #[serde(default = "one")]
    pub sigma2: f64,
    #[serde(default = "one")]
    pub lambda_c: f64,
    pub quadrature_order: Option<usize>,
    /// Directory for cached KL bases.
    pub cache_dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub methods: Vec<Method>,
    #[serde(default = "default_shifts")]
    pub shifts: usize,
    #[serde(default)]
    pub seed: u64,
    /// Generating vector file; the bundled vector when absent.
    pub vector_file: Option<PathBuf>,
    #[serde(default)]
    pub bias: BiasConfig,
    #[serde(default = "default_level_cap")]
    pub level_cap: usize,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    /// Measure wall-clock time per level. Off by default so output is reproducible.
    #[serde(default)]
    pub record_wall: bool,
}

fn default_shifts() -> usize {
    16
}
fn default_level_cap() -> usize {
    12
}
fn default_warmup() -> u64 {
    100
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    /// Skip calibration and use these constants.
    pub c_fe: Option<f64>,
    pub c_trunc: Option<f64>,
    /// Cells per side of the h ladder meshes.
    pub ladder_cells: Vec<usize>,
    /// Cells per side of the reference mesh h*.
    pub reference_cells: usize,
    pub s_ladder: Vec<usize>,
    pub s_star: usize,
    pub n_mc: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Scale::Desk.calibration()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub path: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            path: PathBuf::from("results.csv"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub matern: MaternSection,
    pub estimators: EstimatorSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Calibration effort presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    /// 10³ samples, h* = 1/512, s* = 200.
    Desk,
    /// 10⁵ samples, h* = 1/1024, s* = 500.
    Paper,
}

impl Scale {
    pub fn calibration(self) -> CalibrationSection {
        let (reference_cells, s_star, n_mc) = match self {
            Scale::Desk => (512, 200, 1_000),
            Scale::Paper => (1024, 500, 100_000),
        };
        CalibrationSection {
            c_fe: None,
            c_trunc: None,
            ladder_cells: vec![8, 16, 32, 64, 128],
            reference_cells,
            s_ladder: vec![2, 4, 8, 16, 32, 64],
            s_star,
            n_mc,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a configuration; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.estimators.vector_file.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.matern.cache_dir.as_mut() {
            resolve(p);
        }
        resolve(&mut cfg.output.path);
        Ok(cfg)
    }

    /// Replaces the calibration effort, keeping explicit constants and ladders.
    pub fn apply_scale(&mut self, scale: Scale) {
        let preset = scale.calibration();
        self.calibration.reference_cells = preset.reference_cells;
        self.calibration.s_star = preset.s_star;
        self.calibration.n_mc = preset.n_mc;
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.levels.is_empty() {
            return Err(Error::config("problem.levels must list at least one L"));
        }
        if p.kind == ProblemKind::TwoDDirichlet && p.ell0 < 3 {
            return Err(Error::config("two_d_dirichlet needs ell0 ≥ 3 so the averaging region is a union of cells"));
        }
        if self.estimators.methods.is_empty() {
            return Err(Error::config("estimators.methods is empty"));
        }
        if self.estimators.shifts < 2 {
            return Err(Error::config("estimators.shifts must be at least 2"));
        }
        MaternParams::new(self.matern.nu, self.matern.sigma2, self.matern.lambda_c, p.kind.spatial_dim())?;
        let c = &self.calibration;
        if c.c_fe.is_some() != c.c_trunc.is_some() {
            return Err(Error::config("give both calibration.c_fe and calibration.c_trunc or neither"));
        }
        self.level_of_cells(c.reference_cells)?;
        for &cells in &c.ladder_cells {
            self.level_of_cells(cells)?;
        }
        Ok(())
    }

    fn level_of_cells(&self, cells: usize) -> Result<usize> {
        let ell0 = self.problem.ell0;
        if !cells.is_power_of_two() || cells < 1 << ell0 {
            return Err(Error::config(format!(
                "{cells} cells per side is not a power of two ≥ 2^ell0 = {}",
                1usize << ell0
            )));
        }
        Ok(cells.trailing_zeros() as usize - ell0)
    }

    fn calibration_options(&self) -> Result<CalibrationOptions> {
        let c = &self.calibration;
        Ok(CalibrationOptions {
            h_levels: c
                .ladder_cells
                .iter()
                .map(|&n| self.level_of_cells(n))
                .collect::<Result<_>>()?,
            reference_level: self.level_of_cells(c.reference_cells)?,
            s_ladder: c.s_ladder.clone(),
            s_star: c.s_star,
            n_mc: c.n_mc,
            seed: self.estimators.seed,
        })
    }
}

/// One (estimator, L) result. Per-level data is JSON in a single cell.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ResultRow {
    pub estimator: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub eps: f64,
    pub s_l: usize,
    pub relative_std_error: f64,
    pub estimate: f64,
    pub variance: f64,
    pub bias_estimate: f64,
    pub cost_model: f64,
    pub cost_wall: f64,
    pub levels_n: String,
    pub levels_v: String,
    pub levels_s: String,
    pub error: String,
}

impl ResultRow {
    fn fill(&mut self, r: &MlResult) {
        self.estimate = r.estimate;
        self.variance = r.total_variance;
        self.bias_estimate = r.bias_estimate;
        self.cost_model = r.total_cost_model;
        self.cost_wall = r.total_cost_wall;
        self.relative_std_error = relative_std_error(r.rmse(), r.estimate).unwrap_or(f64::NAN);
        let ns: Vec<u64> = r.levels.iter().map(|l| l.n).collect();
        let vs: Vec<f64> = r.levels.iter().map(|l| l.shift_var).collect();
        let ss: Vec<usize> = r.levels.iter().map(|l| l.s).collect();
        self.levels_n = serde_json::to_string(&ns).unwrap_or_default();
        self.levels_v = serde_json::to_string(&vs).unwrap_or_default();
        self.levels_s = serde_json::to_string(&ss).unwrap_or_default();
    }

    pub fn is_error(&self) -> bool {
        !self.error.is_empty()
    }
}

/// Everything a run produces besides the rows.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub bias_model: Option<BiasModel>,
    pub ladder: Option<CalibrationLadder>,
    pub warnings: Vec<String>,
}

impl ExperimentOutput {
    pub fn any_error(&self) -> bool {
        self.rows.iter().any(ResultRow::is_error)
    }
}

/// Computes (or loads from the cache directory) the KL basis for a configuration.
pub fn build_basis(cfg: &ExperimentConfig) -> Result<KlBasis> {
    let d = cfg.problem.kind.spatial_dim();
    let p = MaternParams::new(cfg.matern.nu, cfg.matern.sigma2, cfg.matern.lambda_c, d)?;
    let q = cfg.matern.quadrature_order.unwrap_or_else(|| default_quadrature_order(d));
    let kernel = CovarianceKernel::Matern(p);
    match &cfg.matern.cache_dir {
        Some(dir) => KlBasis::load_or_compute(dir, kernel, q),
        None => KlBasis::compute(kernel, q),
    }
}

/// Runs every (L, estimator) pair of the configuration.
///
/// For each L the tolerance is ε_L = 2√2 C_FE h_L² and s_L = ⌈C_bal h_L^{−d/ν}⌉,
/// capped at the resolved KL terms. Failures of individual runs become error
/// rows; a calibration failure marks every row.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let vector = if cfg.estimators.methods.iter().any(|m| m.uses_lattice()) {
        Some(match &cfg.estimators.vector_file {
            Some(p) => GeneratingVector::load(p)?,
            None => GeneratingVector::bundled(),
        })
    } else {
        None
    };
    let basis = Arc::new(build_basis(cfg)?);
    let s_max = basis.s_star.min(cfg.calibration.s_star);
    let mut out = ExperimentOutput::default();
    if s_max < cfg.calibration.s_star {
        out.warnings.push(format!(
            "only {} KL terms are resolved; s* reduced from {}",
            basis.s_star, cfg.calibration.s_star
        ));
    }
    let problem = PdeProblem::new(cfg.problem.kind, cfg.problem.ell0, basis, s_max)?;
    let nu = cfg.matern.nu;
    let d = cfg.problem.kind.spatial_dim();

    let bias: Result<BiasModel> = match (cfg.calibration.c_fe, cfg.calibration.c_trunc) {
        (Some(c_fe), Some(c_trunc)) => BiasModel::new(c_fe, c_trunc, nu, d),
        _ => cfg.calibration_options().and_then(|mut opts| {
            opts.s_star = s_max;
            opts.s_ladder.retain(|&s| s < s_max);
            let (model, ladder) = calibrate_bias(&problem, nu, &opts)?;
            out.ladder = Some(ladder);
            Ok(model)
        }),
    };
    let bias = match bias {
        Ok(b) => {
            out.warnings.extend(b.warnings.iter().cloned());
            out.bias_model = Some(b.clone());
            b
        }
        Err(e) => {
            let msg = format!("calibration failed: {e}");
            for &l in &cfg.problem.levels {
                for m in &cfg.estimators.methods {
                    out.rows.push(ResultRow {
                        estimator: m.label().into(),
                        l,
                        error: msg.clone(),
                        ..Default::default()
                    });
                }
            }
            return Ok(out);
        }
    };

    let est = &cfg.estimators;
    let base_opts = AdaptiveOptions {
        shifts: est.shifts,
        levels: LevelMode::Adaptive { cap: est.level_cap },
        bias: match est.bias {
            BiasConfig::Model => BiasEstimator::Model,
            BiasConfig::Richardson => BiasEstimator::Richardson { alpha: bias.alpha },
        },
        warmup: est.warmup,
        record_wall: est.record_wall,
        seed: est.seed,
    };
    for &l in &cfg.problem.levels {
        let h = problem.mesh_width(l);
        let eps = 2.0 * std::f64::consts::SQRT_2 * bias.c_fe * h * h;
        let wanted = bias.choose_s(h);
        let s_l = wanted.min(s_max);
        if s_l < wanted {
            out.warnings.push(format!("L = {l}: s_L = {wanted} capped at {s_max}"));
        }
        let opts = AdaptiveOptions {
            levels: match cfg.problem.level_mode {
                LevelModeConfig::Fixed => LevelMode::Fixed(l + 1),
                LevelModeConfig::Adaptive => LevelMode::Adaptive { cap: est.level_cap },
            },
            ..base_opts
        };
        let s_policy = match cfg.problem.s_policy {
            SPolicyConfig::Fixed => SPolicy::Fixed(s_l),
            SPolicyConfig::Variable => SPolicy::Variable {
                c_bal: bias.c_bal(),
                nu,
                cap: s_max,
            },
        };
        let hierarchy = Hierarchy::new(&problem, s_policy, Some(bias.clone()));
        let single = SingleLevel {
            model: &problem,
            level: l,
            s: s_l,
            bias_model: Some(bias.clone()),
        };
        for &m in &est.methods {
            let result = match m {
                Method::Mc => single_level_mc(&single, eps, &opts),
                Method::Qmc => single_level_qmc(&single, vector.as_ref().expect("vector loaded"), eps, &opts),
                Method::MlmcG => mlmc_run(&hierarchy, eps, &opts, Allocator::Giles),
                Method::MlmcGw => mlmc_run(&hierarchy, eps, &opts, Allocator::GreedyGw),
                Method::Mlqmc => mlqmc_adaptive(&hierarchy, vector.as_ref().expect("vector loaded"), eps, &opts),
            };
            let mut row = ResultRow {
                estimator: m.label().into(),
                l,
                eps,
                s_l,
                ..Default::default()
            };
            match result {
                Ok(r) => row.fill(&r),
                Err(Error::LevelCap { cap, partial }) => {
                    row.fill(&partial);
                    row.error = format!("level cap {cap} reached");
                }
                Err(e) => row.error = e.to_string(),
            }
            out.rows.push(row);
        }
    }
    Ok(out)
}

/// CSV text with a header row.
pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(csv_header())
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_header() -> [&'static str; 14] {
    [
        "estimator",
        "L",
        "eps",
        "s_l",
        "relative_std_error",
        "estimate",
        "variance",
        "bias_estimate",
        "cost_model",
        "cost_wall",
        "levels_n",
        "levels_v",
        "levels_s",
        "error",
    ]
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, rows_to_csv(rows)?)?;
    Ok(())
}

/// Least-squares slope of log(cost) against log(1/ε) over error-free rows.
pub fn fit_cost_exponent(rows: &[ResultRow]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| !r.is_error() && r.cost_model > 0.0 && r.eps > 0.0)
        .map(|r| ((1.0 / r.eps).ln(), r.cost_model.ln()))
        .collect();
    slope(&pts)
}

/// Least-squares slope of y against x; needs three points with distinct x.
pub fn slope(pts: &[(f64, f64)]) -> Result<f64> {
    if pts.len() < 3 {
        return Err(Error::domain(format!("a slope fit needs at least 3 points, got {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("slope fit needs distinct abscissae"));
    }
    Ok(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    const SMALL: &str = r#"
[problem]
kind = "one_d"
levels = [1]

[matern]
nu = 2.0
quadrature_order = 48

[estimators]
methods = ["mc"]

[calibration]
c_fe = 0.05
c_trunc = 0.01
s_star = 40
"#;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        assert_eq!(cfg.problem.ell0, 3);
        assert_eq!(cfg.estimators.shifts, 16);
        assert_eq!(cfg.calibration.reference_cells, 512);
        assert!(ExperimentConfig::parse(&SMALL.replace("nu = 2.0", "nu = 2.0\ncolour = 1")).is_err());
        assert!(ExperimentConfig::parse(&SMALL.replace("levels = [1]", "levels = []")).is_err());
        assert!(ExperimentConfig::parse(&SMALL.replace("one_d", "two_d_dirichlet").replace("levels = [1]", "levels = [1]\nell0 = 2")).is_err());
        assert!(ExperimentConfig::parse(&SMALL.replace("c_trunc = 0.01", "")).is_err());
    }

    #[test]
    fn one_row_per_pair_and_deterministic() {
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.rows.len(), 1);
        assert!(!a.any_error(), "{:?}", a.rows[0].error);
        let row = &a.rows[0];
        assert!(row.variance <= row.eps * row.eps / 2.0 * (1.0 + 1e-12));
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(rows_to_csv(&a.rows).unwrap(), rows_to_csv(&b.rows).unwrap());
        let header = rows_to_csv(&a.rows).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, csv_header().join(","));
        assert_eq!(rows_to_csv(&[]).unwrap().trim_end(), header);
    }

    #[test]
    fn calibration_failure_marks_rows() {
        let text = SMALL.replace("c_fe = 0.05\nc_trunc = 0.01\n", "n_mc = 1\n");
        let mut cfg = ExperimentConfig::parse(&text).unwrap();
        cfg.estimators.methods = vec![Method::Mc, Method::MlmcG];
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows.iter().all(|r| r.error.contains("calibration")));
    }

    fn row(eps: f64, cost: f64) -> ResultRow {
        ResultRow {
            eps,
            cost_model: cost,
            ..Default::default()
        }
    }

    #[test]
    fn cost_exponent_fits() {
        let exact: Vec<ResultRow> = [1e-1, 1e-2, 1e-3, 1e-4].iter().map(|&e: &f64| row(e, e.powi(-2))).collect();
        assert!((fit_cost_exponent(&exact).unwrap() - 2.0).abs() < 1e-12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noisy: Vec<ResultRow> = (0..12)
            .map(|k| {
                let e = 10f64.powf(-1.0 - 0.3 * k as f64);
                row(e, e.powi(-2) * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))
            })
            .collect();
        assert!((fit_cost_exponent(&noisy).unwrap() - 2.0).abs() < 0.05);
        assert!(fit_cost_exponent(&exact[..2]).is_err());
        let mut with_error = exact.clone();
        with_error[0].error = "x".into();
        assert!(fit_cost_exponent(&with_error).is_ok());
    }
}
