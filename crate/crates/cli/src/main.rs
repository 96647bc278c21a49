use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mlqmc::experiment::{run_experiment, write_csv, ExperimentConfig, Scale};
use mlqmc::qmc_construct::{cbc_construct, WeightSchedule};
use mlqmc::random_field::{default_quadrature_order, nystrom_eigendecomposition, MaternParams};

/// Multilevel (quasi-)Monte Carlo experiments for lognormal diffusion problems.
#[derive(Parser, Debug)]
#[command(name = "mlqmc", version, args_conflicts_with_subcommands = true)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `estimators.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.path`.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Calibration effort preset; overrides h*, s* and the sample count.
    #[arg(long, value_enum)]
    scale: Option<ScaleArg>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Builds a lattice generating vector by CBC with POD weights from a Matérn KL basis.
    ConstructVector {
        /// Number of points N.
        #[arg(long)]
        points: u64,
        /// Dimension s.
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        nu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda_c: f64,
        /// Spatial dimension of the field.
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// QMC exponent λ ∈ (1/2, 1].
        #[arg(long, default_value_t = 0.55)]
        lambda: f64,
        /// α_j − 11 b̄_j.
        #[arg(long, default_value_t = 1.0)]
        margin: f64,
        /// Largest interaction order with nonzero weight (defaults to `dim`).
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    if let Some(Command::ConstructVector {
        points,
        dim,
        nu,
        sigma2,
        lambda_c,
        d,
        lambda,
        margin,
        order,
        out,
    }) = cli.command
    {
        let p = MaternParams::new(nu, sigma2, lambda_c, d)?;
        let basis = nystrom_eigendecomposition(&p, default_quadrature_order(d))?;
        if dim > basis.s_star {
            return Err(format!("only {} KL terms are resolved, {dim} requested", basis.s_star).into());
        }
        let probes_1d: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
        let probes: Vec<f64> = if d == 1 {
            probes_1d
        } else {
            probes_1d
                .iter()
                .step_by(4)
                .flat_map(|&x| probes_1d.iter().step_by(4).flat_map(move |&y| [x, y]))
                .collect()
        };
        let (_, b_bar) = basis.b_sequences(&probes, dim, 1e-4)?;
        let schedule = WeightSchedule::with_margin(lambda, b_bar, margin)?;
        let result = cbc_construct(points, dim, &schedule.weights(order.unwrap_or(dim)))?;
        result.z.save(&out)?;
        eprintln!(
            "wrote {dim}-dimensional vector for N = {points} to {}; squared worst-case error {:.3e}",
            out.display(),
            result.error_bound_by_dim.last().copied().unwrap_or(f64::NAN)
        );
        return Ok(true);
    }

    let path = cli.config.ok_or("--config is required")?;
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.estimators.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output.path = out;
    }
    if let Some(scale) = cli.scale {
        cfg.apply_scale(match scale {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Paper => Scale::Paper,
        });
    }
    let output = run_experiment(&cfg)?;
    if let Some(b) = &output.bias_model {
        eprintln!("C_FE = {:.4e}, C_trunc = {:.4e}, C_bal = {:.4}", b.c_fe, b.c_trunc, b.c_bal());
    }
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    for r in output.rows.iter().filter(|r| r.is_error()) {
        eprintln!("error: {} L = {}: {}", r.estimator, r.l, r.error);
    }
    write_csv(&output.rows, &cfg.output.path)?;
    eprintln!("wrote {} rows to {}", output.rows.len(), cfg.output.path.display());
    Ok(!output.any_error())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
