use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use manifold_stats::calibration::{calibrate, C4Constants, DEFAULT_CONSTANTS_FILE, FITTED_C4_N2};
use manifold_stats::quadrature::{gaussian_moments_printed, gaussian_moments_quadrature};
use manifold_stats::sweep::{C4Source, CSV_HEADER};
use manifold_stats::{
    build_distribution, constant_curvature_prediction, gaussian_moments, run_sweep, ApproxOrder,
    ConcentrationTensor, Error, GaussianMoments, Manifold, ManifoldKind, QuadratureSpec,
    RadialProfile, SweepConfig, SweepManifold, DEFAULT_FOLD_TOL,
};

#[derive(Parser)]
#[command(
    name = "manifold-stats",
    version,
    about = "Centered distributions on constant-curvature manifolds"
)]
struct Cli {
    /// Calibration constants written by `calibrate`; read when present.
    #[arg(long, global = true, default_value = DEFAULT_CONSTANTS_FILE)]
    constants: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sigma sweep: predictions, quadrature oracle and Monte Carlo estimates as CSV.
    Sweep(SweepArgs),
    /// Second- and fourth-order per-axis variance predictions.
    Predict {
        #[arg(long, allow_hyphen_values = true, value_parser = parse_curvature)]
        curvature: i32,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = C4Arg::Fitted)]
        c4: C4Arg,
    },
    /// Gaussian integrals (i)-(v): corrected closed form, printed form and quadrature.
    Moments {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        sigma: f64,
    },
    /// Total mass of a folded density, integrated over the surface.
    DensityCheck {
        #[arg(long, value_enum)]
        manifold: SpaceArg,
        #[arg(long, value_enum, default_value_t = ProfileArg::Normal)]
        profile: ProfileArg,
        /// Scale of the normal kernel (`T = sigma^-2 I`).
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Concentration of the vMF kernel (`T = I`).
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 64)]
        angles: usize,
    },
    /// Fits the sigma^4 coefficient against the oracle and writes the constants file.
    Calibrate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    manifold: ManifoldArg,
    #[arg(long, default_value_t = 1.0)]
    sigma_max: f64,
    #[arg(long, default_value_t = 0.01)]
    sigma_min: f64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    /// Samples per sigma [default: 150 on the sphere and plane, 200 on hyperbolic space]
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OrderArg::Fourth)]
    order: OrderArg,
    #[arg(long, value_enum, default_value_t = C4Arg::Fitted)]
    c4: C4Arg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ManifoldArg {
    Sphere2,
    Hyperbolic2,
    Euclidean2,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Sphere,
    Hyperbolic,
    Euclidean,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Normal,
    Vmf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    Second,
    Fourth,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum C4Arg {
    /// (n^2 + 3n + 11)/120, i.e. 7/40 at n = 2.
    #[value(alias = "paper")]
    Legacy,
    /// Value selected by `calibrate`.
    Fitted,
}

fn parse_curvature(s: &str) -> Result<i32, String> {
    match s.trim_start_matches('+') {
        "1" => Ok(1),
        "0" => Ok(0),
        "-1" => Ok(-1),
        _ => Err(format!("curvature must be +1, 0 or -1, got {s}")),
    }
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::DimensionMismatch { .. } | Error::Parse(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

/// 8 significant digits, trailing zeros trimmed.
fn fmt8(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..8).contains(&e) {
        let s = format!("{:.*}", (7 - e).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.7e}")
    }
}

fn fitted_c4(constants: &Path) -> Result<f64, Failure> {
    if !constants.exists() {
        return Ok(FITTED_C4_N2);
    }
    let parsed = C4Constants::read(constants)
        .map_err(|e| Failure::Usage(format!("{}: {e}", constants.display())))?;
    parsed
        .c4()
        .map_err(|e| Failure::Usage(format!("{}: {e}", constants.display())))
}

fn c4_source(arg: C4Arg, constants: &Path) -> Result<C4Source, Failure> {
    Ok(match arg {
        C4Arg::Legacy => C4Source::Legacy,
        C4Arg::Fitted => C4Source::Fitted(fitted_c4(constants)?),
    })
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("MANIFOLD_STATS_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        Failure::Usage(format!(
            "MANIFOLD_STATS_THREADS must be a positive integer, got {raw}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Numerical(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Sweep(args) => sweep(args, &cli.constants),
        Command::Predict {
            curvature,
            n,
            sigma,
            c4,
        } => {
            let c4 = c4_source(c4, &cli.constants)?.value(n);
            let second =
                constant_curvature_prediction(curvature, n, sigma, ApproxOrder::Second, c4)?;
            let fourth =
                constant_curvature_prediction(curvature, n, sigma, ApproxOrder::Fourth, c4)?;
            println!("sigma^2 {}", fmt8(sigma * sigma));
            println!("second_order {}", fmt8(second.sigma_axis));
            println!("fourth_order {}", fmt8(fourth.sigma_axis));
            println!("c4 {}", fmt8(c4));
            Ok(())
        }
        Command::Moments { n, sigma } => {
            let corrected = gaussian_moments(n, sigma)?;
            let printed = gaussian_moments_printed(n, sigma)?;
            let quadrature = gaussian_moments_quadrature(n, sigma)?;
            let rows = |m: &GaussianMoments| [m.vv, m.vv_r2, m.r2, m.vv_r4, m.r4];
            let labels = ["(i)", "(ii)", "(iii)", "(iv)", "(v)"];
            println!("integral corrected printed quadrature");
            for (k, label) in labels.iter().enumerate() {
                println!(
                    "{label} {} {} {}",
                    fmt8(rows(&corrected)[k]),
                    fmt8(rows(&printed)[k]),
                    fmt8(rows(&quadrature)[k])
                );
            }
            Ok(())
        }
        Command::DensityCheck {
            manifold,
            profile,
            sigma,
            kappa,
            angles,
        } => {
            let kind = match manifold {
                SpaceArg::Sphere => ManifoldKind::Sphere,
                SpaceArg::Hyperbolic => ManifoldKind::Hyperbolic,
                SpaceArg::Euclidean => ManifoldKind::Euclidean,
            };
            let m = Manifold::new(kind, 2)?;
            let (tensor, kernel) = match profile {
                ProfileArg::Normal => (
                    ConcentrationTensor::from_sigma(2, sigma)?,
                    RadialProfile::normal(2)?,
                ),
                ProfileArg::Vmf => (
                    ConcentrationTensor::isotropic(2, 1.0)?,
                    RadialProfile::von_mises_fisher(2, kappa)?,
                ),
            };
            let dist = build_distribution(&m, &m.origin(), tensor, kernel, DEFAULT_FOLD_TOL)?;
            let spec = QuadratureSpec::default().with_rel_tol(1e-12);
            let mass = dist.total_mass(angles, &spec)?;
            println!("norm_const {}", fmt8(dist.norm_const()));
            println!("fold_radius {}", fmt8(dist.fold_radius()));
            println!("total_mass {mass:.12}");
            Ok(())
        }
        Command::Calibrate { out } => {
            let path = out.unwrap_or(cli.constants);
            let (sphere, hyperbolic) = calibrate(&path)?;
            for fit in [&sphere, &hyperbolic] {
                println!(
                    "curvature {:+} fitted c4 {} winner {} rms residual {:.3e}",
                    fit.curvature,
                    fmt8(fit.fitted),
                    fit.winner.name(),
                    fit.residual_rms()
                );
            }
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn sweep(args: SweepArgs, constants: &Path) -> Result<(), Failure> {
    let manifold = match args.manifold {
        ManifoldArg::Sphere2 => SweepManifold::Sphere2,
        ManifoldArg::Hyperbolic2 => SweepManifold::Hyperbolic2,
        ManifoldArg::Euclidean2 => SweepManifold::Euclidean2,
    };
    let mut cfg = SweepConfig::new(manifold);
    cfg.sigma_max = args.sigma_max;
    cfg.sigma_min = args.sigma_min;
    cfg.points = args.points;
    cfg.samples_per_sigma = args.samples.unwrap_or(manifold.default_samples());
    cfg.base_seed = args.seed;
    cfg.order = match args.order {
        OrderArg::Second => ApproxOrder::Second,
        OrderArg::Fourth => ApproxOrder::Fourth,
    };
    cfg.c4_source = c4_source(args.c4, constants)?;
    cfg.out_path = args.out.clone();
    let rows = run_sweep(&cfg)?;
    if args.out.is_none() {
        print!("{}", manifold_stats::sweep::render_csv(&rows));
    } else {
        let covered = rows.iter().filter(|r| r.covered(3.0)).count();
        let worst = rows
            .iter()
            .map(|r| (r.predicted(cfg.order) - r.exact_quadrature).abs())
            .fold(0.0, f64::max);
        eprintln!("{} rows ({CSV_HEADER})", rows.len());
        eprintln!("within 3 SE of the oracle: {covered}/{}", rows.len());
        eprintln!("largest |prediction - oracle|: {worst:.3e}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
