use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use tvdn::bench::{
    bench_image, bench_mse, bench_seg, init_thread_pool, lambda_pipeline, ImageConfig, LambdaConfig, LambdaPipeline,
    MseConfig, ResultTable, SegCase, SegConfig,
};
use tvdn::io::{read_signal_csv, to_versioned_json, write_lambda_samples, write_signal_csv, Pgm};
use tvdn::lambda::{monte_carlo_lambda, GumbelFitCoefficients, LambdaFitFile};
use tvdn::risk::{default_quantization, geometric_grid, minimize_criterion, ncc, risk_curve, Criterion};
use tvdn::selection::{adaptive_tv, estimate_sigma, universal_threshold_1d, universal_threshold_lattice};
use tvdn::signals::{add_noise, gen_piecewise, gen_test_function, NoiseSpec, PiecewiseKind, TestFunction};
use tvdn::tvsolve::{denoise, lambda_max, SolverConfig};
use tvdn::{Error, LatticeShape, Signal};

#[derive(Parser)]
#[command(name = "tvdn", version, about = "Total-variation denoising with automatic threshold selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Fixed,
    Universal,
    Adaptive,
    Sure,
    Oracle,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CurveMethod {
    Sure,
    Oracle,
}

#[derive(Subcommand)]
enum Command {
    /// Denoise a 1D CSV signal or a PGM image.
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        /// Estimate path; defaults to standard output for CSV input.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Threshold for the fixed method.
        #[arg(long)]
        lambda: Option<f64>,
        /// Known noise level; estimated from the data when absent.
        #[arg(long = "sigma-known", alias = "sigma")]
        sigma_known: Option<f64>,
        /// Clean signal, required by the oracle method and used for the loss.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Λ fit file overriding the built-in Gumbel coefficients.
        #[arg(long)]
        coeffs: Option<PathBuf>,
        /// Number of λ grid points for sure and oracle.
        #[arg(long, default_value_t = 30)]
        grid: usize,
        /// JSON report path; defaults to `<out>.json`, or standard error.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a clean or noisy test signal, or add noise to an input file.
    Gen {
        /// blocks, bumps, heavisine, doppler, zero, battlements or staircase.
        #[arg(long, default_value = "blocks")]
        kind: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 7.0)]
        snr: f64,
        /// Number of levels for battlements and staircase.
        #[arg(long, default_value_t = 5)]
        levels: usize,
        /// Jump height for battlements and staircase.
        #[arg(long, default_value_t = 1.0)]
        height: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Add noise to this CSV or PGM file instead of generating a signal.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Risk of the oracle, SURE and adaptive thresholds on the test functions.
    BenchMse {
        #[arg(long, value_delimiter = ',')]
        functions: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![100usize, 1000])]
        sizes: Vec<usize>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, default_value_t = 7.0)]
        snr: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact segmentation and screening frequencies.
    BenchSeg {
        #[arg(long, value_delimiter = ',', default_values_t = vec![100usize, 1000])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo draws of Λ on one lattice size.
    LambdaSample {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample Λ across sizes, fit extreme-value models and regress the parameters.
    LambdaFit {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// SURE or oracle loss over a λ grid.
    RiskCurve {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "sure")]
        method: CurveMethod,
        #[arg(long = "sigma-known", alias = "sigma")]
        sigma_known: Option<f64>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Number of grid points, or an explicit comma-separated list of λ values.
        #[arg(long, default_value = "30")]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Oracle, SURE and adaptive losses on a noisy copy of a PGM image.
    BenchImage {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![10.0f64, 20.0, 40.0])]
        sigma: Vec<f64>,
        #[arg(long, default_value_t = 16)]
        grid: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    BadInput(String),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged { .. } => Failure::NotConverged(e.to_string()),
            other => Failure::BadInput(other.to_string()),
        }
    }
}

fn bad(msg: impl Into<String>) -> Failure {
    Failure::BadInput(msg.into())
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| bad(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| bad(format!("stdout: {e}")))
        }
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

enum Loaded {
    Csv(Signal),
    Image(Signal, Pgm),
}

impl Loaded {
    fn signal(&self) -> &Signal {
        match self {
            Loaded::Csv(s) | Loaded::Image(s, _) => s,
        }
    }

    fn encode(&self, estimate: &Signal) -> CliResult<Vec<u8>> {
        match self {
            Loaded::Csv(_) => Ok(write_signal_csv(estimate).into_bytes()),
            Loaded::Image(_, pgm) => Ok(Pgm::from_signal(estimate, pgm.maxval, pgm.binary)?.to_bytes()),
        }
    }
}

fn load(path: &Path) -> CliResult<Loaded> {
    let bytes = read_bytes(path)?;
    if is_pgm(path) {
        let pgm = Pgm::parse(&bytes)?;
        Ok(Loaded::Image(pgm.to_signal()?, pgm))
    } else {
        let text = String::from_utf8(bytes).map_err(|_| bad(format!("{}: not UTF-8 text", path.display())))?;
        Ok(Loaded::Csv(read_signal_csv(&text)?))
    }
}

fn load_coeffs(path: Option<&Path>) -> CliResult<Option<GumbelFitCoefficients>> {
    let Some(p) = path else { return Ok(None) };
    let text = String::from_utf8(read_bytes(p)?).map_err(|_| bad("coefficient file is not UTF-8"))?;
    let file: LambdaFitFile = serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", p.display())))?;
    Ok(Some(file.coefficients()))
}

fn table_bytes(table: &ResultTable, out: Option<&Path>) -> CliResult<Vec<u8>> {
    Ok(match out {
        Some(p) if is_json(p) => to_versioned_json(table)?.into_bytes(),
        _ => table.to_csv().into_bytes(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_denoise(
    input: &Path,
    out: Option<&Path>,
    method: Option<Method>,
    lambda: Option<f64>,
    sigma_known: Option<f64>,
    truth: Option<&Path>,
    coeffs: Option<&Path>,
    grid_points: usize,
    report: Option<&Path>,
) -> CliResult<()> {
    let loaded = load(input)?;
    let y = loaded.signal();
    let method = match (method, lambda) {
        (Some(m), _) => m,
        (None, Some(_)) => Method::Fixed,
        (None, None) => Method::Adaptive,
    };
    let truth = match truth {
        Some(p) => {
            let t = load(p)?;
            let t = t.signal().clone();
            if t.shape() != y.shape() {
                return Err(bad("truth and input have different shapes"));
            }
            Some(t)
        }
        None => None,
    };
    let coeffs = load_coeffs(coeffs)?;
    let sigma_estimated = sigma_known.is_none();
    let sigma = sigma_known.unwrap_or_else(|| estimate_sigma(y));
    if !(sigma >= 0.0) {
        return Err(bad("sigma must be non-negative"));
    }
    let cfg = SolverConfig::default();
    let grid = || -> CliResult<Vec<f64>> {
        let top = lambda_max(y)?;
        Ok(if top == 0.0 { vec![0.0] } else { geometric_grid(top, grid_points.max(2)) })
    };
    let universal = || -> CliResult<f64> {
        Ok(if y.shape().dims() == 1 {
            universal_threshold_1d(y.len(), sigma)?
        } else {
            universal_threshold_lattice(y.shape(), sigma, coeffs.as_ref())?
        })
    };

    let mut count1 = None;
    let (lambda1, lambda2, fit) = match method {
        Method::Fixed => {
            let l = lambda.ok_or_else(|| bad("the fixed method needs --lambda"))?;
            (l, l, denoise(y, l, &cfg)?)
        }
        Method::Universal => {
            let l = universal()?;
            (l, l, denoise(y, l, &cfg)?)
        }
        Method::Adaptive => {
            let a = adaptive_tv(y, Some(sigma), &cfg, coeffs.as_ref())?;
            count1 = Some(a.report.count1);
            (a.report.lambda1, a.report.lambda2, a.step2)
        }
        Method::Sure => {
            let (l, _) = minimize_criterion(y, &grid()?, &Criterion::Sure(sigma), &cfg)?;
            (l, l, denoise(y, l, &cfg)?)
        }
        Method::Oracle => {
            let t = truth.clone().ok_or_else(|| bad("the oracle method needs --truth"))?;
            let (l, _) = minimize_criterion(y, &grid()?, &Criterion::Oracle(t), &cfg)?;
            (l, l, denoise(y, l, &cfg)?)
        }
    };

    let method_name = match method {
        Method::Fixed => "fixed",
        Method::Universal => "universal",
        Method::Adaptive => "adaptive",
        Method::Sure => "sure",
        Method::Oracle => "oracle",
    };
    let loss = match &truth {
        Some(t) => Some(t.mse(&fit.estimate)?),
        None => None,
    };
    let report_body = json!({
        "method": method_name,
        "sigma": sigma,
        "sigma_estimated": sigma_estimated,
        "lambda1": lambda1,
        "lambda2": lambda2,
        "count1": count1,
        "ncc": ncc(&fit.estimate, default_quantization(&fit.estimate)),
        "gap": fit.gap,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "loss": loss,
        "shape": y.shape().sizes(),
    });
    let report_text = to_versioned_json(&report_body)?;

    let encoded = loaded.encode(&fit.estimate)?;
    write_output(out, &encoded)?;
    let report_path = report.map(Path::to_path_buf).or_else(|| out.map(|o| {
        let mut s = o.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }));
    match report_path {
        Some(p) => fs::write(&p, report_text).map_err(|e| bad(format!("{}: {e}", p.display())))?,
        None => eprint!("{report_text}"),
    }
    if !fit.converged {
        return Err(Failure::NotConverged(format!(
            "solver stopped at gap {:e} after {} iterations",
            fit.gap, fit.iterations
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_gen(
    kind: &str,
    n: usize,
    snr: f64,
    levels: usize,
    height: f64,
    sigma: f64,
    seed: u64,
    input: Option<&Path>,
    out: Option<&Path>,
) -> CliResult<()> {
    if let Some(p) = input {
        let loaded = load(p)?;
        let noisy = add_noise(loaded.signal(), NoiseSpec::new(sigma, seed))?;
        return write_output(out, &loaded.encode(&noisy)?);
    }
    let clean = match kind {
        "battlements" => gen_piecewise(PiecewiseKind::Battlements, n, levels, height)?.realize(),
        "staircase" => gen_piecewise(PiecewiseKind::Staircase, n, levels, height)?.realize(),
        other => gen_test_function(other.parse::<TestFunction>()?, n, snr)?,
    };
    let y = add_noise(&clean, NoiseSpec::new(sigma, seed))?;
    write_output(out, write_signal_csv(&y).as_bytes())
}

fn parse_grid(spec: &str, y: &Signal) -> CliResult<Vec<f64>> {
    if spec.contains(',') {
        return spec
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad(format!("bad grid value '{t}'"))))
            .collect();
    }
    let points: usize = spec.trim().parse().map_err(|_| bad(format!("bad grid '{spec}'")))?;
    let top = lambda_max(y)?;
    Ok(if top == 0.0 { vec![0.0] } else { geometric_grid(top, points.max(1)) })
}

fn run(cli: Cli) -> CliResult<()> {
    init_thread_pool()?;
    match cli.command {
        Command::Denoise {
            input,
            out,
            method,
            lambda,
            sigma_known,
            truth,
            coeffs,
            grid,
            report,
        } => run_denoise(
            &input,
            out.as_deref(),
            method,
            lambda,
            sigma_known,
            truth.as_deref(),
            coeffs.as_deref(),
            grid,
            report.as_deref(),
        ),
        Command::Gen {
            kind,
            n,
            snr,
            levels,
            height,
            sigma,
            seed,
            input,
            out,
        } => run_gen(&kind, n, snr, levels, height, sigma, seed, input.as_deref(), out.as_deref()),
        Command::BenchMse {
            functions,
            sizes,
            reps,
            snr,
            seed,
            out,
        } => {
            let functions = match functions {
                Some(list) => list.iter().map(|f| f.parse()).collect::<Result<Vec<TestFunction>, _>>()?,
                None => TestFunction::ALL.to_vec(),
            };
            let table = bench_mse(&MseConfig {
                functions,
                sizes,
                reps,
                snr,
                seed,
            })?;
            write_output(out.as_deref(), &table_bytes(&table, out.as_deref())?)
        }
        Command::BenchSeg {
            sizes,
            reps,
            alpha,
            seed,
            out,
        } => {
            let table = bench_seg(&SegConfig {
                cases: SegCase::table_cases(),
                sizes,
                reps,
                alpha,
                sigma: 1.0,
                seed,
            })?;
            write_output(out.as_deref(), &table_bytes(&table, out.as_deref())?)
        }
        Command::LambdaSample {
            dim,
            sizes,
            reps,
            seed,
            out,
        } => {
            let [side] = sizes[..] else {
                return Err(bad("lambda-sample takes exactly one size"));
            };
            let shape = LatticeShape::cube(side, dim)?;
            let samples = monte_carlo_lambda(&shape, reps, seed)?;
            write_output(out.as_deref(), write_lambda_samples(&samples).as_bytes())
        }
        Command::LambdaFit {
            dim,
            sizes,
            reps,
            seed,
            out,
        } => {
            let result = lambda_pipeline(&LambdaConfig { dim, sizes, reps, seed })?;
            fs::create_dir_all(&out).map_err(|e| bad(format!("{}: {e}", out.display())))?;
            let put = |name: String, body: String| -> CliResult<()> {
                let p = out.join(name);
                fs::write(&p, body).map_err(|e| bad(format!("{}: {e}", p.display())))
            };
            put("fit.json".into(), serde_json::to_string_pretty(&result.fit).map_err(Error::from)? + "\n")?;
            put("fits.csv".into(), result.fits_csv())?;
            for s in &result.studies {
                put(format!("samples_{}.csv", s.side), write_lambda_samples(&s.samples))?;
                put(format!("qq_{}.csv", s.side), LambdaPipeline::qq_csv(s))?;
            }
            Ok(())
        }
        Command::RiskCurve {
            input,
            method,
            sigma_known,
            truth,
            grid,
            out,
        } => {
            let loaded = load(&input)?;
            let y = loaded.signal();
            let criterion = match method {
                CurveMethod::Sure => Criterion::Sure(sigma_known.unwrap_or_else(|| estimate_sigma(y))),
                CurveMethod::Oracle => {
                    let p = truth.ok_or_else(|| bad("the oracle curve needs --truth"))?;
                    Criterion::Oracle(load(&p)?.signal().clone())
                }
            };
            let lambdas = parse_grid(&grid, y)?;
            let curve = risk_curve(y, &lambdas, &criterion, &SolverConfig::default())?;
            write_output(out.as_deref(), curve.to_csv().as_bytes())
        }
        Command::BenchImage {
            input,
            sigma,
            grid,
            seed,
            out,
        } => {
            let loaded = load(&input)?;
            let Loaded::Image(clean, _) = loaded else {
                return Err(bad("bench-image expects a PGM file"));
            };
            let cfg = ImageConfig {
                sigmas: sigma,
                grid_points: grid,
                seed,
                ..ImageConfig::default()
            };
            let table = bench_image(&clean, &cfg)?;
            write_output(out.as_deref(), &table_bytes(&table, out.as_deref())?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::BadInput(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
