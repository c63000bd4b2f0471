//! `pcalloc` command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use pcalloc::allocator::{
    exhaustive_search, solve_interior_point, Allocation, AllocationProblem, ModelOracle, QpGrid, SearchResult,
    SolverConfig,
};
use pcalloc::cloud::{load_ply, LumaMatrix, PlyError, PointCloud};
use pcalloc::eval::{compute_qpe, evaluate, read_results, write_results, Timings};
use pcalloc::metrics::{psnr, symmetric_distortion_with, DistortionPair, Omega, Peaks};
use pcalloc::models::{fit_from_records, load_probe_log, write_probe_log, FitMethod, FittedModels};
use pcalloc::pipeline::{run_pipeline, Backend, ConfigError, PipelineConfig};
use pcalloc::simcodec::probe_schedule;
use pcalloc::Error;

#[derive(Parser)]
#[command(
    name = "pcalloc",
    version,
    about = "Geometry/color bit allocation for point-cloud compression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Luma {
    Bt709,
    Bt601,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Exact,
    LeastSquares,
}

#[derive(Subcommand)]
enum Command {
    /// Symmetric point-to-point distortion and PSNR between two PLY clouds.
    Metric {
        reference: PathBuf,
        reconstructed: PathBuf,
        /// Weighting factor(s) for the combined PSNR.
        #[arg(long = "omega", default_values_t = [0.25, 0.5])]
        omegas: Vec<f64>,
        #[arg(long, value_enum, default_value = "bt709")]
        luma: Luma,
        /// Geometry bit depth for the PSNR peak; defaults to the reference's.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=31))]
        bit_depth: Option<u8>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit distortion and rate models from a probe log.
    Fit {
        #[arg(long)]
        probes: PathBuf,
        #[arg(long)]
        omega: f64,
        #[arg(long, value_enum, default_value = "exact")]
        method: Method,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Allocate QPs for one or more target bitrates from fitted models.
    Allocate {
        /// Models written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Target bitrate(s) in kbpmp.
        #[arg(long = "target", required = true)]
        targets: Vec<f64>,
        /// TOML file overriding solver settings.
        #[arg(long)]
        solver: Option<PathBuf>,
        /// Also search the full QP grid under the models.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full study from a TOML config.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        /// Report JSON (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Allocation table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Directory for per-omega `pba_<omega>.csv` / `esa_<omega>.csv`.
        #[arg(long)]
        results_dir: Option<PathBuf>,
        /// Probe log of the synthetic codec's pre-encodings.
        #[arg(long)]
        probes_out: Option<PathBuf>,
    },
    /// Compare PBA and ESA results tables.
    Evaluate {
        #[arg(long)]
        pba: PathBuf,
        #[arg(long)]
        esa: PathBuf,
        #[arg(long)]
        omega: f64,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u8).range(1..=31))]
        bit_depth: u8,
        /// Encoding time of PBA, any unit shared with --t-esa.
        #[arg(long, requires = "t_esa")]
        t_pba: Option<f64>,
        #[arg(long, requires = "t_pba")]
        t_esa: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    category: &'a str,
    exit_code: i32,
    message: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            let body = ErrorReport {
                error: ErrorBody {
                    category: cat.as_str(),
                    exit_code: cat.exit_code(),
                    message: e.to_string(),
                },
            };
            eprintln!("{}", serde_json::to_string(&body).expect("error serialises"));
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}

fn omega(w: f64) -> Result<Omega, Error> {
    Ok(Omega::new(w)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes `text` to `out`, or stdout.
fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path, e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Error> {
    let mut s = serde_json::to_string_pretty(value).expect("output serialises");
    s.push('\n');
    emit(&s, out)
}

fn load_cloud(path: &Path) -> Result<PointCloud, Error> {
    load_ply(path).map_err(|e| match e {
        PlyError::Io(io) => Error::io(path, io),
        e => e.into(),
    })
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Metric {
            reference,
            reconstructed,
            omegas,
            luma,
            bit_depth,
            out,
        } => {
            #[derive(Serialize)]
            struct Psnr {
                omega: Omega,
                psnr_db: f64,
            }
            #[derive(Serialize)]
            struct MetricOut {
                points_reference: usize,
                points_reconstructed: usize,
                bit_depth: u8,
                #[serde(flatten)]
                distortion: DistortionPair,
                psnr: Vec<Psnr>,
            }
            let a = load_cloud(&reference)?;
            let b = load_cloud(&reconstructed)?;
            let matrix = match luma {
                Luma::Bt709 => LumaMatrix::Bt709,
                Luma::Bt601 => LumaMatrix::Bt601,
            };
            let bd = bit_depth.unwrap_or(a.bit_depth());
            let peaks = Peaks::for_bit_depth(bd);
            let d = symmetric_distortion_with(&a, &b, matrix);
            let psnr = omegas
                .iter()
                .map(|&w| {
                    let w = omega(w)?;
                    Ok(Psnr {
                        omega: w,
                        psnr_db: psnr(d.d_g, d.d_c, w, peaks)?,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?;
            emit_json(
                &MetricOut {
                    points_reference: a.len(),
                    points_reconstructed: b.len(),
                    bit_depth: bd,
                    distortion: d,
                    psnr,
                },
                out.as_deref(),
            )
        }
        Command::Fit {
            probes,
            omega: w,
            method,
            out,
        } => {
            let records = load_probe_log(&probes)?;
            let method = match method {
                Method::Exact => FitMethod::Exact,
                Method::LeastSquares => FitMethod::LeastSquares,
            };
            let fitted = fit_from_records(&records, omega(w)?, method)?;
            for warning in &fitted.warnings {
                log::warn!("{warning:?}");
            }
            emit_json(&fitted, out.as_deref())
        }
        Command::Allocate {
            model,
            targets,
            solver,
            exhaustive,
            out,
        } => {
            #[derive(Serialize)]
            struct Row {
                target_kbpmp: f64,
                allocation: Allocation,
                #[serde(skip_serializing_if = "Option::is_none")]
                exhaustive: Option<SearchResult>,
                #[serde(skip_serializing_if = "Option::is_none")]
                qpe: Option<u32>,
            }
            let text = read_text(&model)?;
            let fitted: FittedModels =
                serde_json::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", model.display())))?;
            let cfg = match solver {
                Some(path) => {
                    let cfg: SolverConfig = toml::from_str(&read_text(&path)?)
                        .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
                    cfg
                }
                None => SolverConfig::default(),
            };
            let rows = targets
                .iter()
                .map(|&target| {
                    let problem = AllocationProblem::new(fitted.distortion, fitted.rate, target)?;
                    let allocation = solve_interior_point(&problem, &cfg)?;
                    info!("target {target}: qp {}", allocation.qp);
                    let search = if exhaustive {
                        Some(exhaustive_search(&ModelOracle(&problem), target, QpGrid::default())?)
                    } else {
                        None
                    };
                    Ok(Row {
                        target_kbpmp: target,
                        allocation,
                        qpe: search.map(|s| compute_qpe(allocation.qp, s.qp)),
                        exhaustive: search,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?;
            emit_json(&rows, out.as_deref())
        }
        Command::Simulate {
            spec,
            out,
            csv,
            results_dir,
            probes_out,
        } => {
            let cfg = PipelineConfig::load(&spec)?;
            if let (Some(path), Backend::Simcodec(codec)) = (&probes_out, &cfg.backend) {
                let records: Vec<_> = probe_schedule()
                    .iter()
                    .map(|&qp| codec.encode(qp).to_probe_record())
                    .collect();
                write_probe_log(create(path)?, &records)?;
            }
            let report = run_pipeline(&cfg)?;
            if let Some(path) = &csv {
                report
                    .write_csv(create(path)?)
                    .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
            }
            if let Some(dir) = &results_dir {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                for &w in &cfg.omegas {
                    let (pba, esa) = report.results(w);
                    write_results(create(&dir.join(format!("pba_{}.csv", w.value())))?, &pba)?;
                    if !esa.is_empty() {
                        write_results(create(&dir.join(format!("esa_{}.csv", w.value())))?, &esa)?;
                    }
                }
            }
            emit(&report.to_json(), out.as_deref())
        }
        Command::Evaluate {
            pba,
            esa,
            omega: w,
            bit_depth,
            t_pba,
            t_esa,
            out,
        } => {
            let open = |p: &Path| File::open(p).map_err(|e| Error::io(p, e));
            let pba_rows = read_results(open(&pba)?)?;
            let esa_rows = read_results(open(&esa)?)?;
            let timings = t_pba.zip(t_esa).map(|(pba, esa)| Timings { pba, esa });
            let report = evaluate(
                &pba_rows,
                &esa_rows,
                omega(w)?,
                Peaks::for_bit_depth(bit_depth),
                timings,
            )?;
            emit_json(&report, out.as_deref())
        }
    }
}
