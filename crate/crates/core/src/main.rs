use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use impulse_restore::amf::{adaptive_median, AmfConfig};
use impulse_restore::bench::{run_benchmark, write_csv, ExperimentConfig, DEFAULT_RATIOS};
use impulse_restore::image::{load_pgm, save_pgm};
use impulse_restore::metrics::psnr;
use impulse_restore::noise::{corrupt, noise_ratio, NoiseSpec};
use impulse_restore::restoration::{
    restore_with_options, ContinuationSchedule, Method, SolverOptions, StopCriteria, DEFAULT_ALPHA_MIN,
};
use impulse_restore::Error;

#[derive(Parser)]
#[command(name = "impulse-restore", version, about = "Two-phase salt-and-pepper noise removal")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Add seeded salt-and-pepper noise and write the ground-truth mask.
    Corrupt {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Total noise ratio, split evenly into pepper and salt.
        #[arg(long, conflicts_with_all = ["p", "q"])]
        ratio: Option<f64>,
        /// Pepper probability.
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        /// Salt probability.
        #[arg(long, default_value_t = 0.0)]
        q: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Mask output (PBM); defaults to `<out>.mask.pbm`.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Run the adaptive median detector.
    Detect {
        #[arg(long = "in")]
        input: PathBuf,
        /// Mask output (PBM, plus a `.txt` sidecar with the count).
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "w-max")]
        w_max: Option<usize>,
        /// Also write the median-filled initial estimate.
        #[arg(long)]
        initial: Option<PathBuf>,
    },
    /// Detect and restore a noisy image.
    Restore {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "relax")]
        method: String,
        #[arg(long = "w-max")]
        w_max: Option<usize>,
        /// Clean image to report PSNR against.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// PSNR between a reference and a test image.
    Psnr {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 255.0)]
        peak: f64,
    },
    /// Benchmark methods over images and noise ratios; writes CSV.
    Bench {
        /// Clean PGM images.
        #[arg(required = true)]
        images: Vec<PathBuf>,
        #[arg(long = "ratio", value_delimiter = ',')]
        ratios: Vec<f64>,
        #[arg(long = "method", value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "w-max")]
        w_max: Option<usize>,
        /// CSV output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Zero the timing column for reproducible output.
        #[arg(long = "no-timing")]
        no_timing: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long = "alpha-min", default_value_t = DEFAULT_ALPHA_MIN)]
    alpha_min: f64,
    #[arg(long = "rel-u-tol", default_value_t = 1e-4)]
    rel_u_tol: f64,
    #[arg(long = "rel-f-tol", default_value_t = 1e-4)]
    rel_f_tol: f64,
    #[arg(long = "ite-max", default_value_t = 500)]
    ite_max: usize,
}

impl SolverArgs {
    fn options(&self) -> Result<SolverOptions, Error> {
        let stop = StopCriteria {
            rel_u_tol: self.rel_u_tol,
            rel_f_tol: self.rel_f_tol,
            ite_max: self.ite_max,
        };
        stop.validate()?;
        Ok(SolverOptions {
            schedule: ContinuationSchedule::standard(self.alpha_min)?,
            stop,
            ..SolverOptions::default()
        })
    }
}

fn amf_config(w_max: Option<usize>, dims: (usize, usize)) -> AmfConfig {
    match w_max {
        Some(w) => AmfConfig { w_max: w, ..AmfConfig::default() },
        None => AmfConfig::fitted(dims),
    }
}

fn default_mask_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".mask.pbm");
    PathBuf::from(s)
}

fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Corrupt { input, out, ratio, p, q, seed, mask } => {
            let img = load_pgm(&input)?;
            let spec = match ratio {
                Some(r) => NoiseSpec::with_ratio(r, seed),
                None => NoiseSpec { p, q, seed, ..NoiseSpec::default() },
            };
            let (noisy, truth) = corrupt(&img, &spec)?;
            save_pgm(&noisy, &out)?;
            truth.save(mask.unwrap_or_else(|| default_mask_path(&out)))?;
            println!("corrupted={} ratio={:.6}", truth.count(), noise_ratio(&truth));
        }
        Command::Detect { input, out, w_max, initial } => {
            let img = load_pgm(&input)?;
            let (mask, u0) = adaptive_median(&img, &amf_config(w_max, img.dims()))?;
            mask.save(&out)?;
            if let Some(path) = initial {
                save_pgm(&u0, path)?;
            }
            println!("count={} ratio={:.6}", mask.count(), noise_ratio(&mask));
        }
        Command::Restore { input, out, method, w_max, reference, solver } => {
            let method: Method = method.parse()?;
            let opts = solver.options()?;
            let noisy = load_pgm(&input)?;
            let reference = reference.map(load_pgm).transpose()?;
            let (mask, u0) = adaptive_median(&noisy, &amf_config(w_max, noisy.dims()))?;
            let (restored, report) = restore_with_options(&noisy, &mask, &u0, method, &opts)?;
            save_pgm(&restored, &out)?;
            let mut line = format!(
                "method={} noisy={} stages={} iterations={} stop={} time_s={:.4}",
                method,
                mask.count(),
                report.stages.len(),
                report.total_iterations,
                report.stop_reason,
                report.elapsed_seconds
            );
            if let Some(clean) = reference {
                let real = psnr(&clean, &restored, 255.0)?;
                let quant = psnr(&clean, &restored.quantized(), 255.0)?;
                line.push_str(&format!(" psnr_db={} psnr_q_db={}", format_db(real), format_db(quant)));
            }
            println!("{line}");
        }
        Command::Psnr { reference, test, peak } => {
            let a = load_pgm(reference)?;
            let b = load_pgm(test)?;
            println!("{}", format_db(psnr(&a, &b, peak)?));
        }
        Command::Bench { images, ratios, methods, reps, seed, w_max, out, no_timing, solver } => {
            let methods = if methods.is_empty() {
                Method::ALL.to_vec()
            } else {
                methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>, _>>()?
            };
            let cfg = ExperimentConfig {
                images,
                ratios: if ratios.is_empty() { DEFAULT_RATIOS.to_vec() } else { ratios },
                methods,
                repetitions: reps,
                seed_base: seed,
                w_max,
                solver: solver.options()?,
                no_timing,
            };
            let outcome = run_benchmark(&cfg)?;
            match out {
                Some(path) => write_csv(&outcome.rows, fs::File::create(path)?)?,
                None => write_csv(&outcome.rows, std::io::stdout().lock())?,
            }
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::OutOfBounds { .. } => 1,
        Error::Io(_) | Error::Parse { .. } | Error::Csv(_) | Error::Dimension { .. } => 2,
        Error::Numerical(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
