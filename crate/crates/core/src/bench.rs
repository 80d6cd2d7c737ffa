//! Benchmark harness: corrupt, detect and restore a set of images at several
//! noise ratios with several methods, averaging over repetitions.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::amf::{adaptive_median, AmfConfig};
use crate::error::{Error, Result};
use crate::image::{load_pgm, GrayImage};
use crate::metrics::psnr_8bit;
use crate::noise::{corrupt, NoiseSpec};
use crate::restoration::{restore_with_options, Method, SolverOptions, SolverReport, StopReason};

pub const DEFAULT_RATIOS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

/// A named clean reference image.
#[derive(Debug, Clone)]
pub struct BenchImage {
    pub name: String,
    pub image: GrayImage,
}

impl BenchImage {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(Self {
            name,
            image: load_pgm(path)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub images: Vec<PathBuf>,
    /// Noise ratios `r`, each split as `p = q = r / 2`.
    pub ratios: Vec<f64>,
    pub methods: Vec<Method>,
    pub repetitions: usize,
    pub seed_base: u64,
    /// `None` picks the default window, shrunk to fit small images.
    pub w_max: Option<usize>,
    pub solver: SolverOptions,
    /// Write zero for every timing column.
    pub no_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            images: Vec::new(),
            ratios: DEFAULT_RATIOS.to_vec(),
            methods: Method::ALL.to_vec(),
            repetitions: 5,
            seed_base: 0,
            w_max: None,
            solver: SolverOptions::default(),
            no_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::Config(format!("noise ratio {r} must lie in (0, 1)")));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        self.solver.stop.validate()?;
        self.solver.minres.validate()
    }
}

/// Seed of the corruption for one (ratio, repetition) pair; shared by all
/// methods and images so they see identical noise patterns.
pub fn cell_seed(seed_base: u64, ratio_index: usize, rep: usize) -> u64 {
    seed_base.wrapping_add(((ratio_index as u64) << 32) | rep as u64)
}

/// One restoration run inside the benchmark.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub image: String,
    pub ratio: f64,
    pub method: Method,
    pub rep: usize,
    pub seed: u64,
    pub noisy_count: usize,
    /// Fraction of truly corrupted pixels that the detector flagged.
    pub recall: f64,
    /// PSNR of the real-valued restoration.
    pub psnr_db: f64,
    /// PSNR after 8-bit quantization.
    pub psnr_quantized_db: f64,
    /// Every unflagged pixel is bit-identical to the corrupted input.
    pub clean_preserved: bool,
    pub report: SolverReport,
}

/// One CSV row: the repetition average of a (image, ratio, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub image: String,
    pub ratio: f64,
    pub method: String,
    pub mean_time_s: f64,
    pub mean_psnr_db: f64,
    pub mean_iters: f64,
    pub stop_reason_mode: String,
    pub status: String,
}

#[derive(Debug, Clone, Default)]
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    pub runs: Vec<RunRecord>,
}

fn mode(reasons: &[StopReason]) -> Option<StopReason> {
    let mut counts = BTreeMap::new();
    for r in reasons {
        *counts.entry(*r).or_insert(0usize) += 1;
    }
    // ties go to the smallest reason in enum order
    counts
        .into_iter()
        .fold(None, |best: Option<(StopReason, usize)>, (r, n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((r, n)),
        })
        .map(|(r, _)| r)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Runs the whole grid on already loaded images.
pub fn run_benchmark_on(images: &[BenchImage], cfg: &ExperimentConfig) -> Result<BenchOutcome> {
    cfg.validate()?;
    let mut outcome = BenchOutcome::default();
    let mut failures: BTreeMap<(usize, usize, Method), String> = BTreeMap::new();

    for (ii, img) in images.iter().enumerate() {
        for (ri, &ratio) in cfg.ratios.iter().enumerate() {
            for rep in 0..cfg.repetitions {
                let seed = cell_seed(cfg.seed_base, ri, rep);
                let (noisy, truth) = corrupt(&img.image, &NoiseSpec::with_ratio(ratio, seed))?;
                let amf = match cfg.w_max {
                    Some(w) => AmfConfig { w_max: w, ..AmfConfig::default() },
                    None => AmfConfig::fitted(noisy.dims()),
                };
                let (mask, u0) = adaptive_median(&noisy, &amf)?;
                let recall = mask.recall_against(&truth);
                for &method in &cfg.methods {
                    match restore_with_options(&noisy, &mask, &u0, method, &cfg.solver) {
                        Ok((restored, report)) => {
                            let clean_preserved = noisy
                                .pixels()
                                .iter()
                                .zip(restored.pixels())
                                .zip(mask.flags())
                                .all(|((a, b), f)| *f || a.to_bits() == b.to_bits());
                            outcome.runs.push(RunRecord {
                                image: img.name.clone(),
                                ratio,
                                method,
                                rep,
                                seed,
                                noisy_count: mask.count(),
                                recall,
                                psnr_db: psnr_8bit(&img.image, &restored)?,
                                psnr_quantized_db: psnr_8bit(&img.image, &restored.quantized())?,
                                clean_preserved,
                                report,
                            });
                        }
                        Err(e) => {
                            failures.entry((ii, ri, method)).or_insert_with(|| e.to_string());
                        }
                    }
                }
            }
        }
    }

    for (ii, img) in images.iter().enumerate() {
        for (ri, &ratio) in cfg.ratios.iter().enumerate() {
            for &method in &cfg.methods {
                let runs: Vec<&RunRecord> = outcome
                    .runs
                    .iter()
                    .filter(|r| r.image == img.name && r.ratio == ratio && r.method == method)
                    .collect();
                let status = match failures.get(&(ii, ri, method)) {
                    Some(msg) => format!("error: {msg}"),
                    None => "ok".to_string(),
                };
                let reasons: Vec<StopReason> = runs.iter().map(|r| r.report.stop_reason).collect();
                outcome.rows.push(BenchRow {
                    image: img.name.clone(),
                    ratio,
                    method: method.to_string(),
                    mean_time_s: if cfg.no_timing {
                        0.0
                    } else {
                        mean(runs.iter().map(|r| r.report.elapsed_seconds))
                    },
                    mean_psnr_db: mean(runs.iter().map(|r| r.psnr_db)),
                    mean_iters: mean(runs.iter().map(|r| r.report.total_iterations as f64)),
                    stop_reason_mode: mode(&reasons).map(|r| r.to_string()).unwrap_or_default(),
                    status,
                });
            }
        }
    }
    outcome.rows.sort_by(|a, b| {
        (a.image.as_str(), a.ratio, a.method.as_str())
            .partial_cmp(&(b.image.as_str(), b.ratio, b.method.as_str()))
            .expect("ratios are finite")
    });
    Ok(outcome)
}

/// Loads the configured images and runs the grid.
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchOutcome> {
    if cfg.images.is_empty() {
        return Err(Error::Config("no benchmark images given".into()));
    }
    let images = cfg
        .images
        .iter()
        .map(BenchImage::load)
        .collect::<Result<Vec<_>>>()?;
    run_benchmark_on(&images, cfg)
}

pub fn write_csv<W: io::Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    for row in rows {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[BenchRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::restoration::{ContinuationSchedule, StopCriteria};

    fn tiny_image() -> BenchImage {
        let px = (0..24 * 24)
            .map(|i| {
                let (r, c) = (i / 24, i % 24);
                (40 + 6 * r + 2 * c) as f64
            })
            .collect();
        BenchImage {
            name: "ramp".into(),
            image: GrayImage::new(24, 24, px).unwrap(),
        }
    }

    fn quick_config(methods: Vec<Method>, reps: usize) -> ExperimentConfig {
        ExperimentConfig {
            ratios: vec![0.3],
            methods,
            repetitions: reps,
            seed_base: 5,
            solver: SolverOptions {
                schedule: ContinuationSchedule::standard(100.0).unwrap(),
                stop: StopCriteria::default(),
                ..SolverOptions::default()
            },
            no_timing: true,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn one_row_per_cell() {
        let cfg = quick_config(vec![Method::Relax, Method::CgPr], 2);
        let out = run_benchmark_on(&[tiny_image()], &cfg).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.runs.len(), 4);
        for row in &out.rows {
            let psnrs: Vec<f64> = out
                .runs
                .iter()
                .filter(|r| r.method.as_str() == row.method)
                .map(|r| r.psnr_db)
                .collect();
            let m = psnrs.iter().sum::<f64>() / psnrs.len() as f64;
            assert!((row.mean_psnr_db - m).abs() < 1e-12);
            assert_eq!(row.status, "ok");
        }
    }

    #[test]
    fn csv_is_deterministic_without_timing() {
        let cfg = quick_config(vec![Method::Relax], 1);
        let a = csv_string(&run_benchmark_on(&[tiny_image()], &cfg).unwrap().rows).unwrap();
        let b = csv_string(&run_benchmark_on(&[tiny_image()], &cfg).unwrap().rows).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with(
            "image,ratio,method,mean_time_s,mean_psnr_db,mean_iters,stop_reason_mode,status\n"
        ));
    }

    #[test]
    fn runs_preserve_clean_pixels() {
        let cfg = quick_config(Method::ALL.to_vec(), 1);
        let out = run_benchmark_on(&[tiny_image()], &cfg).unwrap();
        assert!(out.runs.iter().all(|r| r.clean_preserved));
    }

    #[test]
    fn stop_reason_mode_prefers_majority_then_order() {
        use StopReason::*;
        assert_eq!(mode(&[IteMax, Tolerance, IteMax]), Some(IteMax));
        assert_eq!(mode(&[IteMax, Tolerance]), Some(Tolerance));
        assert_eq!(mode(&[]), None);
    }

    #[test]
    fn config_validation() {
        let mut cfg = quick_config(vec![Method::Relax], 1);
        cfg.repetitions = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = quick_config(vec![Method::Relax], 1);
        cfg.ratios = vec![1.0];
        assert!(cfg.validate().is_err());
        assert!(run_benchmark(&ExperimentConfig::default()).is_err());
    }
}
