//! Phase two: minimize the functional over the noisy pixels.
//!
//! Every method runs inside the same continuation loop: one stage per `alpha`
//! of a decreasing schedule, each stage warm-started from the previous one and
//! iterated until both relative stopping tests hold or `ite_max` is reached.

mod cg;
mod newton;
mod relax;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

pub use cg::{nonlinear_cg, CgVariant};
pub use newton::{newton_minres_step, NewtonStep};
pub use relax::relax_sweep;

use crate::amf::NoiseMask;
use crate::error::{Error, Result};
use crate::functional::{cost, PotentialParams, RestorationState};
use crate::image::GrayImage;
use crate::minres::MinresConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Relax,
    NewtonMinres,
    CgFr,
    CgPr,
    CgHs,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Relax,
        Method::NewtonMinres,
        Method::CgFr,
        Method::CgPr,
        Method::CgHs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Relax => "relax",
            Method::NewtonMinres => "newton_minres",
            Method::CgFr => "cg_fr",
            Method::CgPr => "cg_pr",
            Method::CgHs => "cg_hs",
        }
    }

    fn cg_variant(self) -> Option<CgVariant> {
        match self {
            Method::CgFr => Some(CgVariant::FletcherReeves),
            Method::CgPr => Some(CgVariant::PolakRibiere),
            Method::CgHs => Some(CgVariant::HestenesStiefel),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method '{s}', expected one of relax, newton_minres, cg_fr, cg_pr, cg_hs"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCriteria {
    /// Bound on `||u^k - u^(k-1)|| / ||u^k||`.
    pub rel_u_tol: f64,
    /// Bound on `|F(u^k) - F(u^(k-1))| / F(u^k)`.
    pub rel_f_tol: f64,
    /// Iteration cap per stage.
    pub ite_max: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            rel_u_tol: 1e-4,
            rel_f_tol: 1e-4,
            ite_max: 500,
        }
    }
}

impl StopCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_u_tol > 0.0 && self.rel_f_tol > 0.0) {
            return Err(Error::Config(format!(
                "stopping tolerances must be positive, got {} and {}",
                self.rel_u_tol, self.rel_f_tol
            )));
        }
        if self.ite_max == 0 {
            return Err(Error::Config("ite_max must be at least 1".into()));
        }
        Ok(())
    }

    /// Both relative tests between consecutive iterates.
    pub fn satisfied(&self, prev_u: &[f64], u: &[f64], prev_f: f64, f: f64) -> bool {
        let (du, nu) = relative_change(prev_u, u);
        let u_ok = du <= self.rel_u_tol * nu;
        let df = (f - prev_f).abs();
        let f_ok = df <= self.rel_f_tol * f.abs();
        u_ok && f_ok
    }
}

fn relative_change(prev: &[f64], cur: &[f64]) -> (f64, f64) {
    let mut diff = 0.0;
    let mut size = 0.0;
    for (a, b) in prev.iter().zip(cur) {
        diff += (b - a) * (b - a);
        size += b * b;
    }
    (diff.sqrt(), size.sqrt())
}

pub const DEFAULT_ALPHA_MIN: f64 = 1.0;

/// Leading values of the smoothing schedule; after the last one the value
/// keeps halving.
const SCHEDULE_HEAD: [f64; 7] = [160000.0, 5000.0, 1250.0, 312.5, 156.25, 78.125, 39.0625];

/// Strictly decreasing sequence of smoothing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSchedule {
    alphas: Vec<f64>,
}

impl ContinuationSchedule {
    /// 160000, 5000, 1250, 312.5, 156.25, 78.125, 39.0625, then halving. The
    /// sequence ends with the first value at or below `alpha_min`.
    pub fn standard(alpha_min: f64) -> Result<Self> {
        if !(alpha_min > 0.0 && alpha_min.is_finite()) {
            return Err(Error::Config(format!("alpha_min must be positive, got {alpha_min}")));
        }
        let mut alphas = Vec::new();
        for &a in &SCHEDULE_HEAD {
            alphas.push(a);
            if a <= alpha_min {
                return Ok(Self { alphas });
            }
        }
        let mut a = *alphas.last().unwrap();
        while a > alpha_min {
            a /= 2.0;
            alphas.push(a);
        }
        Ok(Self { alphas })
    }

    pub fn custom(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Config("schedule must contain at least one alpha".into()));
        }
        if alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::Config("schedule values must be positive and finite".into()));
        }
        if alphas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("schedule must be strictly decreasing".into()));
        }
        Ok(Self { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
}

impl Default for ContinuationSchedule {
    fn default() -> Self {
        Self::standard(DEFAULT_ALPHA_MIN).expect("default alpha_min is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StopReason {
    Tolerance,
    IteMax,
    /// Nonlinear CG could not find a descent step twice in a row.
    Stalled,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Tolerance => "tolerance",
            StopReason::IteMax => "ite_max",
            StopReason::Stalled => "stalled",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one continuation stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub alpha: f64,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub stop_reason: StopReason,
    /// Newton steps whose inner MINRES solve hit its iteration cap.
    pub inner_unconverged: usize,
    pub line_search_failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub method: Method,
    pub stages: Vec<StageReport>,
    pub total_iterations: usize,
    /// Wall-clock time of phase two.
    pub elapsed_seconds: f64,
    /// Most severe stage outcome (stalled over ite_max over tolerance).
    pub stop_reason: StopReason,
    pub final_u: Vec<f64>,
}

impl SolverReport {
    fn empty(method: Method) -> Self {
        Self {
            method,
            stages: Vec::new(),
            total_iterations: 0,
            elapsed_seconds: 0.0,
            stop_reason: StopReason::Tolerance,
            final_u: Vec::new(),
        }
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.stages.last().map(|s| s.final_cost)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverOptions {
    pub schedule: ContinuationSchedule,
    pub stop: StopCriteria,
    pub minres: MinresConfig,
}

/// Repeats `step` until the stopping tests pass or `ite_max` steps were taken.
/// `step` returns `false` to request an early stall exit.
fn iterate_stage<F>(
    state: &mut RestorationState,
    params: &PotentialParams,
    stop: &StopCriteria,
    mut step: F,
) -> (usize, f64, StopReason)
where
    F: FnMut(&mut RestorationState) -> bool,
{
    let mut f_prev = cost(state, params);
    let mut u_prev = state.u.clone();
    for it in 1..=stop.ite_max {
        if !step(state) {
            let f = cost(state, params);
            return (it, f, StopReason::Stalled);
        }
        let f = cost(state, params);
        if stop.satisfied(&u_prev, &state.u, f_prev, f) {
            return (it, f, StopReason::Tolerance);
        }
        f_prev = f;
        u_prev.copy_from_slice(&state.u);
    }
    (stop.ite_max, f_prev, StopReason::IteMax)
}

/// Runs one continuation stage of `method` in place.
pub fn run_stage(
    method: Method,
    state: &mut RestorationState,
    params: &PotentialParams,
    stop: &StopCriteria,
    minres: &MinresConfig,
) -> Result<StageReport> {
    stop.validate()?;
    let initial_cost = cost(state, params);
    let mut report = StageReport {
        alpha: params.alpha(),
        iterations: 0,
        initial_cost,
        final_cost: initial_cost,
        stop_reason: StopReason::Tolerance,
        inner_unconverged: 0,
        line_search_failures: 0,
    };
    if state.is_empty() {
        return Ok(report);
    }
    match method {
        Method::Relax => {
            let (it, f, why) = iterate_stage(state, params, stop, |st| {
                relax_sweep(st, params);
                true
            });
            report.iterations = it;
            report.final_cost = f;
            report.stop_reason = why;
        }
        Method::NewtonMinres => {
            let mut unconverged = 0;
            let mut failure = None;
            let (it, f, why) = iterate_stage(state, params, stop, |st| match newton_minres_step(st, params, minres) {
                Ok(step) => {
                    if !step.inner_converged {
                        unconverged += 1;
                    }
                    true
                }
                Err(e) => {
                    failure = Some(e);
                    false
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            report.iterations = it;
            report.final_cost = f;
            report.stop_reason = why;
            report.inner_unconverged = unconverged;
        }
        Method::CgFr | Method::CgPr | Method::CgHs => {
            let variant = method.cg_variant().expect("cg method");
            let out = nonlinear_cg(state, params, variant, stop);
            report.iterations = out.iterations;
            report.final_cost = out.final_cost;
            report.stop_reason = out.stop_reason;
            report.line_search_failures = out.line_search_failures;
        }
    }
    Ok(report)
}

/// Runs every stage of the schedule on an existing state.
pub fn solve(method: Method, state: &mut RestorationState, opts: &SolverOptions) -> Result<SolverReport> {
    opts.stop.validate()?;
    opts.minres.validate()?;
    let start = Instant::now();
    let mut report = SolverReport::empty(method);
    for &alpha in opts.schedule.alphas() {
        let params = PotentialParams::new(alpha)?;
        let stage = run_stage(method, state, &params, &opts.stop, &opts.minres)?;
        if !stage.final_cost.is_finite() || state.u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "{method} produced a non-finite iterate at alpha = {alpha}"
            )));
        }
        report.total_iterations += stage.iterations;
        report.stop_reason = report.stop_reason.max(stage.stop_reason);
        report.stages.push(stage);
    }
    report.final_u = state.u.clone();
    report.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Restores the flagged pixels of `observed`, starting from the detector
/// output `u0`. Unflagged pixels of the result are copied bit for bit from
/// `observed`; flagged ones are clamped to `[0, 255]`.
pub fn restore(
    observed: &GrayImage,
    mask: &NoiseMask,
    u0: &GrayImage,
    method: Method,
    schedule: &ContinuationSchedule,
    stop: &StopCriteria,
) -> Result<(GrayImage, SolverReport)> {
    let opts = SolverOptions {
        schedule: schedule.clone(),
        stop: *stop,
        minres: MinresConfig::default(),
    };
    restore_with_options(observed, mask, u0, method, &opts)
}

pub fn restore_with_options(
    observed: &GrayImage,
    mask: &NoiseMask,
    u0: &GrayImage,
    method: Method,
    opts: &SolverOptions,
) -> Result<(GrayImage, SolverReport)> {
    if observed.dims() != mask.dims() {
        return Err(Error::dims(observed.dims(), mask.dims()));
    }
    if observed.dims() != u0.dims() {
        return Err(Error::dims(observed.dims(), u0.dims()));
    }
    if mask.count() == 0 {
        let mut report = SolverReport::empty(method);
        report.stop_reason = StopReason::Tolerance;
        return Ok((observed.clone(), report));
    }
    let start = Instant::now();
    let mut background = observed.clone();
    for &c in mask.index() {
        background.set_clamped(c, u0.get(c));
    }
    let mut state = RestorationState::new(background, mask.clone())?;
    let mut report = solve(method, &mut state, opts)?;
    let mut restored = observed.clone();
    for (&c, &v) in mask.index().iter().zip(&state.u) {
        restored.set_clamped(c, v);
    }
    report.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok((restored, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::PixelCoord;

    #[test]
    fn standard_schedule_values() {
        let s = ContinuationSchedule::default();
        let expected = [
            160000.0, 5000.0, 1250.0, 312.5, 156.25, 78.125, 39.0625, 19.53125, 9.765625,
            4.8828125, 2.44140625, 1.220703125, 0.6103515625,
        ];
        assert_eq!(s.alphas(), &expected);
    }

    #[test]
    fn schedule_truncates_inside_head() {
        let s = ContinuationSchedule::standard(1000.0).unwrap();
        assert_eq!(s.alphas(), &[160000.0, 5000.0, 1250.0, 312.5]);
        let s = ContinuationSchedule::standard(1e6).unwrap();
        assert_eq!(s.alphas(), &[160000.0]);
    }

    #[test]
    fn schedule_validation() {
        assert!(ContinuationSchedule::standard(0.0).is_err());
        assert!(ContinuationSchedule::custom(vec![]).is_err());
        assert!(ContinuationSchedule::custom(vec![10.0, 10.0]).is_err());
        assert!(ContinuationSchedule::custom(vec![10.0, -1.0]).is_err());
        assert!(ContinuationSchedule::custom(vec![10.0, 1.0]).is_ok());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("newton".parse::<Method>().is_err());
    }

    #[test]
    fn stop_tests_need_both_conditions() {
        let stop = StopCriteria::default();
        assert!(stop.satisfied(&[100.0], &[100.005], 50.0, 50.001));
        assert!(!stop.satisfied(&[100.0], &[100.5], 50.0, 50.001));
        assert!(!stop.satisfied(&[100.0], &[100.005], 50.0, 51.0));
        // zero iterate and zero cost count as converged only without change
        assert!(stop.satisfied(&[0.0], &[0.0], 0.0, 0.0));
    }

    #[test]
    fn stop_validation() {
        assert!(StopCriteria { ite_max: 0, ..StopCriteria::default() }.validate().is_err());
        assert!(StopCriteria { rel_u_tol: 0.0, ..StopCriteria::default() }.validate().is_err());
    }

    #[test]
    fn empty_mask_is_identity() {
        let img = GrayImage::filled(6, 5, 42.0).unwrap();
        let mask = NoiseMask::empty(6, 5);
        for m in Method::ALL {
            let (out, report) =
                restore(&img, &mask, &img, m, &ContinuationSchedule::default(), &StopCriteria::default())
                    .unwrap();
            assert_eq!(out, img);
            assert_eq!(report.total_iterations, 0);
            assert!(report.stages.is_empty());
        }
    }

    #[test]
    fn single_pixel_restored_to_neighbor_value() {
        let mut img = GrayImage::filled(5, 5, 100.0).unwrap();
        img.set_clamped(PixelCoord::new(2, 2), 255.0);
        let mask = NoiseMask::from_coords(5, 5, &[PixelCoord::new(2, 2)]).unwrap();
        for m in Method::ALL {
            let (out, report) =
                restore(&img, &mask, &img, m, &ContinuationSchedule::default(), &StopCriteria::default())
                    .unwrap();
            let v = out.get(PixelCoord::new(2, 2));
            assert!((v - 100.0).abs() <= 0.5, "{m}: {v}");
            assert_eq!(report.stages.len(), 13);
        }
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let img = GrayImage::filled(4, 4, 1.0).unwrap();
        let other = GrayImage::filled(4, 3, 1.0).unwrap();
        let mask = NoiseMask::empty(4, 4);
        assert!(restore(&img, &mask, &other, Method::Relax, &ContinuationSchedule::default(), &StopCriteria::default()).is_err());
    }
}
