//! Nonlinear conjugate gradient baselines (Fletcher–Reeves, Polak–Ribière,
//! Hestenes–Stiefel) with a backtracking Armijo line search.

use crate::functional::{cost_at, gradient_into, PotentialParams, RestorationState};

use super::{StopCriteria, StopReason};

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CgVariant {
    FletcherReeves,
    PolakRibiere,
    HestenesStiefel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub final_cost: f64,
    pub stop_reason: StopReason,
    pub line_search_failures: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Armijo backtracking from `t`. Returns the accepted step and the cost there.
fn line_search(
    state: &RestorationState,
    params: &PotentialParams,
    f0: f64,
    slope: f64,
    d: &[f64],
    mut t: f64,
    trial: &mut [f64],
) -> Option<(f64, f64)> {
    for _ in 0..=MAX_BACKTRACKS {
        for ((x, &u), &di) in trial.iter_mut().zip(&state.u).zip(d) {
            *x = u + t * di;
        }
        let f = cost_at(state, params, trial);
        if f <= f0 + ARMIJO_C1 * t * slope {
            return Some((t, f));
        }
        t *= 0.5;
    }
    None
}

/// Runs nonlinear CG on `F` at fixed `alpha` until the stopping tests pass,
/// `ite_max` iterations were taken, or two line searches in a row failed.
///
/// `beta` is clipped at zero for PR and HS and the direction is reset to
/// steepest descent every `|N|` iterations or whenever it is not a descent
/// direction.
pub fn nonlinear_cg(
    state: &mut RestorationState,
    params: &PotentialParams,
    variant: CgVariant,
    stop: &StopCriteria,
) -> CgOutcome {
    let n = state.len();
    let mut f = cost_at(state, params, &state.u);
    let mut out = CgOutcome {
        iterations: 0,
        final_cost: f,
        stop_reason: StopReason::Tolerance,
        line_search_failures: 0,
    };
    if n == 0 {
        return out;
    }
    let mut g = vec![0.0; n];
    gradient_into(state, params, &state.u, &mut g);
    if g.iter().all(|&x| x == 0.0) {
        return out;
    }
    let mut d: Vec<f64> = g.iter().map(|x| -x).collect();
    let mut g_new = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut since_restart = 0;
    let mut consecutive_failures = 0;
    // last accepted step and the slope it was taken along
    let mut last: Option<(f64, f64)> = None;

    for it in 1..=stop.ite_max {
        out.iterations = it;
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            slope = -dot(&g, &g);
            since_restart = 0;
            last = None;
        }
        // first step moves the largest component by one gray level; later
        // steps assume the same first-order change as the previous one
        let t0 = match last {
            Some((t, s)) if since_restart > 0 => t * s / slope,
            _ => 1.0 / d.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        };
        let accepted = line_search(state, params, f, slope, &d, t0, &mut trial);
        let Some((t, f_trial)) = accepted else {
            out.line_search_failures += 1;
            consecutive_failures += 1;
            if consecutive_failures >= 2 {
                out.stop_reason = StopReason::Stalled;
                out.final_cost = f;
                return out;
            }
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            since_restart = 0;
            last = None;
            continue;
        };
        consecutive_failures = 0;
        last = Some((t, slope));

        let done = stop.satisfied(&state.u, &trial, f, f_trial);
        std::mem::swap(&mut state.u, &mut trial);
        f = f_trial;
        out.final_cost = f;
        if done {
            out.stop_reason = StopReason::Tolerance;
            return out;
        }

        gradient_into(state, params, &state.u, &mut g_new);
        since_restart += 1;
        let beta = if since_restart >= n {
            since_restart = 0;
            0.0
        } else {
            match variant {
                CgVariant::FletcherReeves => dot(&g_new, &g_new) / dot(&g, &g),
                CgVariant::PolakRibiere => {
                    let num: f64 = g_new.iter().zip(&g).map(|(a, b)| a * (a - b)).sum();
                    num / dot(&g, &g)
                }
                CgVariant::HestenesStiefel => {
                    let num: f64 = g_new.iter().zip(&g).map(|(a, b)| a * (a - b)).sum();
                    let den: f64 = d.iter().zip(g_new.iter().zip(&g)).map(|(di, (a, b))| di * (a - b)).sum();
                    if den == 0.0 {
                        0.0
                    } else {
                        num / den
                    }
                }
            }
        };
        let beta = if beta.is_finite() { beta.max(0.0) } else { 0.0 };
        if beta == 0.0 {
            since_restart = 0;
        }
        for (di, &gi) in d.iter_mut().zip(&g_new) {
            *di = -gi + beta * *di;
        }
        std::mem::swap(&mut g, &mut g_new);
    }
    out.stop_reason = StopReason::IteMax;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amf::NoiseMask;
    use crate::functional::cost;
    use crate::image::{GrayImage, PixelCoord};

    #[test]
    fn zero_gradient_takes_no_iterations() {
        let bg = GrayImage::filled(5, 5, 33.0).unwrap();
        let mask = NoiseMask::from_coords(5, 5, &[PixelCoord::new(2, 2), PixelCoord::new(2, 3)]).unwrap();
        let mut st = RestorationState::new(bg, mask).unwrap();
        let p = PotentialParams::new(1.0).unwrap();
        for v in [CgVariant::FletcherReeves, CgVariant::PolakRibiere, CgVariant::HestenesStiefel] {
            let out = nonlinear_cg(&mut st, &p, v, &StopCriteria::default());
            assert_eq!(out.iterations, 0);
            assert_eq!(st.u, vec![33.0, 33.0]);
        }
    }

    #[test]
    fn decreases_cost() {
        let mut bg = GrayImage::filled(6, 6, 120.0).unwrap();
        let coords = [PixelCoord::new(2, 2), PixelCoord::new(2, 3), PixelCoord::new(3, 3)];
        for c in &coords {
            bg.set_clamped(*c, 0.0);
        }
        let mask = NoiseMask::from_coords(6, 6, &coords).unwrap();
        let p = PotentialParams::new(10.0).unwrap();
        for v in [CgVariant::FletcherReeves, CgVariant::PolakRibiere, CgVariant::HestenesStiefel] {
            let mut st = RestorationState::new(bg.clone(), mask.clone()).unwrap();
            let before = cost(&st, &p);
            let stop = StopCriteria { rel_u_tol: 1e-10, rel_f_tol: 1e-12, ite_max: 500 };
            let out = nonlinear_cg(&mut st, &p, v, &stop);
            assert!(out.final_cost < before);
            assert!(st.u.iter().all(|x| (x - 120.0).abs() < 1e-3), "{v:?} {:?}", st.u);
        }
    }
}
