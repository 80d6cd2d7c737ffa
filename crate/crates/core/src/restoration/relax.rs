//! Relaxed Newton: one scalar Newton update per noisy pixel, Gauss–Seidel order.

use crate::functional::{PotentialParams, RestorationState};

const BISECTION_STEPS: usize = 10;

/// One pass over the noisy pixels in index order, each updated with
/// `u_k - g/h` using the already-updated neighbors. Returns the largest
/// absolute change.
///
/// The Newton value is kept only if it stays within one gray level of the
/// neighbor range and does not raise the local cost; otherwise the pixel is
/// moved by bisection on `g` toward the 1-D minimizer.
pub fn relax_sweep(state: &mut RestorationState, params: &PotentialParams) -> f64 {
    let mut max_update = 0.0f64;
    for k in 0..state.len() {
        let (buf, m) = state.neighbor_values(k);
        if m == 0 {
            continue;
        }
        let nb = &buf[..m];
        let uk = state.u[k];
        let mut f = 0.0;
        let mut g = 0.0;
        let mut h = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in nb {
            let (a, b, c) = params.eval(uk - x);
            f += a;
            g += b;
            h += c;
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if g == 0.0 {
            continue;
        }
        let (lo, hi) = (lo - 1.0, hi + 1.0);
        let newton = uk - g / h;
        let accepted = newton >= lo && newton <= hi && local_cost(params, nb, newton) <= f;
        let next = if accepted {
            newton
        } else {
            bisect_toward_root(params, nb, uk, g, lo, hi)
        };
        max_update = max_update.max((next - uk).abs());
        state.u[k] = next;
    }
    max_update
}

/// Sum of `phi(v - x)` over the neighbor values; proportional to the local cost.
#[inline]
fn local_cost(params: &PotentialParams, nb: &[f64], v: f64) -> f64 {
    nb.iter().map(|&x| params.phi(v - x)).sum()
}

#[inline]
fn local_slope(params: &PotentialParams, nb: &[f64], v: f64) -> f64 {
    nb.iter().map(|&x| params.d1(v - x)).sum()
}

/// Bisection on the derivative over the part of `[lo, hi]` between the
/// minimizer and `uk`. The returned end keeps the sign of `g`, so it lies
/// between the minimizer and `uk` and cannot raise the (convex) local cost.
fn bisect_toward_root(params: &PotentialParams, nb: &[f64], uk: f64, g: f64, lo: f64, hi: f64) -> f64 {
    // g(lo) < 0 < g(hi) since lo and hi lie strictly outside every neighbor value
    let (mut neg, mut pos) = if g > 0.0 { (lo, uk.min(hi)) } else { (uk.max(lo), hi) };
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (neg + pos);
        let gm = local_slope(params, nb, mid);
        if gm > 0.0 {
            pos = mid;
        } else if gm < 0.0 {
            neg = mid;
        } else {
            return mid;
        }
    }
    if g > 0.0 {
        pos
    } else {
        neg
    }
}
