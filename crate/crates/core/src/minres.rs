//! MINRES for symmetric, possibly indefinite, sparse systems.
//!
//! The default path is the Paige–Saunders recurrence: three-term Lanczos with
//! unit-norm basis vectors, the tridiagonal `T` reduced by Givens rotations,
//! and the residual norm carried by the rotation recurrence. A second path
//! builds the basis by full Gram–Schmidt against every previous vector and
//! solves the Hessenberg least-squares problem the same way; it keeps the
//! whole basis in memory and is meant for small systems.

use crate::error::{Error, Result};
use crate::functional::SparseSymSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orthogonalization {
    /// Three-term recurrence, O(n) memory.
    #[default]
    Lanczos,
    /// Gram–Schmidt against all previous basis vectors.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinresConfig {
    /// Stop once `||b - A x|| <= tol * ||b||`.
    pub tol: f64,
    /// Iteration cap; `None` means `2 n`.
    pub max_iter: Option<usize>,
    pub orthogonalization: Orthogonalization,
}

impl Default for MinresConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: None,
            orthogonalization: Orthogonalization::Lanczos,
        }
    }
}

impl MinresConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("MINRES tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == Some(0) {
            return Err(Error::Config("MINRES max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    /// Residual norm before the first iteration followed by one entry per iteration.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl MinresOutcome {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

/// `y = A v`.
pub fn matvec(sys: &SparseSymSystem, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != sys.n() {
        return Err(Error::Dimension {
            expected: format!("vector of length {}", sys.n()),
            got: format!("{}", v.len()),
        });
    }
    let mut y = vec![0.0; sys.n()];
    matvec_into(sys, v, &mut y);
    Ok(y)
}

pub(crate) fn matvec_into(sys: &SparseSymSystem, v: &[f64], y: &mut [f64]) {
    for ((yk, &d), &vk) in y.iter_mut().zip(sys.diag()).zip(v) {
        *yk = d * vk;
    }
    for &(r, c, a) in sys.off() {
        y[r] += a * v[c];
        y[c] += a * v[r];
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Stable Givens rotation `(c, s, r)` with `c a + s b = r`, `-s a + c b = 0`.
fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        (1.0, 0.0, a)
    } else {
        let r = a.hypot(b);
        (a / r, b / r, r)
    }
}

/// Solves `A x = b` starting from `x0`, minimizing `||b - A x||` over the
/// shifted Krylov space at every step.
pub fn minres_solve(sys: &SparseSymSystem, x0: &[f64], cfg: &MinresConfig) -> Result<MinresOutcome> {
    cfg.validate()?;
    let n = sys.n();
    if x0.len() != n {
        return Err(Error::Dimension {
            expected: format!("initial guess of length {n}"),
            got: format!("{}", x0.len()),
        });
    }
    if n == 0 {
        return Ok(MinresOutcome {
            x: Vec::new(),
            residual_history: vec![0.0],
            converged: true,
            iterations: 0,
        });
    }
    let max_iter = cfg.max_iter.unwrap_or(2 * n).max(1);
    let mut r0 = vec![0.0; n];
    matvec_into(sys, x0, &mut r0);
    for (r, &b) in r0.iter_mut().zip(sys.rhs()) {
        *r = b - *r;
    }
    let bnorm = norm(sys.rhs());
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let beta1 = norm(&r0);
    if beta1 <= cfg.tol * scale {
        return Ok(MinresOutcome {
            x: x0.to_vec(),
            residual_history: vec![beta1],
            converged: true,
            iterations: 0,
        });
    }
    match cfg.orthogonalization {
        Orthogonalization::Lanczos => Ok(lanczos_minres(sys, x0, r0, beta1, scale, cfg.tol, max_iter)),
        Orthogonalization::Full => Ok(full_minres(sys, x0, r0, beta1, scale, cfg.tol, max_iter)),
    }
}

fn lanczos_minres(
    sys: &SparseSymSystem,
    x0: &[f64],
    r0: Vec<f64>,
    beta1: f64,
    scale: f64,
    tol: f64,
    max_iter: usize,
) -> MinresOutcome {
    let n = sys.n();
    let mut x = x0.to_vec();
    let mut v_prev = vec![0.0; n];
    let mut v: Vec<f64> = r0.iter().map(|r| r / beta1).collect();
    let mut p = vec![0.0; n];
    // search directions w_k, w_{k-1}, w_{k-2}
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];

    let mut beta = beta1;
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let (mut dbar, mut epsln) = (0.0f64, 0.0f64);
    let mut phibar = beta1;
    let mut anorm = 0.0f64;

    let mut history = Vec::with_capacity(max_iter.min(4096) + 1);
    history.push(beta1);
    let mut converged = false;
    let mut iterations = 0;

    for k in 1..=max_iter {
        iterations = k;
        matvec_into(sys, &v, &mut p);
        if k > 1 {
            for (pi, &vp) in p.iter_mut().zip(&v_prev) {
                *pi -= beta * vp;
            }
        }
        let alpha = dot(&v, &p);
        for (pi, &vi) in p.iter_mut().zip(&v) {
            *pi -= alpha * vi;
        }
        let beta_next = norm(&p);
        anorm = anorm.max(alpha.abs() + beta + beta_next);

        // apply the two previous rotations to column k of T, then annihilate beta_next
        let oldeps = epsln;
        let delta = cs * dbar + sn * alpha;
        let gbar = sn * dbar - cs * alpha;
        epsln = sn * beta_next;
        dbar = -cs * beta_next;
        let gamma = gbar.hypot(beta_next).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta_next / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        std::mem::swap(&mut w2, &mut w1);
        std::mem::swap(&mut w1, &mut w);
        for i in 0..n {
            w[i] = (v[i] - oldeps * w2[i] - delta * w1[i]) / gamma;
            x[i] += phi * w[i];
        }

        let res = phibar.abs();
        history.push(res);
        let breakdown = beta_next <= f64::EPSILON * anorm;
        if res <= tol * scale || breakdown {
            converged = true;
            break;
        }
        std::mem::swap(&mut v_prev, &mut v);
        for (vi, &pi) in v.iter_mut().zip(&p) {
            *vi = pi / beta_next;
        }
        beta = beta_next;
    }
    MinresOutcome {
        x,
        residual_history: history,
        converged,
        iterations,
    }
}

fn full_minres(
    sys: &SparseSymSystem,
    x0: &[f64],
    r0: Vec<f64>,
    beta1: f64,
    scale: f64,
    tol: f64,
    max_iter: usize,
) -> MinresOutcome {
    let n = sys.n();
    let max_iter = max_iter.min(n);
    let mut basis: Vec<Vec<f64>> = vec![r0.iter().map(|r| r / beta1).collect()];
    // R factor columns (upper triangular after rotation) and rotations so far
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut rots: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta1];
    let mut history = vec![beta1];
    let mut converged = false;
    let mut anorm = 0.0f64;

    for k in 0..max_iter {
        let mut v = vec![0.0; n];
        matvec_into(sys, &basis[k], &mut v);
        let mut h = vec![0.0; k + 2];
        for (i, q) in basis.iter().enumerate() {
            let hik = dot(q, &v);
            h[i] = hik;
            for (vj, &qj) in v.iter_mut().zip(q) {
                *vj -= hik * qj;
            }
        }
        let hnext = norm(&v);
        h[k + 1] = hnext;
        anorm = anorm.max(h.iter().map(|x| x.abs()).sum());

        for (i, &(c, s)) in rots.iter().enumerate() {
            let (a, b) = (h[i], h[i + 1]);
            h[i] = c * a + s * b;
            h[i + 1] = -s * a + c * b;
        }
        let (c, s, r) = givens(h[k], h[k + 1]);
        h[k] = if r == 0.0 { f64::EPSILON } else { r };
        h[k + 1] = 0.0;
        rots.push((c, s));
        let gk = g[k];
        g[k] = c * gk;
        g.push(-s * gk);
        h.truncate(k + 1);
        r_cols.push(h);

        let res = g[k + 1].abs();
        history.push(res);
        let breakdown = hnext <= f64::EPSILON * anorm;
        if res <= tol * scale || breakdown || k + 1 == max_iter {
            converged = res <= tol * scale || breakdown;
            break;
        }
        basis.push(v.iter().map(|x| x / hnext).collect());
    }

    // back substitution R y = g
    let m = r_cols.len();
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut acc = g[i];
        for j in i + 1..m {
            acc -= r_cols[j][i] * y[j];
        }
        y[i] = acc / r_cols[i][i];
    }
    let mut x = x0.to_vec();
    for (yj, q) in y.iter().zip(&basis) {
        for (xi, &qi) in x.iter_mut().zip(q) {
            *xi += yj * qi;
        }
    }
    MinresOutcome {
        x,
        residual_history: history,
        converged,
        iterations: m,
    }
}

/// The first `count` Lanczos basis vectors generated from `start`.
pub fn lanczos_basis(sys: &SparseSymSystem, start: &[f64], count: usize) -> Vec<Vec<f64>> {
    let n = sys.n();
    let b = norm(start);
    if n == 0 || b == 0.0 {
        return Vec::new();
    }
    let mut out = vec![start.iter().map(|x| x / b).collect::<Vec<_>>()];
    let mut beta = 0.0;
    let mut p = vec![0.0; n];
    while out.len() < count.min(n) {
        let k = out.len() - 1;
        matvec_into(sys, &out[k], &mut p);
        if k > 0 {
            for (pi, &vp) in p.iter_mut().zip(&out[k - 1]) {
                *pi -= beta * vp;
            }
        }
        let alpha = dot(&out[k], &p);
        for (pi, &vi) in p.iter_mut().zip(&out[k]) {
            *pi -= alpha * vi;
        }
        beta = norm(&p);
        if beta == 0.0 {
            break;
        }
        out.push(p.iter().map(|x| x / beta).collect());
    }
    out
}
