//! The edge-preserving functional over the noisy pixels, its gradient and
//! its Newton system.
//!
//! With the potential `phi_a(x) = sqrt(a + x^2)` and `u` the intensities of
//! the noisy pixels,
//!
//! ```text
//! F(u) = sum_{k in N} [ sum_{clean nbr m} 2 phi(u_k - x_m) + sum_{noisy nbr l} phi(u_k - u_l) ]
//! ```
//!
//! Every noisy–noisy pair appears twice in that sum (once from each side), so
//! both the clean and the noisy neighbor terms of the gradient carry a factor 2.

use crate::amf::NoiseMask;
use crate::error::{Error, Result};
use crate::image::{neighborhood, GrayImage};

/// Smoothing parameter of the potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams {
    alpha: f64,
}

impl PotentialParams {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        (self.alpha + x * x).sqrt()
    }

    #[inline]
    pub fn d1(&self, x: f64) -> f64 {
        x / (self.alpha + x * x).sqrt()
    }

    #[inline]
    pub fn d2(&self, x: f64) -> f64 {
        let s = self.alpha + x * x;
        self.alpha / (s * s.sqrt())
    }

    /// `(phi, d1, d2)` at `x` with a single square root.
    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let s = (self.alpha + x * x).sqrt();
        let inv = 1.0 / s;
        (s, x * inv, self.alpha * inv * inv * inv)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must be positive and finite, got {alpha}")))
    }
}

/// `sqrt(alpha + x^2)`.
pub fn phi(alpha: f64, x: f64) -> Result<f64> {
    Ok(PotentialParams::new(alpha)?.phi(x))
}

/// `x / sqrt(alpha + x^2)`.
pub fn phi_d1(alpha: f64, x: f64) -> Result<f64> {
    Ok(PotentialParams::new(alpha)?.d1(x))
}

/// `alpha / (alpha + x^2)^(3/2)`.
pub fn phi_d2(alpha: f64, x: f64) -> Result<f64> {
    Ok(PotentialParams::new(alpha)?.d2(x))
}

/// In-bounds neighbors of one noisy pixel, split by clean/noisy.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Site {
    clean: [f64; 4],
    noisy: [u32; 4],
    n_clean: u8,
    n_noisy: u8,
}

impl Site {
    #[inline]
    pub(crate) fn clean(&self) -> &[f64] {
        &self.clean[..self.n_clean as usize]
    }

    #[inline]
    pub(crate) fn noisy(&self) -> impl Iterator<Item = usize> + '_ {
        self.noisy[..self.n_noisy as usize].iter().map(|&l| l as usize)
    }
}

/// Current estimate `u` over the noisy set together with the fixed data that
/// defines the functional.
#[derive(Debug, Clone)]
pub struct RestorationState {
    pub u: Vec<f64>,
    background: GrayImage,
    mask: NoiseMask,
    sites: Vec<Site>,
}

impl RestorationState {
    /// State with `u` read from `background` at the flagged pixels.
    ///
    /// `background` supplies the clean-neighbor values; on unflagged pixels it
    /// must hold the observed image.
    pub fn new(background: GrayImage, mask: NoiseMask) -> Result<Self> {
        if background.dims() != mask.dims() {
            return Err(Error::dims(mask.dims(), background.dims()));
        }
        if mask.count() > u32::MAX as usize {
            return Err(Error::Config("noisy set too large".into()));
        }
        let dims = background.dims();
        let mut sites = Vec::with_capacity(mask.count());
        for &c in mask.index() {
            let mut site = Site::default();
            for nb in neighborhood(c, dims)? {
                match mask.index_of(nb) {
                    Some(l) => {
                        site.noisy[site.n_noisy as usize] = l as u32;
                        site.n_noisy += 1;
                    }
                    None => {
                        site.clean[site.n_clean as usize] = background.get(nb);
                        site.n_clean += 1;
                    }
                }
            }
            sites.push(site);
        }
        let u = mask.index().iter().map(|&c| background.get(c)).collect();
        Ok(Self {
            u,
            background,
            mask,
            sites,
        })
    }

    pub fn with_u(mut self, u: Vec<f64>) -> Result<Self> {
        if u.len() != self.u.len() {
            return Err(Error::Dimension {
                expected: format!("{} unknowns", self.u.len()),
                got: format!("{}", u.len()),
            });
        }
        self.u = u;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn mask(&self) -> &NoiseMask {
        &self.mask
    }

    pub fn background(&self) -> &GrayImage {
        &self.background
    }

    /// Ordinals of noisy pixels adjacent to `k`.
    pub fn noisy_neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.sites[k].noisy()
    }

    /// Values of clean pixels adjacent to `k`.
    pub fn clean_neighbors(&self, k: usize) -> &[f64] {
        self.sites[k].clean()
    }

    /// The background with `u`, clamped to `[0, 255]`, written over the noisy pixels.
    pub fn to_image(&self) -> GrayImage {
        let mut img = self.background.clone();
        for (&c, &v) in self.mask.index().iter().zip(&self.u) {
            img.set_clamped(c, v);
        }
        img
    }

    /// Current values of all neighbors of `k`, clean first; the count is the
    /// second element.
    #[inline]
    pub fn neighbor_values(&self, k: usize) -> ([f64; 4], usize) {
        let site = &self.sites[k];
        let mut out = [0.0; 4];
        let nc = site.n_clean as usize;
        out[..nc].copy_from_slice(site.clean());
        let mut m = nc;
        for l in site.noisy() {
            out[m] = self.u[l];
            m += 1;
        }
        (out, m)
    }

    /// Part of `F` that depends on `u_k`, evaluated at `u_k = value`.
    pub fn local_cost(&self, params: &PotentialParams, k: usize, value: f64) -> f64 {
        let site = &self.sites[k];
        let clean: f64 = site.clean().iter().map(|&x| params.phi(value - x)).sum();
        let noisy: f64 = site.noisy().map(|l| params.phi(value - self.u[l])).sum();
        2.0 * (clean + noisy)
    }

    /// First and second derivative of `F` in `u_k`, evaluated at `u_k = value`.
    #[inline]
    pub fn local_derivs(&self, params: &PotentialParams, k: usize, value: f64) -> (f64, f64) {
        let (_, g, h) = self.local_eval(params, k, value);
        (g, h)
    }

    /// Local cost, first and second derivative in `u_k` at `u_k = value`.
    #[inline]
    pub fn local_eval(&self, params: &PotentialParams, k: usize, value: f64) -> (f64, f64, f64) {
        let site = &self.sites[k];
        let mut f = 0.0;
        let mut g = 0.0;
        let mut h = 0.0;
        let mut add = |d: f64| {
            let (a, b, c) = params.eval(d);
            f += a;
            g += b;
            h += c;
        };
        for &x in site.clean() {
            add(value - x);
        }
        for l in site.noisy() {
            add(value - self.u[l]);
        }
        (2.0 * f, 2.0 * g, 2.0 * h)
    }
}

pub fn cost(state: &RestorationState, params: &PotentialParams) -> f64 {
    cost_at(state, params, &state.u)
}

/// `F` evaluated at an arbitrary `u` using the stencil of `state`.
pub fn cost_at(state: &RestorationState, params: &PotentialParams, u: &[f64]) -> f64 {
    let mut total = 0.0;
    for (k, site) in state.sites.iter().enumerate() {
        let uk = u[k];
        let clean: f64 = site.clean().iter().map(|&x| params.phi(uk - x)).sum();
        let noisy: f64 = site.noisy().map(|l| params.phi(uk - u[l])).sum();
        total += 2.0 * clean + noisy;
    }
    total
}

pub fn gradient(state: &RestorationState, params: &PotentialParams) -> Vec<f64> {
    let mut g = vec![0.0; state.len()];
    gradient_into(state, params, &state.u, &mut g);
    g
}

/// Gradient at `u`, written into `out`.
pub fn gradient_into(state: &RestorationState, params: &PotentialParams, u: &[f64], out: &mut [f64]) {
    for (k, site) in state.sites.iter().enumerate() {
        let uk = u[k];
        let clean: f64 = site.clean().iter().map(|&x| params.d1(uk - x)).sum();
        let noisy: f64 = site.noisy().map(|l| params.d1(uk - u[l])).sum();
        out[k] = 2.0 * (clean + noisy);
    }
}

/// `(dF/du_k, d^2F/du_k^2)` at the current state; the second value is always positive.
pub fn scalar_derivs(state: &RestorationState, params: &PotentialParams, k: usize) -> (f64, f64) {
    state.local_derivs(params, k, state.u[k])
}

/// `d^T H d` for the Hessian `H` of `F` at `u`.
pub fn curvature_along(state: &RestorationState, params: &PotentialParams, u: &[f64], d: &[f64]) -> f64 {
    let mut total = 0.0;
    for (k, site) in state.sites.iter().enumerate() {
        let uk = u[k];
        let dk = d[k];
        let clean: f64 = site.clean().iter().map(|&x| params.d2(uk - x)).sum();
        total += 2.0 * clean * dk * dk;
        // each noisy pair is visited from both ends, 2 phi'' (d_k - d_l)^2 in total
        for l in site.noisy() {
            let diff = dk - d[l];
            total += params.d2(uk - u[l]) * diff * diff;
        }
    }
    total
}

/// Symmetric sparse matrix stored as its diagonal plus the strict upper
/// triangle, together with a right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymSystem {
    n: usize,
    diag: Vec<f64>,
    off: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl SparseSymSystem {
    /// Each `(row, col, value)` in `off` must have `row < col < n`; its mirror
    /// entry is implied.
    pub fn new(diag: Vec<f64>, off: Vec<(usize, usize, f64)>, rhs: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if rhs.len() != n {
            return Err(Error::Dimension {
                expected: format!("rhs of length {n}"),
                got: format!("{}", rhs.len()),
            });
        }
        if let Some(&(r, c, _)) = off.iter().find(|(r, c, _)| !(r < c && *c < n)) {
            return Err(Error::Config(format!(
                "off-diagonal entry ({r}, {c}) must satisfy row < col < {n}"
            )));
        }
        Ok(Self { n, diag, off, rhs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[(usize, usize, f64)] {
        &self.off
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Row-major dense copy of the matrix.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for (k, &d) in self.diag.iter().enumerate() {
            a[k * n + k] = d;
        }
        for &(r, c, v) in &self.off {
            a[r * n + c] += v;
            a[c * n + r] += v;
        }
        a
    }
}

/// Jacobian of the gradient at the current `u` with right-hand side `-gradient`.
pub fn newton_system(state: &RestorationState, params: &PotentialParams) -> SparseSymSystem {
    let n = state.len();
    let mut diag = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(2 * n);
    for k in 0..n {
        let (g, h) = scalar_derivs(state, params, k);
        diag.push(h);
        rhs.push(-g);
        let uk = state.u[k];
        for l in state.sites[k].noisy().filter(|&l| l > k) {
            off.push((k, l, -2.0 * params.d2(uk - state.u[l])));
        }
    }
    SparseSymSystem { n, diag, off, rhs }
}
