#![allow(dead_code)]

use std::path::PathBuf;

use impulse_restore::image::{load_pgm, neighborhood};
use impulse_restore::noise::UniformStream;
use impulse_restore::{GrayImage, NoiseMask, PixelCoord, RestorationState};

pub struct Rng(UniformStream);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(UniformStream::new(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.next_f64()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_f64() * n as f64) as usize
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.0.next_f64() < p
    }
}

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn cameraman() -> GrayImage {
    load_pgm(data_path("cameraman.pgm")).expect("test image")
}

pub fn crop(img: &GrayImage, row: usize, col: usize, h: usize, w: usize) -> GrayImage {
    let mut px = Vec::with_capacity(h * w);
    for r in row..row + h {
        for c in col..col + w {
            px.push(img.get(PixelCoord::new(r, c)));
        }
    }
    GrayImage::new(w, h, px).unwrap()
}

/// Random background, random mask with the given fraction, random `u`.
pub fn random_state(rng: &mut Rng, w: usize, h: usize, frac: f64) -> RestorationState {
    let px: Vec<f64> = (0..w * h).map(|_| rng.uniform(0.0, 255.0)).collect();
    let bg = GrayImage::new(w, h, px).unwrap();
    let mut flags: Vec<bool> = (0..w * h).map(|_| rng.chance(frac)).collect();
    if !flags.iter().any(|&f| f) {
        flags[rng.below(w * h)] = true;
    }
    let mask = NoiseMask::from_flags(w, h, flags).unwrap();
    let n = mask.count();
    let u = (0..n).map(|_| rng.uniform(0.0, 255.0)).collect();
    RestorationState::new(bg, mask).unwrap().with_u(u).unwrap()
}

fn phi(alpha: f64, x: f64) -> f64 {
    (alpha + x * x).sqrt()
}

/// Cost evaluated straight from the pixel grid: every flagged pixel pays
/// `2 phi` to each clean neighbor and `phi` to each flagged neighbor.
pub fn grid_cost(state: &RestorationState, alpha: f64, u: &[f64]) -> f64 {
    let mask = state.mask();
    let bg = state.background();
    let mut total = 0.0;
    for (k, &c) in mask.index().iter().enumerate() {
        for nb in neighborhood(c, bg.dims()).unwrap() {
            match mask.index_of(nb) {
                Some(l) => total += phi(alpha, u[k] - u[l]),
                None => total += 2.0 * phi(alpha, u[k] - bg.get(nb)),
            }
        }
    }
    total
}

/// Central difference gradient of `grid_cost`.
pub fn fd_gradient(state: &RestorationState, alpha: f64, u: &[f64], h: f64) -> Vec<f64> {
    let mut x = u.to_vec();
    (0..u.len())
        .map(|k| {
            x[k] = u[k] + h;
            let fp = grid_cost(state, alpha, &x);
            x[k] = u[k] - h;
            let fm = grid_cost(state, alpha, &x);
            x[k] = u[k];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Golden-section search for the minimizer of a unimodal `f` on `[a, b]`.
pub fn golden_min(f: &mut dyn FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Minimizer of `grid_cost` by nested golden-section search, one level per
/// unknown. Convexity of the cost keeps every nested profile unimodal.
pub fn brute_force_minimizer(state: &RestorationState, alpha: f64, tol: f64) -> Vec<f64> {
    fn inner(state: &RestorationState, alpha: f64, tol: f64, u: &mut Vec<f64>, k: usize) -> f64 {
        if k == u.len() {
            return grid_cost(state, alpha, u);
        }
        let mut f = |v: f64| {
            u[k] = v;
            inner(state, alpha, tol, u, k + 1)
        };
        let (x, _) = golden_min(&mut f, -10.0, 265.0, tol);
        u[k] = x;
        inner(state, alpha, tol, u, k + 1)
    }
    let mut u = vec![0.0; state.len()];
    inner(state, alpha, tol, &mut u, 0);
    u
}
