use crate::error::Result;
use crate::functional::{newton_system, PotentialParams, RestorationState};
use crate::minres::{minres_solve, MinresConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStep {
    /// `||z||_2` of the applied step.
    pub step_norm: f64,
    pub inner_iterations: usize,
    pub inner_converged: bool,
}

/// Solves `J z = -grad F` with MINRES from `z = 0` and applies `u += z`.
/// An unconverged inner solve still applies its best iterate.
pub fn newton_minres_step(
    state: &mut RestorationState,
    params: &PotentialParams,
    cfg: &MinresConfig,
) -> Result<NewtonStep> {
    let sys = newton_system(state, params);
    let zero = vec![0.0; sys.n()];
    let out = minres_solve(&sys, &zero, cfg)?;
    let mut sq = 0.0;
    for (u, z) in state.u.iter_mut().zip(&out.x) {
        *u += z;
        sq += z * z;
    }
    Ok(NewtonStep {
        step_norm: sq.sqrt(),
        inner_iterations: out.iterations,
        inner_converged: out.converged,
    })
}
