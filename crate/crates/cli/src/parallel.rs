//! Parallel drivers over the pure core functions. Results are bit-identical
//! to the serial paths: work items are independent and are merged in index
//! order, so thread scheduling can never reorder arithmetic.

use nalgebra::DVector;
use rayon::prelude::*;
use vvc_core::design::{
    generate_starts, merge_outcomes, solve_from_start, DesignProblem, DesignResult,
};
use vvc_core::linmodels::{jacobian_column, lpf_base_voltage, lpf_from_columns, LpfModel};
use vvc_core::network::NetworkModel;
use vvc_core::powerflow::PfConfig;

use crate::error::Result;

/// Build the LPF model with the 4n perturbed solves fanned out across the
/// thread pool, one task per Jacobian column.
pub fn build_jacobians_parallel(
    net: &NetworkModel,
    p0: &DVector<f64>,
    q0: &DVector<f64>,
    eps: f64,
    pf: &PfConfig,
) -> Result<LpfModel> {
    let v_base = lpf_base_voltage(net, p0, q0, pf)?;
    let columns = (0..net.n())
        .into_par_iter()
        .map(|j| jacobian_column(net, p0, q0, j, eps, pf))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(lpf_from_columns(v_base, p0.clone(), q0.clone(), columns, eps))
}

/// Multi-start slope optimization with starts solved concurrently; the merge
/// is the same sequential index-ordered reduction the serial driver uses.
pub fn optimize_slopes_parallel(problem: &DesignProblem) -> Result<DesignResult> {
    problem.validate()?;
    if problem.gens.is_empty() {
        return Ok(vvc_core::design::optimize_slopes(problem)?);
    }
    let starts = generate_starts(problem);
    let outcomes: Vec<_> = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| solve_from_start(problem, i, s))
        .collect();
    Ok(merge_outcomes(problem, outcomes)?)
}
