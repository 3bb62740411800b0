//! Plane-by-plane max-weight matching on residual demand.

use super::{check_inputs, snap, solve_plane, PlaneState, RoundingMethod, RoundingResult, SoftConstraintSet};
use crate::fabric::PhysicalTopology;
use crate::topology::FractionalTopology;
use crate::Result;

const WEIGHT_SCALE: f64 = (1u64 << 20) as f64;

pub fn greedy_round(d_star: &FractionalTopology, phys: &PhysicalTopology) -> Result<RoundingResult> {
    check_inputs(d_star, phys)?;
    let n = phys.n();
    let soft = SoftConstraintSet::from_fractional(d_star);
    let target: Vec<f64> = d_star.as_slice().iter().map(|&v| snap(v)).collect();
    let mut state = PlaneState::new(n, phys.ocs_count());
    for k in 0..phys.ocs_count() {
        let mut cost = vec![0i64; n * n];
        let mut upper = vec![0i64; n * n];
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let p = i * n + j;
                let residual = (target[p] - state.agg[p] as f64).max(0.0);
                if residual <= 0.0 {
                    continue;
                }
                cost[p] = -((residual * WEIGHT_SCALE).round() as i64);
                upper[p] = (residual.ceil() as i64).min(phys.plane_pair_cap(k, i, j) as i64);
            }
        }
        let x = solve_plane(phys, k, cost, vec![0; n * n], upper)?;
        state.set_plane(k, &x);
    }
    Ok(RoundingResult::from_topology(state.to_topology()?, &soft, 1, RoundingMethod::Greedy))
}
