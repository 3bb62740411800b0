//! Barrier penalty rounding.
//!
//! The penalty `U(x) = sum_ij (s_ij - floor_ij)(s_ij - ceil_ij)`, `s = sum_k x^k`,
//! is zero or negative exactly on the soft window. Its gradient with respect to
//! `x^k_ij` is `g = 2 s_ij - (floor_ij + ceil_ij)`, the same for every plane.
//! Inside the +/-1 box around `x_hat` a unit step down changes `U` by `1 - g`
//! and a unit step up by `g + 1`, so each plane minimizes the exact penalty
//! change with a two-segment cost per cell. The plain gradient is zero for an
//! integral pair already on target, which lets the flow tie-break walk it out
//! of its window.

use super::{
    check_inputs, solve_plane_kneed, BestTracker, PlaneState, RoundingMethod, RoundingResult, SoftConstraintSet,
};
use crate::fabric::PhysicalTopology;
use crate::topology::FractionalTopology;
use crate::{Error, Result};

pub fn bpm_round(d_star: &FractionalTopology, phys: &PhysicalTopology, iters: usize) -> Result<RoundingResult> {
    check_inputs(d_star, phys)?;
    if iters == 0 {
        return Err(Error::InvalidArgument("iterations must be >= 1".into()));
    }
    let n = phys.n();
    let y = phys.ocs_count();
    let soft = SoftConstraintSet::from_fractional(d_star);
    let all = n * (n - 1);
    let mut state = PlaneState::new(n, y);
    let mut best = BestTracker::new(&state, &soft);
    let mut used = 0;
    'sweeps: for _ in 0..iters {
        used += 1;
        for k in 0..y {
            let (lo, hi) = state.trust_region(phys, k);
            let cur = state.plane(k);
            let mut below = vec![0i64; n * n];
            let mut above = vec![0i64; n * n];
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let p = i * n + j;
                    let grad = 2 * state.agg[p] - (soft.floor(i, j) + soft.ceil(i, j));
                    below[p] = grad - 1;
                    above[p] = grad + 1;
                }
            }
            let knee: Vec<i64> = cur.iter().zip(&hi).map(|(&x, &h)| x.min(h)).collect();
            let x = solve_plane_kneed(phys, k, below, above, knee, lo, hi)?;
            state.set_plane(k, &x);
            if best.observe(&state, &soft) == all {
                break 'sweeps;
            }
        }
    }
    let topo = best.into_topology(n, y)?;
    Ok(RoundingResult::from_topology(topo, &soft, used, RoundingMethod::Bpm))
}
