//! Lagrangian dual rounding.
//!
//! Primal utility `-(x^k_ij - h^k_ij)^2` with `h^k_ij = min(h_eg^k(i), h_ig^k(j))`
//! favours forming links; duals `p+` / `p-` price the ceil / floor sides of the
//! soft window. Each plane minimizes `(2 (x_hat - h) + p+ - p-) . x^k` over a
//! +/-1 box. After every plane:
//!
//! ```text
//! p+ <- max(p+ - delta (ceil - s), 0)
//! p- <- max(p- - delta (s - floor), 0)
//! ```
//!
//! with `delta = 1 / sweep`. Duals are kept in fixed point (`DUAL_SCALE` units
//! per link) so every run is bit-reproducible.

use super::{
    check_inputs, solve_plane_kneed, BestTracker, PlaneState, RoundingMethod, RoundingResult, SoftConstraintSet,
};
use crate::fabric::PhysicalTopology;
use crate::topology::FractionalTopology;
use crate::{Error, Result};

pub const DUAL_SCALE: i64 = 1 << 20;

/// Per-update diagnostics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LdmTrace {
    /// Goodness after every plane update.
    pub goodness: Vec<usize>,
    /// Best goodness so far after every plane update.
    pub best: Vec<usize>,
    /// Minimum dual value (fixed point) after every update.
    pub min_dual: Vec<i64>,
    /// Maximum dual value (fixed point) after every update.
    pub max_dual: Vec<i64>,
    /// Planes written in sweep order: `(sweep, plane, x^k)`.
    pub planes: Vec<(usize, usize, Vec<i64>)>,
}

pub fn ldm_round(d_star: &FractionalTopology, phys: &PhysicalTopology, iters: usize) -> Result<RoundingResult> {
    run(d_star, phys, iters, None)
}

pub fn ldm_round_traced(
    d_star: &FractionalTopology,
    phys: &PhysicalTopology,
    iters: usize,
) -> Result<(RoundingResult, LdmTrace)> {
    let mut trace = LdmTrace::default();
    let r = run(d_star, phys, iters, Some(&mut trace))?;
    Ok((r, trace))
}

fn run(
    d_star: &FractionalTopology,
    phys: &PhysicalTopology,
    iters: usize,
    mut trace: Option<&mut LdmTrace>,
) -> Result<RoundingResult> {
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
    let mut p_plus = vec![0i64; n * n];
    let mut p_minus = vec![0i64; n * n];
    let mut used = 0;
    'sweeps: for tau in 1..=iters {
        used = tau;
        let delta = (DUAL_SCALE + tau as i64 / 2) / tau as i64;
        for k in 0..y {
            let (lo, hi) = state.trust_region(phys, k);
            let cur = state.plane(k);
            let mut below = vec![0i64; n * n];
            let mut above = vec![0i64; n * n];
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let p = i * n + j;
                    let h = phys.plane_pair_cap(k, i, j) as i64;
                    let base = 2 * (cur[p] - h) * DUAL_SCALE + p_plus[p] - p_minus[p];
                    below[p] = base - DUAL_SCALE;
                    above[p] = base + DUAL_SCALE;
                }
            }
            let knee: Vec<i64> = cur.iter().zip(&hi).map(|(&x, &h)| x.min(h)).collect();
            let x = solve_plane_kneed(phys, k, below, above, knee, lo, hi)?;
            state.set_plane(k, &x);
            let g = best.observe(&state, &soft);
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let p = i * n + j;
                    let s = state.agg[p];
                    p_plus[p] = (p_plus[p] - delta * (soft.ceil(i, j) - s)).max(0);
                    p_minus[p] = (p_minus[p] - delta * (s - soft.floor(i, j))).max(0);
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.goodness.push(g);
                t.best.push(best.goodness);
                let duals = p_plus.iter().chain(&p_minus);
                t.min_dual.push(duals.clone().copied().min().unwrap_or(0));
                t.max_dual.push(duals.copied().max().unwrap_or(0));
                t.planes.push((tau, k, x));
            }
            if best.goodness == all {
                break 'sweeps;
            }
        }
    }
    let topo = best.into_topology(n, y)?;
    Ok(RoundingResult::from_topology(topo, &soft, used, RoundingMethod::Ldm))
}
