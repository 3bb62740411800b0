//! Box-constrained min-cost circulation over the bipartite assignment graph.
//!
//! Every per-plane rounding step ends up here. Costs are integers; the small
//! negative cost on the feedback arc is handled as a lexicographic secondary
//! objective (prefer more flow among cost-optimal circulations), so results are
//! bit-exact and independent of the nominal epsilon.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;

use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Bipartite transportation problem with per-cell bounds and side capacities.
///
/// Row-major `rows x cols` cells. `row_min`/`col_min` default to zero and lower
/// bound the source/sink arcs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentProblem {
    rows: usize,
    cols: usize,
    cost: Vec<i64>,
    lower: Vec<i64>,
    upper: Vec<i64>,
    row_cap: Vec<i64>,
    col_cap: Vec<i64>,
    row_min: Vec<i64>,
    col_min: Vec<i64>,
    /// Convex two-segment cells: units above `knee` cost `cost_above`.
    knee: Option<(Vec<i64>, Vec<i64>)>,
}

impl AssignmentProblem {
    pub fn new(
        rows: usize,
        cols: usize,
        cost: Vec<i64>,
        lower: Vec<i64>,
        upper: Vec<i64>,
        row_cap: Vec<i64>,
        col_cap: Vec<i64>,
    ) -> Result<Self> {
        let cells = rows * cols;
        if cost.len() != cells || lower.len() != cells || upper.len() != cells {
            return Err(Error::Dimension(format!("expected {cells} cells")));
        }
        if row_cap.len() != rows || col_cap.len() != cols {
            return Err(Error::Dimension("side capacity length".into()));
        }
        if lower.iter().zip(&upper).any(|(&l, &u)| l < 0 || l > u) {
            return Err(Error::InvalidArgument("cell bounds must satisfy 0 <= L <= U".into()));
        }
        if row_cap.iter().chain(&col_cap).any(|&c| c < 0) {
            return Err(Error::InvalidArgument("side capacities must be nonnegative".into()));
        }
        Ok(Self {
            rows,
            cols,
            cost,
            lower,
            upper,
            row_cap,
            col_cap,
            row_min: vec![0; rows],
            col_min: vec![0; cols],
            knee: None,
        })
    }

    /// Make each cell's cost convex piecewise linear: units up to `knee[c]`
    /// cost `cost[c]`, units beyond it cost `cost_above[c]` (which must not be lower).
    pub fn with_knee(mut self, knee: Vec<i64>, cost_above: Vec<i64>) -> Result<Self> {
        let cells = self.rows * self.cols;
        if knee.len() != cells || cost_above.len() != cells {
            return Err(Error::Dimension(format!("expected {cells} knees")));
        }
        for c in 0..cells {
            if knee[c] < self.lower[c] || knee[c] > self.upper[c] || cost_above[c] < self.cost[c] {
                return Err(Error::InvalidArgument(format!("cell {c}: knee outside bounds or concave cost")));
            }
        }
        self.knee = Some((knee, cost_above));
        Ok(self)
    }

    /// Require at least `row_min[i]` units out of row i and `col_min[j]` into column j.
    pub fn with_side_minimums(mut self, row_min: Vec<i64>, col_min: Vec<i64>) -> Result<Self> {
        if row_min.len() != self.rows || col_min.len() != self.cols {
            return Err(Error::Dimension("side minimum length".into()));
        }
        let bad_row = row_min.iter().zip(&self.row_cap).any(|(&m, &c)| m < 0 || m > c);
        let bad_col = col_min.iter().zip(&self.col_cap).any(|(&m, &c)| m < 0 || m > c);
        if bad_row || bad_col {
            return Err(Error::InvalidArgument("side minimum outside [0, capacity]".into()));
        }
        self.row_min = row_min;
        self.col_min = col_min;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cost(&self, i: usize, j: usize) -> i64 {
        self.cost[i * self.cols + j]
    }

    pub fn lower(&self, i: usize, j: usize) -> i64 {
        self.lower[i * self.cols + j]
    }

    pub fn upper(&self, i: usize, j: usize) -> i64 {
        self.upper[i * self.cols + j]
    }

    pub fn row_cap(&self) -> &[i64] {
        &self.row_cap
    }

    pub fn col_cap(&self) -> &[i64] {
        &self.col_cap
    }

    pub fn row_min(&self) -> &[i64] {
        &self.row_min
    }

    pub fn col_min(&self) -> &[i64] {
        &self.col_min
    }

    /// Cost of putting `v` units in cell (i, j).
    pub fn cell_cost(&self, i: usize, j: usize, v: i64) -> i64 {
        let c = i * self.cols + j;
        match &self.knee {
            Some((knee, above)) if v > knee[c] => self.cost[c] * knee[c] + above[c] * (v - knee[c]),
            _ => self.cost[c] * v,
        }
    }

    /// Total cost of an assignment.
    pub fn objective(&self, a: &[i64]) -> i64 {
        (0..self.rows).flat_map(|i| (0..self.cols).map(move |j| (i, j))).map(|(i, j)| self.cell_cost(i, j, a[i * self.cols + j])).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub lower: i64,
    /// `None` means unbounded.
    pub upper: Option<i64>,
    pub cost: i64,
}

/// Graph with a designated feedback arc whose cost is `-epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct CirculationGraph {
    pub nodes: usize,
    pub arcs: Vec<Arc>,
    pub source: usize,
    pub sink: usize,
    pub feedback: usize,
    pub epsilon: f64,
    rows: usize,
    cols: usize,
    /// Second-segment arcs of kneed cells as `(cell, arc)`.
    above: Vec<(usize, usize)>,
}

impl CirculationGraph {
    pub fn left(&self, i: usize) -> usize {
        2 + i
    }

    pub fn right(&self, j: usize) -> usize {
        2 + self.rows + j
    }

    /// Index of the bipartite arc for cell (i, j).
    pub fn cell_arc(&self, i: usize, j: usize) -> usize {
        self.rows + i * self.cols + j
    }

    pub fn to_dimacs(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "c bipartite circulation {}x{}", self.rows, self.cols);
        let _ = writeln!(s, "c feedback arc {} cost -{:e}", self.feedback + 1, self.epsilon);
        let _ = writeln!(s, "p min {} {}", self.nodes, self.arcs.len());
        for a in &self.arcs {
            let up = a.upper.map_or_else(|| "inf".to_string(), |u| u.to_string());
            let _ = writeln!(s, "a {} {} {} {} {}", a.from + 1, a.to + 1, a.lower, up, a.cost);
        }
        s
    }
}

pub fn build_circulation(prob: &AssignmentProblem, epsilon: f64) -> Result<CirculationGraph> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let (r, c) = (prob.rows, prob.cols);
    for i in 0..r {
        for j in 0..c {
            let l = prob.lower(i, j);
            if l > prob.row_cap[i].min(prob.col_cap[j]) {
                return Err(Error::Infeasible(format!(
                    "cell ({i}, {j}) lower bound {l} exceeds side capacity {}",
                    prob.row_cap[i].min(prob.col_cap[j])
                )));
            }
        }
    }
    let mut arcs = Vec::with_capacity(r + r * c + c + 1);
    for i in 0..r {
        arcs.push(Arc { from: 0, to: 2 + i, lower: prob.row_min[i], upper: Some(prob.row_cap[i]), cost: 0 });
    }
    let knee = |i: usize, j: usize| prob.knee.as_ref().map_or(prob.upper(i, j), |(k, _)| k[i * c + j]);
    for i in 0..r {
        for j in 0..c {
            arcs.push(Arc {
                from: 2 + i,
                to: 2 + r + j,
                lower: prob.lower(i, j),
                upper: Some(knee(i, j)),
                cost: prob.cost(i, j),
            });
        }
    }
    for j in 0..c {
        arcs.push(Arc { from: 2 + r + j, to: 1, lower: prob.col_min[j], upper: Some(prob.col_cap[j]), cost: 0 });
    }
    let feedback = arcs.len();
    arcs.push(Arc { from: 1, to: 0, lower: 0, upper: None, cost: 0 });
    let mut above = Vec::new();
    if let Some((_, cost_above)) = &prob.knee {
        for i in 0..r {
            for j in 0..c {
                let extra = prob.upper(i, j) - knee(i, j);
                if extra > 0 {
                    above.push((i * c + j, arcs.len()));
                    arcs.push(Arc { from: 2 + i, to: 2 + r + j, lower: 0, upper: Some(extra), cost: cost_above[i * c + j] });
                }
            }
        }
    }
    Ok(CirculationGraph { nodes: 2 + r + c, arcs, source: 0, sink: 1, feedback, epsilon, rows: r, cols: c, above })
}

struct Residual {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
    cost: Vec<i128>,
}

impl Residual {
    fn new(nodes: usize) -> Self {
        Self { adj: vec![Vec::new(); nodes], to: Vec::new(), cap: Vec::new(), cost: Vec::new() }
    }

    fn add(&mut self, u: usize, v: usize, cap: i64, cost: i128) -> usize {
        let e = self.to.len();
        self.adj[u].push(e);
        self.to.push(v);
        self.cap.push(cap);
        self.cost.push(cost);
        self.adj[v].push(e + 1);
        self.to.push(u);
        self.cap.push(0);
        self.cost.push(-cost);
        e
    }
}

/// Integral min-cost circulation. Returns the flow on every arc of `g`.
pub fn solve_min_cost_circulation(g: &CirculationGraph) -> Result<Vec<i64>> {
    let finite: i64 = g.arcs.iter().filter_map(|a| a.upper).sum();
    let inf_cap = finite.saturating_add(1);
    let tie = g.epsilon > 0.0;
    let scale: i128 = if tie { inf_cap as i128 + 1 } else { 1 };

    let nodes = g.nodes + 2;
    let (ss, tt) = (g.nodes, g.nodes + 1);
    let mut net = Residual::new(nodes);
    let mut excess = vec![0i64; g.nodes];
    let mut edge_of = Vec::with_capacity(g.arcs.len());
    for (idx, a) in g.arcs.iter().enumerate() {
        let upper = a.upper.unwrap_or(inf_cap);
        if a.lower > upper {
            return Err(Error::Infeasible(format!("arc {idx} has lower > upper")));
        }
        let mut cost = a.cost as i128 * scale;
        if tie && idx == g.feedback {
            cost -= 1;
        }
        let e = net.add(a.from, a.to, upper - a.lower, cost);
        excess[a.to] += a.lower;
        excess[a.from] -= a.lower;
        if cost < 0 {
            let room = net.cap[e];
            net.cap[e] = 0;
            net.cap[e + 1] = room;
            excess[a.to] += room;
            excess[a.from] -= room;
        }
        edge_of.push(e);
    }
    let mut demand = 0i64;
    for (v, &x) in excess.iter().enumerate() {
        if x > 0 {
            net.add(ss, v, x, 0);
            demand += x;
        } else if x < 0 {
            net.add(v, tt, -x, 0);
        }
    }

    let pushed = primal_dual(&mut net, ss, tt, demand);
    if pushed < demand {
        return Err(Error::Infeasible(format!(
            "circulation bounds cannot be met: deficit {}",
            demand - pushed
        )));
    }
    Ok(g.arcs.iter().zip(&edge_of).map(|(a, &e)| a.lower + net.cap[e + 1]).collect())
}

fn primal_dual(net: &mut Residual, s: usize, t: usize, demand: i64) -> i64 {
    let n = net.adj.len();
    let mut pot = vec![0i128; n];
    let mut total = 0i64;
    const INF: i128 = i128::MAX / 4;
    while total < demand {
        let mut dist = vec![INF; n];
        dist[s] = 0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0i128, s)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &e in &net.adj[u] {
                if net.cap[e] == 0 {
                    continue;
                }
                let v = net.to[e];
                let nd = d + net.cost[e] + pot[u] - pot[v];
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Reverse((nd, v)));
                }
            }
        }
        if dist[t] >= INF {
            break;
        }
        let dt = dist[t];
        for v in 0..n {
            pot[v] += dist[v].min(dt);
        }
        // Blocking flows on the zero reduced-cost subgraph.
        loop {
            let mut level = vec![usize::MAX; n];
            level[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &e in &net.adj[u] {
                    let v = net.to[e];
                    if net.cap[e] > 0 && level[v] == usize::MAX && net.cost[e] + pot[u] - pot[v] == 0 {
                        level[v] = level[u] + 1;
                        q.push_back(v);
                    }
                }
            }
            if level[t] == usize::MAX {
                break;
            }
            let mut it = vec![0usize; n];
            loop {
                let f = augment(net, &pot, &level, &mut it, s, t, demand - total);
                if f == 0 {
                    break;
                }
                total += f;
                if total == demand {
                    return total;
                }
            }
        }
    }
    total
}

fn augment(
    net: &mut Residual,
    pot: &[i128],
    level: &[usize],
    it: &mut [usize],
    u: usize,
    t: usize,
    limit: i64,
) -> i64 {
    if u == t {
        return limit;
    }
    while it[u] < net.adj[u].len() {
        let e = net.adj[u][it[u]];
        let v = net.to[e];
        if net.cap[e] > 0 && level[v] == level[u] + 1 && net.cost[e] + pot[u] - pot[v] == 0 {
            let f = augment(net, pot, level, it, v, t, limit.min(net.cap[e]));
            if f > 0 {
                net.cap[e] -= f;
                net.cap[e ^ 1] += f;
                return f;
            }
        }
        it[u] += 1;
    }
    0
}

/// Solve with the default epsilon tie-break and read off the cell flows.
pub fn solve_assignment(prob: &AssignmentProblem) -> Result<Vec<i64>> {
    solve_assignment_with(prob, DEFAULT_EPSILON)
}

pub fn solve_assignment_with(prob: &AssignmentProblem, epsilon: f64) -> Result<Vec<i64>> {
    if prob.row_min.iter().chain(&prob.col_min).all(|&m| m == 0) {
        if let Some(a) = shortest_paths(prob, epsilon)? {
            return Ok(a);
        }
    }
    solve_via_circulation(prob, epsilon)
}

/// Reference path: build the full circulation and solve it.
pub fn solve_via_circulation(prob: &AssignmentProblem, epsilon: f64) -> Result<Vec<i64>> {
    let g = build_circulation(prob, epsilon)?;
    let flow = solve_min_cost_circulation(&g)?;
    let mut a = Vec::with_capacity(prob.rows * prob.cols);
    for i in 0..prob.rows {
        for j in 0..prob.cols {
            a.push(flow[g.cell_arc(i, j)]);
        }
    }
    for &(cell, arc) in &g.above {
        a[cell] += flow[arc];
    }
    Ok(a)
}

/// Successive shortest paths from the source side, valid when only cells carry
/// lower bounds. Pushes while the marginal path cost is negative, or zero when
/// the tie-break is active, which yields the same lexicographic optimum as the
/// circulation. Returns `None` if costs are too large for `i64` path sums.
fn shortest_paths(prob: &AssignmentProblem, epsilon: f64) -> Result<Option<Vec<i64>>> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let (r, c) = (prob.rows, prob.cols);
    let nodes = r + c + 2;
    let max_cost = prob
        .cost
        .iter()
        .chain(prob.knee.iter().flat_map(|(_, a)| a.iter()))
        .map(|x| x.unsigned_abs())
        .max()
        .unwrap_or(0);
    if max_cost.checked_mul(4 * nodes as u64 + 4).is_none_or(|b| b > i64::MAX as u64 / 4) {
        return Ok(None);
    }
    let mut row_left = prob.row_cap.clone();
    let mut col_left = prob.col_cap.clone();
    for (i, left) in row_left.iter_mut().enumerate() {
        for (j, col) in col_left.iter_mut().enumerate() {
            let l = prob.lower(i, j);
            *left -= l;
            *col -= l;
        }
    }
    for i in 0..r {
        for j in 0..c {
            let l = prob.lower(i, j);
            if l > prob.row_cap[i].min(prob.col_cap[j]) {
                return Err(Error::Infeasible(format!("cell ({i}, {j}) lower bound {l} exceeds side capacity")));
            }
        }
    }
    if let Some(i) = row_left.iter().position(|&x| x < 0) {
        return Err(Error::Infeasible(format!("row {i} lower bounds exceed its capacity")));
    }
    if let Some(j) = col_left.iter().position(|&x| x < 0) {
        return Err(Error::Infeasible(format!("column {j} lower bounds exceed its capacity")));
    }

    let (s, t) = (0, nodes - 1);
    let mut net = Graph::new(nodes);
    for (i, &cap) in row_left.iter().enumerate() {
        net.add(s, 1 + i, cap, 0);
    }
    let mut segments = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            let cell = i * c + j;
            let (lo, up) = (prob.lower[cell], prob.upper[cell]);
            let knee = prob.knee.as_ref().map_or(up, |(k, _)| k[cell]);
            if knee > lo {
                segments.push((cell, net.add(1 + i, 1 + r + j, knee - lo, prob.cost[cell])));
            }
            if let Some((_, above)) = &prob.knee {
                if up > knee {
                    segments.push((cell, net.add(1 + i, 1 + r + j, up - knee, above[cell])));
                }
            }
        }
    }
    for (j, &cap) in col_left.iter().enumerate() {
        net.add(1 + r + j, t, cap, 0);
    }

    // The graph is acyclic before any flow, so one topological pass gives
    // feasible potentials.
    const INF: i64 = i64::MAX / 4;
    let mut pot = vec![INF; nodes];
    pot[s] = 0;
    for u in 0..nodes {
        if pot[u] == INF {
            continue;
        }
        for &e in &net.adj[u] {
            if e % 2 == 0 && net.cap[e] > 0 {
                let v = net.to[e];
                pot[v] = pot[v].min(pot[u] + net.cost[e]);
            }
        }
    }
    let tie = epsilon > 0.0;
    let mut dist = vec![INF; nodes];
    let mut done = vec![false; nodes];
    let mut level = vec![usize::MAX; nodes];
    let mut it = vec![0usize; nodes];
    let mut queue = VecDeque::with_capacity(nodes);
    loop {
        dist.fill(INF);
        done.fill(false);
        dist[s] = 0;
        loop {
            let mut u = usize::MAX;
            for v in 0..nodes {
                if !done[v] && dist[v] < INF && (u == usize::MAX || dist[v] < dist[u]) {
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            for &e in &net.adj[u] {
                if net.cap[e] > 0 {
                    let v = net.to[e];
                    let nd = dist[u] + net.cost[e] + pot[u] - pot[v];
                    if nd < dist[v] {
                        dist[v] = nd;
                    }
                }
            }
        }
        if dist[t] >= INF {
            break;
        }
        let path_cost = dist[t] + pot[t] - pot[s];
        if path_cost > 0 || (path_cost == 0 && !tie) {
            break;
        }
        for v in 0..nodes {
            if dist[v] < INF {
                pot[v] += dist[v];
            }
        }
        // Blocking flows on the tight subgraph.
        loop {
            level.fill(usize::MAX);
            level[s] = 0;
            queue.clear();
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &e in &net.adj[u] {
                    let v = net.to[e];
                    if net.cap[e] > 0 && level[v] == usize::MAX && dist[v] < INF && net.cost[e] + pot[u] - pot[v] == 0 {
                        level[v] = level[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if level[t] == usize::MAX {
                break;
            }
            it.fill(0);
            while net.push(&pot, &level, &mut it, s, t, i64::MAX) > 0 {}
        }
    }
    let mut a = prob.lower.clone();
    for (cell, e) in segments {
        a[cell] += net.cap[e + 1];
    }
    Ok(Some(a))
}

struct Graph {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<i64>,
    cost: Vec<i64>,
}

impl Graph {
    fn new(nodes: usize) -> Self {
        Self { adj: vec![Vec::new(); nodes], to: Vec::new(), cap: Vec::new(), cost: Vec::new() }
    }

    fn add(&mut self, u: usize, v: usize, cap: i64, cost: i64) -> usize {
        let e = self.to.len();
        self.adj[u].push(e);
        self.to.extend([v, u]);
        self.cap.extend([cap, 0]);
        self.cost.extend([cost, -cost]);
        self.adj[v].push(e + 1);
        e
    }

    fn push(&mut self, pot: &[i64], level: &[usize], it: &mut [usize], u: usize, t: usize, limit: i64) -> i64 {
        if u == t {
            return limit;
        }
        while it[u] < self.adj[u].len() {
            let e = self.adj[u][it[u]];
            let v = self.to[e];
            if self.cap[e] > 0 && level[v] == level[u] + 1 && self.cost[e] + pot[u] - pot[v] == 0 {
                let f = self.push(pot, level, it, v, t, limit.min(self.cap[e]));
                if f > 0 {
                    self.cap[e] -= f;
                    self.cap[e ^ 1] += f;
                    return f;
                }
            }
            it[u] += 1;
        }
        0
    }
}
