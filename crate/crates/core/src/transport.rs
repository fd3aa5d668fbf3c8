//! Discrete optimal transport baselines.
//!
//! - [`kantorovich_lp`]: exact transportation LP via a primal network simplex on
//!   the bipartite supply/demand graph, certified by the recovered dual potentials.
//! - [`sinkhorn`]: log-domain entropic scaling.
//! - [`wasserstein_1d`]: exact `W_p` on the line from the monotone (quantile) coupling.
//! - [`wasserstein_nd`]: `W_p` between joint histograms with a Euclidean ground
//!   metric on bin centers.
//!
//! Zero-mass atoms are pruned before solving and come back as zero rows and
//! columns of the returned coupling.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{AuditError, Result};
use crate::histogram::{BinIndex, ProbabilityHistogram};

const MARGINAL_TOL: f64 = 1e-9;

/// Non-negative ground costs `c_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    metric: String,
}

impl CostMatrix {
    pub fn new(entries: Array2<f64>, metric: impl Into<String>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(AuditError::param(format!(
                "cost entry {bad} is not a finite non-negative real"
            )));
        }
        Ok(CostMatrix {
            entries,
            metric: metric.into(),
        })
    }

    /// `c_ij = |x_i - y_j|_2^p` between two point sets.
    pub fn from_points(xs: &[Vec<f64>], ys: &[Vec<f64>], p: f64) -> Result<Self> {
        check_p(p)?;
        let entries = Array2::from_shape_fn((xs.len(), ys.len()), |(i, j)| {
            euclidean(&xs[i], &ys[j]).powf(p)
        });
        Self::new(entries, format!("euclidean^{p}"))
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    /// Ground metric descriptor, e.g. `euclidean^2`.
    pub fn metric(&self) -> &str {
        &self.metric
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }
}

fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(AuditError::param(format!(
            "p must be a finite real >= 1, got {p}"
        )));
    }
    Ok(())
}

/// Dual potentials `(u, v)` with `u_i + v_j <= c_ij`, tight on the support of the plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualPotentials {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub coupling: Array2<f64>,
    /// `sum_ij c_ij P_ij`.
    pub cost: f64,
    /// Largest deviation of a row or column sum from its marginal.
    pub marginal_residual: f64,
    pub duals: Option<DualPotentials>,
    pub iterations: usize,
}

fn marginal_residual(p: &Array2<f64>, a: &[f64], b: &[f64]) -> f64 {
    let rows = p
        .rows()
        .into_iter()
        .zip(a)
        .map(|(r, &ai)| (r.sum() - ai).abs());
    let cols = p
        .columns()
        .into_iter()
        .zip(b)
        .map(|(c, &bj)| (c.sum() - bj).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

fn plan_cost(p: &Array2<f64>, c: &Array2<f64>) -> f64 {
    p.iter().zip(c.iter()).map(|(x, y)| x * y).sum()
}

fn check_marginal(name: &str, w: &[f64]) -> Result<f64> {
    if w.is_empty() {
        return Err(AuditError::param(format!("marginal {name} is empty")));
    }
    if let Some(x) = w.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(AuditError::param(format!("marginal {name} has entry {x}")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > MARGINAL_TOL {
        return Err(AuditError::param(format!(
            "marginal {name} sums to {sum}, expected 1"
        )));
    }
    Ok(sum)
}

/// Pruned problem: only strictly positive atoms, costs restricted accordingly.
struct Reduced {
    rows: Vec<usize>,
    cols: Vec<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
    cost: Array2<f64>,
}

fn reduce(a: &[f64], b: &[f64], c: &CostMatrix) -> Result<Reduced> {
    if c.shape() != (a.len(), b.len()) {
        return Err(AuditError::param(format!(
            "cost matrix is {:?}, marginals have lengths ({}, {})",
            c.shape(),
            a.len(),
            b.len()
        )));
    }
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let ce = c.entries();
    let cost = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| ce[[rows[i], cols[j]]]);
    Ok(Reduced {
        a: rows.iter().map(|&i| a[i]).collect(),
        b: cols.iter().map(|&j| b[j]).collect(),
        rows,
        cols,
        cost,
    })
}

fn expand(red: &Reduced, small: &Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let mut full = Array2::zeros(shape);
    for (ri, &i) in red.rows.iter().enumerate() {
        for (cj, &j) in red.cols.iter().enumerate() {
            full[[i, j]] = small[[ri, cj]];
        }
    }
    full
}

/// Exact solution of `min <c, P>` subject to `P 1 = a`, `P^T 1 = b`, `P >= 0`.
pub fn kantorovich_lp(a: &[f64], b: &[f64], c: &CostMatrix) -> Result<TransportPlan> {
    check_marginal("a", a)?;
    let sum_b = check_marginal("b", b)?;
    let red = reduce(a, b, c)?;
    // equalize totals so the transportation problem is balanced
    let sum_a: f64 = red.a.iter().sum();
    let b_bal: Vec<f64> = red.b.iter().map(|x| x * sum_a / sum_b).collect();

    let solved = NetworkSimplex::new(&red.a, &b_bal, &red.cost).solve()?;

    let coupling = expand(&red, &solved.flow, c.shape());
    let ce = c.entries();
    let (n, m) = c.shape();
    let mut row = vec![0.0; n];
    let mut col = vec![0.0; m];
    for (ri, &i) in red.rows.iter().enumerate() {
        row[i] = solved.u[ri];
    }
    for (cj, &j) in red.cols.iter().enumerate() {
        col[j] = solved.v[cj];
    }
    // pruned atoms carry no mass; pick potentials that keep every reduced cost >= 0
    for i in (0..n).filter(|&i| a[i] <= 0.0) {
        row[i] = (0..m)
            .map(|j| ce[[i, j]] - col[j])
            .fold(f64::INFINITY, f64::min);
    }
    for j in (0..m).filter(|&j| b[j] <= 0.0) {
        col[j] = (0..n)
            .map(|i| ce[[i, j]] - row[i])
            .fold(f64::INFINITY, f64::min);
    }
    let duals = DualPotentials { row, col };
    certify(&coupling, ce, &duals)?;

    Ok(TransportPlan {
        cost: plan_cost(&coupling, ce),
        marginal_residual: marginal_residual(&coupling, a, b),
        coupling,
        duals: Some(duals),
        iterations: solved.pivots,
    })
}

/// Complementary slackness: dual feasibility everywhere, tightness on the support.
fn certify(p: &Array2<f64>, c: &Array2<f64>, d: &DualPotentials) -> Result<()> {
    let scale = c.iter().copied().fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    for ((i, j), &cij) in c.indexed_iter() {
        let reduced = cij - d.row[i] - d.col[j];
        if reduced < -tol || (p[[i, j]] > 0.0 && reduced.abs() > tol) {
            return Err(AuditError::Convergence {
                iterations: 0,
                residual: reduced.abs(),
            });
        }
    }
    Ok(())
}

struct Solved {
    flow: Array2<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    pivots: usize,
}

/// Primal network simplex specialized to the bipartite transportation graph.
///
/// Nodes `0..n` are sources and `n..n+m` sinks. The basis is a spanning tree
/// of exactly `n + m - 1` cells, some possibly carrying zero flow.
struct NetworkSimplex<'a> {
    n: usize,
    m: usize,
    cost: &'a Array2<f64>,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    adj: Vec<Vec<usize>>,
    // spanning-tree bookkeeping, rebuilt after each pivot
    parent_cell: Vec<usize>,
    depth: Vec<usize>,
    potential: Vec<f64>,
}

const NO_CELL: usize = usize::MAX;

impl<'a> NetworkSimplex<'a> {
    /// Northwest-corner start: a staircase of `n + m - 1` cells, which is a spanning tree.
    fn new(a: &[f64], b: &[f64], cost: &'a Array2<f64>) -> Self {
        let (n, m) = (a.len(), b.len());
        let mut ra = a.to_vec();
        let mut rb = b.to_vec();
        let mut cells = Vec::with_capacity(n + m - 1);
        let mut flow = Vec::with_capacity(n + m - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let x = if i == n - 1 {
                rb[j]
            } else if j == m - 1 {
                ra[i]
            } else {
                ra[i].min(rb[j])
            };
            let x = x.max(0.0);
            cells.push((i, j));
            flow.push(x);
            ra[i] -= x;
            rb[j] -= x;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if j == m - 1 || (i < n - 1 && ra[i] <= rb[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        let mut adj = vec![Vec::new(); n + m];
        for (k, &(i, j)) in cells.iter().enumerate() {
            adj[i].push(k);
            adj[n + j].push(k);
        }
        NetworkSimplex {
            n,
            m,
            cost,
            cells,
            flow,
            adj,
            parent_cell: vec![NO_CELL; n + m],
            depth: vec![0; n + m],
            potential: vec![0.0; n + m],
        }
    }

    fn other_end(&self, cell: usize, node: usize) -> usize {
        let (i, j) = self.cells[cell];
        if node == i {
            self.n + j
        } else {
            i
        }
    }

    /// Potentials with `pi(row i) + pi(col j) = c_ij` on every tree cell, rooted at row 0.
    fn rebuild_tree(&mut self) {
        let mut stack = vec![0usize];
        self.parent_cell[0] = NO_CELL;
        self.depth[0] = 0;
        self.potential[0] = 0.0;
        let mut seen = vec![false; self.n + self.m];
        seen[0] = true;
        while let Some(node) = stack.pop() {
            for idx in 0..self.adj[node].len() {
                let cell = self.adj[node][idx];
                let next = self.other_end(cell, node);
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (i, j) = self.cells[cell];
                self.parent_cell[next] = cell;
                self.depth[next] = self.depth[node] + 1;
                self.potential[next] = self.cost[[i, j]] - self.potential[node];
                stack.push(next);
            }
        }
    }

    fn reduced_cost(&self, i: usize, j: usize) -> f64 {
        self.cost[[i, j]] - self.potential[i] - self.potential[self.n + j]
    }

    /// Block pricing: best candidate in the first block holding an improving cell.
    fn price_block(&self, start: &mut usize, block: usize, tol: f64) -> Option<(usize, usize)> {
        let total = self.n * self.m;
        let mut best: Option<(usize, usize)> = None;
        let mut best_rc = -tol;
        let mut scanned = 0;
        while scanned < total {
            let end = (scanned + block).min(total);
            for _ in scanned..end {
                let (i, j) = (*start / self.m, *start % self.m);
                let rc = self.reduced_cost(i, j);
                if rc < best_rc {
                    best_rc = rc;
                    best = Some((i, j));
                }
                *start = (*start + 1) % total;
            }
            scanned = end;
            if best.is_some() {
                return best;
            }
        }
        None
    }

    /// Bland's rule: lowest-index improving cell. Used to break degenerate stalls.
    fn price_first(&self, tol: f64) -> Option<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| (0..self.m).map(move |j| (i, j)))
            .find(|&(i, j)| self.reduced_cost(i, j) < -tol)
    }

    /// Cells on the tree path from sink `n + j` to source `i`, in walking order.
    fn cycle_path(&self, i: usize, j: usize) -> Vec<usize> {
        let mut from_sink = Vec::new();
        let mut from_source = Vec::new();
        let mut x = self.n + j;
        let mut y = i;
        while self.depth[x] > self.depth[y] {
            let c = self.parent_cell[x];
            from_sink.push(c);
            x = self.other_end(c, x);
        }
        while self.depth[y] > self.depth[x] {
            let c = self.parent_cell[y];
            from_source.push(c);
            y = self.other_end(c, y);
        }
        while x != y {
            let cx = self.parent_cell[x];
            from_sink.push(cx);
            x = self.other_end(cx, x);
            let cy = self.parent_cell[y];
            from_source.push(cy);
            y = self.other_end(cy, y);
        }
        from_source.reverse();
        from_sink.extend(from_source);
        from_sink
    }

    fn solve(mut self) -> Result<Solved> {
        let total = self.n * self.m;
        let scale = self
            .cost
            .iter()
            .copied()
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let tol = 1e-12 * scale;
        let block = ((total as f64).sqrt().ceil() as usize).max(1);
        let max_pivots = 50 * total + 1000;
        let mut start = 0;
        let mut degenerate_run = 0usize;
        let mut pivots = 0;

        self.rebuild_tree();
        loop {
            let entering = if degenerate_run > self.n + self.m {
                self.price_first(tol)
            } else {
                self.price_block(&mut start, block, tol)
            };
            let Some((ei, ej)) = entering else { break };
            if pivots >= max_pivots {
                return Err(AuditError::Convergence {
                    iterations: pivots,
                    residual: self.reduced_cost(ei, ej).abs(),
                });
            }
            pivots += 1;

            let path = self.cycle_path(ei, ej);
            // even positions lose flow, odd positions gain it
            let mut leave_pos = 0;
            let mut theta = f64::INFINITY;
            for (pos, &c) in path.iter().enumerate().step_by(2) {
                if self.flow[c] < theta {
                    theta = self.flow[c];
                    leave_pos = pos;
                }
            }
            for (pos, &c) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    self.flow[c] -= theta;
                } else {
                    self.flow[c] += theta;
                }
            }
            degenerate_run = if theta > 0.0 { 0 } else { degenerate_run + 1 };

            let leaving = path[leave_pos];
            let (li, lj) = self.cells[leaving];
            self.adj[li].retain(|&c| c != leaving);
            self.adj[self.n + lj].retain(|&c| c != leaving);
            self.cells[leaving] = (ei, ej);
            self.flow[leaving] = theta;
            self.adj[ei].push(leaving);
            self.adj[self.n + ej].push(leaving);
            self.rebuild_tree();
        }

        let mut flow = Array2::zeros((self.n, self.m));
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            flow[[i, j]] += self.flow[k];
        }
        Ok(Solved {
            flow,
            u: self.potential[..self.n].to_vec(),
            v: self.potential[self.n..].to_vec(),
            pivots,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinkhornOptions {
    pub reg: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions {
            reg: 0.1,
            max_iter: 100_000,
            tol: 1e-9,
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Entropic transport by alternating log-domain scaling of the dual potentials.
///
/// Stops once the row-marginal residual (column marginals are exact after each
/// column update) drops to `tol`.
pub fn sinkhorn(
    a: &[f64],
    b: &[f64],
    c: &CostMatrix,
    opts: &SinkhornOptions,
) -> Result<TransportPlan> {
    if !(opts.reg > 0.0 && opts.reg.is_finite()) {
        return Err(AuditError::param(format!(
            "regularization must be > 0, got {}",
            opts.reg
        )));
    }
    check_marginal("a", a)?;
    check_marginal("b", b)?;
    let red = reduce(a, b, c)?;
    let (n, m) = red.cost.dim();
    let reg = opts.reg;
    let log_a: Vec<f64> = red.a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = red.b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let cost = &red.cost;

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        for i in 0..n {
            let lse = log_sum_exp((0..m).map(|j| (g[j] - cost[[i, j]]) / reg));
            f[i] = reg * (log_a[i] - lse);
        }
        for j in 0..m {
            let lse = log_sum_exp((0..n).map(|i| (f[i] - cost[[i, j]]) / reg));
            g[j] = reg * (log_b[j] - lse);
        }
        residual = (0..n)
            .map(|i| {
                let row: f64 = (0..m)
                    .map(|j| ((f[i] + g[j] - cost[[i, j]]) / reg).exp())
                    .sum();
                (row - red.a[i]).abs()
            })
            .fold(0.0, f64::max);
        if residual <= opts.tol {
            break;
        }
    }
    if residual > opts.tol {
        return Err(AuditError::Convergence {
            iterations,
            residual,
        });
    }

    let small = Array2::from_shape_fn((n, m), |(i, j)| ((f[i] + g[j] - cost[[i, j]]) / reg).exp());
    let coupling = expand(&red, &small, c.shape());
    Ok(TransportPlan {
        cost: plan_cost(&coupling, c.entries()),
        marginal_residual: marginal_residual(&coupling, a, b),
        coupling,
        duals: None,
        iterations,
    })
}

/// Exact `W_p` between two atomic measures on the line.
///
/// Walks the merged quantile segments of both CDFs, accumulating
/// `|F_a^{-1}(t) - F_b^{-1}(t)|^p` over each segment.
pub fn wasserstein_1d_atoms(xa: &[f64], wa: &[f64], xb: &[f64], wb: &[f64], p: f64) -> Result<f64> {
    check_p(p)?;
    if xa.len() != wa.len() || xb.len() != wb.len() {
        return Err(AuditError::param(
            "atom positions and weights differ in length",
        ));
    }
    check_marginal("a", wa)?;
    check_marginal("b", wb)?;
    let sorted = |x: &[f64], w: &[f64]| {
        let mut v: Vec<(f64, f64)> = x
            .iter()
            .copied()
            .zip(w.iter().copied())
            .filter(|&(_, m)| m > 0.0)
            .collect();
        v.sort_by(|l, r| l.0.total_cmp(&r.0));
        v
    };
    let a = sorted(xa, wa);
    let b = sorted(xb, wb);

    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut acc = 0.0;
    loop {
        let step = ra.min(rb);
        acc += step * (a[i].0 - b[j].0).abs().powf(p);
        ra -= step;
        rb -= step;
        // advance the exhausted side; at a tie advance both
        let a_done = ra <= 0.0;
        let b_done = rb <= 0.0;
        if a_done {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if b_done {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    // mass left on the unfinished side (at most the marginal tolerance) ships to the last atom of the other
    while i < a.len() && j >= b.len() {
        acc += ra * (a[i].0 - b[b.len() - 1].0).abs().powf(p);
        i += 1;
        if i < a.len() {
            ra = a[i].1;
        }
    }
    while j < b.len() && i >= a.len() {
        acc += rb * (a[a.len() - 1].0 - b[j].0).abs().powf(p);
        j += 1;
        if j < b.len() {
            rb = b[j].1;
        }
    }
    Ok(acc.max(0.0).powf(1.0 / p))
}

fn one_feature_atoms(h: &ProbabilityHistogram) -> Result<(Vec<f64>, Vec<f64>)> {
    if h.scheme().n_features() != 1 {
        return Err(AuditError::param(format!(
            "1D Wasserstein needs a single-feature histogram, got {} features",
            h.scheme().n_features()
        )));
    }
    let f = &h.scheme().features()[0];
    Ok(h.masses()
        .iter()
        .map(|(&i, &m)| (f.center(i as usize), m))
        .unzip())
}

/// `W_p` between two single-feature histograms, atoms at bin centers.
pub fn wasserstein_1d(a: &ProbabilityHistogram, b: &ProbabilityHistogram, p: f64) -> Result<f64> {
    let (xa, wa) = one_feature_atoms(a)?;
    let (xb, wb) = one_feature_atoms(b)?;
    wasserstein_1d_atoms(&xa, &wa, &xb, &wb, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TransportMethod {
    Exact,
    Entropic(SinkhornOptions),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WassersteinOptions {
    pub method: TransportMethod,
    /// Largest `rows * cols` support product handed to the exact solver.
    pub max_exact_cells: usize,
}

impl Default for WassersteinOptions {
    fn default() -> Self {
        WassersteinOptions {
            method: TransportMethod::Exact,
            max_exact_cells: 1_000_000,
        }
    }
}

/// Result of [`wasserstein_nd`] with its solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WassersteinDistance {
    pub distance: f64,
    pub marginal_residual: f64,
    pub support: (usize, usize),
}

/// Support points and masses of a histogram, in bin order.
pub fn atoms(h: &ProbabilityHistogram) -> (Vec<BinIndex>, Vec<Vec<f64>>, Vec<f64>) {
    let scheme = h.scheme();
    let mut bins = Vec::with_capacity(h.masses().len());
    let mut points = Vec::with_capacity(h.masses().len());
    let mut weights = Vec::with_capacity(h.masses().len());
    for (&i, &m) in h.masses() {
        bins.push(i);
        points.push(scheme.center(i));
        weights.push(m);
    }
    (bins, points, weights)
}

/// `W_p` with ground cost `|x - y|_2^p` between bin-center coordinate vectors,
/// restricted to the non-empty bins of each measure.
pub fn wasserstein_nd(
    a: &ProbabilityHistogram,
    b: &ProbabilityHistogram,
    p: f64,
    opts: &WassersteinOptions,
) -> Result<WassersteinDistance> {
    check_p(p)?;
    a.scheme().ensure_compatible(b.scheme())?;
    let (_, xa, wa) = atoms(a);
    let (_, xb, wb) = atoms(b);
    let cells = xa.len().saturating_mul(xb.len());
    let cost = CostMatrix::from_points(&xa, &xb, p)?;
    let plan = match opts.method {
        TransportMethod::Exact => {
            if cells > opts.max_exact_cells {
                return Err(AuditError::Size(format!(
                    "{} x {} support exceeds {} cells; use the entropic method",
                    xa.len(),
                    xb.len(),
                    opts.max_exact_cells
                )));
            }
            kantorovich_lp(&wa, &wb, &cost)?
        }
        TransportMethod::Entropic(s) => sinkhorn(&wa, &wb, &cost, &s)?,
    };
    Ok(WassersteinDistance {
        distance: plan.cost.max(0.0).powf(1.0 / p),
        marginal_residual: plan.marginal_residual,
        support: (xa.len(), xb.len()),
    })
}
