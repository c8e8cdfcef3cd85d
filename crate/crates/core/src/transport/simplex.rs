//! Primal transportation simplex (MODI / u-v method) with Bland's rule.
//!
//! Solves `min Σ c_ij x_ij` over the transportation polytope
//! `{x >= 0 : Σ_j x_ij = a_i, Σ_i x_ij = b_j}` and returns an exact vertex
//! plan together with the dual potentials. Bland's rule (lowest-index
//! entering cell, lowest-index leaving cell among ratio ties) keeps the
//! pivoting deterministic and cycle-free on the degenerate capacity problems
//! this crate produces.

use crate::error::{Error, Result};
use crate::sum::fsum;
use crate::table::Table;

/// Result of a min-cost transportation solve.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    /// Optimal basic plan, exact zeros off the basis.
    pub plan: Table,
    /// Minimum cost `Σ c·x`.
    pub value: f64,
    /// Row duals of the min problem (`u_i + v_j = c_ij` on the basis).
    pub u: Vec<f64>,
    /// Column duals.
    pub v: Vec<f64>,
    /// Pivot count.
    pub iterations: usize,
    /// False when the pivot cap was hit before optimality was proven.
    pub optimal: bool,
}

/// Marginal sums may differ by at most this before the problem is rejected.
pub const BALANCE_TOL: f64 = 1e-9;

fn validate(cost: &Table, a: &[f64], b: &[f64]) -> Result<()> {
    if cost.rows() != a.len() || cost.cols() != b.len() {
        return Err(Error::Dimension(format!(
            "cost is {}x{} but marginals have {} and {} entries",
            cost.rows(),
            cost.cols(),
            a.len(),
            b.len()
        )));
    }
    if !cost.all_finite() {
        return Err(Error::invalid("cost table has non-finite entries"));
    }
    if a.iter().chain(b.iter()).any(|&m| !m.is_finite() || m < 0.0) {
        return Err(Error::invalid("marginal masses must be finite and nonnegative"));
    }
    let sa = fsum(a.iter().copied());
    let sb = fsum(b.iter().copied());
    if (sa - sb).abs() > BALANCE_TOL {
        return Err(Error::Infeasible(format!(
            "marginal sums differ: source {sa} vs target {sb}"
        )));
    }
    Ok(())
}

/// Northwest-corner initial basis: a staircase of exactly `m + n - 1` cells,
/// degenerate zeros included.
fn northwest_corner(a: &[f64], b: &[f64]) -> (Vec<(usize, usize)>, Vec<f64>) {
    let (m, n) = (a.len(), b.len());
    let mut ra = a.to_vec();
    let mut rb = b.to_vec();
    let mut cells = Vec::with_capacity(m + n - 1);
    let mut mass = Vec::with_capacity(m + n - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let q = ra[i].min(rb[j]);
        cells.push((i, j));
        mass.push(q);
        ra[i] -= q;
        rb[j] -= q;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if i < m - 1 && (ra[i] <= rb[j] || j == n - 1) {
            i += 1;
        } else {
            j += 1;
        }
    }
    (cells, mass)
}

/// Spanning-tree structure over the bipartite node set (rows, then columns).
struct BasisTree {
    m: usize,
    /// adjacency: node -> list of (neighbor node, basis slot)
    adj: Vec<Vec<(usize, usize)>>,
}

impl BasisTree {
    fn build(m: usize, n: usize, cells: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); m + n];
        for (slot, &(i, j)) in cells.iter().enumerate() {
            adj[i].push((m + j, slot));
            adj[m + j].push((i, slot));
        }
        BasisTree { m, adj }
    }

    /// Duals from `u_i + v_j = c_ij` on basic cells, rooted at `u_0 = 0`.
    fn duals(&self, cost: &Table, cells: &[(usize, usize)]) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        let n = self.adj.len() - m;
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        u[0] = 0.0;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            for &(nb, slot) in &self.adj[node] {
                let (i, j) = cells[slot];
                if node < m {
                    // node is row i, neighbor is column j
                    if v[nb - m].is_nan() {
                        v[nb - m] = cost.get(i, j) - u[node];
                        stack.push(nb);
                    }
                } else if u[nb].is_nan() {
                    u[nb] = cost.get(i, j) - v[node - m];
                    stack.push(nb);
                }
            }
        }
        (u, v)
    }

    /// Tree path from row `i0` to column `j0` as a list of basis slots.
    fn path(&self, i0: usize, j0: usize) -> Vec<usize> {
        let target = self.m + j0;
        let nn = self.adj.len();
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; nn];
        let mut seen = vec![false; nn];
        seen[i0] = true;
        let mut queue = std::collections::VecDeque::from([i0]);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(nb, slot) in &self.adj[node] {
                if !seen[nb] {
                    seen[nb] = true;
                    parent[nb] = Some((node, slot));
                    queue.push_back(nb);
                }
            }
        }
        let mut slots = Vec::new();
        let mut node = target;
        while let Some((prev, slot)) = parent[node] {
            slots.push(slot);
            node = prev;
        }
        slots.reverse(); // ordered from i0 towards j0
        slots
    }
}

/// Solve the balanced min-cost transportation problem.
///
/// `iteration_cap` of `None` uses `10·(m·n)²` (with a small floor).
pub fn solve_min_transport(
    cost: &Table,
    a: &[f64],
    b: &[f64],
    iteration_cap: Option<usize>,
) -> Result<TransportSolution> {
    validate(cost, a, b)?;
    let (m, n) = (a.len(), b.len());
    let cap = iteration_cap.unwrap_or_else(|| 10usize.saturating_mul((m * n) * (m * n)).max(1000));
    let enter_tol = 1e-11 * (1.0 + cost.max_abs());

    let (mut cells, mut mass) = northwest_corner(a, b);
    let mut basic_slot = vec![usize::MAX; m * n];
    for (slot, &(i, j)) in cells.iter().enumerate() {
        basic_slot[i * n + j] = slot;
    }

    let mut iterations = 0;
    let mut optimal = false;
    let (mut u, mut v);
    loop {
        let tree = BasisTree::build(m, n, &cells);
        let duals = tree.duals(cost, &cells);
        u = duals.0;
        v = duals.1;
        if u.iter().chain(v.iter()).any(|d| d.is_nan()) {
            return Err(Error::Numerical("basis lost spanning-tree structure".into()));
        }

        // Bland: first row-major nonbasic cell with negative reduced cost.
        let mut entering = None;
        'scan: for i in 0..m {
            for j in 0..n {
                if basic_slot[i * n + j] == usize::MAX && cost.get(i, j) - u[i] - v[j] < -enter_tol {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            optimal = true;
            break;
        };
        if iterations >= cap {
            break;
        }
        iterations += 1;

        // Close the unique cycle: entering cell plus the tree path j0 -> i0.
        // Walking the path from the entering row alternates -,+,-,...
        let path = tree.path(ei, ej);
        debug_assert!(path.len() % 2 == 1);
        let mut theta = f64::INFINITY;
        let mut leave_pos = usize::MAX;
        for (pos, &slot) in path.iter().enumerate() {
            if pos % 2 == 0 {
                // Degenerate ties are exact zeros here, so Bland's
                // lowest-index rule can compare masses exactly.
                let better = mass[slot] < theta
                    || (mass[slot] == theta
                        && leave_pos != usize::MAX
                        && cells[slot] < cells[path[leave_pos]]);
                if better {
                    theta = mass[slot];
                    leave_pos = pos;
                }
            }
        }
        debug_assert!(leave_pos != usize::MAX);

        for (pos, &slot) in path.iter().enumerate() {
            if pos % 2 == 0 {
                mass[slot] -= theta;
            } else {
                mass[slot] += theta;
            }
        }
        let leave_slot = path[leave_pos];
        let (li, lj) = cells[leave_slot];
        basic_slot[li * n + lj] = usize::MAX;
        cells[leave_slot] = (ei, ej);
        mass[leave_slot] = theta;
        basic_slot[ei * n + ej] = leave_slot;
    }

    let mut plan = Table::zeros(m, n);
    for (slot, &(i, j)) in cells.iter().enumerate() {
        let q = mass[slot];
        if q < 0.0 {
            if q < -1e-9 {
                return Err(Error::Numerical(format!(
                    "simplex produced negative mass {q:.3e} at ({i},{j})"
                )));
            }
            continue;
        }
        plan.set(i, j, q);
    }
    let value = fsum(
        cells
            .iter()
            .zip(&mass)
            .map(|(&(i, j), &q)| if q > 0.0 { cost.get(i, j) * q } else { 0.0 }),
    );
    Ok(TransportSolution { plan, value, u, v, iterations, optimal })
}
