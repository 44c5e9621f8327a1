//! Transportation simplex (stepping-stone / MODI) on a dense bipartite cost
//! matrix. The basis is kept as a spanning tree of `m + n − 1` cells over row
//! and column nodes; degenerate zero-flow cells stay in the tree.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub(crate) struct TransportSolution {
    pub value: f64,
    /// `(row, column, flow)` for the basic cells with positive flow.
    pub flows: Vec<(usize, usize, f64)>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Consecutive zero-step pivots after which pricing falls back to Bland's rule.
const DEGENERATE_SWITCH: usize = 50;

pub(crate) fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> TransportSolution {
    let m = supply.len();
    let n = demand.len();
    assert_eq!(cost.len(), m * n);
    let c = |i: usize, j: usize| cost[i * n + j];
    let scale = cost.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    let tol = 1e-12 * scale;

    // Northwest corner start.
    let mut cells: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);
    let mut flow: Vec<f64> = Vec::with_capacity(m + n - 1);
    {
        let mut a = supply.to_vec();
        let mut b = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = a[i].min(b[j]).max(0.0);
            cells.push((i, j));
            flow.push(x);
            a[i] -= x;
            b[j] -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let nodes = m + n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut u = vec![0.0; m];
    let mut v = vec![0.0; n];
    let mut parent_edge = vec![usize::MAX; nodes];
    let mut visited = vec![false; nodes];
    let mut queue = VecDeque::new();
    let mut degenerate_run = 0usize;
    let mut iterations = 0usize;
    let max_iterations = 50 * (m + n) * (m + n) + 1000;

    loop {
        for a in adj.iter_mut() {
            a.clear();
        }
        for (e, &(i, j)) in cells.iter().enumerate() {
            adj[i].push(e);
            adj[m + j].push(e);
        }

        // Potentials u_i + v_j = c_ij on the tree, rooted at row 0.
        visited.iter_mut().for_each(|x| *x = false);
        visited[0] = true;
        u[0] = 0.0;
        queue.clear();
        queue.push_back(0);
        while let Some(node) = queue.pop_front() {
            for &e in &adj[node] {
                let (i, j) = cells[e];
                let other = if node < m { m + j } else { i };
                if visited[other] {
                    continue;
                }
                visited[other] = true;
                if other >= m {
                    v[j] = c(i, j) - u[i];
                } else {
                    u[i] = c(i, j) - v[j];
                }
                queue.push_back(other);
            }
        }

        // Pricing.
        let bland = degenerate_run >= DEGENERATE_SWITCH;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -tol;
        'scan: for i in 0..m {
            for j in 0..n {
                let r = c(i, j) - u[i] - v[j];
                if r < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = r;
                }
            }
        }
        let Some((ei, ej)) = entering else { break };
        iterations += 1;
        if iterations > max_iterations {
            break;
        }

        // Tree path from row ei to column ej.
        visited.iter_mut().for_each(|x| *x = false);
        parent_edge.iter_mut().for_each(|x| *x = usize::MAX);
        visited[ei] = true;
        queue.clear();
        queue.push_back(ei);
        let target = m + ej;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &e in &adj[node] {
                let (i, j) = cells[e];
                let other = if node < m { m + j } else { i };
                if !visited[other] {
                    visited[other] = true;
                    parent_edge[other] = e;
                    queue.push_back(other);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = target;
        while node != ei {
            let e = parent_edge[node];
            path.push(e);
            let (i, j) = cells[e];
            node = if node >= m { i } else { m + j };
        }

        // Odd positions (0, 2, …) along the path from the entering column lose flow.
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (pos, &e) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let better = flow[e] < theta || (bland && flow[e] == theta && cells[e] < cells[leaving]);
                if better {
                    theta = flow[e];
                    leaving = e;
                }
            }
        }
        for (pos, &e) in path.iter().enumerate() {
            if pos % 2 == 0 {
                flow[e] -= theta;
            } else {
                flow[e] += theta;
            }
        }
        if theta <= 0.0 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        cells[leaving] = (ei, ej);
        flow[leaving] = theta;
    }

    let mut value = 0.0;
    let mut flows = Vec::new();
    for (e, &(i, j)) in cells.iter().enumerate() {
        if flow[e] > 0.0 {
            value += flow[e] * c(i, j);
            flows.push((i, j, flow[e]));
        }
    }
    flows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    TransportSolution {
        value,
        flows,
        u,
        v,
    }
}
