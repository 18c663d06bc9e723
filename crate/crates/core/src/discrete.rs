//! Discrete optimal transport on weighted point clouds: squared-Euclidean
//! costs, an exact transportation-simplex solver, entropic regularization via
//! Sinkhorn scaling, barycentric projections, and entropic Gaussian closed
//! forms.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;

const MARGINAL_SUM_TOL: f64 = 1e-9;

/// Nonnegative coupling matrix with prescribed marginals and its cost.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub plan: Array2<f64>,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
    pub cost_value: f64,
}

impl TransportPlan {
    /// Largest violation of the marginal constraints.
    pub fn marginal_violation(&self) -> f64 {
        let (m, n) = self.plan.dim();
        let mut worst = 0.0f64;
        for i in 0..m {
            let s: f64 = self.plan.row(i).sum();
            worst = worst.max((s - self.row_marginal[i]).abs());
        }
        for j in 0..n {
            let s: f64 = self.plan.column(j).sum();
            worst = worst.max((s - self.col_marginal[j]).abs());
        }
        worst
    }
}

/// Sinkhorn output: the plan plus iteration count and convergence flag.
/// When `max_iter` is hit the best iterate is returned with `converged: false`.
#[derive(Debug, Clone)]
pub struct SinkhornPlan {
    pub plan: TransportPlan,
    pub iterations: usize,
    pub converged: bool,
}

/// Squared Euclidean cost matrix between two point clouds.
pub fn cost_matrix(x0: ArrayView2<f64>, x1: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x0.ncols() != x1.ncols() {
        return Err(Error::DimensionMismatch {
            left: x0.ncols(),
            right: x1.ncols(),
        });
    }
    let (m, n, d) = (x0.nrows(), x1.nrows(), x0.ncols());
    let mut c = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..d {
                let diff = x0[[i, k]] - x1[[j, k]];
                s += diff * diff;
            }
            c[[i, j]] = s;
        }
    }
    Ok(c)
}

fn check_marginals(c: &Array2<f64>, w0: &[f64], w1: &[f64]) -> Result<()> {
    if c.nrows() != w0.len() || c.ncols() != w1.len() {
        return Err(Error::DimensionMismatch {
            left: c.nrows() * c.ncols(),
            right: w0.len() * w1.len(),
        });
    }
    for (i, &w) in w0.iter().chain(w1.iter()).enumerate() {
        if w < 0.0 || !w.is_finite() {
            return Err(Error::NegativeWeight { index: i, weight: w });
        }
    }
    let sum0: f64 = w0.iter().sum();
    let sum1: f64 = w1.iter().sum();
    if (sum0 - 1.0).abs() > MARGINAL_SUM_TOL || (sum1 - 1.0).abs() > MARGINAL_SUM_TOL {
        return Err(Error::InfeasibleMarginals { sum0, sum1 });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// exact solver: transportation simplex on the bipartite spanning-tree basis
// ---------------------------------------------------------------------------

struct Simplex<'a> {
    c: &'a Array2<f64>,
    m: usize,
    n: usize,
    flow: Array2<f64>,
    in_basis: Vec<bool>,
    /// adjacency over m+n tree nodes; entries are (other node, cell index)
    adj: Vec<Vec<(usize, usize)>>,
}

impl<'a> Simplex<'a> {
    fn cell(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    fn add_edge(&mut self, i: usize, j: usize) {
        let cell = self.cell(i, j);
        self.in_basis[cell] = true;
        self.adj[i].push((self.m + j, cell));
        self.adj[self.m + j].push((i, cell));
    }

    fn remove_edge(&mut self, i: usize, j: usize) {
        let cell = self.cell(i, j);
        self.in_basis[cell] = false;
        self.adj[i].retain(|&(_, c)| c != cell);
        self.adj[self.m + j].retain(|&(_, c)| c != cell);
    }

    fn northwest_corner(&mut self, a: &mut [f64], b: &mut [f64]) {
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let f = a[i].min(b[j]);
            self.flow[[i, j]] = f;
            self.add_edge(i, j);
            a[i] -= f;
            b[j] -= f;
            if i == self.m - 1 && j == self.n - 1 {
                break;
            }
            if a[i] <= b[j] && i < self.m - 1 {
                i += 1;
            } else if j < self.n - 1 {
                j += 1;
            } else {
                i += 1;
            }
        }
    }

    /// Duals from the tree: u[0] = 0, then u_i + v_j = c_ij on basis cells.
    fn duals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut u = vec![f64::NAN; self.m];
        let mut v = vec![f64::NAN; self.n];
        u[0] = 0.0;
        let mut stack = vec![0usize];
        let mut seen = vec![false; self.m + self.n];
        seen[0] = true;
        while let Some(node) = stack.pop() {
            for &(other, cell) in &self.adj[node] {
                if seen[other] {
                    continue;
                }
                seen[other] = true;
                let (i, j) = (cell / self.n, cell % self.n);
                if other >= self.m {
                    v[j] = self.c[[i, j]] - u[i];
                } else {
                    u[i] = self.c[[i, j]] - v[j];
                }
                stack.push(other);
            }
        }
        (u, v)
    }

    fn entering(&self, u: &[f64], v: &[f64], eps: f64, bland: bool) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        let mut best_rc = -eps;
        for i in 0..self.m {
            for j in 0..self.n {
                if self.in_basis[self.cell(i, j)] {
                    continue;
                }
                let rc = self.c[[i, j]] - u[i] - v[j];
                if rc < best_rc {
                    if bland {
                        return Some((i, j));
                    }
                    best_rc = rc;
                    best = Some((i, j));
                }
            }
        }
        best
    }

    /// Tree path from row node `i0` to column node `m + j0`, as cell indices.
    fn path(&self, i0: usize, j0: usize) -> Vec<usize> {
        let target = self.m + j0;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        seen[i0] = true;
        let mut queue = std::collections::VecDeque::from([i0]);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(other, cell) in &self.adj[node] {
                if !seen[other] {
                    seen[other] = true;
                    parent[other] = Some((node, cell));
                    queue.push_back(other);
                }
            }
        }
        let mut cells = Vec::new();
        let mut cur = target;
        while let Some((prev, cell)) = parent[cur] {
            cells.push(cell);
            cur = prev;
        }
        cells.reverse(); // ordered from i0 towards the column node
        cells
    }

    fn pivot(&mut self, i0: usize, j0: usize) {
        let path = self.path(i0, j0);
        // entering cell gets +theta; path cells alternate -, +, -, ... from i0
        let minus: Vec<usize> = path.iter().copied().step_by(2).collect();
        let theta = minus
            .iter()
            .map(|&cell| self.flow[[cell / self.n, cell % self.n]])
            .fold(f64::INFINITY, f64::min);
        // leaving variable: smallest cell index among those attaining theta
        let leave = minus
            .iter()
            .copied()
            .filter(|&cell| self.flow[[cell / self.n, cell % self.n]] <= theta + 1e-15)
            .min()
            .unwrap();
        self.flow[[i0, j0]] += theta;
        for (k, &cell) in path.iter().enumerate() {
            let (i, j) = (cell / self.n, cell % self.n);
            if k % 2 == 0 {
                self.flow[[i, j]] = (self.flow[[i, j]] - theta).max(0.0);
            } else {
                self.flow[[i, j]] += theta;
            }
        }
        self.add_edge(i0, j0);
        self.remove_edge(leave / self.n, leave % self.n);
    }

    /// Recompute flows exactly from the final tree by leaf elimination.
    fn settle_flows(&mut self, w0: &[f64], w1: &[f64]) {
        let total_nodes = self.m + self.n;
        let mut remaining: Vec<f64> = w0
            .iter()
            .copied()
            .chain(w1.iter().copied())
            .collect();
        let mut degree: Vec<usize> = self.adj.iter().map(|a| a.len()).collect();
        let mut removed_cell = vec![false; self.m * self.n];
        let mut removed_node = vec![false; total_nodes];
        let mut queue: std::collections::VecDeque<usize> = (0..total_nodes)
            .filter(|&k| degree[k] == 1)
            .collect();
        while let Some(node) = queue.pop_front() {
            if removed_node[node] || degree[node] == 0 {
                continue;
            }
            let Some(&(other, cell)) = self.adj[node]
                .iter()
                .find(|&&(o, c)| !removed_node[o] && !removed_cell[c])
            else {
                continue;
            };
            let f = remaining[node].max(0.0);
            let (i, j) = (cell / self.n, cell % self.n);
            self.flow[[i, j]] = f;
            remaining[other] -= f;
            remaining[node] = 0.0;
            removed_cell[cell] = true;
            removed_node[node] = true;
            degree[node] -= 1;
            degree[other] -= 1;
            if degree[other] == 1 {
                queue.push_back(other);
            }
        }
    }
}

/// Exact optimal transport between weighted atoms, solved by a
/// network-simplex-style transportation solver. Returns an optimal extreme
/// point of the transportation polytope.
pub fn solve_exact(c: &Array2<f64>, w0: &[f64], w1: &[f64]) -> Result<TransportPlan> {
    check_marginals(c, w0, w1)?;
    let (m, n) = c.dim();
    let sum0: f64 = w0.iter().sum();
    let sum1: f64 = w1.iter().sum();
    let mut a: Vec<f64> = w0.to_vec();
    // rescale so supplies and demands balance exactly
    let mut b: Vec<f64> = w1.iter().map(|&x| x * sum0 / sum1).collect();

    let mut sx = Simplex {
        c,
        m,
        n,
        flow: Array2::zeros((m, n)),
        in_basis: vec![false; m * n],
        adj: vec![Vec::new(); m + n],
    };
    sx.northwest_corner(&mut a, &mut b);

    let cmax = c.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let eps = 1e-11 * (1.0 + cmax);
    let dantzig_cap = 60 * (m + n) + 2000;
    let mut pivots = 0usize;
    let mut bland = false;
    loop {
        let (u, v) = sx.duals();
        let Some((i, j)) = sx.entering(&u, &v, eps, bland) else {
            break;
        };
        sx.pivot(i, j);
        pivots += 1;
        if !bland && pivots > dantzig_cap {
            bland = true; // Bland's rule guarantees termination under degeneracy
        }
    }
    sx.settle_flows(w0, &w1_scaled(w0, w1));

    let mut flow = sx.flow;
    let mut cost = 0.0;
    for i in 0..m {
        for j in 0..n {
            cost += flow[[i, j]] * c[[i, j]];
            if flow[[i, j]] < 0.0 {
                flow[[i, j]] = 0.0;
            }
        }
    }
    Ok(TransportPlan {
        plan: flow,
        row_marginal: w0.to_vec(),
        col_marginal: w1.to_vec(),
        cost_value: cost,
    })
}

fn w1_scaled(w0: &[f64], w1: &[f64]) -> Vec<f64> {
    let sum0: f64 = w0.iter().sum();
    let sum1: f64 = w1.iter().sum();
    w1.iter().map(|&x| x * sum0 / sum1).collect()
}

// ---------------------------------------------------------------------------
// Sinkhorn
// ---------------------------------------------------------------------------

/// Entropic OT via Sinkhorn scaling `u <- w0 ./ (K v)`, `v <- w1 ./ (K^T u)`
/// with `K = exp(-C/gamma)`.
///
/// Updates run in the log domain when `gamma < 0.05 * median(C)` or the
/// positive weights span more than 8 orders of magnitude; otherwise plain
/// scaling is used. Stops when the max marginal violation is below `tol`.
pub fn sinkhorn(
    c: &Array2<f64>,
    w0: &[f64],
    w1: &[f64],
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornPlan> {
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::InvalidGamma(gamma));
    }
    check_marginals(c, w0, w1)?;
    let med = sampled_median(c);
    let extreme_weights = weight_dynamic_range(w0).max(weight_dynamic_range(w1)) > 1e8;
    if gamma < 0.05 * med || extreme_weights {
        sinkhorn_log_domain(c, w0, w1, gamma, tol, max_iter)
    } else {
        sinkhorn_scaling(c, w0, w1, gamma, tol, max_iter)
    }
}

fn weight_dynamic_range(w: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &x in w {
        if x > 0.0 {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if hi == 0.0 {
        1.0
    } else {
        hi / lo
    }
}

fn sampled_median(c: &Array2<f64>) -> f64 {
    let len = c.len();
    let stride = (len / 65536).max(1);
    let mut sample: Vec<f64> = c.iter().step_by(stride).copied().collect();
    let mid = sample.len() / 2;
    sample.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    sample[mid]
}

fn sinkhorn_scaling(
    c: &Array2<f64>,
    w0: &[f64],
    w1: &[f64],
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornPlan> {
    let (m, n) = c.dim();
    let mut k = c.mapv(|x| (-x / gamma).exp());
    // underflowed rows/columns force the log domain
    let hollow = (0..m).any(|i| w0[i] > 0.0 && k.row(i).sum() == 0.0)
        || (0..n).any(|j| w1[j] > 0.0 && k.column(j).sum() == 0.0);
    if hollow {
        return sinkhorn_log_domain(c, w0, w1, gamma, tol, max_iter);
    }
    let mut u = vec![1.0f64; m];
    let mut v = vec![1.0f64; n];
    let mut kv = vec![0.0f64; m];
    let mut ktu = vec![0.0f64; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..m {
            let mut s = 0.0;
            let row = k.row(i);
            for j in 0..n {
                s += row[j] * v[j];
            }
            kv[i] = s;
            u[i] = if w0[i] == 0.0 { 0.0 } else { w0[i] / s };
        }
        ktu.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..m {
            let ui = u[i];
            if ui == 0.0 {
                continue;
            }
            let row = k.row(i);
            for j in 0..n {
                ktu[j] += row[j] * ui;
            }
        }
        for j in 0..n {
            v[j] = if w1[j] == 0.0 { 0.0 } else { w1[j] / ktu[j] };
        }
        if iterations % 10 == 0 || iterations == max_iter {
            let mut worst = 0.0f64;
            for i in 0..m {
                let mut s = 0.0;
                let row = k.row(i);
                for j in 0..n {
                    s += row[j] * v[j];
                }
                worst = worst.max((u[i] * s - w0[i]).abs());
            }
            for j in 0..n {
                worst = worst.max((v[j] * ktu[j] - w1[j]).abs());
            }
            if worst <= tol {
                converged = true;
                break;
            }
        }
    }
    // P = diag(u) K diag(v), reusing the kernel buffer
    let mut cost = 0.0;
    for i in 0..m {
        for j in 0..n {
            let p = u[i] * k[[i, j]] * v[j];
            k[[i, j]] = p;
            cost += p * c[[i, j]];
        }
    }
    Ok(SinkhornPlan {
        plan: TransportPlan {
            plan: k,
            row_marginal: w0.to_vec(),
            col_marginal: w1.to_vec(),
            cost_value: cost,
        },
        iterations,
        converged,
    })
}

fn sinkhorn_log_domain(
    c: &Array2<f64>,
    w0: &[f64],
    w1: &[f64],
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornPlan> {
    let (m, n) = c.dim();
    let log_w0: Vec<f64> = w0.iter().map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }).collect();
    let log_w1: Vec<f64> = w1.iter().map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }).collect();
    let mut f = vec![0.0f64; m];
    let mut g = vec![0.0f64; n];
    for (i, lw) in log_w0.iter().enumerate() {
        if lw.is_infinite() {
            f[i] = f64::NEG_INFINITY;
        }
    }
    for (j, lw) in log_w1.iter().enumerate() {
        if lw.is_infinite() {
            g[j] = f64::NEG_INFINITY;
        }
    }
    let lse_row = |i: usize, g: &[f64]| -> f64 {
        let mut mx = f64::NEG_INFINITY;
        for j in 0..n {
            let t = (g[j] - c[[i, j]]) / gamma;
            if t > mx {
                mx = t;
            }
        }
        if mx.is_infinite() {
            return f64::NEG_INFINITY;
        }
        let mut s = 0.0;
        for j in 0..n {
            s += ((g[j] - c[[i, j]]) / gamma - mx).exp();
        }
        mx + s.ln()
    };
    let lse_col = |j: usize, f: &[f64]| -> f64 {
        let mut mx = f64::NEG_INFINITY;
        for i in 0..m {
            let t = (f[i] - c[[i, j]]) / gamma;
            if t > mx {
                mx = t;
            }
        }
        if mx.is_infinite() {
            return f64::NEG_INFINITY;
        }
        let mut s = 0.0;
        for i in 0..m {
            s += ((f[i] - c[[i, j]]) / gamma - mx).exp();
        }
        mx + s.ln()
    };
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..m {
            if log_w0[i].is_infinite() {
                continue;
            }
            f[i] = gamma * (log_w0[i] - lse_row(i, &g));
        }
        for j in 0..n {
            if log_w1[j].is_infinite() {
                continue;
            }
            g[j] = gamma * (log_w1[j] - lse_col(j, &f));
        }
        if iterations % 10 == 0 || iterations == max_iter {
            let mut worst = 0.0f64;
            let mut col_sums = vec![0.0f64; n];
            for i in 0..m {
                let mut s = 0.0;
                for j in 0..n {
                    let lp = (f[i] + g[j] - c[[i, j]]) / gamma;
                    let p = if lp.is_finite() { lp.exp() } else { 0.0 };
                    s += p;
                    col_sums[j] += p;
                }
                worst = worst.max((s - w0[i]).abs());
            }
            for j in 0..n {
                worst = worst.max((col_sums[j] - w1[j]).abs());
            }
            if worst <= tol {
                converged = true;
                break;
            }
        }
    }
    let mut plan = Array2::zeros((m, n));
    let mut cost = 0.0;
    for i in 0..m {
        for j in 0..n {
            let lp = (f[i] + g[j] - c[[i, j]]) / gamma;
            let p = if lp.is_finite() { lp.exp() } else { 0.0 };
            plan[[i, j]] = p;
            cost += p * c[[i, j]];
        }
    }
    Ok(SinkhornPlan {
        plan: TransportPlan {
            plan,
            row_marginal: w0.to_vec(),
            col_marginal: w1.to_vec(),
            cost_value: cost,
        },
        iterations,
        converged,
    })
}

/// Barycentric projection `row i -> (1/w0_i) Σ_j P_ij x1_j`.
pub fn barycentric_map(plan: &TransportPlan, x1: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (m, n) = plan.plan.dim();
    if x1.nrows() != n {
        return Err(Error::DimensionMismatch { left: x1.nrows(), right: n });
    }
    let d = x1.ncols();
    let mut out = Array2::zeros((m, d));
    for i in 0..m {
        let w = plan.row_marginal[i];
        if w <= 0.0 {
            return Err(Error::ZeroRowWeight(i));
        }
        for j in 0..n {
            let p = plan.plan[[i, j]];
            if p == 0.0 {
                continue;
            }
            for k in 0..d {
                out[[i, k]] += p * x1[[j, k]];
            }
        }
        for k in 0..d {
            out[[i, k]] /= w;
        }
    }
    Ok(out)
}

/// Entropic OT correlation between two univariate Gaussians:
/// `rho = (sqrt((g/4)^2 + s0^2 s1^2) - g/4) / (s0 s1)`.
pub fn entropic_gaussian_correlation(sigma0: f64, sigma1: f64, gamma: f64) -> f64 {
    let q = gamma / 4.0;
    ((q * q + sigma0 * sigma0 * sigma1 * sigma1).sqrt() - q) / (sigma0 * sigma1)
}

/// Entropic OT cross-covariance between two multivariate Gaussians.
pub fn entropic_gaussian_cross_cov(
    sigma0: &Array2<f64>,
    sigma1: &Array2<f64>,
    gamma: f64,
) -> Result<Array2<f64>> {
    let d = sigma0.nrows();
    if sigma0.ncols() != d || sigma1.nrows() != d || sigma1.ncols() != d {
        return Err(Error::DimensionMismatch { left: sigma0.ncols(), right: d });
    }
    let root0 = linalg::spd_sqrt(sigma0);
    let inv_root0 = linalg::spd_inv_sqrt(sigma0)?;
    // reject non-PD sigma1 too
    linalg::spd_inv_sqrt(sigma1)?;
    let inner = root0.dot(sigma1).dot(&root0);
    let mut arg = inner.mapv(|x| 4.0 * x);
    for i in 0..d {
        arg[[i, i]] += gamma * gamma / 4.0;
    }
    // symmetrize fp drift before the root
    let arg = (&arg + &arg.t()) / 2.0;
    let mid = linalg::spd_sqrt(&arg);
    let mut out = root0.dot(&mid).dot(&inv_root0).mapv(|x| 0.5 * x);
    for i in 0..d {
        out[[i, i]] -= gamma / 4.0;
    }
    Ok(out)
}
