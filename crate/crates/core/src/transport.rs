//! Exact p-Wasserstein distances between uniform empirical measures.
//!
//! For equal-size clouds the optimal plan is a permutation, so the primal is
//! a linear assignment problem. Both solvers return Kantorovich potentials
//! (h, h′) with h_i + h′_j ≤ |x_i − y_j|^p, tight on the plan, whose mean
//! equals the primal cost.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default size cap of the O(n³) assignment solver.
pub const DEFAULT_CAP: usize = 4096;

/// Certificate tolerance, relative to 1 + |cost|.
pub const CERTIFICATE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("cloud sizes differ: {left} vs {right} (only equal-size uniform clouds are supported)")]
    SizeMismatch { left: usize, right: usize },
    #[error("cloud dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cloud of {n} points exceeds the assignment cap of {cap}; subsample the clouds or raise the cap")]
    Capacity { n: usize, cap: usize },
    #[error("1-D solver called on {dim}-dimensional clouds")]
    NotOneDimensional { dim: usize },
    #[error("transport order must be >= 1, got {0}")]
    Order(f64),
    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),
    #[error("{path}: row {row}: {message}")]
    Parse { path: String, row: usize, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// n points in ℝ^d with uniform weights 1/n, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self, TransportError> {
        if dim == 0 {
            return Err(TransportError::InvalidCloud("dimension must be positive".into()));
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(TransportError::InvalidCloud(format!(
                "{} coordinates do not form a nonempty set of {dim}-dimensional points",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|v| !v.is_finite()) {
            return Err(TransportError::InvalidCloud(format!("non-finite coordinate in point {}", i / dim)));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self, TransportError> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = points.iter().find(|p| p.len() != dim) {
            return Err(TransportError::InvalidCloud(format!(
                "ragged points: expected dimension {dim}, found {}",
                bad.len()
            )));
        }
        Self::new(dim, points.concat())
    }

    /// Real line cloud.
    pub fn from_1d(values: &[f64]) -> Result<Self, TransportError> {
        Self::new(1, values.to_vec())
    }

    /// n copies of one point.
    pub fn repeated(point: &[f64], n: usize) -> Result<Self, TransportError> {
        Self::new(point.len(), point.repeat(n))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Sub-cloud of the given point indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        Self { dim: self.dim, coords }
    }

    /// Translate every point by `v`.
    pub fn shifted(&self, v: &[f64]) -> Self {
        let coords = self
            .coords
            .chunks_exact(self.dim)
            .flat_map(|p| p.iter().zip(v).map(|(x, s)| x + s))
            .collect();
        Self { dim: self.dim, coords }
    }

    /// True when all points coincide.
    pub fn is_point_mass(&self) -> bool {
        let first = self.point(0);
        self.points().all(|p| p == first)
    }

    /// One point per row, comma-separated; `#` comments and blank lines skipped.
    pub fn parse_csv(text: &str, origin: &str) -> Result<Self, TransportError> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let row = lineno + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut point = Vec::new();
            for (col, cell) in line.split(',').enumerate() {
                let cell = cell.trim();
                let v: f64 = cell.parse().map_err(|_| TransportError::Parse {
                    path: origin.to_string(),
                    row,
                    message: format!("column {}: `{cell}` is not a number", col + 1),
                })?;
                if !v.is_finite() {
                    return Err(TransportError::Parse {
                        path: origin.to_string(),
                        row,
                        message: format!("column {}: non-finite value", col + 1),
                    });
                }
                point.push(v);
            }
            if let Some(first) = rows.first() {
                if first.len() != point.len() {
                    return Err(TransportError::Parse {
                        path: origin.to_string(),
                        row,
                        message: format!("expected {} columns, found {}", first.len(), point.len()),
                    });
                }
            }
            rows.push(point);
        }
        if rows.is_empty() {
            return Err(TransportError::Parse { path: origin.to_string(), row: 0, message: "no points".into() });
        }
        Self::from_points(&rows)
    }

    pub fn load_csv(path: &Path) -> Result<Self, TransportError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| TransportError::Io { path: path.display().to_string(), source })?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in self.points() {
            let row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), TransportError> {
        std::fs::write(path, self.to_csv())
            .map_err(|source| TransportError::Io { path: path.display().to_string(), source })
    }
}

/// Two equal-size clouds whose i-th points are coupled.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedClouds {
    pub left: PointCloud,
    pub right: PointCloud,
}

impl PairedClouds {
    pub fn new(left: PointCloud, right: PointCloud) -> Result<Self, TransportError> {
        check_shapes(&left, &right)?;
        Ok(Self { left, right })
    }

    /// n pairs all starting at (x0, x0′).
    pub fn point_masses(x0: &[f64], x0_prime: &[f64], n: usize) -> Result<Self, TransportError> {
        Self::new(PointCloud::repeated(x0, n)?, PointCloud::repeated(x0_prime, n)?)
    }

    pub fn from_pairs(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Self, TransportError> {
        let left: Vec<Vec<f64>> = pairs.iter().map(|p| p.0.clone()).collect();
        let right: Vec<Vec<f64>> = pairs.iter().map(|p| p.1.clone()).collect();
        Self::new(PointCloud::from_points(&left)?, PointCloud::from_points(&right)?)
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.left.dim()
    }

    pub fn pair(&self, i: usize) -> (&[f64], &[f64]) {
        (self.left.point(i), self.right.point(i))
    }

    pub fn swapped(&self) -> Self {
        Self { left: self.right.clone(), right: self.left.clone() }
    }

    /// Mean of |x_i − x′_i|^p over the pairs.
    pub fn coupling_cost(&self, p: f64) -> f64 {
        let n = self.len();
        (0..n).map(|i| ground_cost(self.left.point(i), self.right.point(i), p)).sum::<f64>() / n as f64
    }
}

/// Solution of the uniform discrete transport problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub order: f64,
    /// W_p^p.
    pub cost: f64,
    /// xs[i] is sent to ys[plan[i]].
    pub plan: Vec<usize>,
    /// Potential h on xs.
    pub potential_x: Vec<f64>,
    /// Potential h′ on ys.
    pub potential_y: Vec<f64>,
}

impl TransportResult {
    pub fn distance(&self) -> f64 {
        self.cost.powf(1.0 / self.order)
    }

    /// Mean of the dual potentials.
    pub fn dual_value(&self) -> f64 {
        let n = self.plan.len() as f64;
        (self.potential_x.iter().sum::<f64>() + self.potential_y.iter().sum::<f64>()) / n
    }
}

/// |x − y|^p.
pub fn ground_cost(x: &[f64], y: &[f64], p: f64) -> f64 {
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    pow_half(r2, p)
}

/// r2^{p/2} with exact shortcuts for p = 1, 2.
fn pow_half(r2: f64, p: f64) -> f64 {
    if p == 2.0 {
        r2
    } else if p == 1.0 {
        r2.sqrt()
    } else {
        r2.powf(0.5 * p)
    }
}

fn check_shapes(xs: &PointCloud, ys: &PointCloud) -> Result<(), TransportError> {
    if xs.dim() != ys.dim() {
        return Err(TransportError::DimensionMismatch { left: xs.dim(), right: ys.dim() });
    }
    if xs.len() != ys.len() {
        return Err(TransportError::SizeMismatch { left: xs.len(), right: ys.len() });
    }
    Ok(())
}

fn check_order(p: f64) -> Result<(), TransportError> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(TransportError::Order(p))
    }
}

fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    idx
}

/// W_p on the line: the monotone (sorted) coupling is optimal for convex costs.
///
/// Potentials come from chaining the edges (x₍ᵢ₊₁₎, y₍ᵢ₎) tight; the Monge
/// property of |x − y|^p makes every other constraint hold.
pub fn wasserstein_1d(xs: &PointCloud, ys: &PointCloud, p: f64) -> Result<TransportResult, TransportError> {
    check_order(p)?;
    check_shapes(xs, ys)?;
    if xs.dim() != 1 {
        return Err(TransportError::NotOneDimensional { dim: xs.dim() });
    }
    let x = xs.coords();
    let y = ys.coords();
    let n = x.len();
    let sx = argsort(x);
    let sy = argsort(y);
    let c = |i: usize, j: usize| pow_half((x[i] - y[j]) * (x[i] - y[j]), p);

    let mut plan = vec![0usize; n];
    let mut hx = vec![0.0; n];
    let mut hy = vec![0.0; n];
    let mut total = 0.0;
    let mut h = 0.0;
    for r in 0..n {
        let (i, j) = (sx[r], sy[r]);
        if r > 0 {
            let (pi, pj) = (sx[r - 1], sy[r - 1]);
            h += c(i, pj) - c(pi, pj);
        }
        let cij = c(i, j);
        plan[i] = j;
        hx[i] = h;
        hy[j] = cij - h;
        total += cij;
    }
    Ok(TransportResult { order: p, cost: total / n as f64, plan, potential_x: hx, potential_y: hy })
}

/// Exact W_p between equal-size clouds in any dimension (cap [`DEFAULT_CAP`]).
pub fn wasserstein_assignment(xs: &PointCloud, ys: &PointCloud, p: f64) -> Result<TransportResult, TransportError> {
    wasserstein_assignment_capped(xs, ys, p, DEFAULT_CAP)
}

pub fn wasserstein_assignment_capped(
    xs: &PointCloud,
    ys: &PointCloud,
    p: f64,
    cap: usize,
) -> Result<TransportResult, TransportError> {
    check_order(p)?;
    check_shapes(xs, ys)?;
    let n = xs.len();
    if n > cap {
        return Err(TransportError::Capacity { n, cap });
    }
    let mut cost = vec![0.0; n * n];
    for (i, row) in cost.chunks_exact_mut(n).enumerate() {
        let xi = xs.point(i);
        for (j, c) in row.iter_mut().enumerate() {
            *c = ground_cost(xi, ys.point(j), p);
        }
    }
    let sol = solve_assignment(&cost, n);
    let total: f64 = (0..n).map(|i| cost[i * n + sol.row_to_col[i]]).sum();
    Ok(TransportResult {
        order: p,
        cost: total / n as f64,
        plan: sol.row_to_col,
        potential_x: sol.u,
        potential_y: sol.v,
    })
}

/// Square assignment solution with duals u_i + v_j ≤ c_ij, tight on the matching.
#[derive(Debug, Clone)]
pub struct Assignment {
    pub row_to_col: Vec<usize>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Shortest augmenting path (Jonker-Volgenant style) on a dense n×n
/// row-major cost matrix. Each row is inserted by a Dijkstra search over
/// reduced costs; ties go to the lowest column index.
pub fn solve_assignment(cost: &[f64], n: usize) -> Assignment {
    assert_eq!(cost.len(), n * n);
    // 1-based with a virtual column 0, after the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![f64::INFINITY; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let crow = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = crow[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[col_owner[j] - 1] = j - 1;
    }
    // Rounding in the updates can leave reduced costs at −1e-16 scale; shift
    // each v_j down to the smallest slack so feasibility holds exactly in
    // floating point. Complementary slackness moves by the same amount.
    let mut u: Vec<f64> = u[1..].to_vec();
    let mut v: Vec<f64> = v[1..].to_vec();
    for j in 0..n {
        let slack = (0..n).map(|i| cost[i * n + j] - u[i] - v[j]).fold(f64::INFINITY, f64::min);
        if slack < 0.0 {
            v[j] += slack;
        }
    }
    // Keep the matched edges tight by moving any residual onto u.
    for i in 0..n {
        let j = row_to_col[i];
        u[i] = u[i].min(cost[i * n + j] - v[j]);
    }
    Assignment { row_to_col, u, v }
}

/// Optimality certificate of a transport result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// max over all (i, j) of h_i + h′_j − |x_i − y_j|^p, floored at 0.
    pub max_violation: f64,
    /// max over the plan of |c − h_i − h′_j|.
    pub max_slackness: f64,
    /// |mean(h) + mean(h′) − cost|.
    pub duality_gap: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks dual feasibility on every pair, tightness on the plan and the
/// duality gap.
pub fn dual_feasibility_check(result: &TransportResult, xs: &PointCloud, ys: &PointCloud) -> CertificateReport {
    let n = xs.len();
    let p = result.order;
    let mut max_violation = 0.0f64;
    let mut max_slackness = 0.0f64;
    for i in 0..n {
        let xi = xs.point(i);
        for j in 0..n {
            let c = ground_cost(xi, ys.point(j), p);
            let excess = result.potential_x[i] + result.potential_y[j] - c;
            max_violation = max_violation.max(excess);
            if result.plan[i] == j {
                max_slackness = max_slackness.max(excess.abs());
            }
        }
    }
    let duality_gap = (result.dual_value() - result.cost).abs();
    let tolerance = CERTIFICATE_TOL * (1.0 + result.cost.abs());
    let passed = max_violation <= tolerance && max_slackness <= tolerance && duality_gap <= tolerance;
    CertificateReport { max_violation, max_slackness, duality_gap, tolerance, passed }
}

/// W_p with the 1-D solver when d = 1, the assignment solver otherwise.
pub fn wasserstein(xs: &PointCloud, ys: &PointCloud, p: f64, cap: usize) -> Result<TransportResult, TransportError> {
    if xs.dim() == 1 && ys.dim() == 1 {
        wasserstein_1d(xs, ys, p)
    } else {
        wasserstein_assignment_capped(xs, ys, p, cap)
    }
}

/// A W_p-optimal pairing of two initial clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCoupling {
    pub pairs: PairedClouds,
    /// Empirical W_p^p, equal to the mean pair cost.
    pub cost: f64,
}

/// Pairs cloud_a with cloud_a′ by an optimal plan for order p.
pub fn optimal_initial_coupling(
    cloud_a: &PointCloud,
    cloud_a_prime: &PointCloud,
    p: f64,
    cap: usize,
) -> Result<InitialCoupling, TransportError> {
    let result = wasserstein(cloud_a, cloud_a_prime, p, cap)?;
    let right = cloud_a_prime.select(&result.plan);
    Ok(InitialCoupling { pairs: PairedClouds::new(cloud_a.clone(), right)?, cost: result.cost })
}
