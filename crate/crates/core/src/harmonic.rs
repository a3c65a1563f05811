//! Harmonic functions on `[-r, r] × X` for the operator `∂²ₓ + Δ_X`.
//!
//! The interval carries a uniform grid of step `h`; `∂²ₓ` is the second central
//! difference. Distances in the product are `√(x² + d_X(c, u)²)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::markov::MarkovOperator;

/// `[-r, r]` with step `h`, times the ball `B_r(center)` and its boundary.
#[derive(Debug, Clone)]
pub struct MixedDomain {
    graph: WeightedGraph,
    center: usize,
    r: f64,
    h: f64,
    grid: Vec<f64>,
    ball: Vec<usize>,
    boundary: Vec<usize>,
    vertices: Vec<usize>,
    dist: Vec<usize>,
}

impl MixedDomain {
    pub fn new(graph: WeightedGraph, center: usize, r: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("need r > 0 and h > 0, got r = {r}, h = {h}")));
        }
        let steps = r / h;
        if (steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0 {
            return Err(Error::InvalidParameter(format!("r / h = {steps} must be a positive integer")));
        }
        let half = steps.round() as usize;
        let grid = (0..=2 * half).map(|i| (i as f64 - half as f64) * h).collect();
        let ball = graph.ball(center, r)?.members;
        let boundary = graph.boundary(&ball);
        let vertices = graph.closure(&ball);
        let dist = graph.bfs_distances(center);
        Ok(Self {
            graph,
            center,
            r,
            h,
            grid,
            ball,
            boundary,
            vertices,
            dist,
        })
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn ball(&self) -> &[usize] {
        &self.ball
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// `B ∪ ∂B`, sorted.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// `d_X(center, u)`.
    pub fn graph_distance(&self, u: usize) -> usize {
        self.dist[u]
    }

    /// Product distance of `(x, u)` from `(0, center)`.
    pub fn distance(&self, x: f64, u: usize) -> f64 {
        let d = self.dist[u] as f64;
        (x * x + d * d).sqrt()
    }

    /// Elements carrying Dirichlet data that influence the interior: `x = ±r`
    /// with `u ∈ B`, and interior `x` with `u ∈ ∂B`. Sorted by distance from the
    /// centre, ties by position.
    pub fn boundary_elements(&self) -> Vec<(usize, usize)> {
        let last = self.grid.len() - 1;
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &u in &self.ball {
            out.push((0, u));
            out.push((last, u));
        }
        for i in 1..last {
            for &u in &self.boundary {
                out.push((i, u));
            }
        }
        out.sort_by(|a, b| {
            self.distance(self.grid[a.0], a.1)
                .total_cmp(&self.distance(self.grid[b.0], b.1))
                .then(a.cmp(b))
        });
        out
    }

    /// Length of `[x - h/2, x + h/2] ∩ [-x_u, x_u]` with `x_u = √(ρ² - d(u)²)`.
    pub fn cell_weight(&self, i: usize, u: usize, rho: f64) -> f64 {
        let d = self.dist[u] as f64;
        if d >= rho {
            return 0.0;
        }
        let xu = (rho * rho - d * d).sqrt();
        let x = self.grid[i];
        let lo = (x - self.h / 2.0).max(-xu);
        let hi = (x + self.h / 2.0).min(xu);
        (hi - lo).max(0.0)
    }
}

/// Values on `grid × vertices`, row-major by grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedFunction {
    pub grid: Vec<f64>,
    pub vertices: Vec<usize>,
    pub values: Vec<f64>,
}

impl MixedFunction {
    pub fn from_fn<F: Fn(f64, usize) -> f64>(grid: &[f64], vertices: &[usize], f: F) -> Self {
        let mut values = Vec::with_capacity(grid.len() * vertices.len());
        for &x in grid {
            for &u in vertices {
                values.push(f(x, u));
            }
        }
        Self {
            grid: grid.to_vec(),
            vertices: vertices.to_vec(),
            values,
        }
    }

    fn column(&self, u: usize) -> Option<usize> {
        self.vertices.binary_search(&u).ok()
    }

    /// Value at grid index `i` and vertex `u`.
    pub fn get(&self, i: usize, u: usize) -> f64 {
        let j = self.column(u).expect("vertex in function domain");
        self.values[i * self.vertices.len() + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            vertices: self.vertices.clone(),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,u,value\n");
        for (i, x) in self.grid.iter().enumerate() {
            for (j, u) in self.vertices.iter().enumerate() {
                let _ = writeln!(out, "{x},{u},{:e}", self.values[i * self.vertices.len() + j]);
            }
        }
        out
    }
}

/// `max |δ²ₓ f / h² + Δ_X f|` over interior grid points and vertices whose
/// neighbours all lie in the function's domain.
pub fn mixed_residual(p: &MarkovOperator, f: &MixedFunction) -> f64 {
    let nx = f.grid.len();
    if nx < 3 {
        return 0.0;
    }
    let h = f.grid[1] - f.grid[0];
    let g = p.graph();
    let nv = f.vertices.len();
    let inner: Vec<(usize, Vec<(usize, f64)>)> = f
        .vertices
        .iter()
        .enumerate()
        .filter_map(|(j, &u)| {
            let nbrs: Option<Vec<(usize, f64)>> = g
                .neighbors(u)
                .iter()
                .map(|&(v, w)| f.column(v).map(|jv| (jv, w / g.measure(u))))
                .collect();
            nbrs.map(|n| (j, n))
        })
        .collect();
    let mut worst = 0.0_f64;
    for i in 1..nx - 1 {
        let row = |k: usize| &f.values[k * nv..(k + 1) * nv];
        let (prev, cur, next) = (row(i - 1), row(i), row(i + 1));
        for (j, nbrs) in &inner {
            let second = (prev[*j] - 2.0 * cur[*j] + next[*j]) / (h * h);
            let lap: f64 = nbrs.iter().map(|&(jv, p)| p * (cur[jv] - cur[*j])).sum();
            worst = worst.max((second + lap).abs());
        }
    }
    worst
}

/// `ξ(x,·) = Σ_λ cosh(x √(1-λ)) ⟨g, e_λ⟩_m e_λ` on the grid `-r, -r+h, …, r`.
pub fn cosh_extension_spectral(p: &MarkovOperator, g: &[f64], r: f64, h: f64) -> Result<MixedFunction> {
    check_len(p, g)?;
    let grid = interval_grid(r, h)?;
    let dec = p.spectral_decomposition()?;
    let vertices: Vec<usize> = (0..p.len()).collect();
    let mut values = Vec::with_capacity(grid.len() * p.len());
    for &x in &grid {
        values.extend(dec.apply_function(g, |l| (x * (1.0 - l).max(0.0).sqrt()).cosh()));
    }
    Ok(MixedFunction {
        grid,
        vertices,
        values,
    })
}

/// `ξ(x,·) = Σ_k x^{2k}/(2k)! (I - P)^k g`, stopped once a term falls below
/// `1e-14` times the running sum.
pub fn cosh_extension_series(p: &MarkovOperator, g: &[f64], r: f64, h: f64, k_max: usize) -> Result<MixedFunction> {
    check_len(p, g)?;
    let grid = interval_grid(r, h)?;
    let vertices: Vec<usize> = (0..p.len()).collect();
    let laplace = |f: &[f64]| -> Vec<f64> {
        let pf = p.apply_unchecked(f);
        f.iter().zip(&pf).map(|(a, b)| a - b).collect()
    };
    let mut values = Vec::with_capacity(grid.len() * p.len());
    for &x in &grid {
        let mut term = g.to_vec();
        let mut sum = g.to_vec();
        let mut converged = false;
        let mut last = f64::INFINITY;
        for k in 1..=k_max {
            let lt = laplace(&term);
            let factor = x * x / ((2 * k - 1) * 2 * k) as f64;
            term = lt.iter().map(|v| v * factor).collect();
            for (s, t) in sum.iter_mut().zip(&term) {
                *s += t;
            }
            last = term.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let scale = sum.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if last <= 1e-14 * scale.max(1e-300) {
                converged = true;
                break;
            }
        }
        if !converged && k_max > 0 {
            return Err(Error::SeriesNotConverged { k_max, last_term: last });
        }
        values.extend(sum);
    }
    Ok(MixedFunction {
        grid,
        vertices,
        values,
    })
}

/// Spectral evaluation when the graph fits the dense limit, the series otherwise.
pub fn cosh_extension(p: &MarkovOperator, g: &[f64], r: f64, h: f64, k_max: usize) -> Result<MixedFunction> {
    if p.len() <= crate::markov::DENSE_LIMIT {
        cosh_extension_spectral(p, g, r, h)
    } else {
        cosh_extension_series(p, g, r, h, k_max)
    }
}

fn check_len(p: &MarkovOperator, g: &[f64]) -> Result<()> {
    if g.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: g.len(),
        });
    }
    Ok(())
}

fn interval_grid(r: f64, h: f64) -> Result<Vec<f64>> {
    let steps = r / h;
    if !(h > 0.0) || (steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0 {
        return Err(Error::InvalidParameter(format!("r / h = {steps} must be a positive integer")));
    }
    let half = steps.round() as i64;
    Ok((-half..=half).map(|i| i as f64 * h).collect())
}

/// Dirichlet data on `grid × (B ∪ ∂B)`; only boundary elements are read.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pub values: MixedFunction,
}

impl BoundaryData {
    pub fn from_fn<F: Fn(usize, usize) -> f64>(domain: &MixedDomain, f: F) -> Self {
        let nv = domain.vertices.len();
        let mut values = vec![0.0; domain.grid.len() * nv];
        for i in 0..domain.grid.len() {
            for (j, &u) in domain.vertices.iter().enumerate() {
                values[i * nv + j] = f(i, u);
            }
        }
        Self {
            values: MixedFunction {
                grid: domain.grid.clone(),
                vertices: domain.vertices.clone(),
                values,
            },
        }
    }

    pub fn constant(domain: &MixedDomain, c: f64) -> Self {
        Self::from_fn(domain, |_, _| c)
    }
}

/// Reusable fast-diagonalisation solver for one domain.
///
/// With `A = (I - P)` restricted to `B` and `M = diag(m)`, the symmetric matrix
/// `M^{1/2} A M^{-1/2} = W Λ Wᵀ` diagonalises `A = V Λ V⁻¹` with
/// `V = M^{-1/2} W`. In that basis each mode is a tridiagonal problem in `x`.
#[derive(Debug, Clone)]
pub struct HarmonicSolver {
    domain: MixedDomain,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    lambda: Vec<f64>,
    /// `P(u, w)` for `u ∈ B`, `w ∈ ∂B`.
    coupling: DMatrix<f64>,
}

impl HarmonicSolver {
    pub fn new(domain: &MixedDomain) -> Result<Self> {
        let g = &domain.graph;
        let nb = domain.ball.len();
        let sqrt_m: Vec<f64> = domain.ball.iter().map(|&u| g.measure(u).sqrt()).collect();
        let mut sym = DMatrix::<f64>::identity(nb, nb);
        for (a, &u) in domain.ball.iter().enumerate() {
            for &(w, mu) in g.neighbors(u) {
                if let Ok(b) = domain.ball.binary_search(&w) {
                    sym[(a, b)] -= mu / (sqrt_m[a] * sqrt_m[b]);
                }
            }
        }
        let eig = SymmetricEigen::new(sym);
        if eig.eigenvalues.iter().any(|&l| l < -1e-10) {
            return Err(Error::SingularSystem);
        }
        let w = eig.eigenvectors;
        let v = DMatrix::from_fn(nb, nb, |a, k| w[(a, k)] / sqrt_m[a]);
        let v_inv = DMatrix::from_fn(nb, nb, |k, a| w[(a, k)] * sqrt_m[a]);
        let nd = domain.boundary.len();
        let mut coupling = DMatrix::zeros(nb, nd);
        for (a, &u) in domain.ball.iter().enumerate() {
            for &(wv, mu) in g.neighbors(u) {
                if let Ok(b) = domain.boundary.binary_search(&wv) {
                    coupling[(a, b)] = mu / g.measure(u);
                }
            }
        }
        Ok(Self {
            domain: domain.clone(),
            v,
            v_inv,
            lambda: eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect(),
            coupling,
        })
    }

    pub fn domain(&self) -> &MixedDomain {
        &self.domain
    }

    /// Solves `f(x-h,u) - 2f(x,u) + f(x+h,u) + h² Δ_X f(x,u) = 0` on the interior.
    pub fn solve(&self, data: &BoundaryData) -> Result<MixedFunction> {
        let d = &self.domain;
        let nx = d.grid.len();
        let last = nx - 1;
        let nb = d.ball.len();
        let nd = d.boundary.len();
        let h2 = d.h * d.h;
        let src = &data.values;
        if src.grid.len() != nx || src.vertices != d.vertices {
            return Err(Error::DimensionMismatch {
                expected: nx * d.vertices.len(),
                got: src.values.len(),
            });
        }

        let ball_at = |i: usize| -> Vec<f64> { d.ball.iter().map(|&u| src.get(i, u)).collect() };
        let c0 = &self.v_inv * nalgebra::DVector::from_vec(ball_at(0));
        let cn = &self.v_inv * nalgebra::DVector::from_vec(ball_at(last));
        // rho[:, i] = -h² V⁻¹ P_{B,∂B} g_i
        let sides = DMatrix::from_fn(nd, nx, |b, i| src.get(i, d.boundary[b]));
        let rho = &self.v_inv * (&self.coupling * sides) * (-h2);

        let mut coeff = DMatrix::<f64>::zeros(nb, nx);
        coeff.set_column(0, &c0);
        coeff.set_column(last, &cn);
        let mut cp = vec![0.0; nx];
        let mut dp = vec![0.0; nx];
        for k in 0..nb {
            let diag = -(2.0 + h2 * self.lambda[k]);
            // Thomas algorithm on i = 1..last-1 with unit off-diagonals
            for i in 1..last {
                let mut rhs = rho[(k, i)];
                if i == 1 {
                    rhs -= c0[k];
                }
                if i == last - 1 {
                    rhs -= cn[k];
                }
                let denom = if i == 1 { diag } else { diag - cp[i - 1] };
                if denom.abs() < 1e-300 {
                    return Err(Error::SingularSystem);
                }
                cp[i] = 1.0 / denom;
                dp[i] = if i == 1 { rhs / denom } else { (rhs - dp[i - 1]) / denom };
            }
            let mut next = 0.0;
            for i in (1..last).rev() {
                let val = if i == last - 1 { dp[i] } else { dp[i] - cp[i] * next };
                coeff[(k, i)] = val;
                next = val;
            }
        }
        let ball_values = &self.v * coeff;

        let nv = d.vertices.len();
        let mut values = src.values.clone();
        for (a, &u) in d.ball.iter().enumerate() {
            let j = d.vertices.binary_search(&u).unwrap();
            for i in 1..last {
                values[i * nv + j] = ball_values[(a, i)];
            }
        }
        Ok(MixedFunction {
            grid: d.grid.clone(),
            vertices: d.vertices.clone(),
            values,
        })
    }
}

/// One-shot solve; see [`HarmonicSolver`].
pub fn solve_bvp(domain: &MixedDomain, data: &BoundaryData) -> Result<MixedFunction> {
    HarmonicSolver::new(domain)?.solve(data)
}

/// Scale-aware harmonicity tolerance `10 h² max|f|`.
pub fn harmonic_tolerance(domain: &MixedDomain, f: &MixedFunction) -> f64 {
    10.0 * domain.h * domain.h * f.max_abs()
}

fn check_harmonic(domain: &MixedDomain, f: &MixedFunction) -> Result<f64> {
    let p = MarkovOperator::new(domain.graph.clone());
    let residual = mixed_residual(&p, f);
    let tolerance = harmonic_tolerance(domain, f);
    if residual > tolerance {
        return Err(Error::NotHarmonic { residual, tolerance });
    }
    Ok(residual)
}

/// Points `(i, u)` with `u ∈ B` and `x² + d(u)² < ρ²`.
fn points_within(domain: &MixedDomain, rho: f64) -> impl Iterator<Item = (usize, usize)> + '_ {
    domain.grid.iter().enumerate().flat_map(move |(i, &x)| {
        domain
            .ball
            .iter()
            .copied()
            .filter(move |&u| domain.distance(x, u) < rho)
            .map(move |u| (i, u))
    })
}

/// `sup f / inf f` over the half ball `x² + d(c,u)² < (r/2)²`.
pub fn harnack_ratio(domain: &MixedDomain, f: &MixedFunction) -> Result<f64> {
    check_harmonic(domain, f)?;
    harnack_ratio_unchecked(domain, f)
}

fn harnack_ratio_unchecked(domain: &MixedDomain, f: &MixedFunction) -> Result<f64> {
    let mut sup = f64::MIN;
    let mut inf = f64::MAX;
    for (i, u) in points_within(domain, domain.r / 2.0) {
        let v = f.get(i, u);
        sup = sup.max(v);
        inf = inf.min(v);
    }
    if !(inf > 0.0) {
        return Err(Error::NonPositive { min: inf });
    }
    Ok(sup / inf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackSample {
    pub id: usize,
    pub spike: bool,
    pub ratio: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackEstimate {
    pub r: f64,
    pub h: f64,
    pub max_ratio: f64,
    pub samples: Vec<HarnackSample>,
}

/// Boundary data for sample `id`: the first `⌈samples/2⌉` are unit spikes at
/// the boundary elements nearest the centre, the rest uniform on `[0, 1]` from
/// stream `id` of the seeded generator.
pub fn sample_boundary_data(domain: &MixedDomain, samples: usize, id: usize, seed: u64) -> BoundaryData {
    let spikes = samples.div_ceil(2);
    let elements = domain.boundary_elements();
    if id < spikes && id < elements.len() {
        let (si, su) = elements[id];
        BoundaryData::from_fn(domain, |i, u| if i == si && u == su { 1.0 } else { 0.0 })
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64);
        let nv = domain.vertices.len();
        let draws: Vec<f64> = (0..domain.grid.len() * nv).map(|_| rng.gen::<f64>()).collect();
        BoundaryData {
            values: MixedFunction {
                grid: domain.grid.clone(),
                vertices: domain.vertices.clone(),
                values: draws,
            },
        }
    }
}

/// Solved harmonic functions for every sample, in order.
pub fn harmonic_samples(domain: &MixedDomain, samples: usize, seed: u64) -> Result<Vec<MixedFunction>> {
    let solver = HarmonicSolver::new(domain)?;
    (0..samples)
        .into_par_iter()
        .map(|id| solver.solve(&sample_boundary_data(domain, samples, id, seed)))
        .collect()
}

/// Largest Harnack ratio over seeded boundary data on `[-r, r] × B_r(center)`.
pub fn estimate_harnack_constant(
    graph: &WeightedGraph,
    center: usize,
    r: f64,
    h: f64,
    samples: usize,
    seed: u64,
) -> Result<HarnackEstimate> {
    let domain = MixedDomain::new(graph.clone(), center, r, h)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let p = MarkovOperator::new(graph.clone());
    let fs = harmonic_samples(&domain, samples, seed)?;
    let spikes = samples.div_ceil(2).min(domain.boundary_elements().len());
    let rows: Vec<HarnackSample> = fs
        .par_iter()
        .enumerate()
        .map(|(id, f)| -> Result<HarnackSample> {
            let residual = mixed_residual(&p, f);
            let tolerance = harmonic_tolerance(&domain, f);
            if residual > tolerance {
                return Err(Error::NotHarmonic { residual, tolerance });
            }
            Ok(HarnackSample {
                id,
                spike: id < spikes,
                ratio: harnack_ratio_unchecked(&domain, f)?,
                residual,
            })
        })
        .collect::<Result<_>>()?;
    let max_ratio = rows.iter().map(|s| s.ratio).fold(1.0, f64::max);
    Ok(HarnackEstimate {
        r,
        h,
        max_ratio,
        samples: rows,
    })
}

/// `sup_{δB} |f| / (π(B)^{-1} ∫_B f² dπ)^{1/2}`, with `π` the grid cell length
/// clipped to `B` times `m(u)`.
pub fn estimate_sobolev_constant(domain: &MixedDomain, f: &MixedFunction, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("delta = {delta} outside (0, 1]")));
    }
    let g = &domain.graph;
    let (mut mass, mut energy) = (0.0, 0.0);
    for i in 0..domain.grid.len() {
        for &u in &domain.ball {
            let w = domain.cell_weight(i, u, domain.r) * g.measure(u);
            let v = f.get(i, u);
            mass += w;
            energy += w * v * v;
        }
    }
    let sup = points_within(domain, delta * domain.r)
        .map(|(i, u)| f.get(i, u).abs())
        .fold(0.0, f64::max);
    if energy == 0.0 {
        return Ok(if sup == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(sup / (energy / mass).sqrt())
}

/// `max_λ λ π(B'' ∩ {|log f - c₃| > λ}) / π(B)` with `B'' = ¼B` and `c₃` the
/// `π`-mean of `log f` over `B''`.
pub fn log_levelset_check(domain: &MixedDomain, f: &MixedFunction, lambda_grid: &[f64]) -> Result<f64> {
    let g = &domain.graph;
    let quarter = domain.r / 4.0;
    let mut cells = Vec::new();
    let mut mass_b = 0.0;
    for i in 0..domain.grid.len() {
        for &u in &domain.ball {
            mass_b += domain.cell_weight(i, u, domain.r) * g.measure(u);
            let w = domain.cell_weight(i, u, quarter) * g.measure(u);
            if w > 0.0 {
                let v = f.get(i, u);
                if !(v > 0.0) {
                    return Err(Error::NonPositive { min: v });
                }
                cells.push((w, v.ln()));
            }
        }
    }
    let mass_q: f64 = cells.iter().map(|c| c.0).sum();
    if mass_q == 0.0 {
        return Ok(0.0);
    }
    let c3 = cells.iter().map(|(w, l)| w * l).sum::<f64>() / mass_q;
    Ok(lambda_grid
        .iter()
        .map(|&lambda| {
            let level = cells
                .iter()
                .filter(|(_, l)| (l - c3).abs() > lambda)
                .fold(0.0, |acc, c| acc + c.0);
            lambda * level / mass_b
        })
        .fold(0.0, f64::max))
}

/// Slack in `(ψ₁²/f₁ - ψ₂²/f₂)(f₁ - f₂) ≤ 36(ψ₁ - ψ₂)² - ½ min(ψ₁², ψ₂²)(f₁ - f₂)²/(f₁f₂)`,
/// as `rhs - lhs` plus a rounding allowance; nonnegative when the inequality holds.
pub fn delmotte_slack(psi1: f64, psi2: f64, f1: f64, f2: f64) -> f64 {
    let df = f1 - f2;
    let lhs = (psi1 * psi1 / f1 - psi2 * psi2 / f2) * df;
    let first = 36.0 * (psi1 - psi2) * (psi1 - psi2);
    let second = 0.5 * (psi1 * psi1).min(psi2 * psi2) * df * df / (f1 * f2);
    let allowance = 16.0 * f64::EPSILON * (lhs.abs() + first + second);
    first - second - lhs + allowance
}

/// Slack in `(log x)² ≤ (x - 1)²/x`, with a rounding allowance.
pub fn log_inequality_slack(x: f64) -> f64 {
    let lhs = x.ln().powi(2);
    let rhs = (x - 1.0).powi(2) / x;
    rhs - lhs + 16.0 * f64::EPSILON * rhs.max(lhs)
}

/// Least-squares slope of `log residual` against `log h`.
pub fn convergence_order(steps: &[f64], residuals: &[f64]) -> Result<f64> {
    if steps.len() != residuals.len() || steps.len() < 2 {
        return Err(Error::InvalidParameter("need at least two (h, residual) pairs".into()));
    }
    if residuals.iter().chain(steps).any(|&v| !(v > 0.0)) {
        return Err(Error::NonPositive {
            min: residuals.iter().copied().fold(f64::INFINITY, f64::min),
        });
    }
    let xs: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// Per-sample Sobolev ratios at each `δ` and the level-set statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevSample {
    pub id: usize,
    pub sobolev: Vec<f64>,
    pub levelset: f64,
}

impl SobolevSample {
    pub fn monotone(&self) -> bool {
        self.sobolev.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12))
    }
}

/// Runs the Harnack sample family through the Sobolev and level-set statistics.
pub fn sobolev_samples(
    domain: &MixedDomain,
    samples: usize,
    seed: u64,
    deltas: &[f64],
    lambda_grid: &[f64],
) -> Result<Vec<SobolevSample>> {
    let fs = harmonic_samples(domain, samples, seed)?;
    fs.par_iter()
        .enumerate()
        .map(|(id, f)| {
            check_harmonic(domain, f)?;
            let sobolev = deltas
                .iter()
                .map(|&d| estimate_sobolev_constant(domain, f, d))
                .collect::<Result<Vec<_>>>()?;
            Ok(SobolevSample {
                id,
                sobolev,
                levelset: log_levelset_check(domain, f, lambda_grid)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub trials: usize,
    pub delmotte_violations: usize,
    pub log_violations: usize,
    /// Smallest slack seen, a negative value marks a violation.
    pub delmotte_min_slack: f64,
    pub log_min_slack: f64,
}

/// Randomised trials of both scalar inequalities.
///
/// `ψᵢ = (1 - dᵢ/ρ)⁺` with `dᵢ/ρ` uniform on `[0, 1.25]`, `fᵢ` log-uniform on
/// `[1e-6, 1e6]`, and `x` log-uniform on `[1e-12, 1e12]`.
pub fn inequality_trials(trials: usize, seed: u64) -> InequalityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = InequalityReport {
        trials,
        delmotte_violations: 0,
        log_violations: 0,
        delmotte_min_slack: f64::INFINITY,
        log_min_slack: f64::INFINITY,
    };
    let log_uniform = |rng: &mut ChaCha8Rng, decades: f64| 10f64.powf(rng.gen_range(-decades..=decades));
    for _ in 0..trials {
        let psi1 = (1.0 - rng.gen_range(0.0..=1.25_f64)).max(0.0);
        let psi2 = (1.0 - rng.gen_range(0.0..=1.25_f64)).max(0.0);
        let f1 = log_uniform(&mut rng, 6.0);
        let f2 = log_uniform(&mut rng, 6.0);
        let d = delmotte_slack(psi1, psi2, f1, f2);
        report.delmotte_min_slack = report.delmotte_min_slack.min(d);
        if d < 0.0 {
            report.delmotte_violations += 1;
        }
        let l = log_inequality_slack(log_uniform(&mut rng, 12.0));
        report.log_min_slack = report.log_min_slack.min(l);
        if l < 0.0 {
            report.log_violations += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::families::{cycle, grid, path};

    fn segment_domain(r: f64, h: f64) -> MixedDomain {
        let n = (4.0 * r) as usize + 1;
        MixedDomain::new(path(n).unwrap(), n / 2, r, h).unwrap()
    }

    #[test]
    fn domain_layout() {
        let d = segment_domain(4.0, 0.5);
        assert_eq!(d.grid().len(), 17);
        assert!(d.grid().contains(&0.0));
        assert_eq!(d.ball().len(), 7);
        assert_eq!(d.boundary().len(), 2);
        assert!(MixedDomain::new(path(5).unwrap(), 2, 1.0, 0.3).is_err());
        // corners are not boundary elements
        let el = d.boundary_elements();
        assert_eq!(el.len(), 2 * 7 + 15 * 2);
        assert_eq!(el[0].1, d.center());
    }

    #[test]
    fn constants_are_preserved() {
        let d = segment_domain(4.0, 0.5);
        let f = solve_bvp(&d, &BoundaryData::constant(&d, 2.5)).unwrap();
        assert!(f.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
        assert!((harnack_ratio(&d, &f).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interval_only_is_linear() {
        let g = WeightedGraph::from_edges([(0, 0, 1.0)]).unwrap();
        let d = MixedDomain::new(g, 0, 1.0, 0.125).unwrap();
        let data = BoundaryData::from_fn(&d, |i, _| if i == 0 { 3.0 } else if i == 16 { -1.0 } else { 0.0 });
        let f = solve_bvp(&d, &data).unwrap();
        for (i, x) in d.grid().iter().enumerate() {
            let expect = 3.0 + (x + 1.0) / 2.0 * (-4.0);
            assert!((f.get(i, 0) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn solution_is_harmonic_and_bounded() {
        let d = MixedDomain::new(grid(13, 13).unwrap(), 84, 4.0, 0.5).unwrap();
        let data = sample_boundary_data(&d, 2, 1, 9);
        let f = solve_bvp(&d, &data).unwrap();
        let p = MarkovOperator::new(d.graph().clone());
        assert!(mixed_residual(&p, &f) < 1e-10);
        let (lo, hi) = (0.0, 1.0);
        assert!(f.values.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn spike_ratio_finite() {
        let d = segment_domain(4.0, 0.5);
        let data = BoundaryData::from_fn(&d, |_, _| 1.0);
        let mut bumped = data.clone();
        let j = d.vertices().iter().position(|&u| u == d.boundary()[0]).unwrap();
        let nv = d.vertices().len();
        bumped.values.values[8 * nv + j] = 2.0;
        let f = solve_bvp(&d, &bumped).unwrap();
        let ratio = harnack_ratio(&d, &f).unwrap();
        assert!(ratio > 1.0 && ratio.is_finite());
        assert!((harnack_ratio(&d, &f.scaled(7.0)).unwrap() - ratio).abs() < 1e-12);
    }

    #[test]
    fn nonharmonic_rejected() {
        let d = segment_domain(4.0, 0.125);
        let c = d.center();
        let f = MixedFunction::from_fn(d.grid(), d.vertices(), |_, u| if u == c { 1.5 } else { 1.0 });
        assert!(matches!(harnack_ratio(&d, &f), Err(Error::NotHarmonic { .. })));
        let neg = MixedFunction::from_fn(d.grid(), d.vertices(), |x, _| x);
        assert!(matches!(harnack_ratio(&d, &neg), Err(Error::NonPositive { .. })));
    }

    #[test]
    fn cosh_paths_agree() {
        let p = MarkovOperator::new(cycle(7).unwrap());
        let g: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let a = cosh_extension_spectral(&p, &g, 1.0, 0.25).unwrap();
        let b = cosh_extension_series(&p, &g, 1.0, 0.25, 60).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
        let mid = a.grid.iter().position(|&x| x == 0.0).unwrap();
        for u in 0..7 {
            assert!((a.get(mid, u) - g[u]).abs() < 1e-13);
            assert!((a.get(0, u) - a.get(8, u)).abs() < 1e-13);
        }
        assert!(matches!(
            cosh_extension_series(&p, &g, 1.0, 0.25, 2),
            Err(Error::SeriesNotConverged { .. })
        ));
    }

    #[test]
    fn two_vertex_cosh() {
        let p = MarkovOperator::new(path(2).unwrap());
        let xi = cosh_extension(&p, &[1.0, -1.0], 1.0, 0.125, 50).unwrap();
        for (i, &x) in xi.grid.iter().enumerate() {
            let c = (x * 2f64.sqrt()).cosh();
            assert!((xi.get(i, 0) - c).abs() < 1e-13 && (xi.get(i, 1) + c).abs() < 1e-13);
        }
        let lin = MixedFunction::from_fn(&xi.grid, &xi.vertices, |x, _| x);
        assert!(mixed_residual(&p, &lin) < 1e-12);
    }

    #[test]
    fn sobolev_and_levelsets_on_constants() {
        let d = segment_domain(4.0, 0.5);
        let f = MixedFunction::from_fn(d.grid(), d.vertices(), |_, _| 3.0);
        assert!((estimate_sobolev_constant(&d, &f, 0.5).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(log_levelset_check(&d, &f, &[0.5, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn scalar_inequalities_spot_checks() {
        assert!(delmotte_slack(0.3, 0.9, 1.5, 0.2) >= 0.0);
        assert!(delmotte_slack(1.0, 1.0, 2.0, 2.0) >= 0.0);
        for x in [1e-8, 0.5, 1.0, 1.0 + 1e-9, 3.0, 1e8] {
            assert!(log_inequality_slack(x) >= 0.0);
        }
    }
}
