//! Volume doubling and weak Poincaré certificates, and the product-space constants.
//!
//! Dirichlet energy convention used throughout the crate:
//! `E(f) = Σ_u Σ_v μ_uv (f(u) - f(v))²`, each edge counted from both ends.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Ball, WeightedGraph};
use crate::error::{Error, Result};

/// A finite metric measure space with a Dirichlet form, enough to state
/// doubling and Poincaré inequalities.
pub trait MetricMeasureSpace: Sync {
    fn size(&self) -> usize;

    fn mass(&self, i: usize) -> f64;

    fn distances_from(&self, i: usize) -> Vec<f64>;

    /// Neighbours `j ≠ i` with the weight carried by the pair in the Dirichlet form.
    fn energy_neighbors(&self, i: usize) -> Vec<(usize, f64)>;

    fn metric_ball(&self, center: usize, radius: f64) -> Ball {
        let dist = self.distances_from(center);
        Ball {
            center,
            radius,
            members: (0..self.size()).filter(|&v| dist[v] < radius).collect(),
        }
    }
}

impl MetricMeasureSpace for WeightedGraph {
    fn size(&self) -> usize {
        self.len()
    }

    fn mass(&self, i: usize) -> f64 {
        self.measure(i)
    }

    fn distances_from(&self, i: usize) -> Vec<f64> {
        self.bfs_distances(i).into_iter().map(|d| d as f64).collect()
    }

    fn energy_neighbors(&self, i: usize) -> Vec<(usize, f64)> {
        self.neighbors(i)
            .iter()
            .copied()
            .filter(|&(j, _)| j != i)
            .collect()
    }
}

/// Product of two graphs with the Pythagorean metric `√(d₁² + d₂²)` and product
/// measure `m₁ ⊗ m₂`.
///
/// The gradient splits as `|∇f|² = |∇₁f|² + |∇₂f|²`, so integrating against the
/// product measure gives edge weights `μ₁(u₁,v₁)·m₂(u₂)` along the first factor
/// and `m₁(u₁)·μ₂(u₂,v₂)` along the second. Vertex `(u₁, u₂)` has index
/// `u₁ * |X₂| + u₂`.
#[derive(Debug, Clone)]
pub struct ProductSpace<'a> {
    first: &'a WeightedGraph,
    second: &'a WeightedGraph,
    dist_first: Vec<Vec<usize>>,
    dist_second: Vec<Vec<usize>>,
}

impl<'a> ProductSpace<'a> {
    pub fn new(first: &'a WeightedGraph, second: &'a WeightedGraph) -> Self {
        let dist_first = (0..first.len()).map(|u| first.bfs_distances(u)).collect();
        let dist_second = (0..second.len()).map(|u| second.bfs_distances(u)).collect();
        Self {
            first,
            second,
            dist_first,
            dist_second,
        }
    }

    pub fn index(&self, u1: usize, u2: usize) -> usize {
        u1 * self.second.len() + u2
    }

    pub fn split(&self, i: usize) -> (usize, usize) {
        (i / self.second.len(), i % self.second.len())
    }
}

impl MetricMeasureSpace for ProductSpace<'_> {
    fn size(&self) -> usize {
        self.first.len() * self.second.len()
    }

    fn mass(&self, i: usize) -> f64 {
        let (u1, u2) = self.split(i);
        self.first.measure(u1) * self.second.measure(u2)
    }

    fn distances_from(&self, i: usize) -> Vec<f64> {
        let (u1, u2) = self.split(i);
        let d1 = &self.dist_first[u1];
        let d2 = &self.dist_second[u2];
        let mut out = Vec::with_capacity(self.size());
        for &a in d1 {
            for &b in d2 {
                out.push(((a * a + b * b) as f64).sqrt());
            }
        }
        out
    }

    fn energy_neighbors(&self, i: usize) -> Vec<(usize, f64)> {
        let (u1, u2) = self.split(i);
        let m1 = self.first.measure(u1);
        let m2 = self.second.measure(u2);
        let along_first = self
            .first
            .neighbors(u1)
            .iter()
            .filter(|&&(v1, _)| v1 != u1)
            .map(|&(v1, w)| (self.index(v1, u2), w * m2));
        let along_second = self
            .second
            .neighbors(u2)
            .iter()
            .filter(|&&(v2, _)| v2 != u2)
            .map(|&(v2, w)| (self.index(u1, v2), m1 * w));
        along_first.chain(along_second).collect()
    }
}

/// Doubling ratio `m(B(x,2r)) / m(B(x,r))` for every integer `r ∈ 1..=⌊r0⌋`,
/// maximised over all centres.
pub fn doubling_by_radius<S: MetricMeasureSpace>(space: &S, r0: f64) -> Vec<(usize, f64)> {
    let r_max = if r0 >= 1.0 { r0.floor() as usize } else { 0 };
    if r_max == 0 {
        return Vec::new();
    }
    let per_center: Vec<Vec<f64>> = (0..space.size())
        .into_par_iter()
        .map(|x| {
            let mut pairs: Vec<(f64, f64)> = space
                .distances_from(x)
                .into_iter()
                .enumerate()
                .map(|(v, d)| (d, space.mass(v)))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut prefix = Vec::with_capacity(pairs.len() + 1);
            prefix.push(0.0);
            for &(_, m) in &pairs {
                prefix.push(prefix.last().unwrap() + m);
            }
            let vol = |rho: f64| prefix[pairs.partition_point(|&(d, _)| d < rho)];
            (1..=r_max)
                .map(|r| vol(2.0 * r as f64) / vol(r as f64))
                .collect()
        })
        .collect();
    (1..=r_max)
        .map(|r| {
            let worst = per_center
                .iter()
                .map(|row| row[r - 1])
                .fold(1.0_f64, f64::max);
            (r, worst)
        })
        .collect()
}

/// Smallest `D` with `m(B(x,2r)) ≤ D m(B(x,r))` for all centres and integer `r ≤ r0`.
pub fn estimate_doubling<S: MetricMeasureSpace>(space: &S, r0: f64) -> f64 {
    doubling_by_radius(space, r0)
        .into_iter()
        .map(|(_, d)| d)
        .fold(1.0, f64::max)
}

/// Largest value of `Σ_{u∈B} m(u)(f(u) - f_B)² / E_{2B}(f)` over non-constant `f`
/// on `(2B)*`, with `E_{2B}(f) = Σ_{u∈2B} Σ_v μ_uv (f(u) - f(v))²`.
///
/// `members` is `B`, `doubled` is `2B`; both must be sorted. The value is the
/// top eigenvalue of the variance form against the energy form on the
/// quotient by constants, obtained by pinning one vertex of `(2B)*` to zero.
pub fn poincare_quotient<S: MetricMeasureSpace>(
    space: &S,
    members: &[usize],
    doubled: &[usize],
) -> Result<f64> {
    let mut domain: Vec<usize> = doubled.to_vec();
    for &u in doubled {
        domain.extend(space.energy_neighbors(u).into_iter().map(|(v, _)| v));
    }
    domain.extend_from_slice(members);
    domain.sort_unstable();
    domain.dedup();
    let n = domain.len();
    let pos = |v: usize| domain.binary_search(&v).expect("vertex in closure");

    let mut energy = DMatrix::<f64>::zeros(n, n);
    for &u in doubled {
        let i = pos(u);
        for (v, w) in space.energy_neighbors(u) {
            let j = pos(v);
            energy[(i, i)] += w;
            energy[(j, j)] += w;
            energy[(i, j)] -= w;
            energy[(j, i)] -= w;
        }
    }
    let mass_b: f64 = members.iter().map(|&u| space.mass(u)).sum();
    let mut variance = DMatrix::<f64>::zeros(n, n);
    for &u in members {
        let i = pos(u);
        variance[(i, i)] += space.mass(u);
        for &v in members {
            variance[(i, pos(v))] -= space.mass(u) * space.mass(v) / mass_b;
        }
    }

    // pin the last vertex of the closure
    let e = energy.view((0, 0), (n - 1, n - 1)).into_owned();
    let a = variance.view((0, 0), (n - 1, n - 1)).into_owned();
    let chol = e.cholesky().ok_or(Error::SingularSystem)?;
    let l = chol.l();
    let x = l.solve_lower_triangular(&a).ok_or(Error::SingularSystem)?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::SingularSystem)?;
    let c = (&c + c.transpose()) * 0.5;
    let top = SymmetricEigen::new(c)
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0_f64, f64::max);
    Ok(top)
}

/// Smallest `P` with `Σ_B m (f - f_B)² ≤ P r² E_{2B}(f)` for this ball.
pub fn estimate_poincare<S: MetricMeasureSpace>(space: &S, ball: &Ball) -> Result<f64> {
    if ball.members.len() < 2 {
        return Err(Error::DegenerateBall {
            center: ball.center,
            radius: ball.radius,
        });
    }
    let doubled = space.metric_ball(ball.center, 2.0 * ball.radius);
    let q = poincare_quotient(space, &ball.members, &doubled.members)?;
    Ok(q / (ball.radius * ball.radius))
}

/// Doubling constant inherited by the Pythagorean product:
/// `D = D_M D_X (2√2)^{(log D_M + log D_X)/log 2}`.
pub fn product_doubling_constant(d_first: f64, d_second: f64) -> Result<f64> {
    for d in [d_first, d_second] {
        if !(d >= 1.0) {
            return Err(Error::InvalidConstant(d));
        }
    }
    let exponent = (d_first.ln() + d_second.ln()) / std::f64::consts::LN_2;
    Ok(d_first * d_second * (2.0 * std::f64::consts::SQRT_2).powf(exponent))
}

/// Poincaré constant inherited by the product: `2 P_M P_X`.
pub fn product_poincare_constant(p_first: f64, p_second: f64) -> f64 {
    2.0 * p_first * p_second
}

/// Volume comparison multiplier `D (r/s)^{log D / log 2}`.
pub fn doubling_exponent_bound(doubling: f64, r: f64, s: f64) -> f64 {
    doubling * (r / s).powf(doubling.ln() / std::f64::consts::LN_2)
}

/// Constants certified for a graph up to radius `r0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub doubling: f64,
    pub poincare: f64,
    pub alpha: f64,
    pub r0: f64,
}

/// Doubling over all centres and radii `≤ r0`, Poincaré over all balls with
/// integer radius in `2..=r0` (radius-1 balls are single vertices), and `Δ*(α)`.
pub fn geometry_report(g: &WeightedGraph, r0: f64) -> Result<GeometryReport> {
    let doubling = estimate_doubling(g, r0);
    let r_max = r0.floor().max(0.0) as usize;
    let poincare = (0..g.len())
        .into_par_iter()
        .map(|x| -> Result<f64> {
            let mut worst = 0.0_f64;
            for r in 2..=r_max {
                let ball = g.metric_ball(x, r as f64);
                if ball.members.len() < 2 {
                    continue;
                }
                worst = worst.max(estimate_poincare(g, &ball)?);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(GeometryReport {
        doubling,
        poincare,
        alpha: g.check_delta_star().alpha,
        r0,
    })
}

/// Measured product constants against the inherited ones, per radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductGeometryReport {
    pub first: GeometryReport,
    pub second: GeometryReport,
    pub doubling_bound: f64,
    pub poincare_bound: f64,
    /// `(r, measured doubling, measured Poincaré)` with Poincaré over the
    /// centres `0, stride, 2·stride, …`.
    pub per_radius: Vec<(usize, f64, f64)>,
}

impl ProductGeometryReport {
    /// Radii where a measured constant exceeds its bound.
    pub fn violations(&self) -> Vec<usize> {
        self.per_radius
            .iter()
            .filter(|&&(_, d, p)| d > self.doubling_bound * (1.0 + 1e-12) || p > self.poincare_bound * (1.0 + 1e-12))
            .map(|&(r, _, _)| r)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,doubling,doubling_bound,poincare,poincare_bound\n");
        for &(r, d, p) in &self.per_radius {
            out.push_str(&format!("{r},{d:e},{:e},{p:e},{:e}\n", self.doubling_bound, self.poincare_bound));
        }
        out
    }
}

pub fn product_geometry_check(
    first: &WeightedGraph,
    second: &WeightedGraph,
    r0: f64,
    stride: usize,
) -> Result<ProductGeometryReport> {
    let a = geometry_report(first, r0)?;
    let b = geometry_report(second, r0)?;
    let doubling_bound = product_doubling_constant(a.doubling, b.doubling)?;
    let poincare_bound = product_poincare_constant(a.poincare, b.poincare);
    let space = ProductSpace::new(first, second);
    let doubling = doubling_by_radius(&space, r0);
    let centers: Vec<usize> = (0..space.size()).step_by(stride.max(1)).collect();
    let per_radius = doubling
        .into_iter()
        .map(|(r, d)| -> Result<(usize, f64, f64)> {
            if r < 2 {
                return Ok((r, d, 0.0));
            }
            let p = centers
                .par_iter()
                .map(|&x| {
                    let ball = space.metric_ball(x, r as f64);
                    if ball.members.len() < 2 {
                        Ok(0.0)
                    } else {
                        estimate_poincare(&space, &ball)
                    }
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok((r, d, p))
        })
        .collect::<Result<_>>()?;
    Ok(ProductGeometryReport {
        first: a,
        second: b,
        doubling_bound,
        poincare_bound,
        per_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::families::{cycle, grid, path};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn product_constants() {
        assert_eq!(product_doubling_constant(1.0, 1.0).unwrap(), 1.0);
        assert!(close(product_doubling_constant(2.0, 2.0).unwrap(), 32.0, 1e-12));
        assert!(close(product_doubling_constant(4.0, 1.0).unwrap(), 32.0, 1e-12));
        assert_eq!(
            product_doubling_constant(0.5, 2.0),
            Err(Error::InvalidConstant(0.5))
        );
        assert_eq!(product_poincare_constant(0.0, 7.0), 0.0);
        assert_eq!(product_poincare_constant(1.0, 1.0), 2.0);
        assert_eq!(product_poincare_constant(0.25, 0.5), 0.25);
    }

    #[test]
    fn exponent_bound() {
        assert_eq!(doubling_exponent_bound(3.0, 5.0, 5.0), 3.0);
        assert!(close(doubling_exponent_bound(2.0, 4.0, 1.0), 8.0, 1e-12));
        assert!(close(doubling_exponent_bound(4.0, 2.0, 1.0), 16.0, 1e-12));
    }

    #[test]
    fn doubling_on_loop_vertex_is_one() {
        let g = WeightedGraph::from_edges([(0, 0, 1.0)]).unwrap();
        assert_eq!(estimate_doubling(&g, 5.0), 1.0);
    }

    #[test]
    fn doubling_on_segment_matches_brute_force() {
        let g = path(100).unwrap();
        let d = estimate_doubling(&g, 10.0);
        let mut brute = 1.0_f64;
        for x in 0..100_i64 {
            for r in 1..=10_i64 {
                let vol = |rho: i64| -> f64 {
                    (0..100_i64)
                        .filter(|&v| (v - x).abs() < rho)
                        .map(|v| if v == 0 || v == 99 { 1.0 } else { 2.0 })
                        .sum()
                };
                brute = brute.max(vol(2 * r) / vol(r));
            }
        }
        assert_eq!(d, brute);
        assert!(d <= 3.0);
    }

    #[test]
    fn doubling_on_grid_bounded() {
        let g = grid(30, 30).unwrap();
        let d = estimate_doubling(&g, 5.0);
        assert!(d > 1.0 && d <= 16.0, "D = {d}");
    }

    #[test]
    fn two_vertex_poincare_quotient() {
        let g = path(2).unwrap();
        let q = poincare_quotient(&g, &[0, 1], &[0, 1]).unwrap();
        assert!(close(q, 0.25, 1e-12), "{q}");
        // open ball of radius 2 holds both vertices; normalised by r² = 4
        let ball = g.ball(0, 2.0).unwrap();
        assert!(close(estimate_poincare(&g, &ball).unwrap(), 1.0 / 16.0, 1e-12));
        let single = g.ball(0, 1.0).unwrap();
        assert!(matches!(
            estimate_poincare(&g, &single),
            Err(Error::DegenerateBall { .. })
        ));
    }

    /// Dense oracle: maximise the Rayleigh quotient on the orthogonal
    /// complement of constants, built independently of the pinned-vertex route.
    fn dense_poincare_oracle(g: &WeightedGraph, center: usize, r: f64) -> f64 {
        let b = g.ball(center, r).unwrap().members;
        let b2 = g.ball(center, 2.0 * r).unwrap().members;
        let dom = g.closure(&b2);
        let n = dom.len();
        let idx = |v: usize| dom.iter().position(|&x| x == v).unwrap();
        let mut e = DMatrix::<f64>::zeros(n, n);
        for &u in &b2 {
            for &(v, w) in g.neighbors(u) {
                let (i, j) = (idx(u), idx(v));
                e[(i, i)] += w;
                e[(j, j)] += w;
                e[(i, j)] -= w;
                e[(j, i)] -= w;
            }
        }
        let mb: f64 = b.iter().map(|&u| g.measure(u)).sum();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for &u in &b {
            a[(idx(u), idx(u))] += g.measure(u);
            for &v in &b {
                a[(idx(u), idx(v))] -= g.measure(u) * g.measure(v) / mb;
            }
        }
        // orthonormal basis of 1^⊥ from the eigenvectors of the projector
        let mut proj = DMatrix::<f64>::identity(n, n);
        proj.add_scalar_mut(-1.0 / n as f64);
        proj.fill_diagonal(1.0 - 1.0 / n as f64);
        let eig = SymmetricEigen::new(proj);
        let cols: Vec<_> = (0..n)
            .filter(|&i| eig.eigenvalues[i] > 0.5)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
        let q = DMatrix::from_columns(&cols);
        let eq = q.transpose() * &e * &q;
        let aq = q.transpose() * &a * &q;
        let eeig = SymmetricEigen::new(eq);
        let inv_sqrt = &eeig.eigenvectors
            * DMatrix::from_diagonal(&eeig.eigenvalues.map(|x| 1.0 / x.sqrt()))
            * eeig.eigenvectors.transpose();
        let c = &inv_sqrt * aq * &inv_sqrt;
        let top = SymmetricEigen::new((&c + c.transpose()) * 0.5)
            .eigenvalues
            .max();
        top / (r * r)
    }

    #[test]
    fn poincare_matches_dense_oracle() {
        let g = path(41).unwrap();
        let ball = g.ball(20, 4.0).unwrap();
        let p = estimate_poincare(&g, &ball).unwrap();
        assert!((p - dense_poincare_oracle(&g, 20, 4.0)).abs() < 1e-10);

        let c = cycle(30).unwrap();
        let ball = c.ball(3, 3.0).unwrap();
        let p = estimate_poincare(&c, &ball).unwrap();
        assert!((p - dense_poincare_oracle(&c, 3, 3.0)).abs() < 1e-10);
    }

    #[test]
    fn product_space_basics() {
        let a = path(3).unwrap();
        let b = cycle(4).unwrap();
        let prod = ProductSpace::new(&a, &b);
        assert_eq!(prod.size(), 12);
        let i = prod.index(1, 2);
        assert_eq!(prod.split(i), (1, 2));
        assert_eq!(prod.mass(i), 2.0 * 2.0);
        let d = prod.distances_from(prod.index(0, 0));
        assert!(close(d[prod.index(2, 2)], 8.0_f64.sqrt(), 1e-15));
        // symmetric energy weights
        for u in 0..prod.size() {
            for (v, w) in prod.energy_neighbors(u) {
                let back = prod
                    .energy_neighbors(v)
                    .into_iter()
                    .find(|&(x, _)| x == u)
                    .unwrap()
                    .1;
                assert_eq!(w, back);
            }
        }
    }

    #[test]
    fn report_fields() {
        let g = cycle(12).unwrap();
        let rep = geometry_report(&g, 3.0).unwrap();
        assert!(rep.doubling >= 1.0 && rep.poincare > 0.0);
        assert_eq!(rep.alpha, 0.5);
        let json = serde_json::to_value(rep).unwrap();
        for key in ["doubling", "poincare", "alpha", "r0"] {
            assert!(json.get(key).is_some());
        }
    }
}
