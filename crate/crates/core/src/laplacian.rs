//! Functions of the Laplacian `K_F = F(I - P)` and their one-dimensional
//! counterparts: measures on ℤ built from the same power series.

use std::fmt::Write as _;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::markov::{KernelMatrix, MarkovOperator};
use crate::numeric::{Real, Weight};

/// `F(1 - t)` as a product `Π pᵢ(t)^{eᵢ}` of polynomial factors.
///
/// Keeping the factors lets operators be applied one well-conditioned factor
/// at a time; the expanded coefficients of `x^l (1 - x^k)ⁿ` reach `1e37` for
/// moderate `n` and cancel almost completely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSeries {
    factors: Vec<(Vec<f64>, usize)>,
    /// Bound on `Σ_{n>N} |aₙ|`; zero for polynomials.
    pub tail_bound: f64,
}

impl AnalyticSeries {
    /// `F(1 - t) = Σ coeffs[n] tⁿ`.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self {
            factors: vec![(coeffs, 1)],
            tail_bound: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::polynomial(vec![c])
    }

    /// `F(x) = x^l (1 - x^k)ⁿ`, i.e. `F(1 - t) = (1 - t)^l (1 - (1 - t)^k)ⁿ`.
    pub fn example_family(k: usize, l: usize, n: usize) -> Self {
        assert!(k >= 1, "k must be positive");
        let mut factors = Vec::new();
        if l > 0 {
            factors.push((vec![1.0, -1.0], l));
        }
        if n > 0 {
            // 1 - (1 - t)^k = Σ_{i≥1} (-1)^{i+1} C(k,i) tⁱ
            let mut g = vec![0.0; k + 1];
            let mut binom = 1.0;
            for (i, gi) in g.iter_mut().enumerate().skip(1) {
                binom = binom * (k + 1 - i) as f64 / i as f64;
                *gi = if i % 2 == 1 { binom } else { -binom };
            }
            factors.push((g, n));
        }
        Self {
            factors,
            tail_bound: 0.0,
        }
    }

    /// `(I - P)^p K_F`: multiplies `F(1 - t)` by `(1 - t)^p`.
    pub fn times_laplacian_power(&self, p: usize) -> Self {
        let mut out = self.clone();
        if p > 0 {
            out.factors.push((vec![1.0, -1.0], p));
        }
        out
    }

    pub fn factors(&self) -> &[(Vec<f64>, usize)] {
        &self.factors
    }

    pub fn degree(&self) -> usize {
        self.factors
            .iter()
            .map(|(p, e)| (p.len().saturating_sub(1)) * e)
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.factors
            .iter()
            .any(|(p, _)| p.iter().all(|&c| c == 0.0))
    }

    /// Exact coefficients `(a₀, …, a_N)` of the expanded product.
    pub fn coefficients_exact(&self) -> Vec<BigRational> {
        let mut acc = vec![<BigRational as Weight>::one()];
        for (poly, e) in &self.factors {
            let p: Vec<BigRational> = poly.iter().map(|&c| Weight::from_f64(c)).collect();
            for _ in 0..*e {
                let mut next = vec![<BigRational as Weight>::zero(); acc.len() + p.len() - 1];
                for (i, a) in acc.iter().enumerate() {
                    for (j, b) in p.iter().enumerate() {
                        next[i + j] = next[i + j].plus(&a.times(b));
                    }
                }
                acc = next;
            }
        }
        acc
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.coefficients_exact().iter().map(Weight::to_f64).collect()
    }

    /// `F(1 - t)` at a scalar `t`.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.factors
            .iter()
            .map(|(p, e)| {
                let v = p.iter().rev().fold(0.0, |acc, &c| acc * t + c);
                v.powi(*e as i32)
            })
            .product()
    }

    /// `K_F f = F(I - P) f`, factor by factor with Horner's scheme.
    pub fn apply<T: Real>(&self, p: &MarkovOperator, f: &[T]) -> Vec<T> {
        let mut out = f.to_vec();
        for (poly, e) in &self.factors {
            for _ in 0..*e {
                out = horner(p, poly, &out);
            }
        }
        out
    }

    /// `K_F f` by Horner's scheme on the expanded coefficients.
    pub fn apply_expanded<T: Real>(&self, p: &MarkovOperator, f: &[T]) -> Vec<T> {
        horner(p, &self.coefficients(), f)
    }

    /// `Σ aₙ μ^{*n}` for a measure `μ` on ℤ, factor by factor.
    pub fn substitute<W: Weight>(&self, mu: &LatticeMeasure<W>) -> LatticeMeasure<W> {
        let mut out = LatticeMeasure::delta(0);
        for (poly, e) in &self.factors {
            let q = poly_of_measure(poly, mu);
            out = out.convolve(&q.pow(*e));
        }
        out
    }
}

fn horner<T: Real>(p: &MarkovOperator, coeffs: &[f64], f: &[T]) -> Vec<T> {
    let Some((&top, rest)) = coeffs.split_last() else {
        return vec![T::zero(); f.len()];
    };
    let mut acc: Vec<T> = f.iter().map(|&x| T::from_f64(top) * x).collect();
    for &c in rest.iter().rev() {
        acc = p.apply_unchecked(&acc);
        for (a, &x) in acc.iter_mut().zip(f) {
            *a += T::from_f64(c) * x;
        }
    }
    acc
}

fn poly_of_measure<W: Weight>(poly: &[f64], mu: &LatticeMeasure<W>) -> LatticeMeasure<W> {
    let mut acc = LatticeMeasure::zero();
    for &c in poly.iter().rev() {
        acc = acc.convolve(mu).add(&LatticeMeasure::delta(0).scale(&W::from_f64(c)));
    }
    acc
}

/// `K_F` as a dense kernel.
pub fn kernel_of_function(p: &MarkovOperator, f: &AnalyticSeries) -> KernelMatrix {
    p.kernel_from_columns(|delta| f.apply(p, &delta))
}

/// Finitely supported signed measure on ℤ: `values[i]` sits at `offset + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeMeasure<W = f64> {
    offset: i64,
    values: Vec<W>,
}

impl<W: Weight> LatticeMeasure<W> {
    pub fn zero() -> Self {
        Self {
            offset: 0,
            values: Vec::new(),
        }
    }

    pub fn delta(m: i64) -> Self {
        Self {
            offset: m,
            values: vec![W::one()],
        }
    }

    pub fn new(offset: i64, values: Vec<W>) -> Self {
        Self { offset, values }.trimmed()
    }

    fn trimmed(mut self) -> Self {
        let lead = self.values.iter().take_while(|v| v.is_zero()).count();
        if lead == self.values.len() {
            return Self::zero();
        }
        self.values.drain(..lead);
        self.offset += lead as i64;
        while self.values.last().is_some_and(Weight::is_zero) {
            self.values.pop();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn values(&self) -> &[W] {
        &self.values
    }

    /// Smallest and largest support points.
    pub fn support(&self) -> Option<(i64, i64)> {
        if self.values.is_empty() {
            None
        } else {
            Some((self.offset, self.offset + self.values.len() as i64 - 1))
        }
    }

    /// `max |m|` over the support.
    pub fn support_radius(&self) -> u64 {
        self.support()
            .map(|(lo, hi)| lo.unsigned_abs().max(hi.unsigned_abs()))
            .unwrap_or(0)
    }

    pub fn at(&self, m: i64) -> W {
        let i = m - self.offset;
        if i < 0 || i as usize >= self.values.len() {
            W::zero()
        } else {
            self.values[i as usize].clone()
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, &W)> {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.offset + i as i64, v))
    }

    pub fn convolve(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![W::zero(); self.values.len() + other.values.len() - 1];
        for (i, a) in self.values.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.values.iter().enumerate() {
                out[i + j] = out[i + j].plus(&a.times(b));
            }
        }
        Self::new(self.offset + other.offset, out)
    }

    /// `μ^{*n}` with `μ^{*0} = δ₀`, by repeated squaring.
    pub fn pow(&self, n: usize) -> Self {
        let mut result = Self::delta(0);
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                result = result.convolve(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.convolve(&base);
            }
        }
        result
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a.plus(b))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, |a, b| a.minus(b))
    }

    fn combine(&self, other: &Self, op: impl Fn(&W, &W) -> W) -> Self {
        let (lo, hi) = match (self.support(), other.support()) {
            (None, None) => return Self::zero(),
            (Some(s), None) | (None, Some(s)) => s,
            (Some(a), Some(b)) => (a.0.min(b.0), a.1.max(b.1)),
        };
        let values = (lo..=hi).map(|m| op(&self.at(m), &other.at(m))).collect();
        Self::new(lo, values)
    }

    pub fn scale(&self, c: &W) -> Self {
        Self::new(self.offset, self.values.iter().map(|v| v.times(c)).collect())
    }

    pub fn total_mass(&self) -> W {
        self.values.iter().fold(W::zero(), |acc, v| acc.plus(v))
    }

    /// `T(q) = Σ_{|m|≥q} |μ(m)|`.
    pub fn tail_sum(&self, q: u64) -> W {
        self.iter()
            .filter(|(m, _)| m.unsigned_abs() >= q)
            .fold(W::zero(), |acc, (_, v)| acc.plus(&v.magnitude()))
    }

    /// Tail sums `T(0), T(1), …, T(q_max)`.
    pub fn tail_sums(&self, q_max: u64) -> Vec<W> {
        let radius = self.support_radius();
        let mut by_abs = vec![W::zero(); radius as usize + 1];
        for (m, v) in self.iter() {
            let i = m.unsigned_abs() as usize;
            by_abs[i] = by_abs[i].plus(&v.magnitude());
        }
        let mut out = vec![W::zero(); q_max as usize + 1];
        let mut running = W::zero();
        for q in (0..=radius.max(q_max) as usize).rev() {
            if q < by_abs.len() {
                running = running.plus(&by_abs[q]);
            }
            if q <= q_max as usize {
                out[q] = running.clone();
            }
        }
        out
    }

    pub fn to_f64(&self) -> LatticeMeasure<f64> {
        LatticeMeasure {
            offset: self.offset,
            values: self.values.iter().map(Weight::to_f64).collect(),
        }
    }

    /// `Σ_m μ(m) cos(mθ)`, the Fourier transform of a symmetric measure.
    pub fn fourier_transform(&self, theta: f64) -> f64 {
        self.iter()
            .map(|(m, v)| v.to_f64() * (m as f64 * theta).cos())
            .sum()
    }

    /// CSV with header `m,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,value\n");
        for (m, v) in self.iter() {
            let _ = writeln!(out, "{m},{:e}", v.to_f64());
        }
        out
    }
}

/// `β_s = (1 - s) δ₀ + s β` with `β = (δ₋₁ + δ₁)/2`.
pub fn beta_s<W: Weight>(s: f64) -> LatticeMeasure<W> {
    let half = W::from_f64(s).times(&W::from_f64(0.5));
    LatticeMeasure::new(-1, vec![half.clone(), W::one().minus(&W::from_f64(s)), half])
}

/// Which difference operator builds `f_{s,j}` from `f_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceConvention {
    /// `Δ_s μ = μ * (δ₀ - β_s)`.
    #[default]
    Smoothed,
    /// `μ * (δ₀ - β)`, with the unsmoothed step.
    Unsmoothed,
}

/// `f_{s,j} = Δ_sʲ Σ aₙ β_s^{*n}` in any weight type.
pub fn shadow_kernel_in<W: Weight>(
    f: &AnalyticSeries,
    s: f64,
    j: usize,
    convention: DifferenceConvention,
) -> LatticeMeasure<W> {
    let bs = beta_s::<W>(s);
    let base = f.substitute(&bs);
    let step = match convention {
        DifferenceConvention::Smoothed => LatticeMeasure::delta(0).sub(&bs),
        DifferenceConvention::Unsmoothed => LatticeMeasure::delta(0).sub(&beta_s::<W>(1.0)),
    };
    base.convolve(&step.pow(j))
}

/// `f_{s,j}`, computed exactly and rounded to doubles at the end.
pub fn shadow_kernel(f: &AnalyticSeries, s: f64, j: usize) -> LatticeMeasure<f64> {
    shadow_kernel_in::<BigRational>(f, s, j, DifferenceConvention::Smoothed).to_f64()
}

/// The triple `(s, r, ψ)` with `ψ(q) = C · scale · exp(-c (q/σ)^γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundProfile {
    pub s: f64,
    pub r: f64,
    /// Fitted prefactor `C`.
    pub prefactor: f64,
    pub scale: f64,
    pub c: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl BoundProfile {
    pub fn psi(&self, q: f64) -> f64 {
        self.prefactor * self.scale * (-self.c * (q / self.sigma).powf(self.gamma)).exp()
    }

    /// `(2j/r)^{2j}`, equal to 1 at `j = 0`.
    pub fn derivative_factor(&self, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            (2.0 * j as f64 / self.r).powi(2 * j as i32)
        }
    }

    pub fn with_prefactor(mut self, prefactor: f64) -> Self {
        self.prefactor = prefactor;
        self
    }
}

/// Profile for `x^l (1 - x^k)ⁿ`: scale `n^{-l/k}`, `σ = n^{1/(2k)}`,
/// `γ = 2k/(2k-1)`, `s = 1/2` and `r = σ`.
pub fn example_psi(k: usize, l: usize, n: usize, c: f64) -> BoundProfile {
    let nf = n as f64;
    let sigma = nf.powf(1.0 / (2.0 * k as f64));
    BoundProfile {
        s: 0.5,
        r: sigma,
        prefactor: 1.0,
        scale: nf.powf(-(l as f64) / k as f64),
        c,
        sigma,
        gamma: 2.0 * k as f64 / (2.0 * k as f64 - 1.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipCell {
    pub j: usize,
    pub q: u64,
    pub tail: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub worst_ratio: f64,
    pub argmax_j: usize,
    pub argmax_q: u64,
    pub holds: bool,
    pub grid: Vec<MembershipCell>,
}

/// Exact tail sums `T(j,q)` for `j ≤ j_max`, `q ≤ q_max`.
pub fn shadow_tails(f: &AnalyticSeries, s: f64, j_max: usize, q_max: u64) -> Vec<Vec<f64>> {
    let bs = beta_s::<BigRational>(s);
    let step = LatticeMeasure::delta(0).sub(&bs);
    let mut cur = f.substitute(&bs);
    let mut out = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        if j > 0 {
            cur = cur.convolve(&step);
        }
        out.push(cur.tail_sums(q_max).iter().map(Weight::to_f64).collect());
    }
    out
}

/// Worst ratio `T(j,q) / ((2j/r)^{2j} ψ(q))` over the grid.
pub fn class_membership(
    f: &AnalyticSeries,
    profile: &BoundProfile,
    j_max: usize,
    q_max: u64,
) -> MembershipReport {
    let tails = shadow_tails(f, profile.s, j_max, q_max);
    membership_from_tails(&tails, profile)
}

pub fn membership_from_tails(tails: &[Vec<f64>], profile: &BoundProfile) -> MembershipReport {
    let mut grid = Vec::new();
    let mut worst = (0.0_f64, 0, 0);
    for (j, row) in tails.iter().enumerate() {
        for (q, &tail) in row.iter().enumerate() {
            let bound = profile.derivative_factor(j) * profile.psi(q as f64);
            let ratio = if tail == 0.0 { 0.0 } else { tail / bound };
            if ratio > worst.0 {
                worst = (ratio, j, q as u64);
            }
            grid.push(MembershipCell {
                j,
                q: q as u64,
                tail,
                bound,
                ratio,
            });
        }
    }
    MembershipReport {
        worst_ratio: worst.0,
        argmax_j: worst.1,
        argmax_q: worst.2,
        holds: worst.0 <= 1.0,
        grid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::families::{cycle, lazy, path};
    use nalgebra::DMatrix;

    fn m(offset: i64, v: &[f64]) -> LatticeMeasure<f64> {
        LatticeMeasure::new(offset, v.to_vec())
    }

    #[test]
    fn example_family_coefficients() {
        assert_eq!(AnalyticSeries::example_family(1, 0, 1).coefficients(), vec![0.0, 1.0]);
        assert_eq!(AnalyticSeries::example_family(1, 1, 0).coefficients(), vec![1.0, -1.0]);
        assert_eq!(AnalyticSeries::example_family(2, 0, 1).coefficients(), vec![0.0, 2.0, -1.0]);
        let f = AnalyticSeries::example_family(2, 1, 16);
        assert_eq!(f.degree(), 33);
        let exact = f.coefficients_exact();
        // F(0) = 0 when l > 0: Σ aₙ = F(1 - 1)
        let total = exact.iter().fold(<BigRational as Weight>::zero(), |a, b| a.plus(b));
        assert!(Weight::is_zero(&total));
    }

    #[test]
    fn kernels_of_simple_functions() {
        let p = MarkovOperator::new(cycle(4).unwrap());
        let id = kernel_of_function(&p, &AnalyticSeries::constant(1.0));
        assert_eq!(id.values(), &DMatrix::identity(4, 4));
        let lap = kernel_of_function(&p, &AnalyticSeries::polynomial(vec![1.0, -1.0]));
        assert_eq!(lap.values(), &(DMatrix::identity(4, 4) - p.to_dense()));
        let sq = kernel_of_function(&p, &AnalyticSeries::polynomial(vec![0.0, 0.0, 1.0]));
        assert!(sq.max_abs_diff(&p.iterate_kernel(2)) < 1e-15);
        let e = kernel_of_function(&p, &AnalyticSeries::example_family(2, 1, 1));
        let dense = p.to_dense();
        let lap = DMatrix::identity(4, 4) - &dense;
        let expect = &lap * (&dense * 2.0 - &dense * &dense);
        assert!(e.values().relative_eq(&expect, 1e-14, 1e-14));
    }

    #[test]
    fn factored_and_expanded_agree() {
        let p = MarkovOperator::new(lazy(&path(30).unwrap()).unwrap());
        let f = AnalyticSeries::example_family(2, 1, 6);
        let mut delta = vec![0.0; 30];
        delta[15] = 1.0;
        let a = f.apply(&p, &delta);
        let b = f.apply_expanded(&p, &delta);
        for u in 0..30 {
            assert!((a[u] - b[u]).abs() < 1e-10);
        }
    }

    #[test]
    fn convolution_basics() {
        let mu = m(-1, &[0.2, 0.5, 0.3]);
        assert_eq!(mu.convolve(&LatticeMeasure::delta(0)), mu);
        let beta = beta_s::<f64>(1.0);
        assert_eq!(beta, m(-1, &[0.5, 0.0, 0.5]));
        assert_eq!(beta.convolve(&beta), m(-2, &[0.25, 0.0, 0.5, 0.0, 0.25]));
        assert_eq!(beta_s::<f64>(0.5), m(-1, &[0.25, 0.5, 0.25]));
        assert_eq!(mu.pow(0), LatticeMeasure::delta(0));
        let diff = mu.pow(5).sub(&mu.convolve(&mu).convolve(&mu).convolve(&mu).convolve(&mu));
        assert!(diff.values().iter().all(|v| v.abs() < 1e-16));
        assert_eq!(m(0, &[0.0, 0.0, 1.0, 0.0]).support(), Some((2, 2)));
    }

    #[test]
    fn shadow_examples() {
        assert_eq!(shadow_kernel(&AnalyticSeries::constant(1.0), 0.5, 0), LatticeMeasure::delta(0));
        let x = AnalyticSeries::polynomial(vec![1.0, -1.0]);
        assert_eq!(shadow_kernel(&x, 1.0, 0), m(-1, &[-0.5, 1.0, -0.5]));
        let one_minus_x = AnalyticSeries::polynomial(vec![0.0, 1.0]);
        for s in [0.25, 0.5, 1.0] {
            assert_eq!(shadow_kernel(&one_minus_x, s, 0), beta_s::<f64>(s));
        }
        let lit = shadow_kernel_in::<f64>(&one_minus_x, 0.5, 1, DifferenceConvention::Unsmoothed);
        let expect = beta_s::<f64>(0.5).convolve(&m(-1, &[-0.5, 1.0, -0.5]));
        assert_eq!(lit, expect);
    }

    #[test]
    fn fourier_examples() {
        assert_eq!(LatticeMeasure::<f64>::delta(0).fourier_transform(1.3), 1.0);
        let th: f64 = 0.7;
        assert!((beta_s::<f64>(0.3).fourier_transform(th) - (1.0 - 0.3 * (1.0 - th.cos()))).abs() < 1e-15);
        let bs = beta_s::<f64>(0.5);
        let d = LatticeMeasure::delta(0).sub(&bs);
        let g = LatticeMeasure::delta(0).sub(&d.pow(2));
        let val = g.fourier_transform(std::f64::consts::PI / 3.0);
        assert!((val - 15.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn tails_and_mass() {
        let f = AnalyticSeries::example_family(2, 0, 4);
        let fs = shadow_kernel_in::<BigRational>(&f, 0.5, 0, DifferenceConvention::Smoothed);
        assert_eq!(fs.total_mass(), Weight::from_f64(f.evaluate(1.0)));
        let f1 = shadow_kernel_in::<BigRational>(&f, 0.5, 1, DifferenceConvention::Smoothed);
        assert!(Weight::is_zero(&f1.total_mass()));
        let tails = f1.tail_sums(20);
        for q in 0..=20u64 {
            assert_eq!(tails[q as usize], f1.tail_sum(q));
        }
        assert!(Weight::is_zero(&tails[10]));
        assert!(tails.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn shadow_matches_lazy_segment_kernel() {
        // away from the ends, the lazy segment walk is β_{1/2} convolution
        let g = lazy(&path(81).unwrap()).unwrap();
        let p = MarkovOperator::new(g);
        let f = AnalyticSeries::example_family(2, 1, 8);
        let mut delta = vec![0.0; 81];
        delta[40] = 1.0;
        let col = f.apply(&p, &delta);
        let fs = shadow_kernel(&f, 0.5, 0);
        for u in 0..81 {
            assert!((col[u] - fs.at(u as i64 - 40)).abs() < 1e-14);
        }
    }

    #[test]
    fn psi_profile() {
        assert_eq!(example_psi(1, 0, 16, 1.0).scale, 1.0);
        assert_eq!(example_psi(1, 0, 16, 1.0).gamma, 2.0);
        assert!((example_psi(2, 0, 16, 1.0).gamma - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(example_psi(2, 1, 16, 1.0).scale, 0.25);
        assert_eq!(example_psi(2, 1, 16, 1.0).sigma, 2.0);
        let rep = class_membership(&AnalyticSeries::constant(1.0), &example_psi(1, 0, 4, 1.0), 0, 3);
        assert!(rep.holds);
        assert_eq!(rep.worst_ratio, 1.0);
        let rep = class_membership(&AnalyticSeries::example_family(1, 0, 4), &example_psi(1, 0, 4, 1.0), 2, 12);
        let beyond: Vec<_> = rep.grid.iter().filter(|c| c.q > 6).collect();
        assert!(beyond.iter().all(|c| c.tail == 0.0 && c.ratio == 0.0));
    }
}
