//! The transition operator `P(u,v) = μ_uv / m(u)`, its iterates and spectral data.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::numeric::Real;

/// Largest graph accepted by the dense eigendecomposition.
pub const DENSE_LIMIT: usize = 5000;

/// Reversible Markov operator of a weighted graph.
#[derive(Debug, Clone)]
pub struct MarkovOperator {
    graph: WeightedGraph,
    spectrum_window: Option<(f64, f64)>,
}

/// Which normalisation a [`KernelMatrix`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelForm {
    /// `K(u,v)`, the matrix acting on functions.
    Transition,
    /// `k(u,v) = K(u,v) / m(v)`, symmetric for self-adjoint `K`.
    Density,
}

/// Dense kernel stored in transition form together with the vertex measure.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
    measure: Vec<f64>,
}

/// Orthonormal eigenbasis of the symmetrised operator `M^{1/2} P M^{-1/2}`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Column `i` is the unit eigenvector `φ_i` for `values[i]`.
    pub vectors: DMatrix<f64>,
    pub sqrt_measure: Vec<f64>,
}

/// Outcome of checking `σ(P) ⊂ (a, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralCheck {
    pub a: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub holds: bool,
}

impl MarkovOperator {
    pub fn new(graph: WeightedGraph) -> Self {
        Self {
            graph,
            spectrum_window: None,
        }
    }

    /// Same operator with its spectral window `(λ_min, λ_max)` computed and cached.
    pub fn with_spectrum_window(mut self) -> Result<Self> {
        let s = self.spectrum()?;
        self.spectrum_window = Some((s[0], *s.last().unwrap()));
        Ok(self)
    }

    pub fn spectrum_window(&self) -> Option<(f64, f64)> {
        self.spectrum_window
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn measure(&self) -> &[f64] {
        self.graph.measures()
    }

    pub fn entry(&self, u: usize, v: usize) -> f64 {
        self.graph.weight(u, v) / self.graph.measure(u)
    }

    /// Largest violation of `m(u) P(u,v) = m(v) P(v,u)`.
    pub fn reversibility_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for u in 0..self.len() {
            for &(v, _) in self.graph.neighbors(u) {
                let lhs = self.graph.measure(u) * self.entry(u, v);
                let rhs = self.graph.measure(v) * self.entry(v, u);
                worst = worst.max((lhs - rhs).abs());
            }
        }
        worst
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got == self.len() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.len(),
                got,
            })
        }
    }

    /// `Pf(u) = Σ_v P(u,v) f(v)`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f.len())?;
        Ok(self.apply_unchecked(f))
    }

    /// [`apply`](Self::apply) in any [`Real`] type; assumes `f.len() == self.len()`.
    pub fn apply_unchecked<T: Real>(&self, f: &[T]) -> Vec<T> {
        (0..self.len())
            .map(|u| {
                let mut acc = T::zero();
                for &(v, w) in self.graph.neighbors(u) {
                    acc += T::from_f64(w) * f[v];
                }
                acc / T::from_f64(self.graph.measure(u))
            })
            .collect()
    }

    /// `Δ_X f = (P - I) f`.
    pub fn discrete_laplacian(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f.len())?;
        Ok((0..self.len())
            .map(|u| {
                self.graph
                    .neighbors(u)
                    .iter()
                    .map(|&(v, w)| w * (f[v] - f[u]))
                    .sum::<f64>()
                    / self.graph.measure(u)
            })
            .collect())
    }

    /// `⟨f, g⟩_m = Σ_u m(u) f(u) g(u)`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(self.measure())
            .map(|((a, b), m)| a * b * m)
            .sum()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).sqrt()
    }

    /// Builds a kernel column by column: column `v` is `op(δ_v)`.
    pub fn kernel_from_columns<F>(&self, op: F) -> KernelMatrix
    where
        F: Fn(Vec<f64>) -> Vec<f64> + Sync,
    {
        let n = self.len();
        let columns: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|v| {
                let mut delta = vec![0.0; n];
                delta[v] = 1.0;
                op(delta)
            })
            .collect();
        let values = DMatrix::from_fn(n, n, |u, v| columns[v][u]);
        KernelMatrix::new(values, self.measure().to_vec())
    }

    /// `Pⁿ` by repeated sparse application.
    pub fn iterate_kernel(&self, n: usize) -> KernelMatrix {
        self.kernel_from_columns(|mut f| {
            for _ in 0..n {
                f = self.apply_unchecked(&f);
            }
            f
        })
    }

    /// Dense transition matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.len(), |u, v| self.entry(u, v))
    }

    /// Symmetrised matrix `μ_uv / √(m(u) m(v))`.
    pub fn symmetrized(&self) -> Result<DMatrix<f64>> {
        let n = self.len();
        if n > DENSE_LIMIT {
            return Err(Error::TooLarge {
                size: n,
                limit: DENSE_LIMIT,
            });
        }
        let m = self.measure();
        let mut s = DMatrix::zeros(n, n);
        for u in 0..n {
            for &(v, w) in self.graph.neighbors(u) {
                s[(u, v)] = w / (m[u] * m[v]).sqrt();
            }
        }
        Ok(s)
    }

    pub fn spectral_decomposition(&self) -> Result<SpectralDecomposition> {
        let s = self.symmetrized()?;
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let cols: Vec<DVector<f64>> = order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        Ok(SpectralDecomposition {
            values,
            vectors: DMatrix::from_columns(&cols),
            sqrt_measure: self.measure().iter().map(|m| m.sqrt()).collect(),
        })
    }

    /// Eigenvalues of `P`, ascending.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        Ok(self.spectral_decomposition()?.values)
    }

    /// Checks the hypothesis `σ(P) ⊂ (a, 1]` as `λ_min > a + 1e-9`.
    pub fn check_spectral_window(&self, a: f64) -> Result<SpectralCheck> {
        let (lambda_min, lambda_max) = match self.spectrum_window {
            Some(w) => w,
            None => {
                let s = self.spectrum()?;
                (s[0], *s.last().unwrap())
            }
        };
        Ok(SpectralCheck {
            a,
            lambda_min,
            lambda_max,
            holds: lambda_min > a + 1e-9,
        })
    }
}

/// `∇h·∇k(u) = (1/m(u)) Σ_v μ_uv (h(u) - h(v))(k(u) - k(v))`.
pub fn gradient_form(g: &WeightedGraph, h: &[f64], k: &[f64], u: usize) -> Result<f64> {
    for len in [h.len(), k.len()] {
        if len != g.len() {
            return Err(Error::DimensionMismatch {
                expected: g.len(),
                got: len,
            });
        }
    }
    if u >= g.len() {
        return Err(Error::UnknownVertex(u));
    }
    Ok(g.neighbors(u)
        .iter()
        .map(|&(v, w)| w * (h[u] - h[v]) * (k[u] - k[v]))
        .sum::<f64>()
        / g.measure(u))
}

impl SpectralDecomposition {
    /// Eigenfunction of `P` for `values[i]`, normalised in `ℓ²(m)`: `φ_i / √m`.
    pub fn eigenfunction(&self, i: usize) -> Vec<f64> {
        self.vectors
            .column(i)
            .iter()
            .zip(&self.sqrt_measure)
            .map(|(x, s)| x / s)
            .collect()
    }

    /// Applies `φ(P)` to `f` through the eigenbasis.
    pub fn apply_function<F: Fn(f64) -> f64>(&self, f: &[f64], phi: F) -> Vec<f64> {
        let scaled = DVector::from_iterator(
            f.len(),
            f.iter().zip(&self.sqrt_measure).map(|(x, s)| x * s),
        );
        let coeffs = self.vectors.transpose() * scaled;
        let weighted = DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(&self.values).map(|(c, &l)| c * phi(l)),
        );
        let out = &self.vectors * weighted;
        out.iter()
            .zip(&self.sqrt_measure)
            .map(|(x, s)| x / s)
            .collect()
    }
}

impl KernelMatrix {
    /// Wraps transition-form values.
    pub fn new(values: DMatrix<f64>, measure: Vec<f64>) -> Self {
        Self { values, measure }
    }

    pub fn identity(measure: &[f64]) -> Self {
        Self::new(
            DMatrix::identity(measure.len(), measure.len()),
            measure.to_vec(),
        )
    }

    pub fn len(&self) -> usize {
        self.measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measure.is_empty()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn get(&self, u: usize, v: usize, form: KernelForm) -> f64 {
        match form {
            KernelForm::Transition => self.values[(u, v)],
            KernelForm::Density => self.values[(u, v)] / self.measure[v],
        }
    }

    pub fn transition(&self, u: usize, v: usize) -> f64 {
        self.get(u, v, KernelForm::Transition)
    }

    pub fn density(&self, u: usize, v: usize) -> f64 {
        self.get(u, v, KernelForm::Density)
    }

    pub fn to_form(&self, form: KernelForm) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.len(), |u, v| self.get(u, v, form))
    }

    pub fn max_abs_diff(&self, other: &KernelMatrix) -> f64 {
        (&self.values - &other.values).abs().max()
    }

    /// Largest `|Σ_v K(u,v) - 1|`.
    pub fn row_sum_defect(&self) -> f64 {
        self.values
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|k(u,v) - k(v,u)|`.
    pub fn density_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for u in 0..self.len() {
            for v in 0..u {
                worst = worst.max((self.density(u, v) - self.density(v, u)).abs());
            }
        }
        worst
    }

    /// Operator norm on `ℓ²(X, m)`: spectral norm of `M^{1/2} K M^{-1/2}`.
    pub fn norm_l2m(&self) -> f64 {
        let s: Vec<f64> = self.measure.iter().map(|m| m.sqrt()).collect();
        let conj = DMatrix::from_fn(self.len(), self.len(), |u, v| {
            s[u] * self.values[(u, v)] / s[v]
        });
        conj.singular_values().max()
    }

    /// CSV with header `u,v,value`, one row per pair in row-major order.
    pub fn to_csv(&self, form: KernelForm) -> String {
        let mut out = String::from("u,v,value\n");
        for u in 0..self.len() {
            for v in 0..self.len() {
                let _ = writeln!(out, "{u},{v},{:e}", self.get(u, v, form));
            }
        }
        out
    }
}

/// Support pattern of `Pⁿ` against the graph metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub n: usize,
    /// Pairs with `d(u,v) > n` and `Pⁿ(u,v) ≠ 0`.
    pub nonzero_beyond_n: usize,
    /// Pairs with `d(u,v) ≤ n` and `Pⁿ(u,v) = 0`.
    pub zero_within_n: usize,
    /// Pairs where the zero pattern differs from the existence of a walk of length exactly `n`.
    pub walk_mismatches: usize,
}

impl PropagationReport {
    /// `pⁿ(u,v) = 0` exactly when `d(u,v) > n`.
    pub fn support_is_ball(&self) -> bool {
        self.nonzero_beyond_n == 0 && self.zero_within_n == 0
    }
}

/// Compares the exact zero pattern of `Pⁿ` with distances and with walk existence.
pub fn propagation_report(p: &MarkovOperator, kernel: &KernelMatrix, n: usize) -> PropagationReport {
    let g = p.graph();
    let len = g.len();
    let mut report = PropagationReport {
        n,
        nonzero_beyond_n: 0,
        zero_within_n: 0,
        walk_mismatches: 0,
    };
    for u in 0..len {
        let dist = g.bfs_distances(u);
        // walks of length exactly n from u
        let mut reach = vec![false; len];
        reach[u] = true;
        for _ in 0..n {
            let mut next = vec![false; len];
            for (x, _) in reach.iter().enumerate().filter(|(_, &r)| r) {
                for &(y, _) in g.neighbors(x) {
                    next[y] = true;
                }
            }
            reach = next;
        }
        for v in 0..len {
            let nonzero = kernel.transition(u, v) != 0.0;
            if dist[v] > n && nonzero {
                report.nonzero_beyond_n += 1;
            }
            if dist[v] <= n && !nonzero {
                report.zero_within_n += 1;
            }
            if nonzero != reach[v] {
                report.walk_mismatches += 1;
            }
        }
    }
    report
}

/// Largest `|Pⁿ(u,v)/m(v) - Pⁿ(v,u)/m(u)|`.
pub fn reversibility_residual(kernel: &KernelMatrix) -> f64 {
    kernel.density_asymmetry()
}
