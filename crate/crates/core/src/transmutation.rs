//! Chebyshev polynomials, the lazy walk on ℤ, and the expansion of `Pⁿ` in
//! Chebyshev polynomials of `P` weighted by the walk's law.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{KernelMatrix, MarkovOperator};
use crate::numeric::{DoubleDouble, Real};

/// `Q_m(z)` by `Q_{m+1} = 2z Q_m - Q_{m-1}`.
pub fn chebyshev(m: usize, z: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, z);
    if m == 0 {
        return prev;
    }
    for _ in 1..m {
        let next = 2.0 * z * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `Q_{a,m}(z) = Q_m((2z - 1 - a)/(1 - a))`.
pub fn shifted_chebyshev(a: f64, m: usize, z: f64) -> f64 {
    chebyshev(m, (2.0 * z - 1.0 - a) / (1.0 - a))
}

/// Law of the walk on ℤ that moves ±1 with probability `(1-a)/4` each and holds
/// with probability `(1+a)/2`, after `n` steps from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LazyWalkLaw {
    pub a: f64,
    pub n: usize,
    /// `mass[m + n] = P(Xⁿ = m)` for `m ∈ -n..=n`.
    pub mass: Vec<f64>,
}

impl LazyWalkLaw {
    pub fn at(&self, m: i64) -> f64 {
        let idx = m + self.n as i64;
        if idx < 0 || idx as usize >= self.mass.len() {
            0.0
        } else {
            self.mass[idx as usize]
        }
    }
}

fn check_a(a: f64) -> Result<()> {
    if (-1.0..1.0).contains(&a) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("laziness a = {a} outside [-1, 1)")))
    }
}

/// `n`-fold convolution of the one-step law, in any [`Real`] type.
pub fn walk_law_in<T: Real>(a: f64, n: usize) -> Vec<T> {
    let side = (T::one() - T::from_f64(a)) / T::from_f64(4.0);
    let hold = (T::one() + T::from_f64(a)) / T::from_f64(2.0);
    let mut law = vec![T::one()];
    for _ in 0..n {
        let mut next = vec![T::zero(); law.len() + 2];
        for (i, &p) in law.iter().enumerate() {
            next[i] += side * p;
            next[i + 1] += hold * p;
            next[i + 2] += side * p;
        }
        law = next;
    }
    law
}

pub fn lazy_walk_law(a: f64, n: usize) -> Result<LazyWalkLaw> {
    check_a(a)?;
    let mass = walk_law_in::<DoubleDouble>(a, n)
        .into_iter()
        .map(Real::to_f64)
        .collect();
    Ok(LazyWalkLaw { a, n, mass })
}

/// `f ↦ (2Pf - (1+a)f)/(1-a)`, the affine image of `P` fed to `Q_m`.
fn shifted_apply<T: Real>(p: &MarkovOperator, a: f64, f: &[T]) -> Vec<T> {
    let pf = p.apply_unchecked(f);
    let two = T::from_f64(2.0);
    let one_plus = T::one() + T::from_f64(a);
    let one_minus = T::one() - T::from_f64(a);
    pf.iter()
        .zip(f)
        .map(|(&x, &y)| (two * x - one_plus * y) / one_minus)
        .collect()
}

/// `[Q_{a,0}(P) f, …, Q_{a,m_max}(P) f]` by the operator recurrence.
pub fn chebyshev_sequence<T: Real>(p: &MarkovOperator, a: f64, f: &[T], m_max: usize) -> Vec<Vec<T>> {
    let mut seq = vec![f.to_vec()];
    if m_max == 0 {
        return seq;
    }
    seq.push(shifted_apply(p, a, f));
    for m in 1..m_max {
        let z = shifted_apply(p, a, &seq[m]);
        let next = z
            .iter()
            .zip(&seq[m - 1])
            .map(|(&x, &y)| T::from_f64(2.0) * x - y)
            .collect();
        seq.push(next);
    }
    seq
}

/// `Q_{a,m}(P)` as a dense kernel.
pub fn chebyshev_of_operator(p: &MarkovOperator, a: f64, m: usize) -> Result<KernelMatrix> {
    if a >= 1.0 {
        return Err(Error::InvalidParameter(format!("laziness a = {a} must be < 1")));
    }
    Ok(p.kernel_from_columns(|delta| chebyshev_sequence(p, a, &delta, m).pop().unwrap()))
}

/// Residuals `max_{u,v} |Pⁿ(u,v) - Σ_{|m|≤n} P(Xₐⁿ = m) Q_{a,|m|}(P)(u,v)|` for `n = 0..=n_max`,
/// computed in `T`.
///
/// For `a ≥ 0` on bipartite graphs the individual terms grow like
/// `((1+|a|)/(1-a))ⁿ`, so `f64` cannot resolve the identity at large `n`;
/// the double-double instantiation can.
pub fn transmutation_residuals_in<T: Real>(
    p: &MarkovOperator,
    a: f64,
    n_max: usize,
) -> Result<Vec<f64>> {
    check_a(a)?;
    let len = p.len();
    let laws: Vec<Vec<T>> = (0..=n_max).map(|n| walk_law_in::<T>(a, n)).collect();
    let per_column: Vec<Vec<f64>> = (0..len)
        .into_par_iter()
        .map(|v| {
            let mut delta = vec![T::zero(); len];
            delta[v] = T::one();
            let cheb = chebyshev_sequence(p, a, &delta, n_max);
            let mut power = delta;
            let mut out = Vec::with_capacity(n_max + 1);
            for (n, law) in laws.iter().enumerate() {
                if n > 0 {
                    power = p.apply_unchecked(&power);
                }
                let mut worst = 0.0_f64;
                for u in 0..len {
                    let mut sum = law[n] * cheb[0][u];
                    for m in 1..=n {
                        // the law is symmetric, so m and -m share Q_{a,m}
                        sum += (law[n + m] + law[n - m]) * cheb[m][u];
                    }
                    worst = worst.max((power[u] - sum).abs().to_f64());
                }
                out.push(worst);
            }
            out
        })
        .collect();
    Ok((0..=n_max)
        .map(|n| per_column.iter().map(|c| c[n]).fold(0.0, f64::max))
        .collect())
}

/// All residuals up to `n_max` in double-double arithmetic.
pub fn transmutation_residuals(p: &MarkovOperator, a: f64, n_max: usize) -> Result<Vec<f64>> {
    transmutation_residuals_in::<DoubleDouble>(p, a, n_max)
}

/// Max-entry residual of the transmutation identity at step `n`.
pub fn transmutation_check(p: &MarkovOperator, a: f64, n: usize) -> Result<f64> {
    Ok(*transmutation_residuals(p, a, n)?.last().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::families::{cycle, path};
    use crate::graph::WeightedGraph;
    use nalgebra::DMatrix;

    #[test]
    fn chebyshev_values() {
        assert_eq!(chebyshev(0, 0.3), 1.0);
        assert_eq!(chebyshev(1, 0.3), 0.3);
        assert_eq!(chebyshev(2, 0.5), -0.5);
        let t = std::f64::consts::PI / 7.0;
        assert!((chebyshev(5, t.cos()) - (5.0 * t).cos()).abs() < 1e-14);
    }

    #[test]
    fn chebyshev_closed_form_outside_interval() {
        for &z in &[1.3, -2.0, 4.5] {
            let w: f64 = (z * z - 1.0_f64).sqrt();
            for m in 0..12 {
                let closed = 0.5 * ((z + w).powi(m) + (z - w).powi(m));
                let rec = chebyshev(m as usize, z);
                assert!((closed - rec).abs() <= 1e-12 * closed.abs().max(1.0));
            }
        }
    }

    #[test]
    fn walk_laws() {
        assert_eq!(lazy_walk_law(0.3, 0).unwrap().mass, vec![1.0]);
        assert_eq!(lazy_walk_law(-1.0, 1).unwrap().mass, vec![0.5, 0.0, 0.5]);
        assert_eq!(
            lazy_walk_law(0.0, 2).unwrap().mass,
            vec![1.0 / 16.0, 0.25, 0.375, 0.25, 1.0 / 16.0]
        );
        let law = lazy_walk_law(-0.9, 17).unwrap();
        assert!((law.mass.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(law.at(5), law.at(-5));
        assert_eq!(law.at(18), 0.0);
        assert!(lazy_walk_law(1.0, 3).is_err());
    }

    #[test]
    fn operator_chebyshev() {
        let p = MarkovOperator::new(path(2).unwrap());
        assert_eq!(chebyshev_of_operator(&p, -1.0, 0).unwrap().values(), &DMatrix::identity(2, 2));
        assert_eq!(chebyshev_of_operator(&p, -1.0, 1).unwrap().values(), &p.to_dense());
        assert_eq!(chebyshev_of_operator(&p, -1.0, 2).unwrap().values(), &DMatrix::identity(2, 2));
        let c = MarkovOperator::new(cycle(7).unwrap());
        let dense = c.to_dense();
        let shifted = (dense * 2.0 - DMatrix::identity(7, 7) * 1.25) / 0.75;
        let q3 = &shifted * &shifted * &shifted * 4.0 - &shifted * 3.0;
        let k = chebyshev_of_operator(&c, 0.25, 3).unwrap();
        assert!(k.values().relative_eq(&q3, 1e-12, 1e-12));
    }

    #[test]
    fn identity_small_cases() {
        let p = MarkovOperator::new(cycle(8).unwrap());
        assert_eq!(transmutation_check(&p, 0.0, 0).unwrap(), 0.0);
        for a in [-0.9, -0.5, 0.0, 0.5] {
            assert!(transmutation_check(&p, a, 1).unwrap() < 1e-15);
        }
        assert!(transmutation_check(&p, 0.0, 12).unwrap() <= 1e-10);
    }

    #[test]
    fn double_double_rescues_positive_laziness() {
        let g = crate::graph::families::grid(6, 6).unwrap();
        let p = MarkovOperator::new(g);
        let plain = *transmutation_residuals_in::<f64>(&p, 0.5, 30).unwrap().last().unwrap();
        let dd = *transmutation_residuals(&p, 0.5, 30).unwrap().last().unwrap();
        assert!(plain > 1e-8, "f64 residual {plain}");
        assert!(dd < 1e-12, "double-double residual {dd}");
    }

    #[test]
    fn contraction_when_spectrum_above_a() {
        let g = WeightedGraph::from_edges([(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0), (0, 0, 1.0)]).unwrap();
        let p = MarkovOperator::new(g);
        let lmin = p.spectrum().unwrap()[0];
        for m in 0..10 {
            let k = chebyshev_of_operator(&p, lmin, m).unwrap();
            assert!(k.norm_l2m() <= 1.0 + 1e-10);
        }
    }
}
