//! Max-certificate fitting of decay envelopes `C · base · exp(-c x^γ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: `lhs` should lie below `C · base · exp(-c · x^γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeDatum {
    pub n: usize,
    /// Distance in the original units, for reporting.
    pub d: f64,
    pub lhs: f64,
    /// Everything in the envelope except `C` and the exponential.
    pub base: f64,
    /// Scaled distance fed to the exponential.
    pub x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub n: usize,
    pub d: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    #[serde(rename = "C")]
    pub big_c: f64,
    pub c: f64,
    pub gamma: f64,
    /// Smallest admissible prefactor at `c = 0`.
    pub c_zero_prefactor: f64,
    /// Prefactor needed by the points of each `n` alone, at the fitted `c`.
    pub per_n: Vec<(usize, f64)>,
    pub residual_grid: Vec<EnvelopePoint>,
}

impl EnvelopeFit {
    /// Points where `lhs > rhs` beyond rounding.
    pub fn violations(&self) -> Vec<EnvelopePoint> {
        self.residual_grid
            .iter()
            .copied()
            .filter(|p| p.lhs > p.rhs * (1.0 + 1e-12))
            .collect()
    }

    pub fn covers(&self) -> bool {
        self.violations().is_empty()
    }

    /// `max C_n / min C_n` over the `n` with nonzero data.
    pub fn prefactor_spread(&self) -> f64 {
        let vals: Vec<f64> = self.per_n.iter().map(|&(_, c)| c).filter(|&c| c > 0.0).collect();
        if vals.is_empty() {
            return 1.0;
        }
        let hi = vals.iter().copied().fold(f64::MIN, f64::max);
        let lo = vals.iter().copied().fold(f64::MAX, f64::min);
        hi / lo
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,d,lhs,rhs\n");
        for p in &self.residual_grid {
            out.push_str(&format!("{},{},{:e},{:e}\n", p.n, p.d, p.lhs, p.rhs));
        }
        out
    }
}

/// `count` points spaced logarithmically from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Default decay grid: 121 values from `1e-3` to `1e1`.
pub fn default_c_grid() -> Vec<f64> {
    log_grid(1e-3, 10.0, 121)
}

fn prefactor_at(data: &[EnvelopeDatum], c: f64, gamma: f64) -> f64 {
    data.iter()
        .filter(|d| d.lhs > 0.0)
        .map(|d| d.lhs / d.base * (c * d.x.powf(gamma)).exp())
        .fold(0.0, f64::max)
}

/// Fits `(C, c)` so that every datum satisfies `lhs ≤ C · base · exp(-c x^γ)`.
///
/// `C(c)` is the smallest valid prefactor for a given `c` and grows with `c`.
/// The chosen `c` is the largest grid value with `C(c) ≤ slack · C(0)`: the
/// fastest decay that costs at most a factor `slack` in the prefactor.
pub fn fit_envelope(data: &[EnvelopeDatum], gamma: f64, c_grid: &[f64], slack: f64) -> Result<EnvelopeFit> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if c_grid.is_empty() || c_grid.iter().any(|&c| !(c > 0.0)) || !(slack >= 1.0) {
        return Err(Error::InvalidParameter("decay grid must be positive and slack at least 1".into()));
    }
    let c0 = prefactor_at(data, 0.0, gamma);
    let mut grid = c_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let c = grid
        .iter()
        .copied()
        .filter(|&c| prefactor_at(data, c, gamma) <= slack * c0)
        .last()
        .unwrap_or(0.0);
    let mut fit = evaluate_envelope(data, gamma, prefactor_at(data, c, gamma), c)?;
    fit.c_zero_prefactor = c0;
    Ok(fit)
}

/// Evaluates a given envelope `C · base · exp(-c x^γ)` on the data; nothing is fitted.
pub fn evaluate_envelope(data: &[EnvelopeDatum], gamma: f64, big_c: f64, c: f64) -> Result<EnvelopeFit> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut ns: Vec<usize> = data.iter().map(|d| d.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let per_n = ns
        .iter()
        .map(|&n| {
            let subset: Vec<EnvelopeDatum> = data.iter().copied().filter(|d| d.n == n).collect();
            (n, prefactor_at(&subset, c, gamma))
        })
        .collect();
    let residual_grid = data
        .iter()
        .map(|d| EnvelopePoint {
            n: d.n,
            d: d.d,
            lhs: d.lhs,
            rhs: big_c * d.base * (-c * d.x.powf(gamma)).exp(),
        })
        .collect();
    Ok(EnvelopeFit {
        big_c,
        c,
        gamma,
        c_zero_prefactor: prefactor_at(data, 0.0, gamma),
        per_n,
        residual_grid,
    })
}

/// Inner edges of the dyadic annuli: `E₀ = [0, 2σ)`, `Eᵢ = [2ⁱσ, 2^{i+1}σ)`.
fn annulus_index(dist: f64, sigma: f64) -> usize {
    if dist < 2.0 * sigma {
        0
    } else {
        (dist / sigma).log2().floor() as usize
    }
}

/// Splitting of `Σ |μ|` over the dyadic annuli at scale `σ = n^{1/(2k)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnuliSums {
    pub sigma: f64,
    /// `Σ_g |μ(g)|`.
    pub direct: f64,
    /// `Σᵢ #Eᵢ · sup_{Eᵢ} |μ|`.
    pub sup_sum: f64,
    /// `(#Eᵢ, sup_{Eᵢ} |μ|)` per annulus.
    pub annuli: Vec<(usize, f64)>,
}

/// Sup-based annuli sum for data given as `(distance, |value|)` pairs.
pub fn dyadic_annuli_sum<I>(points: I, n: usize, k: usize) -> AnnuliSums
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let sigma = (n as f64).powf(1.0 / (2.0 * k as f64));
    let mut annuli: Vec<(usize, f64)> = Vec::new();
    let mut direct = 0.0;
    for (dist, value) in points {
        let i = annulus_index(dist, sigma);
        if annuli.len() <= i {
            annuli.resize(i + 1, (0, 0.0));
        }
        annuli[i].0 += 1;
        annuli[i].1 = annuli[i].1.max(value.abs());
        direct += value.abs();
    }
    let sup_sum = annuli.iter().map(|&(cnt, sup)| cnt as f64 * sup).sum();
    AnnuliSums {
        sigma,
        direct,
        sup_sum,
        annuli,
    }
}

/// Annuli bound for the envelope `exp(-c (|m|/σ)^γ)` summed over ℤ:
/// `Σᵢ #(Eᵢ ∩ ℤ) · exp(-c (inner edge of Eᵢ / σ)^γ)` with `γ = 2k/(2k-1)`.
pub fn envelope_annuli_sum(n: usize, k: usize, c: f64, p_max: usize) -> f64 {
    let sigma = (n as f64).powf(1.0 / (2.0 * k as f64));
    let gamma = 2.0 * k as f64 / (2.0 * k as f64 - 1.0);
    let count = |lo: f64, hi: f64| -> f64 {
        // integers m with lo ≤ |m| < hi
        let hi_n = (hi - 1e-12).floor().max(-1.0);
        let lo_n = lo.ceil();
        let pos = (hi_n - lo_n + 1.0).max(0.0);
        if lo_n == 0.0 {
            2.0 * pos - 1.0
        } else {
            2.0 * pos
        }
    };
    let mut total = count(0.0, 2.0 * sigma);
    for i in 1..=p_max {
        let lo = 2f64.powi(i as i32) * sigma;
        total += count(lo, 2.0 * lo) * (-c * 2f64.powi(i as i32).powf(gamma)).exp();
    }
    total
}

/// Partial sums of `Σ_{p≥0} 2^{p+1} exp(-(c/2) (2^p)^{2k/(2k-1)})`.
pub fn annuli_series(c: f64, k: usize, p_max: usize) -> Vec<f64> {
    let gamma = 2.0 * k as f64 / (2.0 * k as f64 - 1.0);
    let mut acc = 0.0;
    (0..=p_max)
        .map(|p| {
            acc += 2f64.powi(p as i32 + 1) * (-(c / 2.0) * 2f64.powi(p as i32).powf(gamma)).exp();
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn datum(n: usize, x: f64, lhs: f64) -> EnvelopeDatum {
        EnvelopeDatum { n, d: x, lhs, base: 1.0, x }
    }

    #[test]
    fn single_point_is_exact() {
        let fit = fit_envelope(&[datum(4, 0.0, 0.3)], 2.0, &default_c_grid(), 2.0).unwrap();
        assert_eq!(fit.big_c, 0.3);
        assert!(fit.covers());
        assert_eq!(fit_envelope(&[], 2.0, &[1.0], 2.0), Err(Error::EmptyData));
    }

    #[test]
    fn recovers_gaussian_decay() {
        let data: Vec<_> = (0..40)
            .map(|i| {
                let x = i as f64 * 0.1;
                datum(1, x, 0.5 * (-0.7 * x * x).exp())
            })
            .collect();
        let fit = fit_envelope(&data, 2.0, &log_grid(0.01, 10.0, 400), 2.0).unwrap();
        assert!(fit.covers());
        // exact profile: C(c) = 0.5 for c ≤ 0.7, then grows
        assert!(fit.c >= 0.7, "c = {}", fit.c);
        assert!(fit.big_c <= 1.0 + 1e-12);
        assert_eq!(fit.c_zero_prefactor, 0.5);
    }

    #[test]
    fn fixed_envelope_reports_violations() {
        let data = [datum(2, 0.0, 1.0), datum(2, 1.0, 0.9)];
        let fit = evaluate_envelope(&data, 2.0, 1.0, 1.0).unwrap();
        let bad = fit.violations();
        assert_eq!(bad.len(), 1);
        assert_eq!((bad[0].n, bad[0].d), (2, 1.0));
    }

    #[test]
    fn grid_is_logarithmic() {
        let g = log_grid(1e-2, 1e2, 5);
        for (a, b) in g.iter().zip([1e-2, 1e-1, 1.0, 1e1, 1e2]) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn annuli_dominate_direct_sum() {
        let pts: Vec<(f64, f64)> = (-60i64..=60)
            .map(|m| (m.unsigned_abs() as f64, 0.8f64.powi(m.unsigned_abs() as i32)))
            .collect();
        let s = dyadic_annuli_sum(pts, 16, 1);
        assert!(s.sup_sum >= s.direct);
        let only_core = dyadic_annuli_sum([(0.0, 1.0), (1.0, 0.5)], 16, 1);
        assert_eq!(only_core.annuli.len(), 1);
        assert_eq!(only_core.sup_sum, 2.0);
    }

    #[test]
    fn envelope_annuli_bound_dominates_sum() {
        let (n, k, c) = (64, 1, 0.5);
        let sigma = 8.0;
        let direct: f64 = (-2000i64..=2000)
            .map(|m| (-c * (m as f64 / sigma).abs().powf(2.0)).exp())
            .sum();
        assert!(envelope_annuli_sum(n, k, c, 20) >= direct);
    }

    #[test]
    fn annuli_series_converges() {
        for k in 1..=3 {
            for c in [0.1, 0.5, 2.0] {
                let s = annuli_series(c, k, 45);
                assert!((s[40] - s[45]).abs() < 1e-12 * s[45]);
            }
        }
    }
}
