//! Convolution powers of finitely supported measures on `ℤ^d` (`d ≤ 3`) and on
//! the discrete Heisenberg group.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, VecDeque};
use std::hash::BuildHasherDefault;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::envelope::{fit_envelope, EnvelopeDatum, EnvelopeFit};
use crate::error::{Error, Result};
use crate::numeric::Weight;

/// Group element in canonical coordinates; unused coordinates are zero.
pub type Element = [i64; 3];

type FixedMap<K, V> = HashMap<K, V, BuildHasherDefault<DefaultHasher>>;

pub const IDENTITY: Element = [0, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupKind {
    IntegerLattice { d: usize },
    /// `(x,y,z)(x',y',z') = (x+x', y+y', z+z'+x y')`.
    Heisenberg3,
}

impl GroupKind {
    pub fn multiply(&self, a: &Element, b: &Element) -> Element {
        match self {
            GroupKind::IntegerLattice { .. } => [a[0] + b[0], a[1] + b[1], a[2] + b[2]],
            GroupKind::Heisenberg3 => [a[0] + b[0], a[1] + b[1], a[2] + b[2] + a[0] * b[1]],
        }
    }

    pub fn inverse(&self, a: &Element) -> Element {
        match self {
            GroupKind::IntegerLattice { .. } => [-a[0], -a[1], -a[2]],
            GroupKind::Heisenberg3 => [-a[0], -a[1], -a[2] + a[0] * a[1]],
        }
    }

    fn dims(&self) -> usize {
        match self {
            GroupKind::IntegerLattice { d } => *d,
            GroupKind::Heisenberg3 => 3,
        }
    }

    /// Polynomial growth degree of the word-metric volume.
    pub fn growth_degree(&self) -> usize {
        match self {
            GroupKind::IntegerLattice { d } => *d,
            GroupKind::Heisenberg3 => 4,
        }
    }
}

/// A symmetric probability measure `μ` on a group, with a storage radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub kind: GroupKind,
    pub generators: Vec<(Element, f64)>,
    pub truncation_radius: usize,
}

impl GroupSpec {
    /// Lazy walk on `ℤ^d`: `μ(e) = 1/2`, `μ(±eᵢ) = 1/(4d)`.
    pub fn lazy_lattice(d: usize, truncation_radius: usize) -> Self {
        let mut generators = vec![(IDENTITY, 0.5)];
        for i in 0..d.min(3) {
            for s in [1, -1] {
                let mut g = IDENTITY;
                g[i] = s;
                generators.push((g, 0.25 / d as f64));
            }
        }
        Self {
            kind: GroupKind::IntegerLattice { d },
            generators,
            truncation_radius,
        }
    }

    /// Lazy walk on the Heisenberg group over `a^{±1}, b^{±1}` with `μ(e) = 1/2`.
    pub fn lazy_heisenberg(truncation_radius: usize) -> Self {
        Self {
            kind: GroupKind::Heisenberg3,
            generators: vec![
                (IDENTITY, 0.5),
                ([1, 0, 0], 0.125),
                ([-1, 0, 0], 0.125),
                ([0, 1, 0], 0.125),
                ([0, -1, 0], 0.125),
            ],
            truncation_radius,
        }
    }
}

/// A group with its word metric tabulated up to the truncation radius.
#[derive(Debug, Clone)]
pub struct Group {
    spec: GroupSpec,
    lengths: FixedMap<Element, usize>,
    /// `shells[r]` = number of elements of word length exactly `r`.
    shells: Vec<usize>,
}

/// Finitely supported measure, sorted by element, with a bound on the word
/// length of its support.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMeasure<W = f64> {
    entries: Vec<(Element, W)>,
    radius_bound: usize,
}

impl Group {
    pub fn new(spec: GroupSpec) -> Result<Self> {
        let d = spec.kind.dims();
        if d == 0 || d > 3 {
            return Err(Error::InvalidParameter(format!("lattice dimension {d} outside 1..=3")));
        }
        let mut total = 0.0;
        for (g, w) in &spec.generators {
            if g.iter().skip(d).any(|&x| x != 0) {
                return Err(Error::InvalidParameter(format!("generator {g:?} outside dimension {d}")));
            }
            if !(*w >= 0.0) {
                return Err(Error::InvalidParameter(format!("negative mass at {g:?}")));
            }
            let inv = spec.kind.inverse(g);
            let back: f64 = spec
                .generators
                .iter()
                .filter(|(h, _)| *h == inv)
                .map(|(_, w)| w)
                .sum();
            let here: f64 = spec
                .generators
                .iter()
                .filter(|(h, _)| h == g)
                .map(|(_, w)| w)
                .sum();
            if (back - here).abs() > 1e-15 {
                return Err(Error::InvalidParameter(format!("measure not symmetric at {g:?}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("total mass {total} is not 1")));
        }
        let steps: Vec<Element> = spec
            .generators
            .iter()
            .filter(|(g, w)| *g != IDENTITY && *w > 0.0)
            .map(|(g, _)| *g)
            .collect();
        if steps.is_empty() {
            return Err(Error::InvalidParameter("support does not generate the group".into()));
        }
        let mut lengths = FixedMap::default();
        let mut shells = vec![1];
        lengths.insert(IDENTITY, 0);
        let mut queue = VecDeque::from([IDENTITY]);
        while let Some(g) = queue.pop_front() {
            let lg = lengths[&g];
            if lg == spec.truncation_radius {
                continue;
            }
            for s in &steps {
                let h = spec.kind.multiply(&g, s);
                if !lengths.contains_key(&h) {
                    lengths.insert(h, lg + 1);
                    if shells.len() <= lg + 1 {
                        shells.push(0);
                    }
                    shells[lg + 1] += 1;
                    queue.push_back(h);
                }
            }
        }
        // the centre of the Heisenberg group is reached through commutators
        let free = match spec.kind {
            GroupKind::IntegerLattice { d } => d,
            GroupKind::Heisenberg3 => 2,
        };
        for i in 0..free {
            let mut e = IDENTITY;
            e[i] = 1;
            if !lengths.contains_key(&e) {
                return Err(Error::InvalidParameter(
                    "support does not generate the group within the truncation radius".into(),
                ));
            }
        }
        Ok(Self {
            spec,
            lengths,
            shells,
        })
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn kind(&self) -> GroupKind {
        self.spec.kind
    }

    pub fn truncation_radius(&self) -> usize {
        self.spec.truncation_radius
    }

    pub fn word_length(&self, g: &Element) -> Result<usize> {
        self.lengths.get(g).copied().ok_or(Error::TruncationExceeded {
            needed: self.spec.truncation_radius + 1,
            radius: self.spec.truncation_radius,
        })
    }

    /// `V(ρ) = #{g : |g| ≤ ρ}` for `ρ` within the truncation radius.
    pub fn volume(&self, rho: f64) -> Result<usize> {
        let r = rho.max(0.0).floor() as usize;
        if r > self.spec.truncation_radius {
            return Err(Error::TruncationExceeded {
                needed: r,
                radius: self.spec.truncation_radius,
            });
        }
        Ok(self.shells.iter().take(r + 1).sum())
    }

    /// `μ` itself.
    pub fn mu<W: Weight>(&self) -> GroupMeasure<W> {
        GroupMeasure::from_pairs(
            self.spec
                .generators
                .iter()
                .map(|(g, w)| (*g, W::from_f64(*w))),
            1,
        )
    }

    pub fn delta<W: Weight>(&self) -> GroupMeasure<W> {
        GroupMeasure {
            entries: vec![(IDENTITY, W::one())],
            radius_bound: 0,
        }
    }

    /// `(μ * ν)(g) = Σ_h μ(h) ν(h⁻¹g)`.
    pub fn convolve<W: Weight>(&self, a: &GroupMeasure<W>, b: &GroupMeasure<W>) -> Result<GroupMeasure<W>> {
        let radius_bound = a.radius_bound + b.radius_bound;
        if radius_bound > self.spec.truncation_radius {
            return Err(Error::TruncationExceeded {
                needed: radius_bound,
                radius: self.spec.truncation_radius,
            });
        }
        let mut acc: FixedMap<Element, W> = FixedMap::default();
        acc.reserve(a.entries.len() + b.entries.len());
        for (h, x) in &a.entries {
            for (k, y) in &b.entries {
                let g = self.spec.kind.multiply(h, k);
                let term = x.times(y);
                acc.entry(g)
                    .and_modify(|v| *v = v.plus(&term))
                    .or_insert(term);
            }
        }
        Ok(GroupMeasure::from_pairs(acc, radius_bound))
    }
}

impl<W: Weight> GroupMeasure<W> {
    /// Sorts and merges pairs; exact zeros are dropped.
    pub fn from_pairs<I: IntoIterator<Item = (Element, W)>>(pairs: I, radius_bound: usize) -> Self {
        let mut entries: Vec<(Element, W)> = pairs.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Element, W)> = Vec::with_capacity(entries.len());
        for (g, w) in entries {
            match merged.last_mut() {
                Some((h, v)) if *h == g => *v = v.plus(&w),
                _ => merged.push((g, w)),
            }
        }
        merged.retain(|(_, w)| !w.is_zero());
        Self {
            entries: merged,
            radius_bound,
        }
    }

    pub fn entries(&self) -> &[(Element, W)] {
        &self.entries
    }

    pub fn radius_bound(&self) -> usize {
        self.radius_bound
    }

    pub fn at(&self, g: &Element) -> W {
        self.entries
            .binary_search_by(|(h, _)| h.cmp(g))
            .map(|i| self.entries[i].1.clone())
            .unwrap_or_else(|_| W::zero())
    }

    pub fn total_mass(&self) -> W {
        self.entries.iter().fold(W::zero(), |acc, (_, w)| acc.plus(w))
    }

    /// `Σ_g |μ(g)|`.
    pub fn abs_mass(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w.to_f64().abs()).sum()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let neg = other
            .entries
            .iter()
            .map(|(g, w)| (*g, W::zero().minus(w)));
        Self::from_pairs(
            self.entries.iter().cloned().chain(neg),
            self.radius_bound.max(other.radius_bound),
        )
    }

    pub fn to_f64(&self) -> GroupMeasure<f64> {
        GroupMeasure {
            entries: self.entries.iter().map(|(g, w)| (*g, w.to_f64())).collect(),
            radius_bound: self.radius_bound,
        }
    }
}

/// `μ_k = δ_e - (δ_e - μ)^{*k}`.
pub fn group_mu_k<W: Weight>(group: &Group, k: usize) -> Result<GroupMeasure<W>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let delta = group.delta::<W>();
    let step = delta.sub(&group.mu());
    let mut power = delta.clone();
    for _ in 0..k {
        power = group.convolve(&power, &step)?;
    }
    let mut out = delta.sub(&power);
    out.radius_bound = k;
    Ok(out)
}

/// `μ_k^{(n)}` with `μ_k^{(0)} = δ_e`.
pub fn group_power<W: Weight>(group: &Group, mu_k: &GroupMeasure<W>, n: usize) -> Result<GroupMeasure<W>> {
    let needed = mu_k.radius_bound * n;
    if needed > group.truncation_radius() {
        return Err(Error::TruncationExceeded {
            needed,
            radius: group.truncation_radius(),
        });
    }
    let mut out = group.delta();
    for _ in 0..n {
        out = group.convolve(&out, mu_k)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummabilityProfile {
    pub k: usize,
    /// `sums[n-1] = Σ_g |μ_k^{(n)}(g)|`.
    pub sums: Vec<f64>,
    /// `s = Σ_g |μ_k(g)|`, the base of the naive bound `sⁿ`.
    pub naive_base: f64,
    pub max: f64,
}

impl SummabilityProfile {
    /// `max / min` of the sums over `n ∈ lo..=hi`.
    pub fn plateau_ratio(&self, lo: usize, hi: usize) -> f64 {
        let window = &self.sums[lo - 1..hi];
        let max = window.iter().copied().fold(f64::MIN, f64::max);
        let min = window.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }

    pub fn naive_bound(&self, n: usize) -> f64 {
        self.naive_base.powi(n as i32)
    }
}

pub fn summability_profile(group: &Group, k: usize, n_max: usize) -> Result<SummabilityProfile> {
    let mu_k = group_mu_k::<f64>(group, k)?;
    let needed = mu_k.radius_bound() * n_max;
    if needed > group.truncation_radius() {
        return Err(Error::TruncationExceeded {
            needed,
            radius: group.truncation_radius(),
        });
    }
    let mut sums = Vec::with_capacity(n_max);
    let mut cur = mu_k.clone();
    for n in 1..=n_max {
        if n > 1 {
            cur = group.convolve(&cur, &mu_k)?;
        }
        sums.push(cur.abs_mass());
    }
    let max = sums.iter().copied().fold(0.0, f64::max);
    Ok(SummabilityProfile {
        k,
        sums,
        naive_base: mu_k.abs_mass(),
        max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceReport {
    pub k: usize,
    pub n_max: usize,
    /// `μ_k^{(n)} - μ_k^{(n+1)} = (δ_e - μ_k) * μ_k^{(n)}` held exactly for every `n`.
    pub identity_exact: bool,
    pub identity_failures: Vec<usize>,
    pub fit: EnvelopeFit,
}

/// Checks the difference identity in exact arithmetic for `n = 0..=n_max` and
/// fits `|μ_k^{(n)} - μ_k^{(n+1)}|(g) ≤ (C/n) V(n^{1/2k})^{-1} exp(-c (|g|/n^{1/2k})^γ)`
/// over `n = 1..=n_max`.
pub fn difference_bound_check(
    group: &Group,
    k: usize,
    n_max: usize,
    c_grid: &[f64],
    slack: f64,
) -> Result<DifferenceReport> {
    let mu_k = group_mu_k::<BigRational>(group, k)?;
    let needed = mu_k.radius_bound() * (n_max + 1);
    if needed > group.truncation_radius() {
        return Err(Error::TruncationExceeded {
            needed,
            radius: group.truncation_radius(),
        });
    }
    let step = group.delta::<BigRational>().sub(&mu_k);
    let gamma = 2.0 * k as f64 / (2.0 * k as f64 - 1.0);
    let mut cur = group.delta::<BigRational>();
    let mut failures = Vec::new();
    let mut data = Vec::new();
    for n in 0..=n_max {
        let next = group.convolve(&cur, &mu_k)?;
        let lhs = cur.sub(&next);
        let rhs = group.convolve(&step, &cur)?;
        if lhs.entries() != rhs.entries() {
            failures.push(n);
        }
        if n >= 1 {
            let sigma = (n as f64).powf(1.0 / (2.0 * k as f64));
            let vol = group.volume(sigma)? as f64;
            for (g, w) in lhs.entries() {
                let len = group.word_length(g)? as f64;
                data.push(EnvelopeDatum {
                    n,
                    d: len,
                    lhs: w.to_f64().abs(),
                    base: 1.0 / (n as f64 * vol),
                    x: len / sigma,
                });
            }
        }
        cur = next;
    }
    let fit = fit_envelope(&data, gamma, c_grid, slack)?;
    Ok(DifferenceReport {
        k,
        n_max,
        identity_exact: failures.is_empty(),
        identity_failures: failures,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transmutation::lazy_walk_law;

    fn z(r: usize) -> Group {
        Group::new(GroupSpec::lazy_lattice(1, r)).unwrap()
    }

    #[test]
    fn heisenberg_law() {
        let h = GroupKind::Heisenberg3;
        let a = [1, 2, 3];
        let b = [-4, 5, 6];
        assert_eq!(h.multiply(&a, &b), [-3, 7, 14]);
        assert_eq!(h.multiply(&a, &h.inverse(&a)), IDENTITY);
        assert_eq!(h.multiply(&h.inverse(&a), &a), IDENTITY);
        let c = [2, -1, 0];
        assert_eq!(h.multiply(&h.multiply(&a, &b), &c), h.multiply(&a, &h.multiply(&b, &c)));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = GroupSpec::lazy_lattice(2, 5);
        s.generators[1].1 = 0.2;
        assert!(Group::new(s).is_err());
        assert!(Group::new(GroupSpec::lazy_lattice(4, 5)).is_err());
    }

    #[test]
    fn mu_k_examples() {
        let g = z(10);
        let mu = group_mu_k::<f64>(&g, 1).unwrap();
        assert_eq!(mu, g.mu());
        let mu2 = group_mu_k::<f64>(&g, 2).unwrap();
        let expect = [(-2, -1.0 / 16.0), (-1, 0.25), (0, 0.625), (1, 0.25), (2, -1.0 / 16.0)];
        for (x, w) in expect {
            assert_eq!(mu2.at(&[x, 0, 0]), w);
        }
        assert_eq!(mu2.abs_mass(), 1.25);
        for k in 1..5 {
            let m = group_mu_k::<BigRational>(&g, k).unwrap();
            assert_eq!(m.total_mass(), Weight::one());
        }
    }

    #[test]
    fn powers() {
        let g = z(12);
        let mu = g.mu::<f64>();
        assert_eq!(group_power(&g, &mu, 0).unwrap(), g.delta());
        let two = group_power(&g, &mu, 2).unwrap();
        let law = lazy_walk_law(0.0, 2).unwrap();
        for m in -2..=2 {
            assert_eq!(two.at(&[m, 0, 0]), law.at(m));
        }
        assert!(matches!(group_power(&g, &mu, 13), Err(Error::TruncationExceeded { .. })));
    }

    #[test]
    fn heisenberg_power_mass() {
        let g = Group::new(GroupSpec::lazy_heisenberg(6)).unwrap();
        let p = group_power(&g, &g.mu::<BigRational>(), 6).unwrap();
        assert_eq!(p.total_mass(), Weight::one());
        for (e, _) in p.entries() {
            assert!(g.word_length(e).unwrap() <= 6);
        }
        // symmetric under inversion
        let kind = g.kind();
        for (e, w) in p.entries() {
            assert_eq!(&p.at(&kind.inverse(e)), w);
        }
    }

    #[test]
    fn volumes() {
        let g = Group::new(GroupSpec::lazy_lattice(2, 10)).unwrap();
        for n in 0..=10usize {
            assert_eq!(g.volume(n as f64).unwrap(), 2 * n * n + 2 * n + 1);
        }
        assert!(g.volume(11.0).is_err());
    }

    #[test]
    fn summability_small() {
        let g = z(40);
        let prof = summability_profile(&g, 1, 40).unwrap();
        assert!(prof.sums.iter().all(|&s| (s - 1.0).abs() < 1e-12));
        let prof = summability_profile(&g, 2, 20).unwrap();
        assert_eq!(prof.naive_base, 1.25);
    }

    #[test]
    fn difference_identity() {
        let g = z(44);
        let rep = difference_bound_check(&g, 2, 20, &super::super::envelope::default_c_grid(), 2.0).unwrap();
        assert!(rep.identity_exact);
        assert!(rep.fit.covers());
        let rep0 = difference_bound_check(&g, 1, 0, &[1.0], 2.0);
        assert_eq!(rep0.unwrap_err(), Error::EmptyData);
    }
}
