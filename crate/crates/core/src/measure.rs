//! Finitely supported probability measures on `F_k` and `Z^d`.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::group::{Alphabet, GroupElement};
use crate::scalar::Scalar;

/// Default support cap for convolution powers.
pub const DEFAULT_CAPACITY: usize = 2_000_000;

/// A probability measure with finite support, stored as a sparse table sorted
/// in shortlex order of the elements.
#[derive(Clone, Debug)]
pub struct FiniteMeasure<S: Scalar> {
    alphabet: Alphabet,
    entries: Vec<(GroupElement, S)>,
    retained_mass: S,
}

/// Outcome of [`FiniteMeasure::support_generates`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generation {
    /// Products of support elements cover the whole ball of this radius.
    YesByRadius(usize),
    Unknown,
}

impl<S: Scalar> FiniteMeasure<S> {
    /// Builds a measure from weights, merging repeated elements and dropping
    /// zero weights. Fails unless the weights are nonnegative with total 1.
    pub fn new(alphabet: Alphabet, weights: Vec<(GroupElement, S)>) -> Result<Self> {
        let m = Self::unnormalized(alphabet, weights)?;
        let mass = m.total_mass();
        if !mass.abs_diff_within(&S::one(), &S::tolerance()) {
            return Err(Error::Config(format!("measure has total mass {mass}, expected 1")));
        }
        Ok(m)
    }

    fn unnormalized(alphabet: Alphabet, weights: Vec<(GroupElement, S)>) -> Result<Self> {
        let mut table: HashMap<GroupElement, S> = HashMap::new();
        for (g, w) in weights {
            alphabet.check(&g)?;
            if w < S::zero() {
                return Err(Error::Config(format!("negative weight {w} at {}", alphabet.format(&g))));
            }
            *table.entry(g).or_insert_with(S::zero) += w;
        }
        Ok(Self::from_table(alphabet, table, S::one()))
    }

    fn from_table(alphabet: Alphabet, table: HashMap<GroupElement, S>, retained_mass: S) -> Self {
        let mut entries: Vec<(GroupElement, S)> = table.into_iter().filter(|(_, w)| !w.is_zero()).collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        FiniteMeasure { alphabet, entries, retained_mass }
    }

    pub fn dirac(alphabet: Alphabet, g: GroupElement) -> Result<Self> {
        Self::new(alphabet, vec![(g, S::one())])
    }

    /// Uniform measure on the given (distinct) elements.
    pub fn uniform(alphabet: Alphabet, elements: Vec<GroupElement>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Config("uniform measure needs at least one element".into()));
        }
        let w = S::ratio(1, elements.len() as i64);
        Self::new(alphabet, elements.into_iter().map(|g| (g, w.clone())).collect())
    }

    /// Uniform measure on all generators and their inverses.
    pub fn nearest_neighbor(alphabet: Alphabet) -> Self {
        let letters = alphabet.letters().into_iter().map(|l| alphabet.letter_element(l)).collect();
        Self::uniform(alphabet, letters).expect("nonempty alphabet")
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Support with weights, in shortlex order.
    pub fn entries(&self) -> &[(GroupElement, S)] {
        &self.entries
    }

    pub fn support(&self) -> impl Iterator<Item = &GroupElement> {
        self.entries.iter().map(|(g, _)| g)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        S::EXACT
    }

    pub fn weight(&self, g: &GroupElement) -> S {
        match self.entries.binary_search_by(|(h, _)| h.cmp(g)) {
            Ok(i) => self.entries[i].1.clone(),
            Err(_) => S::zero(),
        }
    }

    pub fn total_mass(&self) -> S {
        self.entries.iter().map(|(_, w)| w.clone()).sum()
    }

    /// Mass kept by truncation before renormalization (1 if nothing was cut).
    pub fn retained_mass(&self) -> &S {
        &self.retained_mass
    }

    /// Largest word length in the support.
    pub fn max_step_length(&self) -> usize {
        self.entries.iter().map(|(g, _)| g.len()).max().unwrap_or(0)
    }

    /// Whether this is the uniform measure on `{x^{±1}}` over all generators.
    pub fn is_nearest_neighbor_uniform(&self) -> bool {
        let k2 = 2 * self.alphabet.rank();
        self.entries.len() == k2
            && self.entries.iter().all(|(g, w)| {
                g.len() == 1 && w.abs_diff_within(&S::ratio(1, k2 as i64), &S::tolerance())
            })
    }

    /// `sum_g f(g) mu(g)`.
    pub fn expectation<F: FnMut(&GroupElement) -> S>(&self, mut f: F) -> S {
        self.entries.iter().map(|(g, w)| f(g) * w.clone()).sum()
    }

    /// Converts weights to another scalar type.
    pub fn cast<T: Scalar>(&self) -> FiniteMeasure<T> {
        FiniteMeasure {
            alphabet: self.alphabet.clone(),
            entries: self
                .entries
                .iter()
                .map(|(g, w)| (g.clone(), T::from_f64_value(w.to_f64_value())))
                .collect(),
            retained_mass: T::from_f64_value(self.retained_mass.to_f64_value()),
        }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.alphabet != other.alphabet {
            return Err(Error::AlphabetMismatch("convolution of measures on different groups".into()));
        }
        Ok(())
    }

    fn convolve_table(&self, other: &Self) -> HashMap<GroupElement, S> {
        let mut table: HashMap<GroupElement, S> = HashMap::with_capacity(self.len() * other.len());
        for (h, wh) in &self.entries {
            for (k, wk) in &other.entries {
                let p = wh.clone() * wk.clone();
                *table.entry(h.mul(k)).or_insert_with(S::zero) += p;
            }
        }
        table
    }

    /// `(mu * nu)(g) = sum_{hk = g} mu(h) nu(k)`.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::from_table(self.alphabet.clone(), self.convolve_table(other), S::one()))
    }

    /// `mu^{*n}` with mass truncation `tau`: the lowest-weight atoms (ties
    /// broken by shortlex order) are dropped as long as the total dropped mass
    /// stays within `tau`; the result is renormalized and remembers the
    /// retained mass.
    pub fn convolve_power(&self, n: usize, tau: f64, cap: usize) -> Result<Self> {
        Ok(self.powers(n, tau, cap)?.pop().expect("at least the zeroth power"))
    }

    /// `[mu^{*0}, ..., mu^{*n}]`, truncated as in [`FiniteMeasure::convolve_power`].
    pub fn powers(&self, n: usize, tau: f64, cap: usize) -> Result<Vec<Self>> {
        if !(0.0..1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!("truncation {tau} outside [0, 1)")));
        }
        let floor = S::one() - S::from_f64_value(tau);
        let mut acc = Self::dirac(self.alphabet.clone(), self.alphabet.identity())?;
        let mut mass = S::one();
        let mut out = vec![acc.clone()];
        for _ in 0..n {
            let table = acc.convolve_table(self);
            let mut entries: Vec<(GroupElement, S)> = table.into_iter().filter(|(_, w)| !w.is_zero()).collect();
            entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
            if tau > 0.0 {
                while let Some((_, w)) = entries.last() {
                    let after = mass.clone() - w.clone();
                    if after < floor {
                        break;
                    }
                    mass = after;
                    entries.pop();
                }
            }
            if entries.len() > cap {
                return Err(Error::Capacity(format!(
                    "support of the convolution power has {} elements, above the cap of {cap}; use a larger truncation",
                    entries.len()
                )));
            }
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            acc = FiniteMeasure { alphabet: self.alphabet.clone(), entries, retained_mass: S::one() };
            let mut normalized = acc.clone();
            if tau > 0.0 {
                for (_, w) in normalized.entries.iter_mut() {
                    *w /= mass.clone();
                }
            }
            normalized.retained_mass = mass.clone();
            out.push(normalized);
        }
        Ok(out)
    }

    /// Pushforward under inversion.
    pub fn reflect(&self) -> Self {
        let table = self.entries.iter().map(|(g, w)| (g.inverse(), w.clone())).collect();
        Self::from_table(self.alphabet.clone(), table, self.retained_mass.clone())
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries
            .iter()
            .all(|(g, w)| w.abs_diff_within(&self.weight(&g.inverse()), &S::tolerance()))
    }

    /// `(mu + reflect(mu)) / 2`.
    pub fn symmetrize(&self) -> Self {
        let half = S::ratio(1, 2);
        let mut table: HashMap<GroupElement, S> = HashMap::new();
        for (g, w) in &self.entries {
            *table.entry(g.clone()).or_insert_with(S::zero) += w.clone() * half.clone();
            *table.entry(g.inverse()).or_insert_with(S::zero) += w.clone() * half.clone();
        }
        Self::from_table(self.alphabet.clone(), table, self.retained_mass.clone())
    }

    /// Alias-table sampler over the support.
    pub fn sampler(&self) -> Sampler {
        let weights: Vec<f64> = self.entries.iter().map(|(_, w)| w.to_f64_value()).collect();
        Sampler {
            elements: self.entries.iter().map(|(g, _)| g.clone()).collect(),
            alias: WeightedAliasIndex::new(weights).expect("positive finite weights"),
        }
    }

    /// One draw by inverse-CDF over the sorted table. For repeated draws build
    /// a [`Sampler`].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        let u: f64 = rng.random::<f64>() * self.total_mass().to_f64_value();
        let mut acc = 0.0;
        for (g, w) in &self.entries {
            acc += w.to_f64_value();
            if u < acc {
                return g.clone();
            }
        }
        self.entries.last().expect("nonempty support").0.clone()
    }

    /// Semi-decides whether the support generates the group as a semigroup:
    /// products of at most `horizon` support elements are collected and the
    /// largest fully covered ball radius is reported.
    pub fn support_generates(&self, horizon: usize, cap: usize) -> Result<Generation> {
        let support: Vec<&GroupElement> = self.support().collect();
        let mut reached: HashSet<GroupElement> = HashSet::new();
        let mut frontier: HashSet<GroupElement> = support.iter().map(|g| (*g).clone()).collect();
        reached.extend(frontier.iter().cloned());
        for _ in 1..horizon {
            let mut next = HashSet::new();
            for g in &frontier {
                for s in &support {
                    let p = g.mul(s);
                    if !reached.contains(&p) {
                        next.insert(p);
                    }
                }
            }
            reached.extend(next.iter().cloned());
            if reached.len() > cap {
                return Err(Error::Capacity(format!("semigroup closure exceeds {cap} elements")));
            }
            frontier = next;
        }
        let max_radius = horizon * self.max_step_length();
        let mut covered = None;
        for r in 1..=max_radius {
            if self.alphabet.ball_size(r) > reached.len() as u128 {
                break;
            }
            let ball = self.alphabet.enumerate_ball(r, cap)?;
            if ball.iter().all(|g| reached.contains(g)) {
                covered = Some(r);
            } else {
                break;
            }
        }
        Ok(covered.map_or(Generation::Unknown, Generation::YesByRadius))
    }
}

/// Repeated sampling from a fixed measure in O(1) per draw.
#[derive(Clone, Debug)]
pub struct Sampler {
    elements: Vec<GroupElement>,
    alias: WeightedAliasIndex<f64>,
}

impl Sampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &GroupElement {
        &self.elements[self.alias.sample(rng)]
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::scalar::Rational;

    fn z() -> Alphabet {
        Alphabet::free_abelian(1)
    }

    fn zpm1<S: Scalar>() -> FiniteMeasure<S> {
        FiniteMeasure::nearest_neighbor(z())
    }

    #[test]
    fn z_convolution_by_enumeration() {
        let mu = zpm1::<Rational>();
        let sq = mu.convolve(&mu).unwrap();
        let g = |x: i64| GroupElement::Vector(vec![x]);
        assert_eq!(sq.len(), 3);
        assert_eq!(sq.weight(&g(-2)), Rational::new(1.into(), 4.into()));
        assert_eq!(sq.weight(&g(0)), Rational::new(1.into(), 2.into()));
        assert_eq!(sq.weight(&g(2)), Rational::new(1.into(), 4.into()));
    }

    #[test]
    fn dirac_products_and_unit() {
        let f2 = Alphabet::free(2);
        let a = FiniteMeasure::<f64>::dirac(f2.clone(), f2.parse("a").unwrap()).unwrap();
        let b = FiniteMeasure::<f64>::dirac(f2.clone(), f2.parse("b").unwrap()).unwrap();
        let ab = a.convolve(&b).unwrap();
        assert_eq!(ab.entries(), &[(f2.parse("a b").unwrap(), 1.0)]);
        let mu = FiniteMeasure::<f64>::nearest_neighbor(f2.clone());
        let e = FiniteMeasure::<f64>::dirac(f2.clone(), f2.identity()).unwrap();
        assert_eq!(mu.convolve(&e).unwrap().entries(), mu.entries());
    }

    #[test]
    fn return_probability_f2() {
        let f2 = Alphabet::free(2);
        let mu = FiniteMeasure::<Rational>::nearest_neighbor(f2.clone());
        let p2 = mu.convolve_power(2, 0.0, DEFAULT_CAPACITY).unwrap();
        assert_eq!(p2.weight(&f2.identity()), Rational::new(1.into(), 4.into()));
        assert_eq!(p2.retained_mass(), &Rational::from_int(1));
        let p0 = mu.convolve_power(0, 0.0, DEFAULT_CAPACITY).unwrap();
        assert_eq!(p0.entries(), &[(f2.identity(), Rational::from_int(1))]);
    }

    #[test]
    fn truncation_keeps_required_mass() {
        let f2 = Alphabet::free(2);
        let mu = FiniteMeasure::<f64>::nearest_neighbor(f2);
        let full = mu.convolve_power(6, 0.0, DEFAULT_CAPACITY).unwrap();
        let cut = mu.convolve_power(6, 0.05, DEFAULT_CAPACITY).unwrap();
        assert!(cut.len() < full.len());
        assert!(*cut.retained_mass() >= 0.95);
        assert!((cut.total_mass() - 1.0).abs() < 1e-12);
        assert!(matches!(mu.convolve_power(6, 0.0, 100), Err(Error::Capacity(_))));
    }

    #[test]
    fn symmetry() {
        let f2 = Alphabet::free(2);
        let mu = FiniteMeasure::<Rational>::nearest_neighbor(f2.clone());
        assert!(mu.is_symmetric());
        let a = FiniteMeasure::<Rational>::dirac(f2.clone(), f2.parse("a").unwrap()).unwrap();
        assert!(!a.is_symmetric());
        let s = a.symmetrize();
        let half = Rational::new(1.into(), 2.into());
        assert_eq!(s.weight(&f2.parse("a").unwrap()), half);
        assert_eq!(s.weight(&f2.parse("a^-1").unwrap()), half);
        assert!(s.is_symmetric());
    }

    #[test]
    fn mass_validation() {
        let g = |x: i64| GroupElement::Vector(vec![x]);
        assert!(FiniteMeasure::<f64>::new(z(), vec![(g(1), 0.5)]).is_err());
        assert!(FiniteMeasure::<f64>::new(z(), vec![(g(1), 1.5), (g(2), -0.5)]).is_err());
        let merged = FiniteMeasure::<f64>::new(z(), vec![(g(1), 0.5), (g(1), 0.5), (g(2), 0.0)]).unwrap();
        assert_eq!(merged.len(), 1);
    }

    #[test]
    fn sampling_frequency() {
        let f2 = Alphabet::free(2);
        let mu = FiniteMeasure::<f64>::nearest_neighbor(f2.clone());
        let sampler = mu.sampler();
        let a = f2.parse("a").unwrap();
        let mut r = rng::stream(11, rng::domain::WALK, 0);
        let n = 100_000;
        let hits = (0..n).filter(|_| sampler.sample(&mut r) == &a).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.25).abs() < 0.005, "{freq}");

        let mut r1 = rng::stream(3, 1, 9);
        let mut r2 = rng::stream(3, 1, 9);
        for _ in 0..50 {
            assert_eq!(mu.sample(&mut r1), mu.sample(&mut r2));
        }
        let d = FiniteMeasure::<f64>::dirac(f2.clone(), a.clone()).unwrap();
        assert!((0..20).all(|_| d.sample(&mut r1) == a));
    }

    #[test]
    fn generation_semidecision() {
        let f2 = Alphabet::free(2);
        let mu = FiniteMeasure::<f64>::nearest_neighbor(f2.clone());
        assert_eq!(mu.support_generates(2, 10_000).unwrap(), Generation::YesByRadius(2));
        let a = FiniteMeasure::<f64>::dirac(f2.clone(), f2.parse("a").unwrap()).unwrap();
        assert_eq!(a.support_generates(4, 10_000).unwrap(), Generation::Unknown);
        let plus = FiniteMeasure::<f64>::dirac(z(), GroupElement::Vector(vec![1])).unwrap();
        assert_eq!(plus.support_generates(5, 10_000).unwrap(), Generation::Unknown);
        assert_eq!(zpm1::<f64>().support_generates(3, 10_000).unwrap(), Generation::YesByRadius(3));
    }
}
