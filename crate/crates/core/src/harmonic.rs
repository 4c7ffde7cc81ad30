//! Distortion, the correction sequence `psi_n`, Cesàro quasi-biharmonic
//! representatives and the tameness semi-decision.
//!
//! With `L_n(g) = sum_h phi_hat(gh) mu^n(h)` and `a_n = L_n(e)`:
//!
//! ```text
//! psi_n(g)     = L_n(g) - phi_hat(g) - a_n
//! phi_tilde(g) = phi_hat(g) + (1/N) sum_{n<N} psi_n(g)
//! sum_s phi_tilde(gs) mu(s) - phi_tilde(g) - a_N/N = psi_N(g)/N
//! ```
//!
//! The last line holds exactly and is what the exact mode certifies.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{Alphabet, GroupElement};
use crate::measure::FiniteMeasure;
use crate::quasimorphism::Quasimorphism;
use crate::rng;
use crate::scalar::Scalar;

/// Estimates of `a_n = int phi d mu^n` and the drift `ell = a_N / N`.
#[derive(Clone, Debug, Serialize)]
pub struct DistortionEstimate {
    pub n: usize,
    pub a: Vec<f64>,
    /// Standard errors of `a_n` (sampled mode only).
    pub a_se: Option<Vec<f64>>,
    pub ell: f64,
    /// `D/N` plus truncation and sampling slack.
    pub ell_error: f64,
    pub defect: f64,
    /// Per-n truncation slack `2 B_n (1 - m_ret)` with `B_n` a sup bound of
    /// `|phi|` on the support of `mu^n`.
    pub truncation_slack: Vec<f64>,
    pub exact: bool,
}

impl DistortionEstimate {
    /// Largest `|a_{m+n} - a_m - a_n|` over `m + n <= N`.
    pub fn max_subadditivity_gap(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for m in 0..=self.n {
            for k in 0..=self.n - m {
                worst = worst.max((self.a[m + k] - self.a[m] - self.a[k]).abs());
            }
        }
        worst
    }
}

fn value<S: Scalar>(phi: &Quasimorphism, g: &GroupElement) -> S {
    S::from_f64_value(phi.eval(g))
}

fn sup_on_steps<S: Scalar>(phi: &Quasimorphism, mu: &FiniteMeasure<S>) -> f64 {
    mu.support().map(|s| phi.eval(s).abs()).fold(0.0, f64::max)
}

/// Exact `a_n` for every tabulated power.
pub fn distortion_sequence<S: Scalar>(phi: &Quasimorphism, powers: &[FiniteMeasure<S>]) -> Vec<S> {
    powers.par_iter().map(|p| p.expectation(|h| value(phi, h))).collect()
}

/// Distortion from exact convolution powers (`mu^0..mu^N`).
pub fn distortion<S: Scalar>(phi: &Quasimorphism, powers: &[FiniteMeasure<S>]) -> Result<DistortionEstimate> {
    let defect = defect_of(phi)?;
    let n = powers.len() - 1;
    if n == 0 {
        return Err(Error::InvalidArgument("distortion needs N >= 1".into()));
    }
    let a: Vec<f64> = distortion_sequence(phi, powers).iter().map(|x| x.to_f64_value()).collect();
    let step_sup = sup_on_steps(phi, &powers[1]);
    let truncation_slack: Vec<f64> = powers
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let bound = k as f64 * step_sup + (k.saturating_sub(1)) as f64 * defect;
            2.0 * bound * (1.0 - p.retained_mass().to_f64_value())
        })
        .collect();
    Ok(DistortionEstimate {
        n,
        ell: a[n] / n as f64,
        ell_error: defect / n as f64 + truncation_slack[n] / n as f64,
        a,
        a_se: None,
        defect,
        truncation_slack,
        exact: S::EXACT,
    })
}

/// Distortion by `walks` sampled trajectories of length `n`.
pub fn distortion_sampled(
    phi: &Quasimorphism,
    mu: &FiniteMeasure<f64>,
    n: usize,
    walks: usize,
    seed: u64,
) -> Result<DistortionEstimate> {
    let defect = defect_of(phi)?;
    if n == 0 || walks < 2 {
        return Err(Error::InvalidArgument("sampled distortion needs N >= 1 and at least 2 walks".into()));
    }
    let sampler = mu.sampler();
    let e = phi.alphabet().identity();
    let per_walk: Vec<Vec<f64>> = (0..walks as u64)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(seed, rng::domain::HARMONIC, j);
            let mut cur = phi.cursor(&e);
            let mut out = Vec::with_capacity(n + 1);
            out.push(cur.value());
            for _ in 0..n {
                cur.multiply(sampler.sample(&mut r));
                cur.forget();
                out.push(cur.value());
            }
            out
        })
        .collect();
    let mut a = vec![0.0; n + 1];
    let mut a_se = vec![0.0; n + 1];
    for k in 0..=n {
        let (mean, se) = mean_se(per_walk.iter().map(|w| w[k]));
        a[k] = mean;
        a_se[k] = se;
    }
    Ok(DistortionEstimate {
        n,
        ell: a[n] / n as f64,
        ell_error: defect / n as f64 + 3.0 * a_se[n] / n as f64,
        a,
        a_se: Some(a_se),
        defect,
        truncation_slack: vec![0.0; n + 1],
        exact: false,
    })
}

pub(crate) fn mean_se<I: Iterator<Item = f64>>(values: I) -> (f64, f64) {
    let mut count = 0usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for x in values {
        count += 1;
        sum += x;
        sum_sq += x * x;
    }
    if count == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum / count as f64;
    if count < 2 {
        return (mean, f64::NAN);
    }
    let var = ((sum_sq - count as f64 * mean * mean) / (count as f64 - 1.0)).max(0.0);
    (mean, (var / count as f64).sqrt())
}

fn defect_of(phi: &Quasimorphism) -> Result<f64> {
    phi.defect_bound()
        .ok_or_else(|| Error::Config(format!("{} has no defect bound", phi.description())))
}

/// `psi_n(g) = sum_h d phi_hat(g, h) mu^n(h)`, exact over the table of `mu^n`.
pub fn psi<S: Scalar>(phi_hat: &Quasimorphism, mu_n: &FiniteMeasure<S>, g: &GroupElement) -> S {
    mu_n.expectation(|h| value::<S>(phi_hat, &g.mul(h)) - value::<S>(phi_hat, g) - value::<S>(phi_hat, h))
}

/// Sampled `psi_n(g)` from `samples` walk products of length `n`, with SE.
pub fn psi_sampled(
    phi_hat: &Quasimorphism,
    mu: &FiniteMeasure<f64>,
    n: usize,
    g: &GroupElement,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let sampler = mu.sampler();
    let phi_g = phi_hat.eval(g);
    let draws: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(seed, rng::domain::HARMONIC, j);
            let mut h = phi_hat.alphabet().identity();
            for _ in 0..n {
                h = h.mul(sampler.sample(&mut r));
            }
            phi_hat.eval(&g.mul(&h)) - phi_g - phi_hat.eval(&h)
        })
        .collect();
    mean_se(draws.into_iter())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Mode {
    Exact,
    MonteCarlo { paths: usize, seed: u64 },
}

/// Right and left residuals of `phi_tilde` at one element.
#[derive(Clone, Debug)]
pub struct Residual<S> {
    pub g: GroupElement,
    /// `sum_s phi_tilde(gs) mu(s) - phi_tilde(g) - ell`
    pub right: S,
    /// `sum_s phi_tilde(sg) mu(s) - phi_tilde(g) - ell`
    pub left: S,
    /// `psi_N(g)/N + (a_N/N - ell)`, the exact value of `right` (exact mode).
    pub predicted_right: Option<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

/// Tabulated `phi_tilde_N` on an evaluation set and its one-step neighbours.
#[derive(Clone, Debug)]
pub struct HarmonicApprox<S: Scalar> {
    pub n: usize,
    pub eval_set: Vec<GroupElement>,
    table: HashMap<GroupElement, S>,
    pub ell: S,
    pub distortion: DistortionEstimate,
    /// Working defect bound `D_hat` of `phi_hat`.
    pub defect_hat: f64,
    pub mode: Mode,
    mu: FiniteMeasure<S>,
    /// `psi_N(g)` on the evaluation set (exact mode).
    psi_last: HashMap<GroupElement, S>,
    /// `a_N` in the working scalar.
    a_last: S,
}

impl<S: Scalar> HarmonicApprox<S> {
    pub fn value(&self, g: &GroupElement) -> Option<&S> {
        self.table.get(g)
    }

    /// Tabulated elements in shortlex order.
    pub fn tabulated(&self) -> Vec<(&GroupElement, &S)> {
        let mut rows: Vec<_> = self.table.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        rows
    }

    pub fn measure(&self) -> &FiniteMeasure<S> {
        &self.mu
    }

    /// Certified bound on the right residual in exact mode: `2 D_hat / N`.
    pub fn residual_bound(&self) -> f64 {
        2.0 * self.defect_hat / self.n as f64
    }

    /// Keeps only the given elements of the table (for partial tabulations).
    pub fn restrict(&mut self, keep: &[GroupElement]) {
        let keep: HashSet<&GroupElement> = keep.iter().collect();
        self.table.retain(|g, _| keep.contains(g));
    }

    fn lookup(&self, g: &GroupElement, missing: &mut Vec<GroupElement>) -> S {
        match self.table.get(g) {
            Some(v) => v.clone(),
            None => {
                missing.push(g.clone());
                S::zero()
            }
        }
    }

    /// Residuals on the evaluation set. Fails with a coverage error listing
    /// products that are not tabulated.
    pub fn residuals(&self) -> Result<Vec<Residual<S>>> {
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(self.eval_set.len());
        let n = S::from_int(self.n as i64);
        for g in &self.eval_set {
            let here = self.lookup(g, &mut missing);
            let mut right = S::zero();
            let mut left = S::zero();
            for (s, w) in self.mu.entries() {
                right += self.lookup(&g.mul(s), &mut missing) * w.clone();
                left += self.lookup(&s.mul(g), &mut missing) * w.clone();
            }
            right -= here.clone() + self.ell.clone();
            left -= here + self.ell.clone();
            let predicted_right = self
                .psi_last
                .get(g)
                .map(|p| p.clone() / n.clone() + (self.a_last.clone() / n.clone() - self.ell.clone()));
            out.push(Residual { g: g.clone(), right, left, predicted_right });
        }
        if !missing.is_empty() {
            missing.sort();
            missing.dedup();
            let names = missing.iter().map(|g| self.mu.alphabet().format(g)).collect();
            return Err(Error::Coverage(names));
        }
        Ok(out)
    }

    /// Residuals on one side only, as `(g, value)` pairs.
    pub fn side_residuals(&self, side: Side) -> Result<Vec<(GroupElement, S)>> {
        Ok(self
            .residuals()?
            .into_iter()
            .map(|r| match side {
                Side::Right => (r.g, r.right),
                Side::Left => (r.g, r.left),
            })
            .collect())
    }

    /// Largest `|phi_tilde(g) - phi_hat(g)|` over the table.
    pub fn max_distance_to(&self, phi_hat: &Quasimorphism) -> f64 {
        self.table
            .iter()
            .map(|(g, v)| (v.to_f64_value() - phi_hat.eval(g)).abs())
            .fold(0.0, f64::max)
    }
}

/// `E`, `E * supp mu` and `supp mu * E`, sorted.
pub fn neighbourhood<S: Scalar>(eval_set: &[GroupElement], mu: &FiniteMeasure<S>) -> Vec<GroupElement> {
    let mut set: HashSet<GroupElement> = eval_set.iter().cloned().collect();
    for g in eval_set {
        for s in mu.support() {
            set.insert(g.mul(s));
            set.insert(s.mul(g));
        }
    }
    let mut out: Vec<_> = set.into_iter().collect();
    out.sort();
    out
}

/// Exact Cesàro representative `phi_tilde_N` tabulated on `eval_set` and its
/// neighbours. `phi_hat` should be (approximately) homogeneous and carry a
/// defect bound.
pub fn biharmonic_approx<S: Scalar>(
    phi_hat: &Quasimorphism,
    mu: &FiniteMeasure<S>,
    n: usize,
    eval_set: &[GroupElement],
    tau: f64,
    cap: usize,
) -> Result<HarmonicApprox<S>> {
    if n == 0 {
        return Err(Error::InvalidArgument("averaging depth N must be at least 1".into()));
    }
    let defect_hat = defect_of(phi_hat)?;
    for g in eval_set {
        mu.alphabet().check(g)?;
    }
    let powers = mu.powers(n, tau, cap)?;
    let a = distortion_sequence(phi_hat, &powers);
    let distortion = distortion(phi_hat, &powers)?;
    let nn = S::from_int(n as i64);

    let tilde = |x: &GroupElement| -> S {
        let base = value::<S>(phi_hat, x);
        let mut acc = S::zero();
        for (k, p) in powers[..n].iter().enumerate() {
            let l = p.expectation(|h| value::<S>(phi_hat, &x.mul(h)));
            acc += l - base.clone() - a[k].clone();
        }
        base + acc / nn.clone()
    };

    let points = neighbourhood(eval_set, mu);
    let values: Vec<S> = points.par_iter().map(&tilde).collect();
    let at_e = tilde(&mu.alphabet().identity());
    let table: HashMap<GroupElement, S> = points
        .into_iter()
        .zip(values)
        .map(|(g, v)| (g, v - at_e.clone()))
        .collect();
    let psi_last: HashMap<GroupElement, S> = eval_set
        .par_iter()
        .map(|g| (g.clone(), psi(phi_hat, &powers[n], g)))
        .collect();
    Ok(HarmonicApprox {
        n,
        eval_set: eval_set.to_vec(),
        table,
        ell: a[n].clone() / nn,
        distortion,
        defect_hat,
        mode: Mode::Exact,
        mu: mu.clone(),
        psi_last,
        a_last: a[n].clone(),
    })
}

/// Sampled Cesàro representatives.
///
/// A realization fixes `paths` walks `h^(j)` of length `N` and evaluates
///
/// ```text
/// phi_tilde(x) = mean_{j, n<N} [phi_hat(x h_n^(j)) - phi_hat(h_n^(j))]
/// ```
///
/// which is the Cesàro formula with every `mu^n`-integral replaced by the
/// same empirical measure (common random numbers), normalized so that
/// `phi_tilde(e) = 0`. A realization is a deterministic function of
/// `(seed, index)`.
#[derive(Clone, Debug)]
pub struct CesaroSampler {
    phi_hat: Quasimorphism,
    mu: FiniteMeasure<f64>,
    sampler: crate::measure::Sampler,
    pub n: usize,
    pub paths: usize,
    pub seed: u64,
}

impl CesaroSampler {
    pub fn new(phi_hat: Quasimorphism, mu: FiniteMeasure<f64>, n: usize, paths: usize, seed: u64) -> Result<Self> {
        if n == 0 || paths == 0 {
            return Err(Error::InvalidArgument("sampled representative needs N >= 1 and at least one path".into()));
        }
        if phi_hat.alphabet() != mu.alphabet() {
            return Err(Error::AlphabetMismatch("quasimorphism and measure live on different groups".into()));
        }
        let sampler = mu.sampler();
        Ok(CesaroSampler { phi_hat, mu, sampler, n, paths, seed })
    }

    /// A homomorphism is its own representative: `N = 1`, one path.
    pub fn exact_for_hom(phi: Quasimorphism, mu: FiniteMeasure<f64>) -> Result<Self> {
        Self::new(phi, mu, 1, 1, 0)
    }

    pub fn phi_hat(&self) -> &Quasimorphism {
        &self.phi_hat
    }

    pub fn measure(&self) -> &FiniteMeasure<f64> {
        &self.mu
    }

    pub fn alphabet(&self) -> &Alphabet {
        self.mu.alphabet()
    }

    pub fn realization(&self, index: u64) -> Realization<'_> {
        let mut r = rng::stream(self.seed, rng::domain::HARMONIC, index);
        let steps: Vec<usize> = if self.n > 1 {
            (0..self.paths * (self.n - 1)).map(|_| self.sampler.sample_index(&mut r)).collect()
        } else {
            Vec::new()
        };
        let mut real = Realization { owner: self, steps, offset: 0.0 };
        real.offset = real.raw(&self.alphabet().identity());
        real
    }

    /// Mean and SE of `phi_tilde(g)` over `replicates` realizations starting
    /// at `first_index`.
    pub fn reference_value(&self, g: &GroupElement, replicates: usize, first_index: u64) -> (f64, f64) {
        let values: Vec<f64> = (0..replicates as u64)
            .into_par_iter()
            .map(|i| self.realization(first_index + i).evaluate(g))
            .collect();
        mean_se(values.into_iter())
    }
}

/// One realization of a sampled Cesàro representative.
#[derive(Clone, Debug)]
pub struct Realization<'a> {
    owner: &'a CesaroSampler,
    /// `paths * (N - 1)` support indices; path `j` uses the `j`-th block.
    steps: Vec<usize>,
    offset: f64,
}

impl Realization<'_> {
    fn raw(&self, x: &GroupElement) -> f64 {
        let o = self.owner;
        let elements = o.sampler.elements();
        let mut cur = o.phi_hat.cursor(x);
        let start = cur.value();
        let mut total = start * o.paths as f64;
        let block = o.n - 1;
        for j in 0..o.paths {
            let mark = cur.mark();
            for &s in &self.steps[j * block..(j + 1) * block] {
                cur.multiply(&elements[s]);
                total += cur.value();
            }
            cur.undo_to(mark);
        }
        total / (o.paths * o.n) as f64
    }

    pub fn evaluate(&self, x: &GroupElement) -> f64 {
        self.raw(x) - self.offset
    }
}

/// Function interface shared by quasimorphisms and representatives.
pub trait Evaluator: Sync {
    fn evaluate(&self, g: &GroupElement) -> f64;
}

impl Evaluator for Quasimorphism {
    fn evaluate(&self, g: &GroupElement) -> f64 {
        self.eval(g)
    }
}

impl Evaluator for Realization<'_> {
    fn evaluate(&self, g: &GroupElement) -> f64 {
        Realization::evaluate(self, g)
    }
}

/// Sampled-mode [`HarmonicApprox`]: one realization tabulated on the
/// evaluation set and its neighbours, `ell` from sampled walks.
pub fn biharmonic_approx_sampled(
    cesaro: &CesaroSampler,
    eval_set: &[GroupElement],
    distortion_walks: usize,
) -> Result<HarmonicApprox<f64>> {
    let phi_hat = cesaro.phi_hat();
    let defect_hat = defect_of(phi_hat)?;
    let mu = cesaro.measure();
    for g in eval_set {
        mu.alphabet().check(g)?;
    }
    let distortion = distortion_sampled(phi_hat, mu, cesaro.n, distortion_walks.max(2), cesaro.seed)?;
    let real = cesaro.realization(0);
    let points = neighbourhood(eval_set, mu);
    let values: Vec<f64> = points.par_iter().map(|x| real.evaluate(x)).collect();
    Ok(HarmonicApprox {
        n: cesaro.n,
        eval_set: eval_set.to_vec(),
        table: points.into_iter().zip(values).collect(),
        ell: distortion.ell,
        a_last: distortion.a[cesaro.n],
        distortion,
        defect_hat,
        mode: Mode::MonteCarlo { paths: cesaro.paths, seed: cesaro.seed },
        mu: mu.clone(),
        psi_last: HashMap::new(),
    })
}

/// Largest disagreement between two tabulations on their common elements,
/// a diagnostic for the uniqueness of the representative.
pub fn consistency<S: Scalar, T: Scalar>(a: &HarmonicApprox<S>, b: &HarmonicApprox<T>) -> f64 {
    a.table
        .iter()
        .filter_map(|(g, v)| b.table.get(g).map(|w| (v.to_f64_value() - w.to_f64_value()).abs()))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Tameness {
    /// `|phi - n ell|` stayed below `bound` on the supports up to the horizon.
    TameToHorizon { horizon: usize, bound: f64 },
    /// Growth witnessed at step `n` by element `g`.
    NonTameWitness { n: usize, g: String, value: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct TamenessReport {
    pub verdict: Tameness,
    /// `s_n = max over supp mu^n of |phi(g) - n ell|` for `n = 0..=horizon`.
    pub s: Vec<f64>,
    pub threshold: f64,
    pub stride: usize,
    pub ell: f64,
    pub defect: f64,
}

/// Semi-decision for tameness up to `horizon`: a witness is reported when
/// `s_N > threshold (1 + D)` and `s_{N-2k} < s_{N-k} < s_N` for the stride `k`.
pub fn tameness_check<S: Scalar>(
    phi: &Quasimorphism,
    mu: &FiniteMeasure<S>,
    horizon: usize,
    threshold: f64,
    stride: usize,
    ell: f64,
    cap: usize,
) -> Result<TamenessReport> {
    let defect = defect_of(phi)?;
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let steps: Vec<GroupElement> = mu.support().cloned().collect();
    let mut support: HashSet<GroupElement> = HashSet::from([mu.alphabet().identity()]);
    let mut s = vec![phi.eval(&mu.alphabet().identity()).abs()];
    let mut argmax = vec![mu.alphabet().identity()];
    for k in 1..=horizon {
        let mut next = HashSet::with_capacity(support.len() * steps.len());
        for g in &support {
            for h in &steps {
                next.insert(g.mul(h));
            }
        }
        if next.len() > cap {
            return Err(Error::Capacity(format!(
                "support of mu^{k} has {} elements, above the cap of {cap}",
                next.len()
            )));
        }
        support = next;
        let mut sorted: Vec<&GroupElement> = support.iter().collect();
        sorted.sort();
        let (best, g) = sorted
            .par_iter()
            .map(|g| ((phi.eval(g) - k as f64 * ell).abs(), *g))
            .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
            .expect("nonempty support");
        s.push(best);
        argmax.push(g.clone());
    }
    let n = horizon;
    let grows = n >= 2 * stride && s[n - 2 * stride] < s[n - stride] && s[n - stride] < s[n];
    let verdict = if s[n] > threshold * (1.0 + defect) && grows {
        Tameness::NonTameWitness { n, g: mu.alphabet().format(&argmax[n]), value: s[n] }
    } else {
        Tameness::TameToHorizon { horizon, bound: s.iter().cloned().fold(0.0, f64::max) }
    };
    Ok(TamenessReport { verdict, s, threshold, stride, ell, defect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::DEFAULT_CAPACITY;
    use crate::scalar::Rational;
    use num_traits::Signed;

    fn f2() -> Alphabet {
        Alphabet::free(2)
    }

    fn phi_hat(depth: u32) -> Quasimorphism {
        let g = f2();
        let phi = Quasimorphism::brooks(g.clone(), &g.parse("a b").unwrap(), Some(1.0)).unwrap();
        phi.homogenize(depth).unwrap().0
    }

    #[test]
    fn residual_identity_holds_exactly() {
        let g = f2();
        let mu = FiniteMeasure::<Rational>::nearest_neighbor(g.clone());
        let ph = phi_hat(4);
        let ball = g.enumerate_ball(2, 100).unwrap();
        let approx = biharmonic_approx(&ph, &mu, 4, &ball, 0.0, DEFAULT_CAPACITY).unwrap();
        assert_eq!(approx.value(&g.identity()), Some(&Rational::from_int(0)));
        let bound = Rational::from_f64_value(approx.residual_bound());
        for r in approx.residuals().unwrap() {
            assert_eq!(Some(r.right.clone()), r.predicted_right);
            assert!(r.right.abs() <= bound);
            if r.g.is_identity() {
                assert_eq!(r.right, r.left);
            }
        }
        assert!(approx.max_distance_to(&ph) <= approx.defect_hat + 1e-12);
    }

    #[test]
    fn psi_recursion() {
        let g = f2();
        let mu = FiniteMeasure::<Rational>::nearest_neighbor(g.clone());
        let ph = phi_hat(3);
        let powers = mu.powers(5, 0.0, DEFAULT_CAPACITY).unwrap();
        for x in g.enumerate_ball(2, 100).unwrap() {
            assert_eq!(psi(&ph, &powers[0], &x), Rational::from_int(0));
            for n in 0..4 {
                let lhs: Rational = mu.expectation(|h| {
                    powers[n].expectation(|k| {
                        Rational::from_f64_value(ph.differential(&x, &h.mul(k)))
                    })
                });
                assert_eq!(lhs, psi(&ph, &powers[n + 1], &x));
                assert!(psi(&ph, &powers[n], &x).to_f64_value().abs() <= ph.defect_bound().unwrap());
            }
        }
    }

    #[test]
    fn hom_is_biharmonic_on_z() {
        let z = Alphabet::free_abelian(1);
        let id = Quasimorphism::hom(z.clone(), vec![1.0]).unwrap();
        let w = |x| GroupElement::Vector(vec![x]);
        let mu = FiniteMeasure::<Rational>::new(
            z.clone(),
            vec![(w(1), Rational::new(2.into(), 3.into())), (w(-1), Rational::new(1.into(), 3.into()))],
        )
        .unwrap();
        let set = z.enumerate_ball(3, 100).unwrap();
        let approx = biharmonic_approx(&id, &mu, 5, &set, 0.0, DEFAULT_CAPACITY).unwrap();
        assert_eq!(approx.ell, Rational::new(1.into(), 3.into()));
        for r in approx.residuals().unwrap() {
            assert_eq!(r.right, Rational::from_int(0));
            assert_eq!(r.left, Rational::from_int(0));
        }
        for x in &set {
            assert_eq!(approx.value(x).unwrap().to_f64_value(), id.eval(x));
        }
    }

    #[test]
    fn coverage_error_lists_missing() {
        let g = f2();
        let mu = FiniteMeasure::<f64>::nearest_neighbor(g.clone());
        let ph = phi_hat(2);
        let ball = g.enumerate_ball(1, 100).unwrap();
        let mut approx = biharmonic_approx(&ph, &mu, 2, &ball, 0.0, DEFAULT_CAPACITY).unwrap();
        approx.restrict(&ball);
        match approx.residuals() {
            Err(Error::Coverage(missing)) => assert!(missing.contains(&"a a".to_string())),
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn distortion_examples() {
        let g = f2();
        let ph = phi_hat(6);
        let mu = FiniteMeasure::<Rational>::nearest_neighbor(g.clone());
        let d = distortion(&ph, &mu.powers(6, 0.0, DEFAULT_CAPACITY).unwrap()).unwrap();
        assert!(d.ell.abs() <= d.ell_error);
        assert!(d.max_subadditivity_gap() <= ph.defect_bound().unwrap() + 1e-9);

        let lim = Quasimorphism::brooks(g.clone(), &g.parse("a b").unwrap(), Some(1.0))
            .unwrap()
            .homogenize_limit()
            .unwrap();
        let word = g.parse("a b").unwrap();
        let dirac = FiniteMeasure::<Rational>::dirac(g.clone(), word.clone()).unwrap();
        let d = distortion(&lim, &dirac.powers(5, 0.0, DEFAULT_CAPACITY).unwrap()).unwrap();
        for (n, a) in d.a.iter().enumerate() {
            assert_eq!(*a, n as f64 * lim.eval(&word));
        }
        assert_eq!(d.ell, lim.eval(&word));

        let z = Alphabet::free_abelian(1);
        let id = Quasimorphism::hom(z.clone(), vec![1.0]).unwrap();
        let w = |x| GroupElement::Vector(vec![x]);
        let biased = FiniteMeasure::<f64>::new(z.clone(), vec![(w(1), 0.7), (w(-1), 0.3)]).unwrap();
        let d = distortion(&id, &biased.powers(4, 0.0, DEFAULT_CAPACITY).unwrap()).unwrap();
        assert!((d.ell - 0.4).abs() < 1e-12);
        let s = distortion_sampled(&id, &biased, 50, 4000, 3).unwrap();
        assert!((s.ell - 0.4).abs() <= 3.0 * s.a_se.as_ref().unwrap()[50] / 50.0 + 1e-12);
    }

    #[test]
    fn tameness_examples() {
        let z = Alphabet::free_abelian(1);
        let id = Quasimorphism::hom(z.clone(), vec![1.0]).unwrap();
        let mu = FiniteMeasure::<f64>::nearest_neighbor(z.clone());
        let rep = tameness_check(&id, &mu, 8, 3.0, 1, 0.0, DEFAULT_CAPACITY).unwrap();
        assert_eq!(rep.s, (0..=8).map(|n| n as f64).collect::<Vec<_>>());
        assert!(matches!(rep.verdict, Tameness::NonTameWitness { n: 8, value, .. } if value == 8.0));

        let g = f2();
        let phi_b = Quasimorphism::brooks(g.clone(), &g.parse("b").unwrap(), None).unwrap();
        let a_moves = FiniteMeasure::<f64>::uniform(g.clone(), vec![g.parse("a").unwrap(), g.parse("a^-1").unwrap()]).unwrap();
        let rep = tameness_check(&phi_b, &a_moves, 10, 3.0, 2, 0.0, DEFAULT_CAPACITY).unwrap();
        assert_eq!(rep.verdict, Tameness::TameToHorizon { horizon: 10, bound: 0.0 });

        let noise = Quasimorphism::bounded_noise(g.clone(), 0.5, 1).unwrap();
        let nn = FiniteMeasure::<f64>::nearest_neighbor(g.clone());
        let rep = tameness_check(&noise, &nn, 6, 3.0, 2, 0.0, DEFAULT_CAPACITY).unwrap();
        assert!(matches!(rep.verdict, Tameness::TameToHorizon { bound, .. } if bound <= 0.5));

        let rep = tameness_check(&phi_hat(6), &nn, 10, 1.0, 2, 0.0, DEFAULT_CAPACITY).unwrap();
        assert!(matches!(rep.verdict, Tameness::NonTameWitness { n: 10, .. }), "{:?}", rep.s);
    }

    #[test]
    fn sampled_representative_is_normalized_and_deterministic() {
        let g = f2();
        let mu = FiniteMeasure::<f64>::nearest_neighbor(g.clone());
        let ces = CesaroSampler::new(phi_hat(6), mu.clone(), 32, 8, 5).unwrap();
        let r = ces.realization(3);
        assert_eq!(r.evaluate(&g.identity()), 0.0);
        let x = g.parse("a b a").unwrap();
        assert_eq!(r.evaluate(&x), ces.realization(3).evaluate(&x));
        let hom = Quasimorphism::hom(g.clone(), vec![1.0, 2.0]).unwrap();
        let exact = CesaroSampler::exact_for_hom(hom.clone(), mu).unwrap();
        assert_eq!(exact.realization(0).evaluate(&x), hom.eval(&x));
    }

    #[test]
    fn sampled_psi_agrees_with_exact() {
        let g = f2();
        let ph = phi_hat(6);
        let mu = FiniteMeasure::<f64>::nearest_neighbor(g.clone());
        let powers = mu.powers(4, 0.0, DEFAULT_CAPACITY).unwrap();
        let x = g.parse("a b").unwrap();
        let exact = psi(&ph, &powers[4], &x);
        let (mean, se) = psi_sampled(&ph, &mu, 4, &x, 20_000, 1);
        assert!((mean - exact).abs() <= 4.0 * se, "{mean} {exact} {se}");
    }
}
