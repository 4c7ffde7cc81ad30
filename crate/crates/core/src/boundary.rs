//! Boundary rays of free groups, the cocycle `alpha(g, xi)`, the backward
//! product martingale and the checks built on them.
//!
//! The boundary of `F_k` is realized as infinite reduced words. For the
//! uniform nearest-neighbour walk the hitting measure is the law of the
//! non-backtracking chain and cylinders have mass
//! `nu(C_w) = 1/(2k) * (2k - 1)^(1 - |w|)`.

use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{Alphabet, GroupElement, Letter};
use crate::harmonic::{mean_se, CesaroSampler, Evaluator};
use crate::measure::{FiniteMeasure, Generation, Sampler};
use crate::quasimorphism::Quasimorphism;
use crate::rng::{self, RngStream};
use crate::scalar::{Rational, Scalar};

/// Default stability window for trajectory-limit rays.
pub const DEFAULT_WINDOW: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RayMode {
    /// Exact hitting measure of the uniform nearest-neighbour walk.
    Hitting,
    /// Stabilized prefix of a simulated walk; heuristic for general `mu`.
    TrajectoryLimit { window: usize },
}

/// Validated description of how rays are drawn.
#[derive(Clone, Debug)]
pub struct RaySource {
    alphabet: Alphabet,
    mode: RayMode,
    sampler: Option<Sampler>,
}

impl RaySource {
    pub fn new<S: Scalar>(mu: &FiniteMeasure<S>, mode: RayMode) -> Result<Self> {
        let alphabet = mu.alphabet().clone();
        if !alphabet.is_free() {
            return Err(Error::Unsupported("boundary rays are only defined for free groups".into()));
        }
        match mode {
            RayMode::Hitting => {
                if !mu.is_nearest_neighbor_uniform() {
                    return Err(Error::Mode("hitting mode needs the uniform nearest-neighbour measure".into()));
                }
                Ok(RaySource { alphabet, mode, sampler: None })
            }
            RayMode::TrajectoryLimit { window } => {
                if window == 0 {
                    return Err(Error::InvalidArgument("stability window must be positive".into()));
                }
                let horizon = 2 * mu.max_step_length().max(1) + 2;
                if mu.support_generates(horizon, 1_000_000)? == Generation::Unknown {
                    return Err(Error::Mode("support of mu does not visibly generate the group".into()));
                }
                Ok(RaySource { alphabet, mode, sampler: Some(mu.cast::<f64>().sampler()) })
            }
        }
    }

    pub fn mode(&self) -> RayMode {
        self.mode
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// The ray for `(seed, index)`.
    pub fn ray(&self, seed: u64, index: u64) -> BoundaryRay<'_> {
        BoundaryRay {
            source: self,
            letters: Vec::new(),
            rng: rng::stream(seed, rng::domain::RAY, index),
            walk: Vec::new(),
            step: 0,
            violations: 0,
        }
    }
}

/// A lazily extended infinite reduced word.
#[derive(Clone, Debug)]
pub struct BoundaryRay<'a> {
    source: &'a RaySource,
    letters: Vec<Letter>,
    rng: RngStream,
    /// trajectory mode: current walk position, each letter with the step it was written
    walk: Vec<(Letter, u64)>,
    step: u64,
    violations: u64,
}

const MAX_STEPS_PER_LETTER: u64 = 1_000_000;

impl BoundaryRay<'_> {
    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Times the simulated walk fell back into the emitted prefix
    /// (trajectory-limit mode).
    pub fn violations(&self) -> u64 {
        self.violations
    }

    pub fn extend_to(&mut self, len: usize) -> Result<()> {
        while self.letters.len() < len {
            match self.source.mode {
                RayMode::Hitting => {
                    let k2 = 2 * self.source.alphabet.rank();
                    let next = match self.letters.last() {
                        None => Letter::from_rank(self.rng.random_range(0..k2)),
                        Some(&last) => {
                            // uniform over the 2k - 1 letters that do not cancel `last`
                            let mut r = self.rng.random_range(0..k2 - 1);
                            if r >= last.inverse().rank() {
                                r += 1;
                            }
                            Letter::from_rank(r)
                        }
                    };
                    self.letters.push(next);
                }
                RayMode::TrajectoryLimit { window } => self.emit_stable(window as u64)?,
            }
        }
        Ok(())
    }

    fn emit_stable(&mut self, window: u64) -> Result<()> {
        let sampler = self.source.sampler.as_ref().expect("trajectory mode has a sampler");
        let target = self.letters.len();
        let budget = self.step + MAX_STEPS_PER_LETTER;
        loop {
            if let Some(&(l, since)) = self.walk.get(target) {
                if self.step - since >= window {
                    self.letters.push(l);
                    return Ok(());
                }
            }
            if self.step >= budget {
                return Err(Error::Stream("walk did not stabilize a new boundary letter".into()));
            }
            self.step += 1;
            let s = sampler.sample(&mut self.rng).clone();
            for &l in s.letters().expect("free group") {
                match self.walk.last() {
                    Some(&(top, _)) if top == l.inverse() => {
                        self.walk.pop();
                    }
                    _ => self.walk.push((l, self.step)),
                }
            }
            if self.walk.len() < self.letters.len() {
                // the walk re-entered the emitted prefix; restore it
                self.violations += 1;
                let step = self.step;
                self.walk = self.letters.iter().map(|&l| (l, step)).collect();
            }
        }
    }

    /// The first `len` letters.
    pub fn prefix(&mut self, len: usize) -> Result<GroupElement> {
        self.extend_to(len)?;
        Ok(GroupElement::Word(self.letters[..len].to_vec()))
    }

    /// The first `len` letters of the translated ray `h xi`.
    pub fn translated_prefix(&mut self, h: &GroupElement, len: usize) -> Result<GroupElement> {
        let p = self.prefix(len + h.len())?;
        let w = h.mul(&p);
        let letters = w.letters().expect("free group");
        Ok(GroupElement::Word(letters[..len].to_vec()))
    }
}

/// `alpha_L(g, xi) = phi_tilde(g p_L) - phi_tilde(p_L)`.
pub fn cocycle_at<E: Evaluator + ?Sized>(phi: &E, g: &GroupElement, prefix: &GroupElement) -> f64 {
    phi.evaluate(&g.mul(prefix)) - phi.evaluate(prefix)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CocycleValue {
    pub value: f64,
    /// `|alpha_L - alpha_{L/2}|`
    pub gap: f64,
}

/// `alpha(g, h xi)` at prefix length `len`, with its stabilization gap.
pub fn cocycle<E: Evaluator + ?Sized>(
    phi: &E,
    g: &GroupElement,
    h: &GroupElement,
    ray: &mut BoundaryRay<'_>,
    len: usize,
) -> Result<CocycleValue> {
    if len < g.len() {
        return Err(Error::InvalidArgument(format!("prefix length {len} is shorter than |g| = {}", g.len())));
    }
    let full = ray.translated_prefix(h, len)?;
    let half = ray.translated_prefix(h, len / 2)?;
    let value = cocycle_at(phi, g, &full);
    let gap = (value - cocycle_at(phi, g, &half)).abs();
    Ok(CocycleValue { value, gap })
}

#[derive(Clone, Debug, Serialize)]
pub struct CocycleTriple {
    pub g: String,
    pub h: String,
    pub residual: f64,
    pub gap_sum: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CocycleIdentityReport {
    pub length: usize,
    pub triples: Vec<CocycleTriple>,
    pub max_residual: f64,
    /// Sum of all stabilization gaps of the run.
    pub total_gap: f64,
}

/// Residuals `|alpha(gh, xi) - alpha(g, h xi) - alpha(h, xi)|` for each pair,
/// with ray and realization `i` for the `i`-th pair.
pub fn cocycle_identity_check(
    cesaro: &CesaroSampler,
    pairs: &[(GroupElement, GroupElement)],
    source: &RaySource,
    seed: u64,
    len: usize,
) -> Result<CocycleIdentityReport> {
    let alphabet = source.alphabet();
    let rows: Vec<Result<CocycleTriple>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (g, h))| {
            let real = cesaro.realization(i as u64);
            let mut ray = source.ray(seed, i as u64);
            let e = alphabet.identity();
            let gh = g.mul(h);
            let a0 = cocycle(&real, &gh, &e, &mut ray, len)?;
            let a1 = cocycle(&real, g, h, &mut ray, len)?;
            let a2 = cocycle(&real, h, &e, &mut ray, len)?;
            Ok(CocycleTriple {
                g: alphabet.format(g),
                h: alphabet.format(h),
                residual: (a0.value - a1.value - a2.value).abs(),
                gap_sum: a0.gap + a1.gap + a2.gap,
            })
        })
        .collect();
    let triples = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CocycleIdentityReport {
        length: len,
        max_residual: triples.iter().map(|t| t.residual).fold(0.0, f64::max),
        total_gap: triples.iter().map(|t| t.gap_sum).sum(),
        triples,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct IntegralCheck {
    pub g: String,
    /// `phi_tilde(g)` averaged over independent realizations.
    pub lhs: f64,
    pub lhs_se: f64,
    /// Monte Carlo mean of `alpha(g, xi)`.
    pub mean: f64,
    pub se: f64,
    pub discrepancy: f64,
    pub combined_se: f64,
    pub max_gap: f64,
    /// Largest `|alpha(g, xi) - phi_tilde(g)|` over the sampled rays.
    pub max_deviation: f64,
}

/// `phi_tilde(g) = int alpha(g, xi) d nu(xi)` by Monte Carlo: ray `i` uses
/// its own realization; the left side averages `replicates` further ones.
pub fn integral_representation_check(
    cesaro: &CesaroSampler,
    g: &GroupElement,
    source: &RaySource,
    rays: usize,
    replicates: usize,
    len: usize,
    seed: u64,
) -> Result<IntegralCheck> {
    let rows: Vec<Result<CocycleValue>> = (0..rays as u64)
        .into_par_iter()
        .map(|i| {
            let real = cesaro.realization(i);
            let mut ray = source.ray(seed, i);
            cocycle(&real, g, &source.alphabet().identity(), &mut ray, len)
        })
        .collect();
    let values = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let (mean, se) = mean_se(values.iter().map(|v| v.value));
    let (lhs, lhs_se) = cesaro.reference_value(g, replicates, REFERENCE_OFFSET);
    let lhs_se = if lhs_se.is_nan() { 0.0 } else { lhs_se };
    Ok(IntegralCheck {
        g: source.alphabet().format(g),
        lhs,
        lhs_se,
        mean,
        se,
        discrepancy: (lhs - mean).abs(),
        combined_se: (se * se + lhs_se * lhs_se).sqrt(),
        max_gap: values.iter().map(|v| v.gap).fold(0.0, f64::max),
        max_deviation: values.iter().map(|v| (v.value - lhs).abs()).fold(0.0, f64::max),
    })
}

/// Realization indices at and above this offset are reserved for reference
/// values, so they never coincide with per-sample realizations.
pub const REFERENCE_OFFSET: u64 = 1 << 40;

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleSample {
    pub index: u64,
    pub depth: usize,
    pub q: String,
    pub q_length: usize,
    /// `Delta_K` under the first realization.
    pub delta: f64,
    /// `Delta_K` under an independent second realization.
    pub delta_second: f64,
    /// `|Delta_K - Delta_{K/2}|` under the first realization.
    pub cauchy_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MartingaleReport {
    pub depth: usize,
    pub samples_count: usize,
    pub sigma_hat: f64,
    pub sigma_se: f64,
    pub sigma2_hat: f64,
    pub sigma2_se: f64,
    pub mean_delta: f64,
    pub mean_se: f64,
    pub mean_cauchy_gap: f64,
    pub ell: f64,
    #[serde(skip)]
    pub samples: Vec<MartingaleSample>,
}

/// Square root with the delta-method standard error.
fn sqrt_with_se(x: f64, se: f64) -> (f64, f64) {
    let s = x.max(0.0).sqrt();
    let s_se = if s > 0.0 { se / (2.0 * s) } else { se.sqrt() };
    (s, s_se)
}

/// `Delta = phi_tilde(q_K w_0) - phi_tilde(q_K) - ell` for backward products
/// `q_K = w_{-K+1} ... w_{-1}`. `sigma^2` is estimated by the mean of
/// `Delta^(1) Delta^(2)` over two independent realizations of the
/// representative, which is unbiased for the mean square of the increment of
/// the averaged representative (with a deterministic representative the two
/// factors coincide and this is the mean of `Delta^2`).
pub fn martingale_sigma(cesaro: &CesaroSampler, depth: usize, samples: usize, ell: f64, seed: u64) -> Result<MartingaleReport> {
    if depth == 0 || samples < 2 {
        return Err(Error::InvalidArgument("martingale needs K >= 1 and at least 2 samples".into()));
    }
    let sampler = cesaro.measure().sampler();
    let rows: Vec<MartingaleSample> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, rng::domain::MARTINGALE, i);
            let steps: Vec<&GroupElement> = (0..depth - 1).map(|_| sampler.sample(&mut r)).collect();
            let w0 = sampler.sample(&mut r);
            let product = |from: usize| {
                steps[from..].iter().fold(cesaro.alphabet().identity(), |acc, s| acc.mul(s))
            };
            let q = product(0);
            let q_half = product((depth - 1).saturating_sub(depth / 2));
            let r1 = cesaro.realization(2 * i);
            let r2 = cesaro.realization(2 * i + 1);
            let delta = |real: &crate::harmonic::Realization<'_>, q: &GroupElement| {
                real.evaluate(&q.mul(w0)) - real.evaluate(q) - ell
            };
            let d1 = delta(&r1, &q);
            let d2 = delta(&r2, &q);
            let d_half = delta(&r1, &q_half);
            MartingaleSample {
                index: i,
                depth,
                q: cesaro.alphabet().format(&q),
                q_length: q.len(),
                delta: d1,
                delta_second: d2,
                cauchy_gap: (d1 - d_half).abs(),
            }
        })
        .collect();
    let (sigma2_hat, sigma2_se) = mean_se(rows.iter().map(|s| s.delta * s.delta_second));
    let (sigma_hat, sigma_se) = sqrt_with_se(sigma2_hat, sigma2_se);
    let (mean_delta, mean_se_) = mean_se(rows.iter().map(|s| 0.5 * (s.delta + s.delta_second)));
    Ok(MartingaleReport {
        depth,
        samples_count: rows.len(),
        sigma_hat,
        sigma_se,
        sigma2_hat,
        sigma2_se,
        mean_delta,
        mean_se: mean_se_,
        mean_cauchy_gap: rows.iter().map(|s| s.cauchy_gap).sum::<f64>() / rows.len() as f64,
        ell,
        samples: rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryVarianceReport {
    pub rays: usize,
    pub length: usize,
    pub sigma2_hat: f64,
    pub sigma2_se: f64,
    pub sigma_hat: f64,
    pub sigma_se: f64,
    /// Monte Carlo estimate of `int int alpha(g, xi) d nu d mu`, which should match `ell`.
    pub mean_alpha: f64,
    pub mean_alpha_se: f64,
    pub max_gap: f64,
    #[serde(skip)]
    pub alphas: Vec<(String, f64)>,
}

/// `sigma^2 = sum_g int (alpha(g, xi) - ell)^2 d nu(xi) mu(g)`, with the same
/// two-realization product as [`martingale_sigma`].
pub fn boundary_variance(
    cesaro: &CesaroSampler,
    source: &RaySource,
    rays: usize,
    len: usize,
    ell: f64,
    seed: u64,
) -> Result<BoundaryVarianceReport> {
    let sampler = cesaro.measure().sampler();
    let e = source.alphabet().identity();
    let rows: Vec<Result<(String, f64, f64, f64)>> = (0..rays as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, rng::domain::BOUNDARY, i);
            let g = sampler.sample(&mut r).clone();
            let mut ray = source.ray(seed, i);
            let a1 = cocycle(&cesaro.realization(2 * i), &g, &e, &mut ray, len)?;
            let p = ray.prefix(len)?;
            let a2 = cocycle_at(&cesaro.realization(2 * i + 1), &g, &p);
            Ok((source.alphabet().format(&g), a1.value, a2, a1.gap))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let (sigma2_hat, sigma2_se) = mean_se(rows.iter().map(|(_, a, b, _)| (a - ell) * (b - ell)));
    let (sigma_hat, sigma_se) = sqrt_with_se(sigma2_hat, sigma2_se);
    let (mean_alpha, mean_alpha_se) = mean_se(rows.iter().map(|(_, a, b, _)| 0.5 * (a + b)));
    Ok(BoundaryVarianceReport {
        rays,
        length: len,
        sigma2_hat,
        sigma2_se,
        sigma_hat,
        sigma_se,
        mean_alpha,
        mean_alpha_se,
        max_gap: rows.iter().map(|r| r.3).fold(0.0, f64::max),
        alphas: rows.into_iter().map(|(g, a, _, _)| (g, a)).collect(),
    })
}

/// `nu(C_w)` for the hitting measure of the uniform nearest-neighbour walk
/// on `F_rank`.
pub fn cylinder_measure(rank: usize, w: &GroupElement) -> Rational {
    let len = w.len();
    if len == 0 {
        return Rational::one();
    }
    let k2 = 2 * rank as i64;
    let mut m = Rational::ratio(1, k2);
    for _ in 1..len {
        m /= Rational::from_int(k2 - 1);
    }
    m
}

/// `nu(s^-1 C_w)` by cylinder calculus.
fn translated_cylinder_measure(rank: usize, s: &GroupElement, w: &GroupElement) -> Rational {
    let sl = s.letters().expect("free group");
    let wl = w.letters().expect("free group");
    if sl.len() != 1 {
        panic!("cylinder calculus is implemented for single-letter steps");
    }
    if wl.first() == Some(&sl[0]) {
        if wl.len() == 1 {
            // s^-1 C_s is everything except C_{s^-1}
            Rational::one() - cylinder_measure(rank, &s.inverse())
        } else {
            cylinder_measure(rank, &GroupElement::Word(wl[1..].to_vec()))
        }
    } else {
        cylinder_measure(rank, &s.inverse().mul(w))
    }
}

/// Exact residual `sum_s mu(s) nu(s^-1 C_w) - nu(C_w)` for a measure supported
/// on single letters.
pub fn stationarity_exact(mu: &FiniteMeasure<Rational>, w: &GroupElement) -> Result<Rational> {
    let rank = mu.alphabet().rank();
    if !mu.alphabet().is_free() || mu.support().any(|s| s.len() != 1) {
        return Err(Error::Mode("exact cylinder calculus needs a measure on single letters of a free group".into()));
    }
    mu.alphabet().check(w)?;
    if w.is_identity() {
        return Ok(Rational::zero());
    }
    let lhs = mu.expectation(|s| translated_cylinder_measure(rank, s, w));
    Ok(lhs - cylinder_measure(rank, w))
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarityMc {
    pub cylinder: String,
    pub frequency: f64,
    pub expected: f64,
    pub residual: f64,
    pub se: f64,
}

/// Monte Carlo residual of stationarity: frequency of `s xi in C_w` with
/// `s ~ mu`, `xi ~ nu` against `nu(C_w)`.
pub fn stationarity_mc(
    mu: &FiniteMeasure<f64>,
    source: &RaySource,
    w: &GroupElement,
    rays: usize,
    seed: u64,
) -> Result<StationarityMc> {
    let sampler = mu.sampler();
    let hits: Vec<Result<f64>> = (0..rays as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, rng::domain::STATIONARITY, i);
            let s = sampler.sample(&mut r);
            let mut ray = source.ray(seed ^ 0x57a7, i);
            let p = ray.translated_prefix(s, w.len())?;
            Ok(if &p == w { 1.0 } else { 0.0 })
        })
        .collect();
    let hits = hits.into_iter().collect::<Result<Vec<_>>>()?;
    let frequency = hits.iter().sum::<f64>() / rays as f64;
    let expected = cylinder_measure(source.alphabet().rank(), w).to_f64_value();
    Ok(StationarityMc {
        cylinder: source.alphabet().format(w),
        frequency,
        expected,
        residual: frequency - expected,
        se: (expected * (1.0 - expected) / rays as f64).sqrt(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CylinderFrequency {
    pub cylinder: String,
    pub count: u64,
    pub frequency: f64,
    pub expected: f64,
    /// Binomial standard error under the expected value.
    pub se: f64,
}

/// Empirical frequencies of all cylinders of length `1..=max_len` over `rays` rays.
pub fn cylinder_frequencies(source: &RaySource, max_len: usize, rays: usize, seed: u64) -> Result<Vec<CylinderFrequency>> {
    let alphabet = source.alphabet();
    let prefixes: Vec<Result<Vec<Letter>>> = (0..rays as u64)
        .into_par_iter()
        .map(|i| {
            let mut ray = source.ray(seed, i);
            let p = ray.prefix(max_len)?;
            Ok(p.letters().unwrap().to_vec())
        })
        .collect();
    let prefixes = prefixes.into_iter().collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for w in alphabet.enumerate_ball(max_len, 1_000_000)? {
        if w.is_identity() {
            continue;
        }
        let wl = w.letters().unwrap();
        let count = prefixes.iter().filter(|p| p.starts_with(wl)).count() as u64;
        let expected = cylinder_measure(alphabet.rank(), &w).to_f64_value();
        out.push(CylinderFrequency {
            cylinder: alphabet.format(&w),
            count,
            frequency: count as f64 / rays as f64,
            expected,
            se: (expected * (1.0 - expected) / rays as f64).sqrt(),
        });
    }
    Ok(out)
}

/// `rho(h, xi) = d h_* nu / d nu (xi)`, as the cylinder ratio
/// `nu(h^-1 C_L) / nu(C_L) = (2k-1)^(L - |h^-1 p_L|)` along the prefix `p_L`.
pub fn radon_nikodym(rank: usize, h: &GroupElement, prefix: &GroupElement) -> f64 {
    let moved = h.inverse().mul(prefix).len() as i32;
    ((2 * rank - 1) as f64).powi(prefix.len() as i32 - moved)
}

/// Weights `w_j` of `sigma(g, xi) = sum_j w_j rho(g^j, xi)` from the double
/// Cesàro average `(1/N) sum_{k=1}^{N-1} (1/k) sum_{j=1}^{k} rho(g^j, xi)`,
/// rescaled to total 1. Index 0 holds `w_1`.
pub fn kernel_weights(depth: usize) -> Vec<f64> {
    let mut w = vec![0.0; depth.saturating_sub(1)];
    for k in 1..depth {
        for wj in w.iter_mut().take(k) {
            *wj += 1.0 / k as f64;
        }
    }
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    w
}

#[derive(Clone, Debug, Serialize)]
pub struct RnKernelReport {
    pub g: String,
    pub depth: usize,
    pub reconstruction: f64,
    pub se: f64,
    /// `phi_hat(g)`.
    pub reference: f64,
    pub discrepancy: f64,
    /// Deterministic bias bound `(2 D_hat + |phi_hat(g)|) H_N / N`.
    pub bias_bound: f64,
    /// Direct estimate `mean alpha(g, xi) sigma(g, xi)` with cylinder ratios.
    pub direct: f64,
    pub direct_se: f64,
}

/// Reconstructs `phi_hat(g) = int alpha(g, xi) sigma(g, xi) d nu(xi)`.
///
/// Each term `int alpha(g, xi) rho(g^j, xi) d nu` equals `int alpha(g, g^j xi) d nu`,
/// which is estimated on translated rays; the direct product with the
/// cylinder-ratio kernel is reported alongside as a diagnostic.
#[allow(clippy::too_many_arguments)]
pub fn rn_kernel_check(
    cesaro: &CesaroSampler,
    phi_hat: &Quasimorphism,
    g: &GroupElement,
    source: &RaySource,
    rays: usize,
    len: usize,
    depth: usize,
    seed: u64,
) -> Result<RnKernelReport> {
    if source.mode() != RayMode::Hitting {
        return Err(Error::Mode("the Radon-Nikodym kernel check needs hitting-mode rays".into()));
    }
    let rank = source.alphabet().rank();
    let weights = kernel_weights(depth);
    let powers: Vec<GroupElement> = (1..=weights.len()).map(|j| g.pow(j as i64)).collect();
    let rows: Vec<Result<(f64, f64)>> = (0..rays as u64)
        .into_par_iter()
        .map(|i| {
            let real = cesaro.realization(i);
            let mut ray = source.ray(seed, i);
            let mut translated = 0.0;
            for (w, gj) in weights.iter().zip(&powers) {
                let p = ray.translated_prefix(gj, len)?;
                translated += w * cocycle_at(&real, g, &p);
            }
            let p = ray.prefix(len)?;
            let alpha = cocycle_at(&real, g, &p);
            let sigma: f64 = weights.iter().zip(&powers).map(|(w, gj)| w * radon_nikodym(rank, gj, &p)).sum();
            let sigma = if g.is_identity() { 1.0 } else { sigma };
            Ok((translated, alpha * sigma))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let (reconstruction, se) = if g.is_identity() { (0.0, 0.0) } else { mean_se(rows.iter().map(|r| r.0)) };
    let (direct, direct_se) = mean_se(rows.iter().map(|r| r.1));
    let reference = phi_hat.eval(g);
    let harmonic_number: f64 = (1..depth.max(2)).map(|k| 1.0 / k as f64).sum();
    let d_hat = cesaro.phi_hat().defect_bound().unwrap_or(0.0);
    Ok(RnKernelReport {
        g: source.alphabet().format(g),
        depth,
        reconstruction,
        se,
        reference,
        discrepancy: (reconstruction - reference).abs(),
        bias_bound: (2.0 * d_hat + reference.abs()) * harmonic_number / depth as f64,
        direct,
        direct_se,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichTrial {
    pub trial: u64,
    pub phi_centered: f64,
    pub rho: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichReport {
    pub n: usize,
    pub depth: usize,
    pub trials: Vec<SandwichTrial>,
    pub max_deviation: f64,
    pub bound: f64,
    pub slack: f64,
}

/// Compares `phi(z_n) - n ell` with the telescoped martingale increments
/// `rho_n = sum_{i<n} [phi_tilde(q z_{i+1}) - phi_tilde(q z_i) - ell]
///        = phi_tilde(q z_n) - phi_tilde(q) - n ell`
/// along the same increments, `q` a backward product of depth `K`.
/// The bound is `3 D + slack` with `slack = n * ell_error`.
#[allow(clippy::too_many_arguments)]
pub fn sandwich(
    cesaro: &CesaroSampler,
    phi: &Quasimorphism,
    n: usize,
    trials: usize,
    depth: usize,
    ell: f64,
    ell_error: f64,
    seed: u64,
) -> Result<SandwichReport> {
    let defect = phi
        .defect_bound()
        .ok_or_else(|| Error::Config("sandwich check needs a defect bound".into()))?;
    let sampler = cesaro.measure().sampler();
    let rows: Vec<SandwichTrial> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, rng::domain::SANDWICH, i);
            let id = cesaro.alphabet().identity();
            let q = (0..depth.saturating_sub(1)).fold(id.clone(), |acc, _| acc.mul(sampler.sample(&mut r)));
            let z = (0..n).fold(id, |acc, _| acc.mul(sampler.sample(&mut r)));
            let real = cesaro.realization(i);
            let rho = real.evaluate(&q.mul(&z)) - real.evaluate(&q) - n as f64 * ell;
            let phi_centered = phi.eval(&z) - n as f64 * ell;
            SandwichTrial { trial: i, phi_centered, rho, deviation: (phi_centered - rho).abs() }
        })
        .collect();
    let slack = n as f64 * ell_error;
    Ok(SandwichReport {
        n,
        depth,
        max_deviation: rows.iter().map(|t| t.deviation).fold(0.0, f64::max),
        bound: 3.0 * defect + slack,
        slack,
        trials: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> Alphabet {
        Alphabet::free(2)
    }

    #[test]
    fn hitting_rays_are_reduced_and_deterministic() {
        let mu = FiniteMeasure::<f64>::nearest_neighbor(f2());
        let src = RaySource::new(&mu, RayMode::Hitting).unwrap();
        let mut r1 = src.ray(4, 2);
        let mut r2 = src.ray(4, 2);
        let p = r1.prefix(50).unwrap();
        assert_eq!(p.len(), 50);
        assert!(f2().contains(&p));
        assert_eq!(p, r2.prefix(50).unwrap());
    }

    #[test]
    fn mode_errors() {
        let z = Alphabet::free_abelian(1);
        let mu = FiniteMeasure::<f64>::nearest_neighbor(z);
        assert!(matches!(RaySource::new(&mu, RayMode::Hitting), Err(Error::Unsupported(_))));
        let g = f2();
        let lazy = FiniteMeasure::<f64>::uniform(
            g.clone(),
            vec![g.parse("a").unwrap(), g.parse("a^-1").unwrap(), g.parse("b").unwrap(), g.parse("b^-1").unwrap(), g.identity()],
        )
        .unwrap();
        assert!(matches!(RaySource::new(&lazy, RayMode::Hitting), Err(Error::Mode(_))));
        assert!(RaySource::new(&lazy, RayMode::TrajectoryLimit { window: 16 }).is_ok());
    }

    #[test]
    fn cylinder_masses() {
        let g = f2();
        assert_eq!(cylinder_measure(2, &g.parse("a").unwrap()), Rational::ratio(1, 4));
        assert_eq!(cylinder_measure(2, &g.parse("a b").unwrap()), Rational::ratio(1, 12));
        let mu = FiniteMeasure::<Rational>::nearest_neighbor(g.clone());
        for w in g.enumerate_ball(3, 1000).unwrap() {
            assert_eq!(stationarity_exact(&mu, &w).unwrap(), Rational::zero());
        }
    }

    #[test]
    fn trajectory_mode_matches_hitting_law() {
        let mu = FiniteMeasure::<f64>::nearest_neighbor(f2());
        let src = RaySource::new(&mu, RayMode::TrajectoryLimit { window: 32 }).unwrap();
        let freqs = cylinder_frequencies(&src, 2, 4000, 1).unwrap();
        for f in freqs {
            assert!((f.frequency - f.expected).abs() <= 4.0 * f.se, "{f:?}");
        }
    }

    #[test]
    fn radon_nikodym_examples() {
        let g = f2();
        let p = g.parse("a b a b").unwrap();
        assert_eq!(radon_nikodym(2, &g.identity(), &p), 1.0);
        assert_eq!(radon_nikodym(2, &g.parse("a").unwrap(), &p), 3.0);
        assert_eq!(radon_nikodym(2, &g.parse("b").unwrap(), &p), 1.0 / 3.0);
        let w = kernel_weights(8);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn hom_cocycle_is_constant() {
        let g = f2();
        let mu = FiniteMeasure::<f64>::nearest_neighbor(g.clone());
        let hom = Quasimorphism::hom(g.clone(), vec![1.0, -0.5]).unwrap();
        let ces = CesaroSampler::exact_for_hom(hom.clone(), mu.clone()).unwrap();
        let src = RaySource::new(&mu, RayMode::Hitting).unwrap();
        let x = g.parse("a b^-1 a").unwrap();
        let mut ray = src.ray(1, 0);
        let v = cocycle(&ces.realization(0), &x, &g.identity(), &mut ray, 16).unwrap();
        assert_eq!(v.value, hom.eval(&x));
        assert_eq!(v.gap, 0.0);
        let e = cocycle(&ces.realization(0), &g.identity(), &g.identity(), &mut ray, 16).unwrap();
        assert_eq!(e.value, 0.0);
        let pairs = vec![(x.clone(), g.parse("b b").unwrap())];
        let rep = cocycle_identity_check(&ces, &pairs, &src, 3, 16).unwrap();
        assert_eq!(rep.max_residual, 0.0);
        let check = integral_representation_check(&ces, &x, &src, 50, 2, 16, 3).unwrap();
        assert_eq!(check.discrepancy, 0.0);
        let rn = rn_kernel_check(&ces, &hom, &x, &src, 400, 24, 8, 5).unwrap();
        assert!(rn.discrepancy <= rn.bias_bound + 3.0 * rn.se + 1e-12, "{rn:?}");
        let e_rn = rn_kernel_check(&ces, &hom, &g.identity(), &src, 10, 8, 4, 5).unwrap();
        assert_eq!(e_rn.reconstruction, 0.0);
        let bv = boundary_variance(&ces, &src, 20, 8, 0.0, 1).unwrap();
        // alpha is xi-free: sigma^2 = sum_s phi(s)^2 mu(s) exactly on every sample
        let exact: f64 = mu.expectation(|s| hom.eval(s).powi(2));
        assert!((bv.sigma2_hat - exact).abs() < 0.5);
    }

    #[test]
    fn z_martingale_is_iid() {
        let z = Alphabet::free_abelian(1);
        let mu = FiniteMeasure::<f64>::nearest_neighbor(z.clone());
        let id = Quasimorphism::hom(z, vec![1.0]).unwrap();
        let ces = CesaroSampler::exact_for_hom(id, mu).unwrap();
        let rep = martingale_sigma(&ces, 8, 10_000, 0.0, 9).unwrap();
        assert_eq!(rep.sigma_hat, 1.0);
        assert!(rep.mean_delta.abs() <= 3.0 * rep.mean_se);
    }
}
