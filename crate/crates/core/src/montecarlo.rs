//! Parallel walk trials, the CLT harness, the LIL tracker and report pooling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::measure::{FiniteMeasure, Sampler};
use crate::quasimorphism::Quasimorphism;
use crate::rng;

/// Default threshold below which `sigma_hat` counts as zero.
pub const DEFAULT_FLOOR: f64 = 1e-9;

/// A batch of independent walks of a fixed length.
#[derive(Clone, Debug)]
pub struct WalkConfig {
    pub mu: FiniteMeasure<f64>,
    pub phi: Quasimorphism,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub ell: f64,
    pub ell_error: f64,
    pub floor: f64,
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.trials == 0 {
            return Err(Error::Config("walk length and trial count must be at least 1".into()));
        }
        if self.mu.alphabet() != self.phi.alphabet() {
            return Err(Error::AlphabetMismatch("quasimorphism and measure live on different groups".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct WalkOutcome {
    pub trial: u64,
    pub z: GroupElement,
    pub phi_zn: f64,
    /// `phi(z_0), ..., phi(z_n)` when requested.
    pub trajectory: Option<Vec<f64>>,
}

/// `z_n = w_0 ... w_{n-1}` for trial `trial`, drawn from its own stream.
pub fn run_walk(phi: &Quasimorphism, sampler: &Sampler, n: usize, seed: u64, trial: u64, trajectory: bool) -> WalkOutcome {
    let mut r = rng::stream(seed, rng::domain::WALK, trial);
    let mut cur = phi.cursor(&phi.alphabet().identity());
    let mut path = trajectory.then(|| {
        let mut v = Vec::with_capacity(n + 1);
        v.push(cur.value());
        v
    });
    for _ in 0..n {
        cur.multiply(sampler.sample(&mut r));
        cur.forget();
        if let Some(p) = path.as_mut() {
            p.push(cur.value());
        }
    }
    WalkOutcome { trial, phi_zn: cur.value(), z: cur.element().clone(), trajectory: path }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Degenerate,
    NonDegenerate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CltSample {
    pub trial: u64,
    pub phi_zn: f64,
    pub x: f64,
}

/// Raw power sums `sum x^k`, `k = 1..4`; pooling adds them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
}

impl Moments {
    pub fn of(xs: impl Iterator<Item = f64>) -> Self {
        let mut m = Moments::default();
        for x in xs {
            let x2 = x * x;
            m.count += 1;
            m.s1 += x;
            m.s2 += x2;
            m.s3 += x2 * x;
            m.s4 += x2 * x2;
        }
        m
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        Moments {
            count: self.count + other.count,
            s1: self.s1 + other.s1,
            s2: self.s2 + other.s2,
            s3: self.s3 + other.s3,
            s4: self.s4 + other.s4,
        }
    }

    pub fn mean(&self) -> f64 {
        self.s1 / self.count as f64
    }

    /// Population variance `sum x^2 / M - mean^2`.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.s2 / self.count as f64 - m * m).max(0.0)
    }

    pub fn sigma(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn mean_se(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    /// Delta-method standard error of the standard deviation, using the
    /// fourth central moment.
    pub fn sigma_se(&self) -> f64 {
        let n = self.count as f64;
        let m = self.mean();
        let var = self.variance();
        let (e2, e3, e4) = (self.s2 / n, self.s3 / n, self.s4 / n);
        let m4 = e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4);
        let var_se = ((m4 - var * var).max(0.0) / n).sqrt();
        let s = var.sqrt();
        if s > 0.0 {
            var_se / (2.0 * s)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CltReport {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub ell: f64,
    pub ell_error: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub sigma_hat: f64,
    pub sigma_se: f64,
    /// KS distance to `N(0, sigma_hat^2)`; absent when degenerate.
    pub ks: Option<f64>,
    /// `sqrt(n) ell_error / sigma_hat`: how far the centering may be off, in
    /// units of the fitted scale.
    pub ks_ell_band: Option<f64>,
    pub max_abs_x: f64,
    pub floor: f64,
    pub verdict: Verdict,
    pub moments: Moments,
    #[serde(skip)]
    pub samples: Vec<CltSample>,
}

/// Runs `trials` walks and summarizes `x_i = (phi(z_n) - n ell) / sqrt(n)`.
pub fn clt_experiment(config: &WalkConfig) -> Result<CltReport> {
    config.validate()?;
    let sampler = config.mu.sampler();
    let root_n = (config.n as f64).sqrt();
    let samples: Vec<CltSample> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let out = run_walk(&config.phi, &sampler, config.n, config.seed, t, false);
            CltSample { trial: t, phi_zn: out.phi_zn, x: (out.phi_zn - config.n as f64 * config.ell) / root_n }
        })
        .collect();
    Ok(summarize(config.n, config.seed, config.ell, config.ell_error, config.floor, samples))
}

fn summarize(n: usize, seed: u64, ell: f64, ell_error: f64, floor: f64, samples: Vec<CltSample>) -> CltReport {
    let moments = Moments::of(samples.iter().map(|s| s.x));
    let sigma_hat = moments.sigma();
    let max_abs_x = samples.iter().map(|s| s.x.abs()).fold(0.0, f64::max);
    let degenerate = sigma_hat < floor;
    let (ks, ks_ell_band) = if degenerate {
        (None, None)
    } else {
        let xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
        (ks_statistic(&xs, sigma_hat).ok(), Some((n as f64).sqrt() * ell_error / sigma_hat))
    };
    CltReport {
        n,
        trials: samples.len(),
        seed,
        ell,
        ell_error,
        mean: moments.mean(),
        mean_se: moments.mean_se(),
        sigma_hat,
        sigma_se: moments.sigma_se(),
        ks,
        ks_ell_band,
        max_abs_x,
        floor,
        verdict: if degenerate { Verdict::Degenerate } else { Verdict::NonDegenerate },
        moments,
        samples,
    }
}

/// Exact Kolmogorov-Smirnov distance between the empirical CDF of `samples`
/// and `N(0, sigma^2)`.
pub fn ks_statistic(samples: &[f64], sigma: f64) -> Result<f64> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!("reference scale must be positive, got {sigma}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let m = xs.len() as f64;
    let d = xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = normal.cdf(x);
        d.max((i + 1) as f64 / m - f).max(f - i as f64 / m)
    });
    Ok(d.clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LilPoint {
    #[serde(rename = "N")]
    pub n: u64,
    pub r_plain: f64,
    pub r_sqrt2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LilCurve {
    pub horizon: u64,
    pub start: u64,
    pub seed: u64,
    pub ell: f64,
    pub points: Vec<LilPoint>,
}

/// Geometric checkpoints `start, 2 start, 4 start, ...` plus the horizon.
pub fn geometric_checkpoints(start: u64, horizon: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut c = start;
    while c < horizon {
        out.push(c);
        c = c.saturating_mul(2);
    }
    out.push(horizon);
    out
}

/// Running maximum of `(phi(z_n) - n ell) / sqrt(n log log n)` over
/// `start <= n <= N` along one trajectory (trial 0 of `seed`), recorded at
/// each checkpoint, with the `sqrt(2 n log log n)` variant alongside.
pub fn lil_track(
    phi: &Quasimorphism,
    mu: &FiniteMeasure<f64>,
    ell: f64,
    start: u64,
    checkpoints: &[u64],
    seed: u64,
) -> Result<LilCurve> {
    if start < 16 {
        return Err(Error::InvalidArgument("the LIL tracker starts at n >= 16".into()));
    }
    if mu.alphabet() != phi.alphabet() {
        return Err(Error::AlphabetMismatch("quasimorphism and measure live on different groups".into()));
    }
    let mut checkpoints = checkpoints.to_vec();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let horizon = *checkpoints.last().ok_or_else(|| Error::InvalidArgument("no checkpoints".into()))?;
    if checkpoints[0] < start {
        return Err(Error::InvalidArgument("checkpoints must not precede the start".into()));
    }
    let sampler = mu.sampler();
    let mut r = rng::stream(seed, rng::domain::LIL, 0);
    let mut cur = phi.cursor(&phi.alphabet().identity());
    let mut best = f64::NEG_INFINITY;
    let mut next = checkpoints.iter().peekable();
    let mut points = Vec::with_capacity(checkpoints.len());
    for n in 1..=horizon {
        cur.multiply(sampler.sample(&mut r));
        cur.forget();
        if n >= start {
            let nf = n as f64;
            let centered = cur.value() - nf * ell;
            best = best.max(centered / (nf * nf.ln().ln()).sqrt());
        }
        if next.peek() == Some(&&n) {
            next.next();
            points.push(LilPoint { n, r_plain: best, r_sqrt2: best / std::f64::consts::SQRT_2 });
        }
    }
    Ok(LilCurve { horizon, start, seed, ell, points })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub n: usize,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub mean: f64,
    pub mean_se: f64,
    pub sigma_hat: f64,
    pub sigma_se: f64,
    pub moments: Moments,
    pub verdict: Verdict,
}

/// Pools CLT reports of the same walk length.
pub fn aggregate_report(reports: &[CltReport]) -> Result<AggregateReport> {
    let first = reports.first().ok_or_else(|| Error::Incompatible("nothing to aggregate".into()))?;
    for r in reports {
        if r.n != first.n {
            return Err(Error::Incompatible(format!("walk lengths {} and {} differ", first.n, r.n)));
        }
        if (r.ell - first.ell).abs() > 0.0 {
            return Err(Error::Incompatible("reports were centered with different drifts".into()));
        }
    }
    let moments = reports.iter().fold(Moments::default(), |acc, r| acc.merge(&r.moments));
    let sigma_hat = moments.sigma();
    Ok(AggregateReport {
        runs: reports.len(),
        n: first.n,
        trials: moments.count as usize,
        seeds: reports.iter().map(|r| r.seed).collect(),
        mean: moments.mean(),
        mean_se: moments.mean_se(),
        sigma_hat,
        sigma_se: moments.sigma_se(),
        moments,
        verdict: if sigma_hat < first.floor { Verdict::Degenerate } else { Verdict::NonDegenerate },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Alphabet;
    use statrs::distribution::Normal;

    fn z_config(n: usize, trials: usize) -> WalkConfig {
        let z = Alphabet::free_abelian(1);
        WalkConfig {
            mu: FiniteMeasure::nearest_neighbor(z.clone()),
            phi: Quasimorphism::hom(z, vec![1.0]).unwrap(),
            n,
            trials,
            seed: 11,
            ell: 0.0,
            ell_error: 0.0,
            floor: DEFAULT_FLOOR,
        }
    }

    #[test]
    fn walks_are_reproducible_and_bounded() {
        let c = z_config(50, 1);
        let s = c.mu.sampler();
        let a = run_walk(&c.phi, &s, 50, 3, 7, true);
        let b = run_walk(&c.phi, &s, 50, 3, 7, false);
        assert_eq!(a.z, b.z);
        assert!(a.z.len() <= 50);
        assert_eq!(a.trajectory.unwrap().len(), 51);
    }

    #[test]
    fn biased_walk_mean() {
        let z = Alphabet::free_abelian(1);
        let p = 0.7;
        let mu = FiniteMeasure::new(z.clone(), vec![(z.parse("t").unwrap(), p), (z.parse("t^-1").unwrap(), 1.0 - p)]).unwrap();
        let s = mu.sampler();
        let phi = Quasimorphism::hom(z, vec![1.0]).unwrap();
        let n = 40;
        let m = Moments::of((0..10_000).map(|t| run_walk(&phi, &s, n, 5, t, false).phi_zn));
        let expected = n as f64 * (2.0 * p - 1.0);
        assert!((m.mean() - expected).abs() <= 3.0 * m.mean_se());
    }

    #[test]
    fn ks_examples() {
        let m = 1000;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let q: Vec<f64> = (0..m).map(|i| normal.inverse_cdf((i as f64 + 0.5) / m as f64)).collect();
        let d = ks_statistic(&q, 1.0).unwrap();
        // the quantile function is accurate to about 1e-10
        assert!(d <= 0.5 / m as f64 + 1e-9);
        let u: Vec<f64> = (0..10_000).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / 10_000.0).collect();
        assert!(ks_statistic(&u, 1.0).unwrap() >= 0.05);
        assert!(ks_statistic(&u, 0.0).is_err());
        assert!(ks_statistic(&[], 1.0).is_err());
    }

    #[test]
    fn tame_clt_is_degenerate() {
        let f2 = Alphabet::free(2);
        let mu = FiniteMeasure::uniform(f2.clone(), vec![f2.parse("a").unwrap(), f2.parse("a^-1").unwrap()]).unwrap();
        let phi = Quasimorphism::brooks(f2.clone(), &f2.parse("b").unwrap(), None).unwrap();
        let c = WalkConfig { mu, phi, n: 256, trials: 200, seed: 1, ell: 0.0, ell_error: 0.0, floor: DEFAULT_FLOOR };
        let rep = clt_experiment(&c).unwrap();
        assert_eq!(rep.verdict, Verdict::Degenerate);
        assert_eq!(rep.sigma_hat, 0.0);
        assert!(rep.samples.iter().all(|s| s.x == 0.0));
        let lil = lil_track(&c.phi, &c.mu, 0.0, 16, &geometric_checkpoints(16, 2000), 2).unwrap();
        assert!(lil.points.iter().all(|p| p.r_plain == 0.0));
    }

    #[test]
    fn aggregate_with_itself() {
        let rep = clt_experiment(&z_config(64, 500)).unwrap();
        let agg = aggregate_report(&[rep.clone(), rep.clone()]).unwrap();
        assert_eq!(agg.trials, 1000);
        assert!((agg.sigma_hat - rep.sigma_hat).abs() < 1e-12);
        let other = clt_experiment(&z_config(32, 10)).unwrap();
        assert!(matches!(aggregate_report(&[rep, other]), Err(Error::Incompatible(_))));
    }

    #[test]
    fn lil_running_max_is_monotone() {
        let c = z_config(1, 1);
        let curve = lil_track(&c.phi, &c.mu, 0.0, 16, &geometric_checkpoints(16, 50_000), 4).unwrap();
        assert!(curve.points.windows(2).all(|w| w[0].r_plain <= w[1].r_plain));
        assert_eq!(curve.points.last().unwrap().n, 50_000);
    }
}
