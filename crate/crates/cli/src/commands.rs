//! One function per subcommand. Each returns the report body and its checks.

use quasiwalk::boundary::{
    boundary_variance, cocycle_identity_check, cylinder_frequencies, integral_representation_check, martingale_sigma,
    rn_kernel_check, sandwich, stationarity_exact, stationarity_mc, RaySource,
};
use quasiwalk::harmonic::{biharmonic_approx, biharmonic_approx_sampled, distortion, tameness_check, Mode, Tameness};
use quasiwalk::montecarlo::{
    aggregate_report, clt_experiment, geometric_checkpoints, lil_track, run_walk, CltReport, Moments, Verdict, WalkConfig,
};
use quasiwalk::quasimorphism::random_element;
use quasiwalk::{rng, Alphabet, Error, ExactMeasure, FiniteMeasure, GroupElement, Measure, Quasimorphism, Result, Scalar};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{self, ExperimentConfig, HarmonicMode, RayModeSpec, ScalarKind, TameExpectation};
use crate::output::{Checks, Output};

/// Validated objects shared by the subcommands.
pub struct Context {
    pub config: ExperimentConfig,
    pub alphabet: Alphabet,
    pub exact_mu: ExactMeasure,
    pub mu: Measure,
    pub phi: Quasimorphism,
}

impl Context {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let alphabet = config.alphabet()?;
        let exact_mu = config.exact_measure(&alphabet)?;
        let mu = exact_mu.cast::<f64>();
        let phi = config.quasimorphism(&alphabet)?;
        Ok(Context { config, alphabet, exact_mu, mu, phi })
    }

    fn ell(&self) -> Result<config::EllValue> {
        config::resolve_ell(&self.config, &self.phi, &self.mu, rng::subseed(self.config.seed, rng::domain::HARMONIC, 1))
    }

    fn phi_hat(&self) -> Result<Quasimorphism> {
        config::phi_hat(&self.phi)
    }
}

pub type Outcome = (Value, Checks);

pub fn walk(ctx: &Context, out: &mut Output) -> Result<Outcome> {
    let w = ctx.config.section(&ctx.config.walk, "walk")?;
    if w.n == 0 || w.trials == 0 {
        return Err(Error::Config("walk.n and walk.trials must be at least 1".into()));
    }
    let ell = ctx.ell()?;
    let sampler = ctx.mu.sampler();
    let rows: Vec<(u64, usize, f64)> = (0..w.trials as u64)
        .into_par_iter()
        .map(|t| {
            let o = run_walk(&ctx.phi, &sampler, w.n, ctx.config.seed, t, false);
            (t, o.z.len(), o.phi_zn)
        })
        .collect();
    let max_len = w.n * ctx.mu.max_step_length();
    let longest = rows.iter().map(|r| r.1).max().unwrap_or(0);
    let m = Moments::of(rows.iter().map(|r| r.2));
    let drift = w.n as f64 * ell.ell;
    let defect = ctx.phi.defect_bound().unwrap_or(0.0);
    let tolerance = 3.0 * m.mean_se() + w.n as f64 * ell.ell_error + defect;
    let mut checks = Checks::default();
    checks.add("length-bound", longest <= max_len, format!("longest |z_n| = {longest} <= {max_len}"));
    checks.add(
        "mean-drift",
        (m.mean() - drift).abs() <= tolerance,
        format!("|mean phi(z_n) - n ell| = {:.6} <= {tolerance:.6}", (m.mean() - drift).abs()),
    );
    out.csv("walk.csv", "trial,word_length,phi_zn", rows.iter().map(|(t, l, v)| format!("{t},{l},{v}")))
        .map_err(io)?;
    let body = json!({
        "n": w.n,
        "trials": w.trials,
        "ell": ell.ell,
        "ell_err": ell.ell_error,
        "ell_method": ell.method,
        "mean_phi_zn": m.mean(),
        "mean_se": m.mean_se(),
        "sd_phi_zn": m.sigma(),
        "longest_word": longest,
    });
    Ok((body, checks))
}

fn run_clt(ctx: &Context, n: usize, ell: &config::EllValue) -> Result<CltReport> {
    let w = ctx.config.walk.as_ref().expect("checked by caller");
    clt_experiment(&WalkConfig {
        mu: ctx.mu.clone(),
        phi: ctx.phi.clone(),
        n,
        trials: w.trials,
        seed: ctx.config.seed,
        ell: ell.ell,
        ell_error: ell.ell_error,
        floor: w.floor,
    })
}

pub fn clt(ctx: &Context, out: &mut Output) -> Result<Outcome> {
    let w = ctx.config.section(&ctx.config.walk, "walk")?;
    let ell = ctx.ell()?;
    let rep = run_clt(ctx, w.n, &ell)?;
    let mut checks = Checks::default();
    let c = &w.check;
    let degenerate = rep.verdict == Verdict::Degenerate;
    if let Some([lo, hi]) = c.sigma {
        checks.add("sigma-range", (lo..=hi).contains(&rep.sigma_hat), format!("sigma_hat = {:.6} in [{lo}, {hi}]", rep.sigma_hat));
    }
    if let Some(min) = c.sigma_min {
        checks.add("sigma-min", rep.sigma_hat > min, format!("sigma_hat = {:.6} > {min}", rep.sigma_hat));
    }
    if let Some(ks_max) = c.ks_max {
        let ks = rep.ks.unwrap_or(f64::NAN);
        checks.add("ks", ks <= ks_max, format!("KS = {ks:.6} <= {ks_max}"));
    }
    if let Some(expect) = c.expect {
        checks.add("verdict", rep.verdict == expect, format!("verdict {:?}, expected {expect:?}", rep.verdict));
    }
    if c.identically_zero {
        let zero = rep.samples.iter().all(|s| s.x == 0.0);
        checks.add("samples-identically-zero", zero && rep.sigma_hat == 0.0, format!("max |x_i| = {}, sigma_hat = {}", rep.max_abs_x, rep.sigma_hat));
    }
    if !degenerate {
        let band = 3.0 * rep.sigma_hat / (rep.trials as f64).sqrt() + (w.n as f64).sqrt() * ell.ell_error;
        checks.add("centering", rep.mean.abs() <= band, format!("|mean x| = {:.6} <= {band:.6}", rep.mean.abs()));
    }
    let scale = match w.scale_n {
        Some(m) => {
            let other = run_clt(ctx, m, &ell)?;
            let ratio = rep.sigma_hat / other.sigma_hat;
            if let Some([lo, hi]) = c.scale_ratio {
                checks.add(
                    "scale-coherence",
                    (lo..=hi).contains(&ratio),
                    format!("sigma({}) / sigma({m}) = {ratio:.6} in [{lo}, {hi}]", w.n),
                );
            }
            json!({"n": m, "sigma_hat": other.sigma_hat, "sigma_se": other.sigma_se, "ks": other.ks, "ratio": ratio})
        }
        None => Value::Null,
    };
    let tameness = if c.require_non_tame {
        let t = ctx.config.section(&ctx.config.tame, "tame")?;
        let report = tameness_check(&ctx.phi, &ctx.mu, t.horizon, t.threshold, t.stride, ell.ell, t.cap)?;
        let witness = matches!(report.verdict, Tameness::NonTameWitness { .. });
        checks.add("non-tame-witness", witness, format!("{:?}", report.verdict));
        if witness {
            checks.add("nondegenerate-if-non-tame", !degenerate, format!("sigma_hat = {:.6}", rep.sigma_hat));
        }
        serde_json::to_value(&report).expect("serializes")
    } else {
        Value::Null
    };
    out.csv(
        "clt_samples.csv",
        "trial,phi_zn,x",
        rep.samples.iter().map(|s| format!("{},{},{}", s.trial, s.phi_zn, s.x)),
    )
    .map_err(io)?;
    let body = json!({
        "sigma_hat": rep.sigma_hat,
        "ks": rep.ks,
        "ell": ell.ell,
        "ell_err": ell.ell_error,
        "ell_method": ell.method,
        "verdict": rep.verdict,
        "detail": rep,
        "scale": scale,
        "tameness": tameness,
    });
    Ok((body, checks))
}

pub fn lil(ctx: &Context, out: &mut Output) -> Result<Outcome> {
    let l = ctx.config.section(&ctx.config.lil, "lil")?;
    let ell = ctx.ell()?;
    let curve = lil_track(&ctx.phi, &ctx.mu, ell.ell, l.start, &geometric_checkpoints(l.start, l.horizon), ctx.config.seed)?;
    let mut checks = Checks::default();
    let monotone = curve.points.windows(2).all(|p| p[0].r_plain <= p[1].r_plain);
    checks.add("running-max-nondecreasing", monotone, format!("{} checkpoints", curve.points.len()));
    let last = *curve.points.last().expect("at least one checkpoint");
    if let Some([lo, hi]) = l.check.r_sqrt2 {
        checks.add("r-sqrt2-range", (lo..=hi).contains(&last.r_sqrt2), format!("r_N = {:.6} in [{lo}, {hi}]", last.r_sqrt2));
    }
    if l.check.identically_zero {
        let zero = curve.points.iter().all(|p| p.r_plain == 0.0);
        checks.add("identically-zero", zero, format!("final r_N = {}", last.r_plain));
    }
    out.csv(
        "lil.csv",
        "N,r_plain,r_sqrt2",
        curve.points.iter().map(|p| format!("{},{},{}", p.n, p.r_plain, p.r_sqrt2)),
    )
    .map_err(io)?;
    let body = json!({
        "ell": ell.ell,
        "ell_err": ell.ell_error,
        "horizon": curve.horizon,
        "start": curve.start,
        "r_plain": last.r_plain,
        "r_sqrt2": last.r_sqrt2,
        "points": curve.points,
    });
    Ok((body, checks))
}

fn distortion_exact<S: Scalar>(ctx: &Context, mu: &FiniteMeasure<S>, n: usize, tau: f64, cap: usize) -> Result<quasiwalk::harmonic::DistortionEstimate> {
    distortion(&ctx.phi, &mu.powers(n, tau, cap)?)
}

pub fn distortion_cmd(ctx: &Context, out: &mut Output) -> Result<Outcome> {
    let d = ctx.config.section(&ctx.config.distortion, "distortion")?;
    let est = if d.sampled {
        quasiwalk::harmonic::distortion_sampled(&ctx.phi, &ctx.mu, d.n, d.walks, ctx.config.seed)?
    } else {
        match ctx.config.scalar {
            ScalarKind::F64 => distortion_exact(ctx, &ctx.mu, d.n, d.tau, d.cap)?,
            ScalarKind::Rational => distortion_exact(ctx, &ctx.exact_mu, d.n, d.tau, d.cap)?,
        }
    };
    let mut checks = Checks::default();
    if est.exact || !d.sampled {
        let gap = est.max_subadditivity_gap();
        let slack = d.slack + 3.0 * est.truncation_slack.iter().cloned().fold(0.0, f64::max);
        checks.add(
            "subadditivity",
            gap <= est.defect + slack,
            format!("max |a(m+n) - a(m) - a(n)| = {gap:.3e} <= D + slack = {:.6}", est.defect + slack),
        );
    }
    let se = est.a_se.clone().unwrap_or_else(|| vec![0.0; est.a.len()]);
    out.csv(
        "distortion.csv",
        "n,a_n,se,truncation_slack",
        (0..est.a.len()).map(|k| format!("{k},{},{},{}", est.a[k], se[k], est.truncation_slack[k])),
    )
    .map_err(io)?;
    let body = json!({
        "N": est.n,
        "ell": est.ell,
        "ell_err": est.ell_error,
        "defect": est.defect,
        "max_subadditivity_gap": est.max_subadditivity_gap(),
        "exact": est.exact,
        "a": est.a,
    });
    Ok((body, checks))
}

pub fn defect(ctx: &Context, _out: &mut Output) -> Result<Outcome> {
    let d = ctx.config.section(&ctx.config.defect, "defect")?;
    let lower = ctx.phi.defect_lower_bound(d.radius, d.random_pairs, ctx.config.seed, d.cap)?;
    let declared = ctx.phi.defect_bound();
    let mut checks = Checks::default();
    if let Some(b) = declared {
        checks.add("declared-bound", lower <= b + 1e-9, format!("observed {lower} <= declared {b}"));
    }
    let body = json!({
        "radius": d.radius,
        "random_pairs": d.random_pairs,
        "lower_bound": lower,
        "declared_bound": declared,
        "description": ctx.phi.description(),
    });
    Ok((body, checks))
}

fn harmonic_exact<S: Scalar>(
    ctx: &Context,
    mu: &FiniteMeasure<S>,
    phi_hat: &Quasimorphism,
    h: &config::HarmonicSection,
    out: &mut Output,
) -> Result<Outcome> {
    let ball = ctx.alphabet.enumerate_ball(h.eval_radius, h.cap)?;
    let approx = biharmonic_approx(phi_hat, mu, h.n, &ball, h.tau, h.cap)?;
    let residuals = approx.residuals()?;
    let bound = approx.residual_bound();
    let mut worst_identity: f64 = 0.0;
    let mut worst_right: f64 = 0.0;
    let rows: Vec<Value> = residuals
        .iter()
        .map(|r| {
            let right = r.right.to_f64_value();
            let predicted = r.predicted_right.as_ref().map(|p| p.to_f64_value());
            if let Some(p) = &r.predicted_right {
                worst_identity = worst_identity.max((r.right.clone() - p.clone()).abs().to_f64_value());
            }
            worst_right = worst_right.max(right.abs());
            json!({"g": ctx.alphabet.format(&r.g), "right": right, "left": r.left.to_f64_value(), "predicted_right": predicted})
        })
        .collect();
    let mut checks = Checks::default();
    checks.add(
        "residual-identity",
        worst_identity <= h.identity_tolerance,
        format!("max |right - (psi_N/N + a_N/N - ell)| = {worst_identity:.3e} <= {}", h.identity_tolerance),
    );
    checks.add(
        "residual-bound",
        worst_right <= bound + h.identity_tolerance,
        format!("max |right| = {worst_right:.6} <= 2 D_hat / N = {bound:.6}"),
    );
    out.csv(
        "harmonic.csv",
        "g,phi_tilde",
        approx.tabulated().into_iter().map(|(g, v)| format!("\"{}\",{}", ctx.alphabet.format(g), v.to_f64_value())),
    )
    .map_err(io)?;
    let body = json!({
        "ell": approx.ell.to_f64_value(),
        "ell_error": approx.distortion.ell_error,
        "N": approx.n,
        "mode": approx.mode,
        "scalar": ctx.config.scalar,
        "residuals": rows,
        "defect_assumed": approx.defect_hat,
        "residual_bound": bound,
        "max_right_residual": worst_right,
        "max_identity_error": worst_identity,
        "max_distance_to_phi_hat": approx.max_distance_to(phi_hat),
    });
    Ok((body, checks))
}

pub fn harmonic(ctx: &Context, out: &mut Output) -> Result<Outcome> {
    let h = ctx.config.section(&ctx.config.harmonic, "harmonic")?;
    let phi_hat = ctx.phi_hat()?;
    match (h.mode, ctx.config.scalar) {
        (HarmonicMode::Exact, ScalarKind::F64) => harmonic_exact(ctx, &ctx.mu, &phi_hat, h, out),
        (HarmonicMode::Exact, ScalarKind::Rational) => harmonic_exact(ctx, &ctx.exact_mu, &phi_hat, h, out),
        (HarmonicMode::MonteCarlo, _) => {
            let ball = ctx.alphabet.enumerate_ball(h.eval_radius, h.cap)?;
            let mut rep = config::representative(&ctx.config, &phi_hat, &ctx.mu, None)?;
            rep.n = h.n;
            let approx = biharmonic_approx_sampled(&rep, &ball, h.distortion_walks)?;
            let residuals = approx.residuals()?;
            let rows: Vec<Value> = residuals
                .iter()
                .map(|r| json!({"g": ctx.alphabet.format(&r.g), "right": r.right, "left": r.left}))
                .collect();
            out.csv(
                "harmonic.csv",
                "g,phi_tilde",
                approx.tabulated().into_iter().map(|(g, v)| format!("\"{}\",{v}", ctx.alphabet.format(g))),
            )
            .map_err(io)?;
            let mode = match approx.mode {
                Mode::MonteCarlo { paths, seed } => json!({"type": "monte-carlo", "paths": paths, "seed": seed}),
                Mode::Exact => json!({"type": "exact"}),
            };
            let body = json!({
                "ell": approx.ell,
                "ell_error": approx.distortion.ell_error,
                "N": approx.n,
                "mode": mode,
                "residuals": rows,
                "defect_assumed": approx.defect_hat,
                "residual_bound": approx.residual_bound(),
                "certified": false,
            });
            Ok((body, Checks::default()))
        }
    }
}

pub fn tame(ctx: &Context, _out: &mut Output) -> Result<Outcome> {
    let t = ctx.config.section(&ctx.config.tame, "tame")?;
    let ell = ctx.ell()?;
    let report = match ctx.config.scalar {
        ScalarKind::F64 => tameness_check(&ctx.phi, &ctx.mu, t.horizon, t.threshold, t.stride, ell.ell, t.cap)?,
        ScalarKind::Rational => tameness_check(&ctx.phi, &ctx.exact_mu, t.horizon, t.threshold, t.stride, ell.ell, t.cap)?,
    };
    let mut checks = Checks::default();
    if let Some(expect) = t.expect {
        let got = match report.verdict {
            Tameness::TameToHorizon { .. } => TameExpectation::Tame,
            Tameness::NonTameWitness { .. } => TameExpectation::NonTame,
        };
        checks.add("verdict", got == expect, format!("{:?}", report.verdict));
    }
    let body = json!({"ell": ell.ell, "ell_err": ell.ell_error, "tameness": report});
    Ok((body, checks))
}

pub fn martingale(ctx: &Context, out: &mut Output) -> Result<Outcome> {
    let m = ctx.config.section(&ctx.config.martingale, "martingale")?;
    let ell = ctx.ell()?;
    let phi_hat = ctx.phi_hat()?;
    let rep = config::representative(&ctx.config, &phi_hat, &ctx.mu, None)?;
    let report = martingale_sigma(&rep, m.depth, m.samples, ell.ell, ctx.config.seed)?;
    let mut checks = Checks::default();
    // The increments absorb the error in ell.
    let band = 3.0 * report.mean_se + ell.ell_error;
    checks.add(
        "centered",
        report.mean_delta.abs() <= band,
        format!("|mean Delta| = {:.6} <= 3 SE + ell error = {band:.6}", report.mean_delta.abs()),
    );
    if let Some([lo, hi]) = m.sigma {
        checks.add("sigma-range", (lo..=hi).contains(&report.sigma_hat), format!("sigma_hat = {:.6} in [{lo}, {hi}]", report.sigma_hat));
    }
    out.csv(
        "martingale.csv",
        "index,q_length,delta,delta_second,cauchy_gap",
        report.samples.iter().map(|s| {
            format!("{},{},{},{},{}", s.index, s.q_length, s.delta, s.delta_second, s.cauchy_gap)
        }),
    )
    .map_err(io)?;
    let sandwich_value = match &ctx.config.sandwich {
        Some(s) => {
            let sw = sandwich(&rep, &ctx.phi, s.n, s.trials, s.depth, ell.ell, ell.ell_error, ctx.config.seed)?;
            checks.add(
                "sandwich",
                sw.max_deviation <= sw.bound,
                format!("max |phi(z_n) - n ell - rho_n| = {:.6} <= 3D + slack = {:.6}", sw.max_deviation, sw.bound),
            );
            out.csv(
                "sandwich.csv",
                "trial,phi_centered,rho,deviation",
                sw.trials.iter().map(|t| format!("{},{},{},{}", t.trial, t.phi_centered, t.rho, t.deviation)),
            )
            .map_err(io)?;
            json!({"n": sw.n, "depth": sw.depth, "trials": sw.trials.len(), "max_deviation": sw.max_deviation, "bound": sw.bound, "slack": sw.slack})
        }
        None => Value::Null,
    };
    let body = json!({
        "ell": ell.ell,
        "ell_err": ell.ell_error,
        "sigma_hat": report.sigma_hat,
        "sigma_se": report.sigma_se,
        "representative": {"N": rep.n, "paths": rep.paths},
        "detail": report,
        "sandwich": sandwich_value,
    });
    Ok((body, checks))
}

pub fn boundary(ctx: &Context, out: &mut Output) -> Result<Outcome> {
    let b = ctx.config.section(&ctx.config.boundary, "boundary")?;
    let ell = ctx.ell()?;
    let phi_hat = ctx.phi_hat()?;
    let source = RaySource::new(&ctx.mu, ctx.config.ray_mode(b))?;
    let seed = ctx.config.seed;
    let mut checks = Checks::default();
    let mut body = serde_json::Map::new();
    body.insert("ell".into(), json!(ell.ell));
    body.insert("mode".into(), json!(source.mode()));
    if b.mode == RayModeSpec::TrajectoryLimit {
        body.insert("heuristic".into(), json!(true));
    }
    let rep = config::representative(&ctx.config, &phi_hat, &ctx.mu, None)?;

    if b.triples > 0 {
        let mut r = rng::stream(seed, rng::domain::BOUNDARY, u64::MAX);
        let pairs: Vec<(GroupElement, GroupElement)> = (0..b.triples)
            .map(|_| {
                let g = random_element(&ctx.alphabet, b.triple_max_len, &mut r);
                // every tenth pair is an inverse pair, the instance gh = e
                let h = if r.random_range(0..10) == 0 { g.inverse() } else { random_element(&ctx.alphabet, b.triple_max_len, &mut r) };
                (g, h)
            })
            .collect();
        let report = cocycle_identity_check(&rep, &pairs, &source, seed, b.length)?;
        checks.add(
            "cocycle-identity",
            report.max_residual <= report.total_gap + 1e-9,
            format!("max residual {:.6} <= summed gaps {:.6}", report.max_residual, report.total_gap),
        );
        body.insert("cocycle".into(), serde_json::to_value(&report).expect("serializes"));
    }

    if let Some(spec) = &b.integral {
        let rep_small = config::representative(&ctx.config, &phi_hat, &ctx.mu, Some(spec.paths))?;
        let elements = ctx.alphabet.enumerate_ball(spec.radius, 1_000_000)?;
        let mut rows = Vec::new();
        let mut worst: f64 = 0.0;
        for g in &elements {
            let c = integral_representation_check(&rep_small, g, &source, spec.rays, spec.replicates, b.length, seed)?;
            let ok = c.discrepancy <= b.se_multiple * c.combined_se;
            if c.combined_se > 0.0 {
                worst = worst.max(c.discrepancy / c.combined_se);
            }
            checks.add(
                format!("integral-representation[{}]", c.g),
                ok,
                format!("|phi_tilde(g) - mean alpha| = {:.6} <= {} SE = {:.6}", c.discrepancy, b.se_multiple, b.se_multiple * c.combined_se),
            );
            rows.push(c);
        }
        body.insert("integral".into(), json!({"rays": spec.rays, "replicates": spec.replicates, "paths": spec.paths, "worst_z": worst, "elements": rows}));
    }

    if let Some(spec) = &b.variance {
        let v = boundary_variance(&rep, &source, spec.rays, b.length, ell.ell, seed)?;
        out.csv(
            "boundary.csv",
            "ray,g,alpha",
            v.alphas.iter().enumerate().map(|(i, (g, a))| format!("{i},\"{g}\",{a}")),
        )
        .map_err(io)?;
        body.insert("sigma_hat".into(), json!(v.sigma_hat));
        body.insert("sigma_se".into(), json!(v.sigma_se));
        body.insert("variance".into(), serde_json::to_value(&v).expect("serializes"));
    }

    if let Some(spec) = &b.cylinders {
        let freqs = cylinder_frequencies(&source, spec.max_len, spec.rays, seed)?;
        for f in &freqs {
            let z = (f.frequency - f.expected).abs();
            checks.add(
                format!("cylinder[{}]", f.cylinder),
                z <= b.se_multiple * f.se,
                format!("|{:.6} - {:.6}| <= {} SE = {:.6}", f.frequency, f.expected, b.se_multiple, b.se_multiple * f.se),
            );
        }
        let mut exact_worst: Option<f64> = None;
        if ctx.mu.is_nearest_neighbor_uniform() {
            let mut worst: f64 = 0.0;
            for w in ctx.alphabet.enumerate_ball(spec.stationarity_len, 1_000_000)? {
                let r = stationarity_exact(&ctx.exact_mu, &w)?;
                worst = worst.max(r.to_f64_value().abs());
            }
            checks.add(
                "stationarity-exact",
                worst <= spec.exact_tolerance,
                format!("max exact residual {worst:.3e} <= {}", spec.exact_tolerance),
            );
            exact_worst = Some(worst);
        }
        let pool: Vec<GroupElement> = ctx
            .alphabet
            .enumerate_ball(spec.stationarity_len, 1_000_000)?
            .into_iter()
            .filter(|w| !w.is_identity())
            .collect();
        let mut r = rng::stream(seed, rng::domain::STATIONARITY, u64::MAX);
        let mut mc = Vec::new();
        for _ in 0..spec.mc_cylinders.min(pool.len()) {
            let w = &pool[r.random_range(0..pool.len())];
            let s = stationarity_mc(&ctx.mu, &source, w, spec.mc_rays, seed)?;
            checks.add(
                format!("stationarity-mc[{}]", s.cylinder),
                s.residual.abs() <= b.se_multiple * s.se,
                format!("|residual| = {:.6} <= {} SE = {:.6}", s.residual.abs(), b.se_multiple, b.se_multiple * s.se),
            );
            mc.push(s);
        }
        body.insert(
            "cylinders".into(),
            json!({"rays": spec.rays, "frequencies": freqs, "stationarity_exact_max": exact_worst, "stationarity_mc": mc}),
        );
    }
    Ok((Value::Object(body), checks))
}

pub fn rn_kernel(ctx: &Context, _out: &mut Output) -> Result<Outcome> {
    let k = ctx.config.section(&ctx.config.rn_kernel, "rn_kernel")?;
    let source = RaySource::new(&ctx.mu, quasiwalk::boundary::RayMode::Hitting)?;
    let phi_hat = ctx.phi_hat()?;
    let reference = if ctx.phi.is_hom() { ctx.phi.clone() } else { ctx.phi.homogenize_limit()? };
    let rep = config::representative(&ctx.config, &phi_hat, &ctx.mu, Some(k.paths))?;
    let mut checks = Checks::default();
    let mut rows = Vec::new();
    for text in &k.elements {
        let g = ctx.alphabet.parse(text)?;
        let r = rn_kernel_check(&rep, &reference, &g, &source, k.rays, k.length, k.depth, ctx.config.seed)?;
        let tol = r.bias_bound + 3.0 * r.se;
        checks.add(
            format!("reconstruction[{}]", r.g),
            r.discrepancy <= tol,
            format!("|reconstruction - phi_hat(g)| = {:.6} <= bias bound + 3 SE = {tol:.6}", r.discrepancy),
        );
        rows.push(r);
    }
    Ok((json!({"depth": k.depth, "rays": k.rays, "length": k.length, "elements": rows}), checks))
}

/// Pools CLT reports and, when martingale and boundary reports are present,
/// compares the three estimates of sigma.
pub fn report(inputs: &[Value], se_multiple: f64, relative: f64) -> Result<Outcome> {
    let mut clts = Vec::new();
    let mut estimates: Vec<(String, f64, f64)> = Vec::new();
    for doc in inputs {
        let command = doc.get("command").and_then(Value::as_str).unwrap_or("");
        let field = |v: &Value, k: &str| v.get(k).and_then(Value::as_f64);
        match command {
            "clt" => {
                let detail = doc.get("detail").cloned().ok_or_else(|| Error::Incompatible("clt report without detail".into()))?;
                let r: CltReport = serde_json::from_value(detail).map_err(|e| Error::Incompatible(e.to_string()))?;
                clts.push(r);
            }
            "martingale" | "boundary" => {
                if let (Some(s), Some(se)) = (field(doc, "sigma_hat"), field(doc, "sigma_se")) {
                    estimates.push((command.to_string(), s, se));
                }
            }
            other => return Err(Error::Incompatible(format!("cannot aggregate a {other:?} report"))),
        }
    }
    let mut body = serde_json::Map::new();
    if !clts.is_empty() {
        let agg = aggregate_report(&clts)?;
        estimates.insert(0, ("clt".into(), agg.sigma_hat, agg.sigma_se));
        body.insert("clt".into(), serde_json::to_value(&agg).expect("serializes"));
    }
    let mut checks = Checks::default();
    for i in 0..estimates.len() {
        for j in i + 1..estimates.len() {
            let (a, sa, ea) = &estimates[i];
            let (b, sb, eb) = &estimates[j];
            let diff = (sa - sb).abs();
            let combined = (ea * ea + eb * eb).sqrt();
            checks.add(
                format!("sigma-se[{a},{b}]"),
                diff <= se_multiple * combined,
                format!("|{sa:.6} - {sb:.6}| = {diff:.6} <= {se_multiple} SE = {:.6}", se_multiple * combined),
            );
            let scale = sa.abs().max(sb.abs());
            checks.add(
                format!("sigma-relative[{a},{b}]"),
                diff <= relative * scale,
                format!("relative difference {:.4} <= {relative}", if scale > 0.0 { diff / scale } else { 0.0 }),
            );
        }
    }
    body.insert(
        "sigma".into(),
        json!(estimates.iter().map(|(n, s, se)| json!({"source": n, "sigma_hat": s, "sigma_se": se})).collect::<Vec<_>>()),
    );
    Ok((Value::Object(body), checks))
}

fn io(e: std::io::Error) -> Error {
    Error::Stream(format!("output: {e}"))
}
