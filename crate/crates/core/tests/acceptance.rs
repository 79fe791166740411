//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N ...: PASS|FAIL` line (run with `-- --nocapture` to see them).

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use isovar::baseline::{isotonic_mle, pava};
use isovar::config::RunConfig;
use isovar::dist::{
    logchi2_density, mixture_density, sample_gamma, sample_gig, sample_truncnorm_lower, substream, GigParams,
    GigRegime, MixtureTable, SimRng,
};
use isovar::gibbs::{
    eta1_conditional, eta_j_conditional, lambda_conditional, nu1_conditional, nu_j_conditional, run_chains,
    run_gibbs, tau1_conditional, tau_j_conditional, update_eta1, update_eta_j, xi_conditional, GibbsConfig,
    GibbsSampler, SUpdateMode,
};
use isovar::io;
use isovar::observe::ResidualSeries;
use isovar::pipeline;
use isovar::posterior::{coverage_check, predictive_abs, SummaryTarget};

use common::*;

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    println!("criterion {n} ({name}): {} | {detail}", if pass { "PASS" } else { "FAIL" });
}

#[test]
fn criterion_1_mixture_fidelity() {
    let start = Instant::now();
    let t = MixtureTable::standard();
    let wsum: f64 = t.weights().iter().sum();
    let target_mean = integrate(|e| e * logchi2_density(e), -60.0, 8.0, 200);
    let mix_mean: f64 = t.weights().iter().zip(t.means()).map(|(w, m)| w * m).sum();
    let gap = (0..=2000)
        .map(|i| -15.0 + 0.01 * i as f64)
        .map(|e| (logchi2_density(e) - mixture_density(e, &t)).abs())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let pass = (wsum - 1.0).abs() < 1e-9 && (mix_mean - target_mean).abs() < 1e-3 && gap < 1e-3 && secs < 1.0;
    report(
        1,
        "mixture fidelity",
        pass,
        &format!(
            "sum w = {wsum:.12}, mean gap = {:.2e}, sup gap = {gap:.2e}, {secs:.2}s",
            (mix_mean - target_mean).abs()
        ),
    );
    assert!(pass);
}

const DRAWS: usize = 100_000;

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn criterion_2_sampler_oracles() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut checked = 0;

    let gamma_cases = [(0.5, 1.0), (1.5, 2.0), (1.0, 0.3), (3.0, 1.0), (10.0, 5.0)];
    for (c, &(shape, rate)) in gamma_cases.iter().enumerate() {
        let mut rng = substream(200, c as u64);
        let xs: Vec<f64> = (0..DRAWS).map(|_| sample_gamma(shape, rate, &mut rng).unwrap()).collect();
        let (m, v) = (shape / rate, shape / (rate * rate));
        checked += 1;
        if rel(mean(&xs), m) > 0.03 || rel(variance(&xs), v) > 0.03 {
            failures.push(format!("gamma{:?}: {} {}", (shape, rate), mean(&xs), variance(&xs)));
        }
    }

    // (mu, var, lower): inactive, half-normal, mild, shifted, exponential tail (x2)
    let tn_cases = [(1.0, 1.0, -10.0), (0.0, 1.0, 0.0), (0.0, 1.0, 2.0), (1.0, 4.0, -1.0), (0.0, 1.0, 5.0), (0.0, 0.25, 3.0)];
    for (c, &(mu, var, lower)) in tn_cases.iter().enumerate() {
        let mut rng = substream(201, c as u64);
        let xs: Vec<f64> = (0..DRAWS).map(|_| sample_truncnorm_lower(mu, var, lower, &mut rng)).collect();
        let log_k = |x: f64| log_normal_pdf(x, mu, var);
        let hi = lower.max(mu) + 40.0 * var.sqrt();
        let m = expectation(log_k, lower, hi, |x| x);
        let v = expectation(log_k, lower, hi, |x| (x - m) * (x - m));
        checked += 1;
        if xs.iter().any(|x| *x < lower) || rel(mean(&xs), m) > 0.03 || rel(variance(&xs), v) > 0.03 {
            failures.push(format!("truncnorm{:?}: {} vs {m}, {} vs {v}", (mu, var, lower), mean(&xs), variance(&xs)));
        }
    }

    let gig_cases = [
        (2.0, 1.0, 0.5),
        (1.0, 4.0, 3.0),
        (0.5, 0.02, 0.3),
        (3.0, 0.01, -0.4),
        (4.0, 9.0, 0.0),
        (1.0, 1.0, -2.5),
        (2.0, 0.0, 1.5),
        (2.0, 1e-16, 0.5),
        (2.0, 1e-20, -6.0),
    ];
    let mut regimes = Vec::new();
    for (c, &(a, b, p)) in gig_cases.iter().enumerate() {
        let params = GigParams::new(a, b, p).unwrap();
        regimes.push(params.regime());
        let mut rng = substream(202, c as u64);
        let mut prev = None;
        let xs: Vec<f64> = (0..DRAWS)
            .map(|_| {
                let x = sample_gig(&params, &mut rng, prev).unwrap().value;
                prev = Some(x);
                x
            })
            .collect();
        let (m1, m2) = if b == 0.0 {
            (2.0 * p / a, p * (p + 1.0) * 4.0 / (a * a))
        } else {
            gig_moments(a, b, p)
        };
        let s1 = mean(&xs);
        let s2 = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        checked += 1;
        if rel(s1, m1) > 0.03 || rel(s2, m2) > 0.03 {
            failures.push(format!("gig{:?} [{:?}]: {s1} vs {m1}, {s2} vs {m2}", (a, b, p), params.regime()));
        }
    }
    for needed in [GigRegime::GammaMetropolis, GigRegime::SmallOmega, GigRegime::RatioOfUniforms, GigRegime::RatioOfUniformsShifted, GigRegime::TiltedGamma] {
        if !regimes.contains(&needed) {
            failures.push(format!("regime {needed:?} not exercised"));
        }
    }

    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 30.0;
    report(2, "sampler oracles", pass, &format!("{checked} settings, {secs:.1}s {failures:?}"));
    assert!(pass);
}

/// `|sample mean - oracle| / se`, for a sequence of draws.
fn z_score(xs: &[f64], oracle: f64, correlated: bool) -> f64 {
    let se = if correlated { batch_se(xs, 100) } else { iid_se(xs) };
    (mean(xs) - oracle).abs() / se
}

/// Oracle mean of a positive variable with log-density `log_k(x)` (up to a
/// constant), integrated in `u = ln x`.
fn positive_mean<K: Fn(f64) -> f64>(log_k: K) -> f64 {
    expectation(|u| log_k(u.exp()) + u, -200.0, 200.0, f64::exp)
}

fn gig_chain(params: &GigParams, rng: &mut SimRng) -> Vec<f64> {
    let mut prev = None;
    (0..DRAWS)
        .map(|_| {
            let x = sample_gig(params, rng, prev).unwrap().value;
            prev = Some(x);
            x
        })
        .collect()
}

#[test]
fn criterion_3_conditional_oracles() {
    let start = Instant::now();
    let table = MixtureTable::standard();
    let gamma2 = 0.01f64;
    let lg = gamma2.ln();
    let (m, v) = (*table.means(), *table.variances());
    let mut rng = substream(300, 0);
    let mut scores: Vec<(&str, f64)> = Vec::new();

    // eta_1 with n = 2, labels, eta_2 and tau_1 fixed
    let (z, s, eta, tau1) = ([-3.0, -2.0], [4usize, 6], [0.0, 0.7], 2.0);
    let xs: Vec<f64> = (0..DRAWS)
        .map(|_| update_eta1(&z, &s, &eta, tau1, gamma2, &table, &mut rng).unwrap())
        .collect();
    let log_k = |e1: f64| {
        log_normal_pdf(z[0], e1 + m[s[0]], v[s[0]]) + log_normal_pdf(z[1], e1 + eta[1] + m[s[1]], v[s[1]]) + log_normal_pdf(e1, lg, tau1)
    };
    scores.push(("eta_1", z_score(&xs, expectation(log_k, lg, lg + 60.0, |x| x), false)));

    // eta_2 with n = 3, all labels on component 4
    let (z, s, eta, tau_j, lambda) = ([-2.0, 0.5, 1.0], [3usize; 3], [-1.0, 0.0, 0.5], 0.8, 1.5);
    let xs: Vec<f64> = (0..DRAWS)
        .map(|_| update_eta_j(1, &z, &s, &eta, tau_j, lambda, &table, &mut rng).unwrap())
        .collect();
    let log_k = |e2: f64| {
        let c = [eta[0], eta[0] + e2, eta[0] + e2 + eta[2]];
        (0..3).map(|i| log_normal_pdf(z[i], c[i] + m[3], v[3])).sum::<f64>() + log_normal_pdf(e2, 0.0, lambda * tau_j)
    };
    scores.push(("eta_j", z_score(&xs, expectation(log_k, 0.0, 20.0, |x| x), false)));

    // nu_1 | tau_1 = 1: Ga(tau_1; 1, nu) Ga(nu; 1/2, 1)
    let (shape, rate) = nu1_conditional(1.0);
    let xs: Vec<f64> = (0..DRAWS).map(|_| sample_gamma(shape, rate, &mut rng).unwrap()).collect();
    scores.push(("nu_1", z_score(&xs, positive_mean(|nu| log_gamma_pdf(1.0, 1.0, nu) + log_gamma_pdf(nu, 0.5, 1.0)), false)));

    // tau_1 | eta_1, nu_1: N(eta_1; ln g2, tau) Ga(tau; 1, nu_1)
    for (name, d) in [("tau_1", 0.8), ("tau_1 at boundary", 0.0)] {
        let nu1 = 0.7;
        let params = tau1_conditional(lg + d, nu1, gamma2).unwrap();
        let xs = gig_chain(&params, &mut rng);
        let oracle = positive_mean(|t| log_normal_pdf(d, 0.0, t) + log_gamma_pdf(t, 1.0, nu1));
        scores.push((name, z_score(&xs, oracle, true)));
    }

    // nu_j | tau_j: Ga(tau_j; 1/2, nu) Ga(nu; 1/2, 1)
    let (shape, rate) = nu_j_conditional(0.3);
    let xs: Vec<f64> = (0..DRAWS).map(|_| sample_gamma(shape, rate, &mut rng).unwrap()).collect();
    scores.push(("nu_j", z_score(&xs, positive_mean(|nu| log_gamma_pdf(0.3, 0.5, nu) + log_gamma_pdf(nu, 0.5, 1.0)), false)));

    // tau_j | eta_j, nu_j, lambda: N(eta_j; 0, lambda tau) Ga(tau; 1/2, nu_j)
    let (e, nu, lam) = (0.4, 1.2, 0.5);
    let xs = gig_chain(&tau_j_conditional(e, nu, lam).unwrap(), &mut rng);
    scores.push(("tau_j", z_score(&xs, positive_mean(|t| log_normal_pdf(e, 0.0, lam * t) + log_gamma_pdf(t, 0.5, nu)), true)));

    // xi | lambda: Ga(lambda; 1/2, xi) Ga(xi; 1/2, 1)
    let (shape, rate) = xi_conditional(2.0);
    let xs: Vec<f64> = (0..DRAWS).map(|_| sample_gamma(shape, rate, &mut rng).unwrap()).collect();
    scores.push(("xi", z_score(&xs, positive_mean(|x| log_gamma_pdf(2.0, 0.5, x) + log_gamma_pdf(x, 0.5, 1.0)), false)));

    // lambda | eta, tau, xi with n = 3 and n = 2
    for (name, eta, tau) in [("lambda n=3", vec![0.0, 0.3, 0.7], vec![1.0, 0.5, 2.0]), ("lambda n=2", vec![0.0, 0.6], vec![1.0, 0.9])] {
        let xi = 0.8;
        let xs = gig_chain(&lambda_conditional(&eta, &tau, xi).unwrap(), &mut rng);
        let oracle = positive_mean(|l| {
            (1..eta.len()).map(|j| log_normal_pdf(eta[j], 0.0, l * tau[j])).sum::<f64>() + log_gamma_pdf(l, 0.5, xi)
        });
        scores.push((name, z_score(&xs, oracle, true)));
    }

    // the direct conditionals agree with the ones the sweep uses
    let c = eta1_conditional(&[-3.0, -2.0], &[4, 6], &[0.0, 0.7], 2.0, gamma2, &table).unwrap();
    let c2 = eta_j_conditional(1, &[-2.0, 0.5, 1.0], &[3; 3], &[-1.0, 0.0, 0.5], 0.8, 1.5, &table).unwrap();
    let finite = c.mean.is_finite() && c2.mean.is_finite();

    let secs = start.elapsed().as_secs_f64();
    let worst = scores.iter().map(|(_, z)| *z).fold(0.0, f64::max);
    let pass = finite && worst < 3.0 && secs < 60.0;
    let detail: Vec<String> = scores.iter().map(|(n, z)| format!("{n}: {z:.2}se")).collect();
    report(3, "conditional-update oracles", pass, &format!("{}; {secs:.1}s", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_4_joint_posterior_oracle() {
    let start = Instant::now();
    let table = MixtureTable::standard();
    let gamma2 = 0.01;
    let cases: [Vec<f64>; 3] = [
        vec![(0.2f64 * 0.2).ln()],
        vec![(0.15f64 * 0.15).ln(), (0.4f64 * 0.4).ln()],
        vec![(0.1f64 * 0.1).ln(), (0.3f64 * 0.3).ln(), (0.6f64 * 0.6).ln()],
    ];
    let mut details = Vec::new();
    let mut worst: f64 = 0.0;
    for (c, z) in cases.iter().enumerate() {
        let oracle = grid_posterior_eta_means(z, gamma2, &table);
        let series = series_with_log_squares(z, gamma2);
        let mut config = GibbsConfig::new(200_000, 5_000, 400 + c as u64, gamma2);
        config.store_eta = true;
        let draws = run_gibbs(&series, &config).unwrap();
        let n = z.len();
        for j in 0..n {
            let xs: Vec<f64> = draws.eta_rows().unwrap().map(|row| row[j]).collect();
            let zs = z_score(&xs, oracle[j], true);
            worst = worst.max(zs);
            details.push(format!("n={n} eta_{}: {:.4} vs {:.4} ({zs:.2}se)", j + 1, mean(&xs), oracle[j]));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 3.0 && secs < 120.0;
    report(4, "joint-posterior oracle", pass, &format!("{}; {secs:.1}s", details.join(", ")));
    assert!(pass);
}

fn synthetic_series(sigma2: &[f64], gamma2: f64, seed: u64) -> (ResidualSeries, Vec<f64>) {
    let mut rng = substream(seed, 0);
    let mut errors = Vec::new();
    let r: Vec<f64> = sigma2
        .iter()
        .map(|s2| {
            let e: f64 = StandardNormal.sample(&mut rng);
            let noise: f64 = StandardNormal.sample(&mut rng);
            let err = e * (s2 - gamma2).sqrt();
            errors.push(err);
            err + noise * gamma2.sqrt()
        })
        .collect();
    let times = (0..sigma2.len()).map(|i| i as f64).collect();
    (ResidualSeries::new(times, r, gamma2).unwrap(), errors)
}

#[test]
fn criterion_5_hard_invariants() {
    let start = Instant::now();
    let gamma2 = 0.0025;
    let mut rows = 0usize;
    let mut bad = 0usize;
    let mut deterministic = true;
    let dir = tempfile::tempdir().unwrap();
    let truth: Vec<f64> = (0..80).map(|i| gamma2 * (1.0 + 0.1 * i as f64)).collect();
    for (k, mode) in [SUpdateMode::Posterior, SUpdateMode::Prior].into_iter().enumerate() {
        for (thinning, chains) in [(1, 1), (3, 2)] {
            let (series, _) = synthetic_series(&truth, gamma2, 50 + k as u64);
            let mut config = GibbsConfig::new(1000, 200, 7, gamma2);
            config.s_update_mode = mode;
            config.thinning = thinning;
            let a = run_chains(&series, &config, chains).unwrap();
            let b = run_chains(&series, &config, chains).unwrap();
            let (pa, pb) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
            io::write_draws_bin(&pa, &a).unwrap();
            io::write_draws_bin(&pb, &b).unwrap();
            deterministic &= std::fs::read(&pa).unwrap() == std::fs::read(&pb).unwrap();
            for row in a.rows() {
                rows += 1;
                if !(row[0] >= gamma2 && row.windows(2).all(|w| w[0] <= w[1])) {
                    bad += 1;
                }
            }
        }
    }
    // a path pinned at the lower boundary
    let (series, _) = synthetic_series(&vec![gamma2; 40], gamma2, 99);
    let draws = run_gibbs(&series, &GibbsConfig::new(2000, 100, 3, gamma2)).unwrap();
    for row in draws.rows() {
        rows += 1;
        if !(row[0] >= gamma2 && row.windows(2).all(|w| w[0] <= w[1])) {
            bad += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = bad == 0 && deterministic;
    report(5, "hard invariants", pass, &format!("{rows} rows checked, {bad} violations, deterministic = {deterministic}, {secs:.1}s"));
    assert!(pass);
}

#[test]
fn criterion_6_synthetic_recovery() {
    let start = Instant::now();
    let gamma2 = 0.0025;
    let n = 100;
    let low = 2.0 * gamma2;
    let truth: Vec<f64> = (0..n).map(|i| if i < n / 2 { low } else { 10.0 * low }).collect();
    let (mut within, mut total) = (0usize, 0usize);
    let mut coverages = Vec::new();
    for rep in 0..20u64 {
        let (series, errors) = synthetic_series(&truth, gamma2, 600 + rep);
        let draws = run_gibbs(&series, &GibbsConfig::new(2500, 500, 700 + rep, gamma2)).unwrap();
        for i in 0..n {
            let m = draws.rows().map(|r| r[i]).sum::<f64>() / draws.n_draws() as f64;
            total += 1;
            if m >= truth[i] / 2.0 && m <= truth[i] * 2.0 {
                within += 1;
            }
        }
        let mut rng = substream(800 + rep, pipeline::PREDICTIVE_STREAM);
        let band = predictive_abs(&draws, series.times(), gamma2, SummaryTarget::AbsError, 0.9, &mut rng).unwrap();
        let abs_err: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
        coverages.push(coverage_check(&band, &abs_err).unwrap());
    }
    let frac = within as f64 / total as f64;
    let coverage = mean(&coverages);
    let secs = start.elapsed().as_secs_f64();
    let pass = frac >= 0.8 && (0.8..=0.98).contains(&coverage) && secs < 300.0;
    report(
        6,
        "synthetic recovery",
        pass,
        &format!(
            "factor-2 fraction {frac:.3}, mean 90% coverage {coverage:.3} (per replication {:.2}..{:.2}), {secs:.1}s",
            coverages.iter().copied().fold(f64::INFINITY, f64::min),
            coverages.iter().copied().fold(0.0, f64::max)
        ),
    );
    assert!(pass);
}

fn time_per_sweep(n: usize) -> f64 {
    let gamma2 = 0.0025;
    let truth: Vec<f64> = (0..n).map(|i| gamma2 * (1.0 + 4.0 * i as f64 / n as f64)).collect();
    let (series, _) = synthetic_series(&truth, gamma2, 900 + n as u64);
    let config = GibbsConfig::new(1, 0, 1, gamma2);
    let mut sampler = GibbsSampler::new(&series, &config, 1).unwrap();
    for _ in 0..50 {
        sampler.sweep().unwrap();
    }
    let sweeps = 200_000 / n;
    (0..5)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..sweeps {
                sampler.sweep().unwrap();
            }
            t.elapsed().as_secs_f64() / sweeps as f64
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_7_experiment_reproduction() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for (name, n_expected) in [("fn-v", 226), ("fn-r", 226), ("kepler", 151), ("fn-v-pred", 226), ("fn-r-pred", 226)] {
        let mut config = RunConfig::preset(name).unwrap();
        config.output.dir = dir.path().join(name);
        let t = Instant::now();
        pipeline::cmd_quantify(&config).unwrap();
        let sigma: Vec<f64> = io::read_dat(config.output.dir.join("sigma_mean.dat"))
            .unwrap()
            .iter()
            .map(|r| r[1])
            .collect();
        let draws = io::read_draws(config.output.dir.join("draws.bin")).unwrap();
        let monotone = sigma.windows(2).all(|w| w[0] <= w[1]);
        let grows = sigma.last().unwrap() > sigma.first().unwrap();
        let sizes = sigma.len() == n_expected && draws.n_draws() == config.gibbs.n_samples;
        let valid = draws.all_monotone(config.gamma2().unwrap());
        ok &= monotone && grows && sizes && valid;
        details.push(format!(
            "{name}: n={} draws={} sigma {:.3}->{:.3} monotone={monotone} ({:.1}s)",
            sigma.len(),
            draws.n_draws(),
            sigma[0],
            sigma.last().unwrap(),
            t.elapsed().as_secs_f64()
        ));
    }

    let ns = [50usize, 100, 200, 400];
    let times: Vec<f64> = ns.iter().map(|n| time_per_sweep(*n)).collect();
    let lx: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
    let ly: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    details.push(format!(
        "sweep times {:?} us, log-log slope {slope:.2}",
        times.iter().map(|t| (t * 1e6).round()).collect::<Vec<_>>()
    ));

    let secs = start.elapsed().as_secs_f64();
    let pass = ok && slope <= 2.3 && secs < 600.0;
    report(7, "experiment reproduction", pass, &format!("{}; {secs:.1}s", details.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_8_baseline() {
    let start = Instant::now();
    let mut rng = SimRng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        let r2: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0).collect();
        let fit = pava(&r2);
        let brute = max_min_isotonic(&r2);
        for (a, b) in fit.iter().zip(&brute) {
            worst = worst.max((a - b).abs());
        }
        let gamma2 = rng.random::<f64>();
        let times = (0..n).map(|i| i as f64).collect();
        let series = ResidualSeries::new(times, r2.iter().map(|v| v.sqrt()).collect(), gamma2).unwrap();
        let est = isotonic_mle(&series).unwrap();
        for (a, b) in est.sigma2_hat.iter().zip(&brute) {
            worst = worst.max((a - b.max(gamma2)).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-12 && secs < 10.0;
    report(8, "baseline", pass, &format!("1000 instances, max deviation {worst:.1e}, {secs:.2}s"));
    assert!(pass);
}
