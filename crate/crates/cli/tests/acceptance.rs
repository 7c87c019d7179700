//! Acceptance criteria 1-10. Each test prints one `criterion N: PASS|FAIL`
//! line to the real stdout, so the lines show up even when output is captured.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use uvar::hdvar::{tau2a_hat_fast, tau2a_hat_naive, tau1_hat, tau2b_hat};
use uvar::io::{generate_synthetic, OutcomeFamily, SynthParams};
use uvar::rng::stream;
use uvar::sum::csum;
use uvar::{
    asymptotic_variance, compute_inclusion_probs, draw_sample, estimate_greg, exact_estimator_expectation,
    exact_h_components, fit_greg, hd_variance, ij_bm_variance, ij_direct_tau1, BmPlugin, DesignSpec, HdOptions,
    InclusionProbs, KernelContext, Method, Normalizer, Population, ReplicationResult, Sample, SampleEstimator,
    SimConfig,
};

fn report(criterion: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {criterion}: {status} | {detail}");
}

fn note(criterion: u32, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {criterion}: note | {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Small frame with a positive size measure in `[1, 2]`.
fn poisson_frame(seed: u64, n: usize) -> (Population, InclusionProbs) {
    let mut rng = stream(seed);
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..6.0)).collect();
    let p = rng.random_range(1..=2usize);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut r = vec![1.0];
            r.extend((1..p).map(|_| rng.random_range(-1.0..1.0)));
            r
        })
        .collect();
    let size: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
    let pop = Population::new(y, rows).unwrap().with_size_measure(size).unwrap();
    let probs = compute_inclusion_probs(&DesignSpec::Poisson { expected_n: 0.5 * n as f64 }, &pop).unwrap();
    (pop, probs)
}

/// Largest Poisson expected size that keeps every `pi_i <= 1`.
fn poisson_cap(pop: &Population) -> f64 {
    let z = pop.size_measure().unwrap();
    z.iter().sum::<f64>() / z.iter().copied().fold(0.0, f64::max)
}

fn f1() -> (Population, InclusionProbs, Sample) {
    let pop = Population::new(vec![2.0, 4.0, 6.0], vec![vec![1.0]; 3]).unwrap();
    let probs = InclusionProbs::independent(vec![0.5; 3]).unwrap();
    (pop, probs, Sample::new(vec![0, 2], 3).unwrap())
}

#[test]
fn criterion_01_representation_identities() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut by_design = [0usize; 5];
    for k in 0..200u64 {
        let mut rng = stream(0xC1 ^ (k << 8));
        let n = rng.random_range(8..=200usize);
        let p = rng.random_range(1..=4usize);
        let strata = rng.random_range(1..=4usize);
        let clusters = rng.random_range(2..=(n / 4).max(2));
        let params = SynthParams {
            n,
            p,
            coefficients: (0..p).map(|j| if j == 0 { 3.0 } else { rng.random_range(-1.0..1.0) }).collect(),
            noise_scale: 0.7,
            family: if k % 2 == 0 { OutcomeFamily::LinearGaussian } else { OutcomeFamily::Lognormal },
            strata,
            clusters,
            size_measure: true,
        };
        let pop = generate_synthetic(&params, k).unwrap();
        let which = (k % 5) as usize;
        let min_stratum = n / strata;
        let min_cluster = n / clusters;
        let design = match which {
            0 => DesignSpec::Bernoulli { expected_n: rng.random_range(0.1..0.6) * n as f64 },
            1 => DesignSpec::Poisson { expected_n: rng.random_range(0.2..0.9) * poisson_cap(&pop) },
            2 => DesignSpec::Srswor { n: rng.random_range(2..=n / 2) },
            3 => DesignSpec::Stratified { n_per_stratum: rng.random_range(1..=min_stratum.max(1)) },
            _ => DesignSpec::TwoStageCluster {
                n_clusters: rng.random_range(1..=clusters),
                n_units_per_cluster: rng.random_range(1..=min_cluster.max(1)),
            },
        };
        by_design[which] += 1;
        let probs = compute_inclusion_probs(&design, &pop).unwrap();
        let sample = draw_sample(&design, &pop, &probs, k).unwrap();
        let greg = estimate_greg(&pop, &sample, &probs).unwrap();
        let ctx = KernelContext::new(&pop, &probs, &sample).unwrap();
        let nf = n as f64;
        let v = csum((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| ctx.hstar(i, j))) / (nf * nf);
        let u = csum(
            (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .map(|(i, j)| ctx.h_u_realized(i, j).unwrap()),
        ) / (nf * (nf - 1.0) / 2.0);
        worst = worst.max(rel(v, greg)).max(rel(u, greg));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-10 && secs < 30.0;
    report(
        1,
        pass,
        &format!("200 frames {by_design:?} per design, max rel err {worst:.2e}, {secs:.2} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_exact_variance_identity() {
    let start = Instant::now();
    let (mut worst_id, mut worst_omega) = (0.0f64, 0.0f64);
    for k in 0..25u64 {
        let n = 4 + (k as usize % 5);
        let (pop, probs) = poisson_frame(0x200 + k, n);
        let r = exact_h_components(&pop, &probs).unwrap();
        let scale = r.variance_scale();
        worst_id = worst_id.max(r.identity_residual / scale);
        worst_omega = worst_omega.max(r.omega12.abs() / scale);
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_id <= 1e-9 && worst_omega <= 1e-12 && secs < 10.0;
    report(
        2,
        pass,
        &format!("25 Poisson frames, max identity residual {worst_id:.2e}, max |omega12| {worst_omega:.2e} of scale, {secs:.2} s"),
    );
    assert!(pass);
}

fn tau1_bias_errors(normalizer: Normalizer) -> (f64, f64) {
    let (mut worst_mean, mut worst_bias) = (0.0f64, 0.0f64);
    for k in 0..10u64 {
        let n = 5 + (k as usize % 3);
        let (pop, probs) = poisson_frame(0x300 + k, n);
        let r = exact_h_components(&pop, &probs).unwrap();
        let b = r.tau1_bias(normalizer).unwrap();
        let e_tau1 = exact_estimator_expectation(&pop, &probs, SampleEstimator::Tau1Hat(normalizer)).unwrap();
        let e_bias = exact_estimator_expectation(&pop, &probs, SampleEstimator::Tau1Bias(normalizer)).unwrap();
        worst_mean = worst_mean.max(rel(e_tau1, r.tau1 + b));
        worst_bias = worst_bias.max(rel(e_bias, b));
    }
    (worst_mean, worst_bias)
}

#[test]
fn criterion_03_tau1_bias() {
    let (mean_err, bias_err) = tau1_bias_errors(Normalizer::InverseProbability);
    let pass = mean_err <= 1e-9 && bias_err <= 1e-9;
    report(
        3,
        pass,
        &format!(
            "normalizer N - 1/pi_i: max rel err E[tau1_hat] vs tau1 + b {mean_err:.2e}, E[b_hat] vs b {bias_err:.2e}"
        ),
    );
    let (pc_mean, pc_bias) = tau1_bias_errors(Normalizer::PairCount);
    note(
        3,
        &format!("normalizer N - 1: E[tau1_hat] vs tau1 + b {pc_mean:.2e}, E[b_hat] vs b {pc_bias:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_fixture_regression() {
    let (pop, probs, s) = f1();
    let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
    let t1 = tau1_hat(&ctx).unwrap();
    let fit = fit_greg(&pop, &s, &probs).unwrap();
    let checks = [
        ("a_hat", ctx.a_hat(), 32.0 / 9.0),
        ("tau1_hat", t1.tau1_hat, 256.0 / 81.0),
        ("tau1_bias_hat", t1.bias_hat, 128.0 / 81.0),
        ("tau2a_hat", tau2a_hat_fast(&ctx).unwrap(), 4096.0 / 27.0),
        ("tau2b_hat", tau2b_hat(&ctx).unwrap(), 6400.0 / 81.0),
        ("v_asy", asymptotic_variance(&pop, &s, &probs, &fit).unwrap(), 208.0 / 81.0),
        ("tau1_bm", ij_bm_variance(&ctx, BmPlugin::HtConditional).unwrap().tau1_bm, 2560.0 / 81.0),
    ];
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-12)
        .map(|(name, got, want)| format!("{name} {got} != {want}"))
        .collect();
    let pass = bad.is_empty();
    report(4, pass, &if pass { "7 F1/S13 values exact to 1e-12".to_string() } else { bad.join("; ") });
    assert!(pass);
}

#[test]
fn criterion_05_fast_naive_and_scale() {
    let mut worst = 0.0f64;
    let (mut frames, mut k) = (0, 0u64);
    while frames < 100 {
        k += 1;
        let mut rng = stream(0x500 + k);
        let n = rng.random_range(10..=300usize);
        let p = rng.random_range(1..=3usize);
        let params = SynthParams { n, p, size_measure: true, ..Default::default() };
        let pop = generate_synthetic(&params, k).unwrap();
        let design = if k % 2 == 0 {
            DesignSpec::Bernoulli { expected_n: rng.random_range(0.05..0.5) * n as f64 }
        } else {
            DesignSpec::Poisson { expected_n: rng.random_range(0.2..0.9) * poisson_cap(&pop) }
        };
        let probs = compute_inclusion_probs(&design, &pop).unwrap();
        // The plug-in normalizer needs N > 1/pi_i.
        if probs.first_order().iter().any(|&p| n as f64 * p <= 1.0) {
            continue;
        }
        let sample = draw_sample(&design, &pop, &probs, k).unwrap();
        if sample.len() < 2 {
            continue;
        }
        frames += 1;
        let ctx = KernelContext::new(&pop, &probs, &sample).unwrap();
        let fast = tau2a_hat_fast(&ctx).unwrap();
        let naive = tau2a_hat_naive(&ctx).unwrap();
        worst = worst.max((fast - naive).abs() / naive.abs().max(1e-300));
    }

    let big_n = 40_000;
    let pop = generate_synthetic(&SynthParams { n: big_n, p: 3, ..Default::default() }, 40).unwrap();
    let probs = InclusionProbs::independent(vec![500.0 / big_n as f64; big_n]).unwrap();
    let mut rng = stream(41);
    let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, big_n, 500).into_vec();
    idx.sort_unstable();
    let sample = Sample::new(idx, big_n).unwrap();
    let start = Instant::now();
    let ctx = KernelContext::new(&pop, &probs, &sample).unwrap();
    let rep = hd_variance(&ctx, HdOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-9 && secs <= 60.0 && rep.hd_variance.is_finite();
    report(
        5,
        pass,
        &format!("100 frames max rel diff fast vs naive {worst:.2e}; N = 40000, n = 500 hd_variance in {secs:.2} s"),
    );
    assert!(pass);
}

/// Lognormal frame analysed on the log scale with Bernoulli E[n] = 50.
struct Scenario {
    result: ReplicationResult,
    summary: uvar::Summary,
}

fn scenario_population(n: usize) -> Population {
    let params = SynthParams {
        n,
        p: 2,
        coefficients: vec![10.0, 0.5],
        noise_scale: 0.8,
        family: OutcomeFamily::Lognormal,
        ..Default::default()
    };
    let pop = generate_synthetic(&params, 1).unwrap();
    let y = pop.y().iter().map(|v| v.ln()).collect();
    pop.with_outcome(y).unwrap()
}

fn scenario() -> &'static Scenario {
    static CELL: OnceLock<Scenario> = OnceLock::new();
    CELL.get_or_init(|| {
        let pop = scenario_population(2000);
        let mut cfg = SimConfig::new(DesignSpec::Bernoulli { expected_n: 50.0 }, 1000, 42);
        cfg.compare_tau2b = true;
        let result = uvar::run_replications(&pop, &cfg).unwrap();
        let summary = uvar::summarize(&result, &[0.9]).unwrap();
        Scenario { result, summary }
    })
}

#[test]
fn criterion_06_log_scale_variance_ratios() {
    let s = &scenario().summary;
    let asy = s.method(Method::Asy).unwrap().median_ratio.unwrap();
    let hd = s.method(Method::Hd).unwrap().median_ratio.unwrap();
    let ij = s.method(Method::Ij).unwrap().median_ratio.unwrap();
    let pass = asy < 0.85 && (0.7..=1.3).contains(&hd) && (hd - 1.0).abs() < (asy - 1.0).abs();
    report(
        6,
        pass,
        &format!("R_eff = {}, median ratio asy {asy:.3}, hd {hd:.3} (ij {ij:.3})", s.r_eff),
    );
    assert!(pass);
}

#[test]
fn criterion_07_coverage_ordering() {
    let s = &scenario().summary;
    let cov = |m| s.method(m).unwrap().coverage[0].1;
    let (asy, hd) = (cov(Method::Asy), cov(Method::Hd));
    let pass = hd - asy >= 0.05;
    report(7, pass, &format!("90% nominal coverage asy {asy:.3}, hd {hd:.3}, gap {:.1} points", 100.0 * (hd - asy)));
    assert!(pass);
}

fn tau2b_fraction(result: &ReplicationResult, tol: f64) -> (f64, f64) {
    let d: Vec<f64> = result
        .effective()
        .map(|r| {
            let (v, alt) = (r.v_hd.unwrap(), r.v_hd_alt.unwrap());
            (v - alt).abs() / v
        })
        .collect();
    let frac = d.iter().filter(|&&x| x <= tol).count() as f64 / d.len() as f64;
    (frac, uvar::sim::quantile(&d, 0.95))
}

#[test]
fn criterion_08_tau2b_magnitude() {
    let (frac, q95) = tau2b_fraction(&scenario().result, 1.5e-4);
    let pass = frac >= 0.95;
    report(
        8,
        pass,
        &format!("N = 2000: {:.1}% of replicates within 1.5e-4, q95 {q95:.2e}", 100.0 * frac),
    );

    let pop = scenario_population(8000);
    let mut cfg = SimConfig::new(DesignSpec::Bernoulli { expected_n: 50.0 }, 200, 42);
    cfg.methods = vec![Method::Hd];
    cfg.compare_tau2b = true;
    let big = uvar::run_replications(&pop, &cfg).unwrap();
    let (frac8, q95_8) = tau2b_fraction(&big, 1.5e-4);
    note(
        8,
        &format!("same design at N = 8000 (R = 200): {:.1}% within 1.5e-4, q95 {q95_8:.2e}", 100.0 * frac8),
    );
    assert!(pass);
}

#[test]
fn criterion_09_bm_ij_ratio() {
    let mut lines = Vec::new();
    let mut pass = true;
    for &n in &[10usize, 20, 40] {
        let (pop, probs) = poisson_frame(0x900 + n as u64, n);
        let design = DesignSpec::Poisson { expected_n: 0.5 * n as f64 };
        let expected = (n as f64 - 1.0) / n as f64;
        let (mut worst, mut cond_min, mut cond_max) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
        let mut drawn = 0;
        let mut seed = 0u64;
        while drawn < 10 {
            seed += 1;
            let s = draw_sample(&design, &pop, &probs, seed).unwrap();
            if s.len() < 2 {
                continue;
            }
            drawn += 1;
            let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
            let ij = ij_direct_tau1(&ctx).unwrap();
            let bm = ij_bm_variance(&ctx, BmPlugin::KernelAverage).unwrap().tau1_bm;
            worst = worst.max((bm / ij - expected).abs());
            let c = ij_bm_variance(&ctx, BmPlugin::HtConditional).unwrap().tau1_bm / ij;
            cond_min = cond_min.min(c);
            cond_max = cond_max.max(c);
        }
        pass &= worst <= 1e-10;
        lines.push(format!("N = {n}: max |BM/IJ - (N-1)/N| {worst:.1e}"));
        note(9, &format!("N = {n}: HT-conditional plug-in BM/IJ ranges over [{cond_min:.4}, {cond_max:.4}]"));
    }
    report(9, pass, &format!("{}; BM = (N-1)/N x IJ, so BM is the smaller", lines.join(", ")));
    assert!(pass);
}

fn simulate(dir: &Path, threads: &str) {
    let status = Command::new(env!("CARGO_BIN_EXE_uvar"))
        .args(["simulate", "--out"])
        .arg(dir)
        .args([
            "--set",
            "population.synthetic.n=300",
            "--set",
            "population.seed=7",
            "--set",
            "design.variant=bernoulli",
            "--set",
            "design.expected_n=20",
            "--set",
            "sim.replicates=40",
            "--set",
            "sim.seed=2024",
        ])
        .env("UVAR_THREADS", threads)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn criterion_10_floors_and_determinism() {
    let mut negative = 0;
    let mut runs = 0;
    for k in 0..200u64 {
        let n = 5 + (k as usize % 60);
        let (pop, probs) = poisson_frame(0xA00 + k, n);
        let design = DesignSpec::Poisson { expected_n: 0.5 * n as f64 };
        let s = draw_sample(&design, &pop, &probs, k).unwrap();
        let ctx = KernelContext::new(&pop, &probs, &s).unwrap();
        for include_tau2b in [false, true] {
            let rep = hd_variance(&ctx, HdOptions { include_tau2b, ..Default::default() }).unwrap();
            runs += 1;
            if rep.tau1_bcf < 0.0 || rep.tau2_bcf < 0.0 || rep.hd_variance < 0.0 {
                negative += 1;
            }
        }
    }
    let sim_negative = scenario().result.effective().filter(|r| r.v_hd.unwrap() < 0.0).count();

    let dir = tempfile::tempdir().unwrap();
    let files = ["replicates.csv", "summary.csv", "manifest.json"];
    simulate(dir.path(), "1");
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect();
    simulate(dir.path(), "4");
    let differing: Vec<&str> = files
        .iter()
        .zip(&first)
        .filter(|(f, bytes)| std::fs::read(dir.path().join(f)).unwrap() != **bytes)
        .map(|(f, _)| *f)
        .collect();
    let pass = negative == 0 && sim_negative == 0 && differing.is_empty();
    report(
        10,
        pass,
        &format!(
            "{runs} reports and 1000 replicates with {} negative floors; repeated simulate (1 vs 4 threads) differs in {:?}",
            negative + sim_negative,
            differing
        ),
    );
    assert!(pass);
}
