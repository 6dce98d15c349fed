//! Acceptance criteria. Each criterion prints one PASS/FAIL line.
//!
//! Two criteria cannot be met as stated (see `KNOWN_FAILURES`); they are still
//! evaluated with their stated thresholds and reported as FAIL. The run fails
//! if any other criterion fails, or if a known failure starts passing.

use std::time::Instant;

use asymcost::ensemble::ensemble_select;
use asymcost::experiment::{emit_report, pct_change, run_sweep, ExperimentConfig, SweepOutput};
use asymcost::loss::{eval_loss, grad_loss, CostSpec};
use asymcost::markdown::fit_markdown;
use asymcost::models::nn::objective_and_gradient;
use asymcost::models::quantile::quantile_coefficients;
use asymcost::models::{Activation, LossMode, NNConfig, NetworkWeights};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_FAILURES: [u32; 2] = [1, 6];

struct Outcome {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(id: u32, name: &'static str, passed: bool, detail: String) -> Outcome {
    let status = if passed { "PASS" } else { "FAIL" };
    println!("criterion {id} [{name}]: {status} ({detail})");
    Outcome {
        id,
        name,
        passed,
        detail,
    }
}

fn mse(y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

fn ensemble_replay() -> Outcome {
    let start = Instant::now();
    let y = [53.66, 45.36, 67.07];
    let m = [[62.90, 35.76, 66.90], [65.63, 47.91, 65.63], [61.26, 38.92, 64.50]];
    let e = ensemble_select(&m, &y, &CostSpec::squared_error(), 100).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    // independent recomputation of the panel scores
    let panel1: Vec<f64> = m.iter().map(|f| mse(&y, f)).collect();
    let panel2: Vec<f64> = m
        .iter()
        .map(|f| {
            let avg: Vec<f64> = (0..3).map(|i| 0.5 * (m[2][i] + f[i])).collect();
            mse(&y, &avg)
        })
        .collect();
    let agrees = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9);
    let internal = agrees(&e.trace[0].candidate_scores, &panel1) && agrees(&e.trace[1].candidate_scores, &panel2);

    let printed1 = [59.19, 50.62, 35.29];
    let printed2 = [45.70, 34.53, 35.29];
    let within = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 0.01);
    let p1 = within(&panel1, &printed1);
    let p2 = within(&panel2, &printed2);
    let adopt_m2 = e.members.get(..2) == Some(&[2, 1][..]);
    let w = e.weights();
    let weights = (w[2] - 2.0 / 3.0).abs() < 1e-12 && (w[1] - 1.0 / 3.0).abs() < 1e-12 && w[0] == 0.0;
    outcome(
        1,
        "Ensemble worked example",
        internal && p1 && p2 && adopt_m2 && weights && elapsed < 1.0,
        format!(
            "panel1 {:.4?} (±0.01: {p1}), panel2 {:.4?} (±0.01: {p2}), adopts M2: {adopt_m2}, \
             weights M1={:.4} M2={:.4} M3={:.4} (2/3,1/3: {weights}), {elapsed:.3}s",
            panel1, panel2, w[0], w[1], w[2]
        ),
    )
}

fn loss_identities() -> Outcome {
    let grid: Vec<f64> = (0..1000).map(|i| -3.0 + 6.0 * i as f64 / 999.0).collect();
    let qqc = CostSpec::qqc(1.0, 1.0).unwrap();
    let se = CostSpec::squared_error();
    let mut worst: f64 = 0.0;
    for &e in &grid {
        worst = worst.max((eval_loss(&qqc, e).unwrap() - eval_loss(&se, e).unwrap()).abs());
    }
    for i in 1..=10 {
        let a = i as f64 / 10.0;
        let llc = CostSpec::llc(a, 1.0).unwrap();
        let pin = CostSpec::pinball(a / (1.0 + a)).unwrap();
        for &e in &grid {
            let lhs = eval_loss(&llc, e).unwrap();
            let rhs = (1.0 + a) * eval_loss(&pin, e).unwrap();
            worst = worst.max((lhs - rhs).abs());
        }
    }
    outcome(2, "Loss identities", worst <= 1e-12, format!("max deviation {worst:.2e}"))
}

fn close(analytic: f64, numeric: f64, scale: f64) -> bool {
    (analytic - numeric).abs() <= 1e-4 * analytic.abs().max(numeric.abs()).max(scale)
}

fn smoothing_and_gradients() -> Outcome {
    // relative gap of the sigmoid approximation
    let mut gap: f64 = 0.0;
    for i in 1..=10 {
        let a = i as f64 / 10.0;
        let exact = CostSpec::qqc(a, 1.0).unwrap();
        let approx = CostSpec::qqc_approx_with_steepness(a, 1.0, 99.0).unwrap();
        for k in 0..=5000 {
            let mag = 0.1 + 9.9 * k as f64 / 5000.0;
            for e in [mag, -mag] {
                let q = eval_loss(&exact, e).unwrap();
                gap = gap.max((eval_loss(&approx, e).unwrap() - q).abs() / q);
            }
        }
    }

    // loss derivatives against central differences
    let mut loss_ok = true;
    let specs = [
        CostSpec::squared_error(),
        CostSpec::qqc(0.3, 1.0).unwrap(),
        CostSpec::lec(0.7, 1.0).unwrap(),
        CostSpec::llc(0.4, 1.0).unwrap(),
        CostSpec::pinball(0.2).unwrap(),
        CostSpec::qqc_approx(0.2, 1.0).unwrap(),
    ];
    for spec in &specs {
        for k in 0..400 {
            let e = -2.0 + 4.0 * (k as f64 + 0.5) / 400.0;
            if e.abs() < 0.01 {
                continue;
            }
            let h = 1e-6;
            let fd = (eval_loss(spec, e + h).unwrap() - eval_loss(spec, e - h).unwrap()) / (2.0 * h);
            loss_ok &= close(grad_loss(spec, e).unwrap(), fd, 1e-6);
        }
    }

    // full network objective
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = DMatrix::from_fn(40, 3, |_, _| rng.random_range(-1.0..1.0));
    let y: Vec<f64> = (0..40).map(|r| 0.5 + 0.3 * x[(r, 0)] * x[(r, 1)] + 0.1 * rng.random_range(-1.0..1.0)).collect();
    let mut nn_ok = true;
    for activation in [Activation::Logistic, Activation::Tanh] {
        for (mode, smoothing) in [
            (LossMode::Symmetric, 0.0),
            (LossMode::QqcApprox { a: 0.3, b: 1.0 }, 0.0),
            (LossMode::Pinball { tau: 0.25 }, 0.05),
        ] {
            let config = NNConfig {
                hidden_nodes: 4,
                lambda1: 1e-3,
                lambda2: 1e-3,
                activation,
                pinball_smoothing: smoothing,
                ..NNConfig::default()
            };
            let mut net = NetworkWeights::zeros(3, 4, activation);
            let flat: Vec<f64> = net.to_flat().iter().map(|_| rng.random_range(-0.8..0.8)).collect();
            net.from_flat(&flat);
            let (_, grad) = objective_and_gradient(&net, &x, &y, &config, mode).unwrap();
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            for i in 0..flat.len() {
                let h = 1e-6;
                let mut p = flat.clone();
                p[i] += h;
                net.from_flat(&p);
                let up = objective_and_gradient(&net, &x, &y, &config, mode).unwrap().0;
                p[i] -= 2.0 * h;
                net.from_flat(&p);
                let down = objective_and_gradient(&net, &x, &y, &config, mode).unwrap().0;
                nn_ok &= close(grad[i], (up - down) / (2.0 * h), 1e-3 * gmax);
            }
        }
    }
    outcome(
        3,
        "QQC approximation and gradients",
        gap < 1e-3 && loss_ok && nn_ok,
        format!("max relative gap {gap:.2e}; loss gradients ok: {loss_ok}; network gradients ok: {nn_ok}"),
    )
}

fn pinball_sum(y: &[f64], fitted: &[f64], tau: f64) -> f64 {
    y.iter()
        .zip(fitted)
        .map(|(y, f)| {
            let r = y - f;
            if r >= 0.0 {
                tau * r
            } else {
                (tau - 1.0) * r
            }
        })
        .sum()
}

fn quantile_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut intercept_ok = 0;
    for _ in 0..50 {
        let n = rng.random_range(3..30);
        let tau = rng.random_range(1..10) as f64 / 10.0;
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let fit = quantile_coefficients(&DMatrix::zeros(n, 0), &y, tau).unwrap();
        let c = fit.coefficients.beta[0];
        // the objective is piecewise linear in c with kinks at the data, so
        // its minimum is attained at a sample point
        let best = y
            .iter()
            .map(|&v| pinball_sum(&y, &vec![v; n], tau))
            .fold(f64::INFINITY, f64::min);
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if pinball_sum(&y, &vec![c; n], tau) <= best + 1e-9 && (lo..=hi).contains(&c) {
            intercept_ok += 1;
        }
    }

    let mut worst: f64 = 0.0;
    let mut perturb_ok = true;
    for _ in 0..20 {
        let n = rng.random_range(8..40);
        let tau = rng.random_range(1..10) as f64 / 10.0;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = xs.iter().map(|x| 1.0 + 0.5 * x + rng.random_range(-1.0..1.0)).collect();
        let fit = quantile_coefficients(&DMatrix::from_column_slice(n, 1, &xs), &y, tau).unwrap();
        let (b0, b1) = (fit.coefficients.beta[0], fit.coefficients.beta[1]);
        let obj = |c0: f64, c1: f64| {
            let f: Vec<f64> = xs.iter().map(|x| c0 + c1 * x).collect();
            pinball_sum(&y, &f, tau)
        };
        let ours = obj(b0, b1);
        // an optimal line interpolates two observations
        let mut exact = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                if (xs[i] - xs[j]).abs() > 1e-12 {
                    let s = (y[j] - y[i]) / (xs[j] - xs[i]);
                    exact = exact.min(obj(y[i] - s * xs[i], s));
                }
            }
        }
        worst = worst.max(ours - exact);
        for di in -20..=20 {
            for dj in -20..=20 {
                let (d0, d1) = (di as f64 * 0.0025, dj as f64 * 0.0025);
                perturb_ok &= obj(b0 + d0, b1 + d1) >= ours - 1e-6;
            }
        }
    }
    outcome(
        4,
        "Quantile regression oracle",
        intercept_ok == 50 && worst <= 1e-6 && perturb_ok,
        format!("intercept-only {intercept_ok}/50; max excess over vertex oracle {worst:.2e}; perturbation ok: {perturb_ok}"),
    )
}

fn qqc_mean(y: &[f64], f: &[f64], md: f64, a: f64) -> f64 {
    y.iter()
        .zip(f)
        .map(|(y, f)| {
            let e = y - f * (1.0 - md);
            if e > 0.0 {
                a * e * e
            } else {
                e * e
            }
        })
        .sum::<f64>()
        / y.len() as f64
}

fn markdown_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut dominance = true;
    for _ in 0..20 {
        let n = rng.random_range(5..30);
        let a = rng.random_range(0.05..1.0);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
        let f: Vec<f64> = y.iter().map(|v| v * rng.random_range(0.8..1.25)).collect();
        let md = fit_markdown(&f, &y, &CostSpec::qqc(a, 1.0).unwrap()).unwrap();
        let mut best = (0.0, f64::INFINITY);
        for k in 0..=1_000_000 {
            let m = -0.5 + k as f64 * 1e-6;
            let v = qqc_mean(&y, &f, m, a);
            if v < best.1 {
                best = (m, v);
            }
        }
        worst = worst.max((md - best.0).abs());
        dominance &= qqc_mean(&y, &f, md, a) <= qqc_mean(&y, &f, 0.0, a);
    }
    outcome(
        5,
        "Markdown oracle",
        worst <= 1e-5 && dominance,
        format!("max |md - grid md| {worst:.2e}; dominance: {dominance}"),
    )
}

fn symmetric_collapse(sweep: &SweepOutput) -> Outcome {
    let t = &sweep.table5;
    let spread = |names: [&str; 3]| {
        let v: Vec<f64> = names.iter().map(|m| t.cell(m, 1.0).unwrap_or(f64::NAN)).collect();
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let s = spread(["ES_mse_s", "ES_md_s", "ES_qqc_s"]);
    let a = spread(["ES_mse_a", "ES_md_a", "ES_qqc_a"]);
    let md: Vec<f64> = sweep
        .markdowns
        .iter()
        .filter(|(m, a, _)| m.starts_with("ES_md") && *a == 1.0)
        .map(|(_, _, md)| *md)
        .collect();
    let md_max = md.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    outcome(
        6,
        "Symmetric collapse at a = 1",
        s <= 1e-9 && a <= 1e-9 && md.len() == 2 && md_max < 1e-3,
        format!("spread _s {s:.3e}, spread _a {a:.3e}, ES_md markdowns at a=1 {md:?}"),
    )
}

fn directional(sweep: &SweepOutput, seconds: f64) -> Outcome {
    let t4 = &sweep.table4;
    let t5 = &sweep.table5;
    let grid = t4.a_grid.clone();
    let get = |t: &asymcost::ResultsTable, m: &str, a: f64| t.cell(m, a).unwrap_or(f64::NAN);

    let mut beats_ols = true;
    for &a in grid.iter().filter(|a| **a <= 0.5) {
        let ols = get(t4, "Lin. Reg.", a);
        for m in ["QR", "QRNN", "NNAC", "MBL", "MBNL", "ES_av"] {
            beats_ols &= get(t4, m, a) < ols;
        }
    }
    let count = |lhs: &str, rhs: &str| grid.iter().filter(|&&a| get(t5, lhs, a) <= get(t5, rhs, a)).count();
    let qqc_vs_mse = count("ES_qqc_a", "ES_mse_a");
    let a_vs_s = count("ES_qqc_a", "ES_qqc_s");

    let monotone = |t: &asymcost::ResultsTable, m: &str| {
        t.row(m)
            .map(|r| r.windows(2).all(|w| matches!((w[0], w[1]), (Some(x), Some(y)) if y >= x)))
            .unwrap_or(false)
    };
    let mut mono = monotone(t4, "Lin. Reg.") && monotone(t5, "ES_mse_s") && monotone(t5, "ES_mse_a");
    for r in &sweep.baselines.rows {
        mono &= monotone(&sweep.baselines, &r.method);
    }
    outcome(
        7,
        "Directional reproduction",
        beats_ols && qqc_vs_mse >= 9 && a_vs_s >= 9 && mono && seconds < 600.0,
        format!(
            "all beat OLS for a<=0.5: {beats_ols}; ES_qqc_a<=ES_mse_a {qqc_vs_mse}/10; \
             ES_qqc_a<=ES_qqc_s {a_vs_s}/10; a-independent rows monotone: {mono}; sweep {seconds:.0}s"
        ),
    )
}

fn pct_quotes() -> Outcome {
    let p1 = pct_change(Some(44.60), Some(40.98)).unwrap();
    let p2 = pct_change(Some(22.88), Some(19.68)).unwrap();
    // the text prints two decimals
    let shown = format!("{:.2}", (p1 * 100.0).trunc() / 100.0);
    outcome(
        8,
        "Percentage differences",
        shown == "8.11" && (p2 - 14.0).abs() <= 0.05,
        format!("{p1:.4}% (printed {shown}), {p2:.4}%"),
    )
}

fn determinism(first: &SweepOutput, config: &ExperimentConfig) -> Outcome {
    let second = run_sweep(config).unwrap();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    emit_report(first, d1.path()).unwrap();
    emit_report(&second, d2.path()).unwrap();
    let mut same = 0;
    let mut files = 0;
    for entry in std::fs::read_dir(d1.path()).unwrap() {
        let name = entry.unwrap().file_name();
        if !name.to_string_lossy().ends_with(".csv") {
            continue;
        }
        files += 1;
        let a = std::fs::read(d1.path().join(&name)).unwrap();
        let b = std::fs::read(d2.path().join(&name)).unwrap();
        same += usize::from(a == b);
    }
    outcome(
        9,
        "End-to-end determinism",
        files >= 6 && same == files,
        format!("{same}/{files} CSV files byte-identical"),
    )
}

fn main() {
    let config = ExperimentConfig::default();
    assert_eq!(config.data.synth.n, 10_000);

    let mut results = vec![
        ensemble_replay(),
        loss_identities(),
        smoothing_and_gradients(),
        quantile_oracle(),
        markdown_oracle(),
    ];
    let start = Instant::now();
    let sweep = run_sweep(&config).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    results.push(symmetric_collapse(&sweep));
    results.push(directional(&sweep, seconds));
    results.push(pct_quotes());
    results.push(determinism(&sweep, &config));

    let unexpected: Vec<String> = results
        .iter()
        .filter(|o| o.passed == KNOWN_FAILURES.contains(&o.id))
        .map(|o| format!("criterion {} [{}]: passed={} ({})", o.id, o.name, o.passed, o.detail))
        .collect();
    if !unexpected.is_empty() {
        eprintln!("unexpected outcomes:\n{}", unexpected.join("\n"));
        std::process::exit(1);
    }
    println!("acceptance: {} criteria evaluated, known failures {KNOWN_FAILURES:?}", results.len());
}
