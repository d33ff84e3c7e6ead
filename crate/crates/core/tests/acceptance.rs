//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs five full desk-default pipelines (about ten minutes on one core), so
//! it is a plain `harness = false` binary rather than a libtest suite.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stewardsim::cli::{cmd_run, RunBundle};
use stewardsim::config::{RuleSelection, RunConfig};
use stewardsim::forest::{permutation_importance, Dataset, ForestParams, RiskModel};
use stewardsim::metrics::{ols_robust, roc_auc};
use stewardsim::optimizer::{brute_force_oracle, optimize_ab_reduction, optimize_buti, Rule};
use stewardsim::policy::{evaluate, evaluate_machine_only, PolicyParams, PolicyRecord};
use stewardsim::rolling::{bootstrap_ci, NEVER_K};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: u32, name: &str, ok: bool, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {id}: {name}: {detail}");
        if !ok {
            self.failures += 1;
        }
    }
}

fn random_records(rng: &mut ChaCha8Rng, n: usize, levels: u32) -> Vec<PolicyRecord> {
    (0..n)
        .map(|_| {
            let m = rng.random_range(0..=levels) as f64 / levels as f64;
            let y = rng.random::<f64>() < 0.2 + 0.6 * m;
            let rho_j = rng.random::<f64>() < if y { 0.6 } else { 0.25 };
            PolicyRecord { m, rho_j, y, pregnant: rng.random::<f64>() < 0.3 }
        })
        .collect()
}

fn oracle_equivalence(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    let mut errors = 0;
    for i in 0..100 {
        // Mix coarse (tie-heavy) and fine score grids.
        let levels = if i % 2 == 0 { 12 } else { 1000 };
        let records = random_records(&mut rng, 50, levels);
        for rule in Rule::ALL {
            let fast = match rule {
                Rule::Reduction => optimize_ab_reduction(&records),
                Rule::Buti => optimize_buti(&records),
            };
            match (fast, brute_force_oracle(&records, rule)) {
                (Ok(f), Ok(o)) => {
                    if f.objective_value != o.objective_value || f.feasible != o.feasible {
                        mismatches += 1;
                    }
                }
                _ => errors += 1,
            }
        }
    }
    let elapsed = start.elapsed();
    report.check(
        1,
        "oracle equivalence",
        mismatches == 0 && errors == 0 && elapsed < Duration::from_secs(10),
        format!("{mismatches} mismatches, {errors} errors over 200 solves in {:.2}s (limit 10s)", elapsed.as_secs_f64()),
    );
}

fn identity_and_never(report: &mut Report, bundles: &[RunBundle]) {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut identity_bad = 0;
    let mut never_bad = 0;
    for i in 0..500 {
        let n = 1 + i % 80;
        let records = random_records(&mut rng, n, 20);
        let o = evaluate(&records, PolicyParams::IDENTITY).expect("identity evaluates");
        if o.delta_rho != 0 || o.delta_buti != 0 || o.changed != 0 {
            identity_bad += 1;
        }
        let never = evaluate_machine_only(&records, NEVER_K).expect("machine-only evaluates");
        let want_rho = (o.observed_rx > 0).then_some(-100.0);
        let want_buti = (o.observed_treated_buti > 0).then_some(-100.0);
        if never.pct_delta_rho != want_rho || never.pct_delta_buti != want_buti {
            never_bad += 1;
        }
    }
    let mut desk_bad = 0;
    for b in bundles {
        let point = b.report.machine_only.as_ref().and_then(|m| m.k_never.clone());
        match point {
            Some(p) if p.mean_pct_delta_rho == Some(-100.0) && p.mean_pct_delta_buti == Some(-100.0) => {}
            _ => desk_bad += 1,
        }
    }
    report.check(
        2,
        "identity and never-prescribe boundary",
        identity_bad == 0 && never_bad == 0 && desk_bad == 0,
        format!(
            "identity nonzero on {identity_bad}/500, k=1+eps off (-100,-100) on {never_bad}/500, desk curves off on {desk_bad}/{}",
            bundles.len()
        ),
    );
}

fn expost_feasibility(report: &mut Report, bundles: &[RunBundle]) {
    let (mut checked, mut bad) = (0, 0);
    for b in bundles {
        for run in &b.expost {
            for w in run.windows.iter().filter(|w| !w.skipped) {
                checked += 1;
                let ok = match run.rule {
                    Rule::Reduction => w.outcome.delta_buti >= 0,
                    Rule::Buti => w.outcome.delta_rho <= 0,
                };
                if !ok {
                    bad += 1;
                }
            }
        }
    }
    report.check(
        3,
        "ex-post constraint feasibility",
        checked > 0 && bad == 0,
        format!("{bad} violations over {checked} window reports"),
    );
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn aggregate_pct(runs: &[stewardsim::rolling::RuleRun], rule: Rule) -> f64 {
    runs.iter()
        .find(|r| r.rule == rule)
        .and_then(|r| r.aggregate.objective_pct)
        .unwrap_or(f64::NAN)
}

fn calibrated_reproduction(report: &mut Report, bundles: &[RunBundle], timings: &[Duration]) {
    let pos = mean(bundles.iter().map(|b| b.report.cohort.positive_rate));
    let auc = mean(bundles.iter().map(|b| b.report.auc.unwrap_or(f64::NAN)));
    let red_post = mean(bundles.iter().map(|b| aggregate_pct(&b.expost, Rule::Reduction)));
    let buti_post = mean(bundles.iter().map(|b| aggregate_pct(&b.expost, Rule::Buti)));
    let red_ante = mean(bundles.iter().map(|b| aggregate_pct(&b.exante, Rule::Reduction)));
    let buti_ante = mean(bundles.iter().map(|b| aggregate_pct(&b.exante, Rule::Buti)));
    let (mut covered, mut total) = (0usize, 0usize);
    for b in bundles {
        for run in &b.exante {
            for w in &run.windows {
                if let Some(c) = w.constraint_ci_covers_zero() {
                    total += 1;
                    covered += c as usize;
                }
            }
        }
    }
    let coverage = covered as f64 / total.max(1) as f64;
    let slowest = timings.iter().max().copied().unwrap_or_default();

    let in_band = |v: f64, lo: f64, hi: f64| v >= lo && v <= hi;
    let parts = [
        ("positive rate", in_band(pos, 0.30, 0.36), format!("{pos:.4} in [0.30, 0.36]")),
        ("AUC", in_band(auc, 0.70, 0.76), format!("{auc:.4} in [0.70, 0.76]")),
        ("ex-post reduction", in_band(red_post, -13.0, -6.0), format!("{red_post:+.2}% in [-13, -6]")),
        ("ex-post bUTI", in_band(buti_post, 5.0, 11.0), format!("{buti_post:+.2}% in [+5, +11]")),
        (
            "ex-ante smaller",
            red_ante.abs() < red_post.abs() && buti_ante.abs() < buti_post.abs(),
            format!("|{red_ante:+.2}| < |{red_post:+.2}|, |{buti_ante:+.2}| < |{buti_post:+.2}|"),
        ),
        ("ex-ante CI coverage", coverage >= 0.70, format!("{covered}/{total} = {coverage:.3} >= 0.70")),
        (
            "runtime",
            slowest < Duration::from_secs(15 * 60),
            format!("slowest run {:.0}s < 900s", slowest.as_secs_f64()),
        ),
    ];
    let ok = parts.iter().all(|p| p.1);
    let detail = parts
        .iter()
        .map(|(name, ok, d)| format!("{name} {d}{}", if *ok { "" } else { " (miss)" }))
        .collect::<Vec<_>>()
        .join("; ");
    report.check(4, "calibrated reproduction", ok, detail);
}

fn machine_only_failure(report: &mut Report, bundles: &[RunBundle]) {
    // Average the per-seed curves point by point.
    let mut sums: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for b in bundles {
        for p in b.curve.as_deref().unwrap_or_default() {
            if let (Some(r), Some(u)) = (p.mean_pct_delta_rho, p.mean_pct_delta_buti) {
                let e = sums.entry(p.k.to_bits()).or_insert((0.0, 0.0, 0));
                e.0 += r;
                e.1 += u;
                e.2 += 1;
            }
        }
    }
    let curve: Vec<(f64, f64, f64)> = sums
        .iter()
        .map(|(k, (r, u, n))| (f64::from_bits(*k), r / *n as f64, u / *n as f64))
        .collect();
    let dominating: Vec<f64> = curve.iter().filter(|p| p.1 < 0.0 && p.2 > 0.0).map(|p| p.0).collect();
    let zero = curve.iter().find(|p| p.0 == 0.0);
    let (ok_zero, zero_detail) = match zero {
        Some(&(_, r, u)) => (
            (180.0..=280.0).contains(&r) && (60.0..=95.0).contains(&u),
            format!("k=0 ({r:+.1}%, {u:+.1}%) in ([+180, +280], [+60, +95])"),
        ),
        None => (false, "k=0 missing".to_string()),
    };
    report.check(
        5,
        "machine-only failure",
        !curve.is_empty() && dominating.is_empty() && ok_zero,
        format!("{} dominating k over {} grid points; {zero_detail}", dominating.len(), curve.len()),
    );
}

fn exemption_robustness(report: &mut Report, bundles: &[RunBundle]) {
    let mut ok = true;
    let mut detail = Vec::new();
    for rule in Rule::ALL {
        let standard = mean(bundles.iter().map(|b| aggregate_pct(&b.exante, rule)));
        let exempt = mean(bundles.iter().map(|b| aggregate_pct(&b.exante_exempt, rule)));
        let good = standard.signum() == exempt.signum() && (standard - exempt).abs() <= 4.0;
        ok &= good;
        detail.push(format!("{}: exempt {exempt:+.2}% vs {standard:+.2}% (|diff| <= 4pp)", rule.name()));
    }
    report.check(6, "pregnancy exemption robustness", ok, detail.join("; "));
}

/// Solves `a x = b` by Gauss-Jordan elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for v in b[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for k in 0..n {
                        a[row][k] -= f * a[col][k];
                    }
                    for k in 0..b[row].len() {
                        b[row][k] -= f * b[col][k];
                    }
                }
            }
        }
    }
    b
}

/// Normal-equations OLS with HC1 errors.
fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, p) = (x.len(), x[0].len());
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![vec![0.0]; p];
    for (row, yi) in x.iter().zip(y) {
        for i in 0..p {
            xty[i][0] += row[i] * yi;
            for j in 0..p {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    let identity: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| (i == j) as u8 as f64).collect()).collect();
    let inv = gauss_solve(xtx.clone(), identity);
    let beta: Vec<f64> = gauss_solve(xtx, xty).into_iter().map(|r| r[0]).collect();
    let mut meat = vec![vec![0.0; p]; p];
    for (row, yi) in x.iter().zip(y) {
        let e = yi - row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..p {
            for j in 0..p {
                meat[i][j] += e * e * row[i] * row[j];
            }
        }
    }
    let scale = n as f64 / (n - p) as f64;
    let se = (0..p)
        .map(|j| {
            let mut v = 0.0;
            for a in 0..p {
                for b in 0..p {
                    v += inv[j][a] * meat[a][b] * inv[b][j];
                }
            }
            (scale * v).sqrt()
        })
        .collect();
    (beta, se)
}

fn numerical_metrics(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(707);

    let mut auc_bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(10..200);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(1..100) as f64 / 100.0).collect();
        let outcomes: Vec<bool> = scores.iter().map(|s| rng.random::<f64>() < *s).collect();
        let base = roc_auc(&scores, &outcomes).expect("auc").auc;
        let cube: Vec<f64> = scores.iter().map(|s| s * s * s).collect();
        let logit: Vec<f64> = scores.iter().map(|s| (s / (1.0 - s)).ln()).collect();
        if roc_auc(&cube, &outcomes).expect("auc").auc != base || roc_auc(&logit, &outcomes).expect("auc").auc != base {
            auc_bad += 1;
        }
    }

    let mut ols_err: f64 = 0.0;
    for _ in 0..20 {
        let n = 150;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r = vec![1.0];
                r.extend((0..5).map(|_| rng.random::<f64>() * 4.0 - 2.0));
                r
            })
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| 0.5 + 1.5 * r[1] - 0.7 * r[3] + (1.0 + r[2].abs()) * (rng.random::<f64>() - 0.5))
            .collect();
        let names = ["c", "x1", "x2", "x3", "x4", "x5"];
        let fit = ols_robust(&x, &y, &names).expect("ols");
        let (beta, se) = normal_equations(&x, &y);
        for j in 0..6 {
            ols_err = ols_err.max((fit.coef[j] - beta[j]).abs()).max((fit.se[j] - se[j]).abs());
        }
    }

    let rows: Vec<(Vec<f64>, f64)> = (0..600)
        .map(|_| {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            (vec![a, 3.0, b], (rng.random::<f64>() < 0.2 + 0.6 * a) as u8 as f64)
        })
        .collect();
    let data = Dataset::from_rows(&rows).expect("dataset");
    let params = ForestParams { n_trees: 30, max_depth: 6, min_leaf: 5, mtry: None, seed: 3 };
    let model = RiskModel::fit(&data, &params).expect("fit");
    let importance = permutation_importance(&model, &data, 3, 9).expect("importance");

    let mut ratios = Vec::new();
    for s in 0..10u64 {
        let mut r = ChaCha8Rng::seed_from_u64(900 + s);
        let small = random_records(&mut r, 500, 1000);
        let large = random_records(&mut r, 2000, 1000);
        let params = PolicyParams::new(0.3, 0.7).unwrap();
        let w = |recs: &[PolicyRecord]| {
            let ci = bootstrap_ci(recs, params, 400, s).expect("bootstrap");
            ci.pct_delta_rho.map(|c| c.hi - c.lo).unwrap_or(f64::NAN)
        };
        ratios.push(w(&large) / w(&small));
    }
    let ratio = mean(ratios.iter().copied());

    report.check(
        7,
        "numerical metrics",
        auc_bad == 0 && ols_err <= 1e-10 && importance[1] == 0.0 && (0.35..=0.65).contains(&ratio),
        format!(
            "AUC changed under transform on {auc_bad}/1000; max OLS coef/se gap {ols_err:.2e} (<= 1e-10); \
             constant-feature importance {}; CI width ratio 4n/n {ratio:.3} in [0.35, 0.65]",
            importance[1]
        ),
    );
}

fn desk_config(seed: u64, out: &Path) -> RunConfig {
    let mut config = RunConfig::default();
    config.seed = seed;
    config.rule = RuleSelection::Both;
    config.variants.exempt_pregnant = true;
    config.variants.machine_only = true;
    config.out = out.to_path_buf();
    config
}

fn read_bundle(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("read bundle dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let key = path.strip_prefix(dir).unwrap().display().to_string();
                files.insert(key, std::fs::read(&path).expect("read bundle file"));
            }
        }
    }
    files
}

fn run_in_pool(threads: usize, config: &RunConfig) -> (RunBundle, Duration) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    let start = Instant::now();
    let bundle = pool.install(|| cmd_run(config)).expect("desk run");
    (bundle, start.elapsed())
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    let start = Instant::now();

    oracle_equivalence(&mut report);
    numerical_metrics(&mut report);

    let tmp = tempfile::tempdir().expect("tempdir");
    let mut bundles = Vec::new();
    let mut timings = Vec::new();
    let mut first_bytes = None;
    for &seed in &SEEDS {
        let dir = tmp.path().join(format!("seed{seed}"));
        let (bundle, elapsed) = run_in_pool(1, &desk_config(seed, &dir));
        eprintln!("seed {seed}: {:.0}s", elapsed.as_secs_f64());
        if first_bytes.is_none() {
            first_bytes = Some(read_bundle(&dir));
        }
        bundles.push(bundle);
        timings.push(elapsed);
    }

    identity_and_never(&mut report, &bundles);
    expost_feasibility(&mut report, &bundles);
    calibrated_reproduction(&mut report, &bundles, &timings);
    machine_only_failure(&mut report, &bundles);
    exemption_robustness(&mut report, &bundles);

    // Same config, same output directory, four worker threads.
    let dir = tmp.path().join(format!("seed{}", SEEDS[0]));
    let first = first_bytes.expect("first bundle");
    std::fs::remove_dir_all(&dir).expect("clear bundle");
    run_in_pool(4, &desk_config(SEEDS[0], &dir));
    let second = read_bundle(&dir);
    let differing: Vec<&String> = first.keys().filter(|k| first.get(*k) != second.get(*k)).collect();
    report.check(
        8,
        "determinism",
        first.len() == second.len() && differing.is_empty() && !first.is_empty(),
        format!(
            "{} files compared between 1 and 4 threads, {} differ {:?}",
            first.len(),
            differing.len(),
            differing
        ),
    );

    println!(
        "{} of 8 criteria passed in {:.0}s",
        8 - report.failures,
        start.elapsed().as_secs_f64()
    );
    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
