//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use kpr_core::mixing::{empirical_verdict, DEFAULT_MAX_ITER};
use kpr_core::model::{resolve_round, sample_requests, Allocation};
use kpr_core::runner::{sweep, SweepParameter};
use kpr_core::theory::strategy1_recursion;
use kpr_core::{
    certify_uniform_consensus, run_replications, ClientState, ExperimentConfig,
    FlatStrategyVector, RngStream, StrategyKind, StrategyMatrix, Verdict, WeightMatrix,
};
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn c1_random_baseline() -> Outcome {
    let cfg = ExperimentConfig::homogeneous(1000, 50, StrategyKind::UniformRandom, 101)
        .with_replications(10);
    let ts = run_replications(&cfg).unwrap();
    let u = mean(&ts.utilization.mean);
    Outcome::new(within(u, 0.632, 0.015), format!("mean utilization {u:.4}, want 0.632 ± 0.015"))
}

fn c2_strategy1_convergence() -> Outcome {
    let cfg = ExperimentConfig::homogeneous(1000, 10, StrategyKind::Strategy1, 102)
        .with_replications(10);
    let ts = run_replications(&cfg).unwrap();
    let theta = *ts.stability.mean.last().unwrap();
    let u = ts.steady_state().utilization;
    Outcome::new(
        theta >= 0.99 && (0.78..=0.82).contains(&u),
        format!("stability at t=10 {theta:.4} (>= 0.99), steady utilization {u:.4} in [0.78, 0.82]"),
    )
}

fn c3_recursion_values() -> Outcome {
    let trace = strategy1_recursion(4).unwrap();
    let expected = [
        (2, 0.744, 0.842),
        (3, 0.781, 0.933),
        (4, 0.79, 0.98),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (t, f, theta) in expected {
        let step = trace.at(t).unwrap();
        let ok_f = within(step.f, f, 0.005);
        let ok_t = within(step.theta, theta, 0.005);
        pass &= ok_f && ok_t;
        parts.push(format!(
            "f{t}={:.4}{} θ{t}={:.4}{}",
            step.f,
            if ok_f { "" } else { " (off)" },
            step.theta,
            if ok_t { "" } else { " (off)" }
        ));
    }
    Outcome::new(pass, format!("{}; tolerance ±0.005", parts.join(", ")))
}

fn c4_oracle_agreement() -> Outcome {
    let cfg = ExperimentConfig::homogeneous(1000, 4, StrategyKind::Strategy1, 104)
        .with_replications(50);
    let ts = run_replications(&cfg).unwrap();
    let trace = strategy1_recursion(4).unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for t in 1..=4 {
        let sim = ts.utilization.mean[t - 1];
        let f = trace.at(t).unwrap().f;
        worst = worst.max((sim - f).abs());
        parts.push(format!("t={t} sim {sim:.4} vs f {f:.4}"));
    }
    Outcome::new(worst <= 0.02, format!("{}; max gap {worst:.4} (<= 0.02)", parts.join(", ")))
}

fn c5_polya_limits() -> Outcome {
    let base = ExperimentConfig::homogeneous(
        1000,
        10_000,
        StrategyKind::Polya { multiplier: 0.0 },
        105,
    )
    .with_replications(5);
    let ms = [0.0, 1.0, 10.0, 100.0, 1000.0];
    let table = sweep(&base, SweepParameter::Multiplier, &ms).unwrap();
    let u: Vec<f64> = table.rows.iter().map(|r| r.utilization).collect();
    let lo = within(u[0], 0.632, 0.015);
    let hi = within(u[4], 0.80, 0.02);
    let monotone = u.windows(2).all(|w| w[1] >= w[0] - 0.01);
    let shown: Vec<String> = ms
        .iter()
        .zip(&u)
        .map(|(m, u)| format!("m={m}: {u:.4}"))
        .collect();
    Outcome::new(
        lo && hi && monotone,
        format!(
            "{}; m=0 in 0.632±0.015 {lo}, m=1000 in 0.80±0.02 {hi}, nondecreasing {monotone}",
            shown.join(", ")
        ),
    )
}

fn c6_additive_and_fractional() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (seed, kind) in [
        (106, StrategyKind::Strategy2A { step: 0.01 }),
        (116, StrategyKind::Strategy2B { fraction: 0.01 }),
    ] {
        let cfg = ExperimentConfig::homogeneous(1000, 5000, kind, seed).with_replications(5);
        let u = run_replications(&cfg).unwrap().steady_state().utilization;
        pass &= u >= 0.632 + 0.05;
        parts.push(format!("{} {u:.4}", kind.name()));
    }
    Outcome::new(pass, format!("{} (each >= 0.682)", parts.join(", ")))
}

fn c7_heterogeneity() -> Outcome {
    let mut overall = Vec::new();
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, learners) in [250usize, 500, 750].into_iter().enumerate() {
        let cfg = ExperimentConfig::mixed(1000, 50, learners, StrategyKind::Strategy1, 107 + i as u64)
            .with_replications(10);
        let ss = run_replications(&cfg).unwrap().steady_state();
        pass &= ss.group_rates[0] > ss.utilization;
        overall.push(ss.utilization);
        parts.push(format!(
            "|S_s|={learners}: S_s {:.4} vs overall {:.4}",
            ss.group_rates[0], ss.utilization
        ));
    }
    // Listed by growing |S_s|, so utilization must rise as |S_r| shrinks.
    let monotone = overall.windows(2).all(|w| w[1] > w[0]);
    Outcome::new(
        pass && monotone,
        format!("{}; decreasing in |S_r| {monotone}", parts.join(", ")),
    )
}

fn random_stochastic(n: usize, rng: &mut RngStream, lazy: bool) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            for _ in 0..2 {
                row[rng.index(n)] += rng.unit() + 0.1;
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
            if lazy {
                row.iter_mut().for_each(|x| *x *= 0.5);
                row[i] += 0.5;
            }
            row
        })
        .collect()
}

fn permutation(n: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.index(i + 1));
    }
    p
}

fn perm_matrix(p: &[usize], lazy: bool) -> Vec<Vec<f64>> {
    let n = p.len();
    (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            if lazy {
                row[i] += 0.5;
                row[p[i]] += 0.5;
            } else {
                row[p[i]] = 1.0;
            }
            row
        })
        .collect()
}

/// A structured weight matrix: a client-level mixing family composed with a
/// doubly stochastic server-level family.
fn structured_matrix(case: u64) -> (String, WeightMatrix) {
    let mut rng = RngStream::new(808, case);
    let n = 2 + rng.index(19);
    let (a_name, a) = match rng.index(6) {
        0 => ("identity", perm_matrix(&(0..n).collect::<Vec<_>>(), false)),
        1 => {
            let sources: Vec<usize> = (0..n).map(|_| rng.index(n)).collect();
            let m = WeightMatrix::copy_client(n, &sources).unwrap();
            ("copy", client_rows(&m))
        }
        2 => {
            let partners = permutation(n, &mut rng);
            let m = WeightMatrix::pairwise_average(n, &partners).unwrap();
            ("pairwise", client_rows(&m))
        }
        3 => ("lazy-random", random_stochastic(n, &mut rng, true)),
        4 => ("permutation", perm_matrix(&permutation(n, &mut rng), false)),
        _ => ("uniform", vec![vec![1.0 / n as f64; n]; n]),
    };
    let (b_name, b) = match rng.index(4) {
        0 => ("identity", perm_matrix(&(0..n).collect::<Vec<_>>(), false)),
        1 => ("uniform", vec![vec![1.0 / n as f64; n]; n]),
        2 => ("permutation", perm_matrix(&permutation(n, &mut rng), false)),
        _ => ("lazy-permutation", perm_matrix(&permutation(n, &mut rng), true)),
    };
    let w = WeightMatrix::kronecker(&a, &b).unwrap();
    (format!("N={n} {a_name}⊗{b_name}"), w)
}

/// Client-level weights of a matrix built by a per-server constructor.
fn client_rows(w: &WeightMatrix) -> Vec<Vec<f64>> {
    let n = w.n();
    (0..n)
        .map(|i| (0..n).map(|k| w.get(i * n, k * n)).collect())
        .collect()
}

fn c8_certification() -> Outcome {
    let results: Vec<(String, Verdict, Verdict, f64)> = (0..50u64)
        .into_par_iter()
        .map(|case| {
            let (label, w) = structured_matrix(case);
            let claimed = certify_uniform_consensus(&w).unwrap().verdict;
            let mut rng = RngStream::new(909, case);
            let p0 = FlatStrategyVector::random(w.n(), &mut rng).unwrap();
            let (seen, out) = empirical_verdict(&w, &p0, 1e-10, DEFAULT_MAX_ITER).unwrap();
            (label, claimed, seen, out.p_final.distance_from_uniform())
        })
        .collect();
    let mut counts: HashMap<Verdict, usize> = HashMap::new();
    let mut bad = Vec::new();
    for (label, claimed, seen, dist) in &results {
        *counts.entry(*claimed).or_default() += 1;
        let uniform_ok = *claimed != Verdict::ConvergesToUniform || *dist <= 1e-8;
        if claimed != seen || !uniform_ok {
            bad.push(format!("{label}: certified {claimed}, observed {seen}, dist {dist:.2e}"));
        }
    }
    let mix = [
        Verdict::ConvergesToUniform,
        Verdict::ConvergesNotUniform,
        Verdict::DoesNotConverge,
    ]
    .iter()
    .map(|v| format!("{v} {}", counts.get(v).copied().unwrap_or(0)))
    .collect::<Vec<_>>()
    .join(", ");
    let detail = if bad.is_empty() {
        format!("50/50 verdicts agree ({mix})")
    } else {
        format!("{} disagreements: {}", bad.len(), bad.join("; "))
    };
    Outcome::new(bad.is_empty(), detail)
}

fn all_kinds() -> [StrategyKind; 5] {
    [
        StrategyKind::UniformRandom,
        StrategyKind::Strategy1,
        StrategyKind::Strategy2A { step: 0.3 },
        StrategyKind::Strategy2B { fraction: 0.4 },
        StrategyKind::Polya { multiplier: 2.0 },
    ]
}

fn simplex_preservation() -> (bool, String) {
    let chunks = 100u64;
    let per_chunk = 10_000;
    let worst = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = RngStream::new(901, c);
            let n = 2 + rng.index(9);
            let mut clients: Vec<ClientState> = all_kinds()
                .iter()
                .map(|&k| ClientState::new(k, n).unwrap())
                .collect();
            let mut worst: f64 = 0.0;
            for u in 0..per_chunk {
                let c = &mut clients[u % 5];
                // Pinned clients can only ever be told about their own server.
                let server = if c.pinned().is_some() || rng.random_bool(0.5) {
                    c.sample(&mut rng)
                } else {
                    rng.index(n)
                };
                c.update(server, rng.random_bool(0.4)).unwrap();
                let row = c.row();
                assert!(row.iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    (
        worst <= 1e-9,
        format!("10^6 updates, max |row sum - 1| {worst:.1e}"),
    )
}

fn conflict_uniformity() -> (bool, String) {
    let k = 5;
    let trials = 50_000;
    let alloc = Allocation::new(vec![0; k], 3).unwrap();
    let mut rng = RngStream::new(902, 0);
    let mut wins = vec![0u64; k];
    for _ in 0..trials {
        let out = resolve_round(&alloc, &mut rng);
        wins[out.winners[0].unwrap()] += 1;
    }
    let expected = trials as f64 / k as f64;
    let stat: f64 = wins
        .iter()
        .map(|&w| (w as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(stat);
    (p > 0.01, format!("chi-square p = {p:.3}"))
}

fn determinism() -> (bool, String) {
    let mut cfg = ExperimentConfig::mixed(200, 100, 120, StrategyKind::Strategy2B { fraction: 0.05 }, 903)
        .with_replications(4);
    cfg.shuffle_groups = true;
    let a = serde_json::to_vec(&run_replications(&cfg).unwrap()).unwrap();
    let b = serde_json::to_vec(&run_replications(&cfg).unwrap()).unwrap();
    (a == b, format!("{} bytes identical {}", a.len(), a == b))
}

/// Exact expected utilization by enumerating all `N^N` request profiles.
fn brute_force_utilization(m: &StrategyMatrix) -> f64 {
    let n = m.n();
    let mut total = 0.0;
    let mut profile = vec![0usize; n];
    loop {
        let prob: f64 = profile.iter().enumerate().map(|(i, &j)| m.row(i)[j]).product();
        if prob > 0.0 {
            total += prob * Allocation::new(profile.clone(), n).unwrap().distinct_servers() as f64;
        }
        let mut i = 0;
        while i < n {
            profile[i] += 1;
            if profile[i] < n {
                break;
            }
            profile[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
    }
    total / n as f64
}

fn brute_force_equivalence() -> (bool, String) {
    let mut rng = RngStream::new(904, 0);
    let mut pass = true;
    let mut worst_z: f64 = 0.0;
    for n in 2..=5 {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let r: Vec<f64> = (0..n).map(|_| -rng.unit().max(1e-12).ln()).collect();
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            })
            .collect();
        let m = StrategyMatrix::from_rows(rows).unwrap();
        let exact = brute_force_utilization(&m);
        // Independent route: a server stays idle iff nobody picks it.
        let product: f64 = (0..n)
            .map(|j| 1.0 - (0..n).map(|i| 1.0 - m.row(i)[j]).product::<f64>())
            .sum::<f64>()
            / n as f64;
        pass &= (exact - product).abs() < 1e-12;
        let trials = 200_000;
        let samples: Vec<f64> = (0..trials)
            .map(|_| {
                let a = sample_requests(&m, &mut rng).unwrap();
                resolve_round(&a, &mut rng).fulfilled_count() as f64 / n as f64
            })
            .collect();
        let mu = mean(&samples);
        let var = samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let z = (mu - exact).abs() / (var / trials as f64).sqrt();
        worst_z = worst_z.max(z);
        pass &= z <= 3.0;
    }
    (pass, format!("N=2..5 exact = product formula, simulated within {worst_z:.2} s.e. (<= 3)"))
}

fn c9_properties() -> Outcome {
    let parts = [
        ("simplex", simplex_preservation()),
        ("uniformity", conflict_uniformity()),
        ("determinism", determinism()),
        ("brute force", brute_force_equivalence()),
    ];
    let pass = parts.iter().all(|(_, (ok, _))| *ok);
    let detail = parts
        .iter()
        .map(|(name, (ok, d))| format!("{name} {}: {d}", if *ok { "ok" } else { "FAILED" }))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome::new(pass, detail)
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 random-choice baseline", Duration::from_secs(5), c1_random_baseline),
        ("2 strategy 1 convergence", Duration::from_secs(2), c2_strategy1_convergence),
        ("3 recursion values", Duration::from_secs(1), c3_recursion_values),
        ("4 recursion vs simulation", Duration::from_secs(10), c4_oracle_agreement),
        ("5 polya limits", Duration::from_secs(180), c5_polya_limits),
        ("6 strategy 2A/2B beat random", Duration::from_secs(120), c6_additive_and_fractional),
        ("7 heterogeneous populations", Duration::from_secs(10), c7_heterogeneity),
        ("8 mixing certification", Duration::from_secs(30), c8_certification),
        ("9 property suites", Duration::MAX, c9_properties),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = if budget == Duration::MAX {
            String::new()
        } else {
            format!(" (budget {}s{})", budget.as_secs(), if in_time { "" } else { ", exceeded" })
        };
        println!(
            "{} criterion {name}: {} [{:.2}s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
