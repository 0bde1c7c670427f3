//! Acceptance suite. Prints one PASS/FAIL line per criterion with its
//! measured value, tolerance and wall-clock time; exits non-zero when a
//! criterion outside `KNOWN_RED` fails.
//!
//! Runs as a plain binary (`harness = false`) so the report always appears
//! in `cargo test` output.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leon_core::certainty::{boltzmann_weights, class_optima, dual_gradient, estimate_mu, ClassStat, ClassStats};
use leon_core::critic::{CriticConfig, CriticModel, SourcePool};
use leon_core::memory::Hyperparams;
use leon_core::numerics::DenseNet;
use leon_core::optimizer::{evaluate_cohort, Cohort, LeonConfig, MethodSpec, MethodSummary, SelectionPolicy};
use leon_core::tasks::bound::shift_bound_check;
use leon_core::tasks::{Surrogate, SurrogateSpec, Task};
use leon_core::verify::forced_lambda_trace;

/// Criteria expected to fail, with the reason recorded by the maintainers.
const KNOWN_RED: &[(u32, &str)] = &[(
    9,
    "final selection maximises mu_hat * raw across steps; steps with mu_hat = 0 score every design 0, \
     which beats all negative scaled values, so the pick is the best of an arbitrary step",
)];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

fn stats(values: &[f64], critics: &[f64], q: &[f64]) -> ClassStats {
    ClassStats {
        classes: (0..values.len())
            .map(|i| ClassStat {
                class_id: i,
                q_hat: q[i],
                best_index: i,
                best_surrogate: values[i] - critics[i],
                best_critic: critics[i],
                best_value: values[i],
            })
            .collect(),
    }
}

fn pooled_sem(a: &MethodSummary, b: &MethodSummary) -> f64 {
    ((a.sem * a.sem + b.sem * b.sem) / 2.0).sqrt()
}

fn simplex_grid(steps: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(left - v, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(steps, parts, &mut Vec::new(), &mut out);
    out
}

/// Design collapse: 6 designs, 2 classes, grid step 0.05.
fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let grid = simplex_grid(20, 6);
    let mut worst = f64::INFINITY;
    let mut checked = 0usize;
    for _ in 0..50 {
        let mut cls: Vec<usize> = (0..6).map(|_| rng.random_range(0..2)).collect();
        cls[0] = 0;
        cls[5] = 1;
        let f: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (w0, src): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0));
        let h0: f64 = rng.random_range(0.05..0.69);
        for lambda in [0.0, 0.5, 2.0] {
            let st = class_optima(&f, &c, &cls, lambda).expect("class optima");
            let value = |q: &[f64]| {
                let ef: f64 = q.iter().zip(&f).map(|(a, b)| a * b).sum();
                let ec: f64 = q.iter().zip(&c).map(|(a, b)| a * b).sum();
                ef + lambda * (w0 - src + ec)
            };
            for g in &grid {
                let q: Vec<f64> = g.iter().map(|k| *k as f64 / 20.0).collect();
                let mut mass = [0.0; 2];
                for i in 0..6 {
                    mass[cls[i]] += q[i];
                }
                if entropy(&mass) > h0 {
                    continue;
                }
                let mut q_star = [0.0; 6];
                for s in &st.classes {
                    q_star[s.best_index] += mass[s.class_id];
                }
                checked += 1;
                worst = worst.min(value(&q_star) - value(&q));
            }
        }
    }
    outcome(worst >= -1e-9, format!("min L(q*) - L(q) = {worst:.3e} over {checked} feasible q (tol -1e-9)"))
}

/// Boltzmann closed form over the 3-simplex, grid step 1e-3.
fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let n = 1000usize;
    let nlogn: Vec<f64> = (0..=n).map(|i| if i == 0 { 0.0 } else { let x = i as f64 / n as f64; x * x.ln() }).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let s: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
        let mu: f64 = rng.random_range(0.3..3.0);
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for i in 0..=n {
            for j in 0..=n - i {
                let k = n - i - j;
                let v = (i as f64 * s[0] + j as f64 * s[1] + k as f64 * s[2]) / n as f64 - (nlogn[i] + nlogn[j] + nlogn[k]) / mu;
                if v > best.0 {
                    best = (v, i, j);
                }
            }
        }
        let grid_q = [best.1 as f64 / n as f64, best.2 as f64 / n as f64, (n - best.1 - best.2) as f64 / n as f64];
        let q = boltzmann_weights(&stats(&s, &[0.0; 3], &[0.0; 3]), mu);
        worst = worst.max((0..3).map(|a| (q[a] - grid_q[a]).abs()).fold(0.0, f64::max));
    }
    outcome(worst <= 5e-3, format!("max L-inf {worst:.2e} (tol 5e-3)"))
}

/// Dual gradient against a central difference of the dual function.
fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=6);
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (lambda, mu): (f64, f64) = (rng.random_range(0.0..3.0), rng.random_range(0.2..4.0));
        let (w0, src): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0));
        let h0 = 1.0;
        let g = |l: f64| {
            let z: f64 = f.iter().zip(&c).map(|(f, c)| (mu * (f + l * c)).exp()).sum();
            l * (w0 - src) + (h0 + z.ln()) / mu
        };
        let h = 1e-5;
        let fd = (g(lambda + h) - g(lambda - h)) / (2.0 * h);
        let values: Vec<f64> = f.iter().zip(&c).map(|(f, c)| f + lambda * c).collect();
        let st = stats(&values, &c, &vec![0.0; n]);
        let analytic = dual_gradient(w0, src, &st, &boltzmann_weights(&st, mu)).expect("gradient");
        worst = worst.max((analytic - fd).abs() / fd.abs().max(1.0));
    }
    outcome(worst <= 1e-5, format!("max relative error {worst:.2e} (tol 1e-5)"))
}

/// `mu` recovery from exact and sampled Boltzmann occupancies.
fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut exact: f64 = 0.0;
    let mut noisy: f64 = 0.0;
    for mu in [0.5, 2.0, 5.0] {
        let s: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = s.iter().map(|v| (mu * v).exp()).collect();
        let z: f64 = w.iter().sum();
        let q: Vec<f64> = w.iter().map(|v| v / z).collect();
        exact = exact.max((estimate_mu(&stats(&s, &[0.0; 6], &q), 1.0, 100.0) - mu).abs());

        let s: Vec<f64> = (0..4).map(|i| 2.0 / mu * i as f64 / 3.0).collect();
        let w: Vec<f64> = s.iter().map(|v| (mu * v).exp()).collect();
        let z: f64 = w.iter().sum();
        let cdf: Vec<f64> = w.iter().scan(0.0, |acc, v| { *acc += v / z; Some(*acc) }).collect();
        let mut counts = [0.0f64; 4];
        let n = 10_000;
        for _ in 0..n {
            let u: f64 = rng.random();
            counts[cdf.iter().position(|c| u < *c).unwrap_or(3)] += 1.0;
        }
        let q: Vec<f64> = counts.iter().map(|c| c / n as f64).collect();
        noisy = noisy.max((estimate_mu(&stats(&s, &[0.0; 4], &q), 1.0, 100.0) - mu).abs() / mu);
    }
    outcome(
        exact <= 1e-9 && noisy <= 0.1,
        format!("exact error {exact:.1e} (tol 1e-9), sampled relative error {noisy:.3} (tol 0.10)"),
    )
}

fn exact_w1_1d(a: &[f64], b: &[f64]) -> f64 {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Critic clip invariant, null estimate, and separated-set bound.
fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let cfg = CriticConfig::default();
    let lr = Hyperparams::default().eta_critic;
    let cloud = |rng: &mut ChaCha8Rng, n: usize, lo: f64| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..2).map(|_| lo + rng.random::<f64>()).collect()).collect()
    };
    let src = cloud(&mut rng, 300, 0.0);
    let gen = cloud(&mut rng, 32, 0.7);
    let mut critic = CriticModel::new(2, &cfg, &mut rng);
    critic.train(&SourcePool::from_encoded(src.clone()).unwrap(), &gen, lr, &cfg, 1).expect("train");
    let max_theta = critic.net.params().fold(0.0f64, |m, p| m.max(p.abs()));

    let mut null = CriticModel::new(2, &cfg, &mut rng);
    let null_est = null.train(&SourcePool::from_encoded(src.clone()).unwrap(), &src, lr, &cfg, 2).expect("train").w1_estimate;

    let a: Vec<f64> = (0..128).map(|_| rng.random_range(0.0..=0.2)).collect();
    let b: Vec<f64> = (0..128).map(|_| rng.random_range(0.8..=1.0)).collect();
    let col = |xs: &[f64]| xs.iter().map(|x| vec![*x]).collect::<Vec<_>>();
    let mut sep = CriticModel::new(1, &cfg, &mut rng);
    let sep_est = sep.train(&SourcePool::from_encoded(col(&a)).unwrap(), &col(&b), lr, &cfg, 3).expect("train").w1_estimate;
    let exact = exact_w1_1d(&a, &b);
    outcome(
        max_theta <= 0.01 && null_est.abs() <= 0.05 && sep_est > 0.0 && sep_est <= exact + 0.05,
        format!(
            "max|theta| {max_theta} (<= 0.01), identical {null_est:.2e} (|.| <= 0.05), separated {sep_est:.3e} in (0, {:.4}]",
            exact + 0.05
        ),
    )
}

/// Shift bound on random 1-D instances; the library's sides are recomputed here.
fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut violations = 0;
    let mut recompute: f64 = 0.0;
    for _ in 0..200 {
        let (a, b, c): (f64, f64, f64) = (rng.random_range(0.1..2.0), rng.random_range(0.3..3.0), rng.random_range(-1.0..1.0));
        let (d, e): (f64, f64) = (rng.random_range(0.0..0.6), rng.random_range(0.2..5.0));
        let f = move |x: f64| a * (b * x).sin() + c * x;
        let f_hat = move |x: f64| a * (b * x).sin() + c * x + d * (e * x).cos();
        let shift: f64 = rng.random_range(0.0..3.0);
        let xs: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let train: Vec<(f64, f64)> = xs.iter().map(|x| (*x, f(*x))).collect();
        let test: Vec<f64> = (0..32).map(|_| shift + rng.random_range(-1.0..1.0)).collect();
        let chk = shift_bound_check(&f, &f_hat, &train, &test, None).expect("bound");
        let lhs = test.iter().map(|x| (f(*x) - f_hat(*x)).abs()).sum::<f64>() / 32.0;
        let eps = train.iter().map(|(x, y)| (y - f_hat(*x)).abs()).sum::<f64>() / 32.0;
        let w1 = exact_w1_1d(&xs, &test);
        recompute = recompute.max((chk.lhs - lhs).abs()).max((chk.eps - eps).abs()).max((chk.w1 - w1).abs());
        if lhs > eps + (chk.k + chk.k_hat) * w1 + 1e-9 {
            violations += 1;
        }
    }
    outcome(
        violations == 0 && recompute <= 1e-12,
        format!("{violations} violations of 200, side recomputation error {recompute:.1e}"),
    )
}

/// Backprop against central differences on random small nets.
fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(1..=3);
        let hidden: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(2..=5)).collect();
        let mut net = DenseNet::random(d, &hidden, 0.8, &mut rng);
        let xs: Vec<Vec<f64>> = (0..6).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |net: &DenseNet| {
            xs.iter().zip(&ys).map(|(x, y)| (net.forward(x).unwrap() - y).powi(2)).sum::<f64>() / xs.len() as f64
        };
        let (_, grad) = net.mse_gradient(&xs, &ys).unwrap();
        for (i, g) in grad.to_param_order().into_iter().enumerate() {
            let theta = *net.param_mut(i);
            let h = (1e-5 * theta.abs()).max(1e-7);
            *net.param_mut(i) = theta + h;
            let up = loss(&net);
            *net.param_mut(i) = theta - h;
            let down = loss(&net);
            *net.param_mut(i) = theta;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-7));
        }
    }
    outcome(worst <= 1e-4, format!("max relative error {worst:.2e} (tol 1e-4)"))
}

fn cohort(methods: Vec<MethodSpec>) -> Cohort {
    Cohort { hyper: Hyperparams::default(), methods, n_patients: 20, seeds: vec![0], context_seed: 42, jobs: 1 }
}

/// Dose task under the default analytic-shift surrogate.
fn criterion_8() -> Outcome {
    let task = Task::dose();
    let s = Surrogate::new(&task, &SurrogateSpec::AnalyticShift { beta: 0.5, radius: 1.0 }, 0).unwrap();
    let methods = vec![
        MethodSpec::Leon(LeonConfig::default()),
        MethodSpec::RandomSearch,
        MethodSpec::SimulatedAnnealing,
        MethodSpec::SurrogateGreedy,
    ];
    let rep = evaluate_cohort(&task, &s, &cohort(methods)).expect("cohort");
    let leon = &rep.summaries[0];
    let mut ok = rep.failures.is_empty();
    let mut parts = vec![format!("leon {:.3} ± {:.3}", leon.mean, leon.sem)];
    for b in &rep.summaries[1..] {
        let margin = 0.5 * pooled_sem(leon, b);
        ok &= leon.mean >= b.mean - margin;
        parts.push(format!("{} {:.3} (floor {:.3})", b.method, b.mean, b.mean - margin));
    }
    outcome(ok, parts.join(", "))
}

/// No-shift parity at mixture weight 1.
fn criterion_9() -> Outcome {
    let task = Task::dose();
    let s = Surrogate::new(&task, &SurrogateSpec::default(), 0).unwrap().mix(1.0).unwrap();
    let raw = LeonConfig { label: Some("leon-raw".into()), selection: SelectionPolicy::RawValue, ..LeonConfig::default() };
    let methods = vec![MethodSpec::Leon(LeonConfig::default()), MethodSpec::SurrogateGreedy, MethodSpec::Leon(raw)];
    let rep = evaluate_cohort(&task, &s, &cohort(methods)).expect("cohort");
    let (leon, greedy, alt) = (&rep.summaries[0], &rep.summaries[1], &rep.summaries[2]);
    let floor = greedy.mean - pooled_sem(leon, greedy);
    let alt_floor = greedy.mean - pooled_sem(alt, greedy);
    outcome(
        rep.failures.is_empty() && leon.mean >= floor,
        format!(
            "leon {:.4} ± {:.4} vs floor {floor:.4} (greedy {:.4} ± {:.4}); raw-value selection {:.4} vs floor {alt_floor:.4}",
            leon.mean, leon.sem, greedy.mean, greedy.sem, alt.mean
        ),
    )
}

/// Lambda traces under forced out-of-distribution and in-distribution proposals.
fn criterion_10() -> Outcome {
    let ood = forced_lambda_trace(0.8, 1.0, 0.0, 11).expect("ood run");
    let ind = forced_lambda_trace(0.0, 0.2, 0.5, 11).expect("in-distribution run");
    let rising = ood.len() == 10 && ood.windows(2).all(|w| w[1] >= w[0]) && ood[9] > ood[0];
    let falling = ind.len() == 10 && ind.windows(2).all(|w| w[1] <= w[0]) && ind[9] < ind[0];
    outcome(
        rising && falling,
        format!(
            "ood {:.3e} -> {:.3e} rising: {rising}; in-dist {:.6} -> {:.6} falling: {falling}",
            ood[0], ood[ood.len() - 1], ind[0], ind[ind.len() - 1]
        ),
    )
}

/// Two `leon run` invocations with the same config write identical bytes.
fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let cfg = serde_json::json!({
            "task": "dose",
            "methods": [{"method": "leon"}, {"method": "random-search"}, {"method": "simulated-annealing"}],
            "n_patients": 3,
            "seeds": [0, 1],
            "hyper": {"budget": 256},
            "context_seed": 7,
            "output": out,
        });
        let path = dir.path().join(format!("{name}.json"));
        std::fs::write(&path, cfg.to_string()).unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_leon")).args(["run", "-c"]).arg(&path).output().unwrap();
        if !status.status.success() {
            return outcome(false, format!("leon run failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        outputs.push(std::fs::read(out.join("results.json")).unwrap());
    }
    outcome(outputs[0] == outputs[1], format!("results.json {} bytes, identical: {}", outputs[0].len(), outputs[0] == outputs[1]))
}

fn main() {
    let criteria: Vec<(u32, &str, Duration, fn() -> Outcome)> = vec![
        (1, "design collapse brute force", Duration::from_secs(10), criterion_1),
        (2, "boltzmann closed form", Duration::from_secs(30), criterion_2),
        (3, "dual gradient", Duration::from_secs(5), criterion_3),
        (4, "mu recovery", Duration::from_secs(5), criterion_4),
        (5, "critic contract", Duration::from_secs(30), criterion_5),
        (6, "shift bound", Duration::from_secs(20), criterion_6),
        (7, "net gradient", Duration::from_secs(5), criterion_7),
        (8, "directional claim on dose", Duration::from_secs(600), criterion_8),
        (9, "no-shift parity", Duration::from_secs(600), criterion_9),
        (10, "lambda dynamics", Duration::from_secs(60), criterion_10),
        (11, "determinism", Duration::from_secs(300), criterion_11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = Vec::new();
    for (id, name, limit, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || *f == id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let passed = out.passed && elapsed <= limit;
        println!(
            "{} {id:>2}. {name:<28} {:>8.2}s / {:>4}s  {}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            out.detail
        );
        match KNOWN_RED.iter().find(|(k, _)| *k == id) {
            Some((_, why)) if !passed => println!("      known red: {why}"),
            Some(_) => println!("      listed as known red but passed"),
            None if !passed => unexpected.push(id),
            None => {}
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
