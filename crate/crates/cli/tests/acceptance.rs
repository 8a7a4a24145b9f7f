//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test -p cascadelab-cli --test acceptance`. The process
//! exits non-zero when any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use cascadelab::analysis::{self, default_holder_window, default_tau_window};
use cascadelab::cascade::{realize, CascadeRealization};
use cascadelab::clt::{self, EnsembleSample};
use cascadelab::moments::{self, Normalization};
use cascadelab::regime::{self, Regime};
use cascadelab::{catalog, WeightSpec};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn all(parts: Vec<Outcome>) -> Outcome {
    let pass = parts.iter().all(|o| o.pass);
    let detail = parts
        .iter()
        .map(|o| format!("{}{}", if o.pass { "" } else { "FAILED " }, o.detail))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { pass, detail }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    if limit == Duration::MAX {
        out.detail.push_str(&format!(" [{elapsed:.1?}]"));
    } else if elapsed > limit {
        out.pass = false;
        out.detail.push_str(&format!("; FAILED runtime {elapsed:.2?} > {limit:?}"));
    } else {
        out.detail.push_str(&format!("; runtime {elapsed:.2?}"));
    }
    out
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() <= 1e-15
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn powers(s: &EnsembleSample, k: i32) -> Vec<f64> {
    s.values.iter().map(|x| x.powi(k)).collect()
}

fn identity() -> Outcome {
    timed(Duration::from_secs(1), || {
        let mut parts = Vec::new();
        for (b, depth) in [(2, 16), (3, 10)] {
            let real = realize(&catalog::identity(b), depth, 0).unwrap();
            let p = real.path(depth).unwrap();
            let err = p
                .values
                .iter()
                .enumerate()
                .map(|(k, z)| (z - p.time(k)).norm())
                .fold(0.0, f64::max);
            parts.push(check(err < 1e-12, format!("b={b} depth {depth}: max |F_n(t) - t| = {err:.2e}")));
        }
        all(parts)
    })
}

fn oracle() -> Outcome {
    timed(Duration::from_secs(30), || {
        let mut worst: f64 = 0.0;
        let mut failures = Vec::new();
        let mut compared = 0;
        let mut record = |name: &str, what: &str, a: f64, b: f64, failures: &mut Vec<String>| {
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
            if !rel_close(a, b, 1e-9) {
                failures.push(format!("{name} {what}: {a} vs {b}"));
            }
            if (a - b).abs() > 1e-15 {
                worst = worst.max(rel);
            }
        };
        for e in catalog::examples() {
            for n in 1..=3 {
                let bf = moments::brute_force_moments(&e.spec, 6, n).unwrap();
                let raw = moments::finite_n_raw_moments(&e.spec, 6, n).unwrap();
                for q in 1..=6 {
                    record(e.name, &format!("n={n} q={q} re"), bf.raw[q].re, raw[q].re, &mut failures);
                    record(e.name, &format!("n={n} q={q} im"), bf.raw[q].im, raw[q].im, &mut failures);
                    compared += 1;
                }
                let v = moments::second_moment_exact(&e.spec, n).unwrap();
                record(e.name, &format!("n={n} v_n"), bf.abs2, v, &mut failures);
                if let Ok(z) = moments::finite_n_moments(&e.spec, 6, n) {
                    for q in 1..=6u32 {
                        let b = moments::brute_force_moment(&e.spec, q, n, Normalization::Sigma).unwrap();
                        record(e.name, &format!("n={n} q={q} normalized"), b.re, z[q as usize], &mut failures);
                        compared += 1;
                    }
                }
            }
        }
        let mut detail = format!("{compared} moment comparisons, worst relative gap {worst:.2e}");
        for f in failures.iter().take(3) {
            detail.push_str(&format!("; FAILED {f}"));
        }
        check(failures.is_empty(), detail)
    })
}

fn scalars() -> Outcome {
    let beta = regime::solve_beta(&catalog::levy_c()).unwrap();
    let sigma = regime::sigma(&catalog::clt()).unwrap();
    let res = clt::residual_sigma(&catalog::convergent()).unwrap();
    let ext = regime::extinction_probability(&catalog::extinction());
    let m4_sign = moments::limit_moment_even(&catalog::sign(), 4).unwrap();
    let m4_clt = moments::limit_moment_even(&catalog::clt(), 4).unwrap();
    let m2hat = moments::limit_moment_convergent(&catalog::clt().beta_transform(2.0).unwrap(), 2).unwrap();
    all(vec![
        check((beta - 2.0).abs() <= 1e-9, format!("beta(levy_c) = {beta}")),
        check((sigma - 3f64.sqrt()).abs() <= 1e-12, format!("sigma(clt) = {sigma}")),
        check((res - 0.75).abs() <= 1e-12, format!("residual sigma = {res}")),
        check((ext - 0.0625).abs() <= 1e-10, format!("extinction = {ext}")),
        check((m4_sign - 3.0).abs() <= 1e-12, format!("M4(sign) = {m4_sign}")),
        check((m4_clt - 6.521739).abs() <= 1e-6, format!("M4(clt) = {m4_clt}")),
        check((m4_clt - 3.0 * m2hat).abs() <= 1e-9, format!("M4 - 3 m2hat = {:.1e}", m4_clt - 3.0 * m2hat)),
    ])
}

fn sign_clt() -> Outcome {
    timed(Duration::from_secs(120), || {
        let spec = catalog::sign();
        let n = 12;
        let z = clt::normalized_ensemble(&spec, n, 10_000, 1).unwrap();
        let reference = clt::reference_sample(&spec, n, 10_000, 1).unwrap();
        let (m2, se2) = mean_and_se(&powers(&z, 2));
        let (m4, se4) = mean_and_se(&powers(&z, 4));
        let t2 = moments::finite_n_moment(&spec, 2, n).unwrap();
        let t4 = moments::finite_n_moment(&spec, 4, n).unwrap();
        let ks = clt::ks_distance(&z, &reference);
        let (m1, se1) = mean_and_se(&z.values);
        let t1 = moments::finite_n_moment(&spec, 1, n).unwrap();
        all(vec![
            check((m1 - t1).abs() <= 3.0 * se1, format!("E Z = {m1:.4} vs exact 1/sigma_n = {t1:.4}")),
            check((m2 - t2).abs() <= 3.0 * se2, format!("E Z^2 = {m2:.4} vs {t2:.4} (SE {se2:.4})")),
            check((m4 - t4).abs() <= 3.0 * se4, format!("E Z^4 = {m4:.4} vs {t4:.4} (SE {se4:.4})")),
            check(ks <= 0.05, format!("KS vs N(0,1) = {ks:.4}")),
        ])
    })
}

fn multifractal_clt() -> Outcome {
    let spec = catalog::clt();
    let n = 14;
    let z = clt::normalized_ensemble(&spec, n, 20_000, 2).unwrap();
    let reference = clt::reference_sample(&spec, n, 20_000, 2).unwrap();
    let (m4, se4) = mean_and_se(&powers(&z, 4));
    let ks = clt::ks_distance(&z, &reference);
    all(vec![
        check(
            (m4 - 6.521739).abs() <= 0.15 * 6.521739,
            format!("E Z^4 = {m4:.3} (SE {se4:.3}) vs 6.521739"),
        ),
        check(ks <= 0.05, format!("KS vs reference = {ks:.4}")),
    ])
}

fn residual_clt() -> Outcome {
    let spec = catalog::convergent();
    let r = clt::residual_ensemble(&spec, 8, 10, 10_000, 3).unwrap();
    let (var, se) = mean_and_se(&powers(&r, 2));
    let mut parts = vec![check(
        (var - 1.0).abs() <= 0.05,
        format!("Var R_8 = {var:.4} (SE {se:.4}, tail-10 expectation {:.4})", 1.0 - 0.68f64.powi(10)),
    )];

    // Unnormalized residual variances at n = 6, 8, 10 on independent seeds.
    let tail = 6;
    let stats: Vec<(f64, f64)> = [6u32, 8, 10]
        .iter()
        .map(|&n| {
            let s = clt::residual_ensemble(&spec, n, tail, 10_000, 100 + n as u64).unwrap();
            let raw: Vec<f64> = s.values.iter().map(|x| (x * s.scale).powi(2)).collect();
            mean_and_se(&raw)
        })
        .collect();
    let target = spec.abs_moment_sum(2.0);
    for w in stats.windows(2) {
        let ((v0, s0), (v1, s1)) = (w[0], w[1]);
        // Two depth steps separate consecutive entries.
        let ratio = (v1 / v0).sqrt();
        let se = 0.5 * ratio * ((s0 / v0).powi(2) + (s1 / v1).powi(2)).sqrt();
        parts.push(check(
            (ratio - target).abs() <= 3.0 * se,
            format!("per-step ratio {ratio:.4} vs {target:.2} (SE {se:.4})"),
        ));
    }
    all(parts)
}

fn time_change() -> Outcome {
    let mut parts = Vec::new();
    let levy = catalog::levy_c();
    let real = realize(&levy, 16, 0).unwrap();
    let curve = analysis::time_change(&real, 2.0).unwrap();
    let h = analysis::holder_estimate(&curve, &real, default_holder_window(16)).unwrap();
    parts.push(check((h.slope - 0.5).abs() <= 0.05, format!("levy_c Hölder {:.4}", h.slope)));

    let ternary = catalog::ternary();
    let beta = regime::solve_beta(&ternary).unwrap();
    let real = realize(&ternary, 10, 0).unwrap();
    let curve = analysis::time_change(&real, beta).unwrap();
    let h = analysis::holder_estimate(&curve, &real, default_holder_window(10)).unwrap();
    parts.push(check(
        (h.slope - 1.0 / beta).abs() <= 0.08,
        format!("ternary Hölder {:.4} vs 1/beta {:.4}", h.slope, 1.0 / beta),
    ));

    let sign = catalog::sign();
    let path = realize(&sign, 16, 0).unwrap().path(16).unwrap();
    let w = default_tau_window(16);
    let tau = analysis::tau_estimate(&path, &[1.0, 2.0, 4.0], *w.start(), *w.end()).unwrap();
    for (q, t) in tau.q.iter().zip(&tau.tau_hat) {
        let target = q / 2.0 - 1.0;
        parts.push(check((t - target).abs() <= 0.1, format!("tau({q}) = {t:.3} vs {target}")));
    }
    all(parts)
}

fn critical() -> Outcome {
    let spec = catalog::critical();
    let bound = 19.0 / 3.0;
    let mut sup: f64 = 0.0;
    let mut terminal_gap: f64 = 0.0;
    let mut shrinking = 0;
    for seed in 0..100 {
        let real = realize(&spec, 10, seed).unwrap();
        for m in 0..=10 {
            let p = real.path(m).unwrap();
            sup = sup.max(p.sup_norm());
            terminal_gap = terminal_gap.max((p.terminal() - 1.0).norm());
        }
        if real.max_level_product(10).unwrap() < real.max_level_product(3).unwrap() {
            shrinking += 1;
        }
    }
    all(vec![
        check(sup <= bound, format!("max sup norm {sup:.4} <= 19/3")),
        check(shrinking >= 95, format!("m_10 < m_3 in {shrinking}/100 seeds")),
        check(terminal_gap <= 1e-10, format!("max |F_n(1) - 1| = {terminal_gap:.1e}")),
    ])
}

fn degeneracy() -> Outcome {
    let spec = catalog::degenerate();
    let report = regime::classify(&spec);
    let g1 = regime::g_function(&spec, 1.0);
    let mut below = 0;
    for seed in 0..100 {
        let real = realize(&spec, 16, seed).unwrap();
        if real.path(16).unwrap().sup_norm() < real.path(4).unwrap().sup_norm() {
            below += 1;
        }
    }
    all(vec![
        check(
            report.regime == Regime::Degenerate && report.p0 < 1.0 && g1 < 0.0,
            format!("regime {:?}, p0 {:.4}, g(1) {g1:.4}", report.regime, report.p0),
        ),
        check(below >= 95, format!("sup_16 < sup_4 in {below}/100 seeds")),
    ])
}

fn cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_cascadelab")).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn determinism() -> Outcome {
    let mut mismatched = Vec::new();
    let specs: Vec<(&str, WeightSpec)> = catalog::examples().into_iter().map(|e| (e.name, e.spec)).collect();
    for (name, spec) in &specs {
        let extended = CascadeRealization::realize(spec, 8, 11).unwrap().extend(12).unwrap();
        let direct = realize(spec, 12, 11).unwrap();
        if extended.q_levels() != direct.q_levels() {
            mismatched.push(*name);
        }
    }
    let invocations: [&[&str]; 4] = [
        &["classify", "--spec", "@ternary"],
        &["simulate", "--spec", "@levy_c", "--depth", "10", "--seed", "7"],
        &["moments", "--spec", "@clt", "--order", "4"],
        &["clt", "--spec", "@sign", "--depth", "8", "--count", "500", "--seed", "3"],
    ];
    let differing: Vec<&str> = invocations
        .iter()
        .filter(|args| cli(args) != cli(args))
        .map(|args| args[0])
        .collect();
    all(vec![
        check(
            mismatched.is_empty(),
            format!("extend(8 -> 12) bit-identical for {}/8 laws {mismatched:?}", 8 - mismatched.len()),
        ),
        check(
            differing.is_empty(),
            format!("{}/4 CLI invocations byte-identical {differing:?}", 4 - differing.len()),
        ),
    ])
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("identity cascade", identity),
        ("oracle equivalence", oracle),
        ("exact scalars", scalars),
        ("CLT moments, sign law", sign_clt),
        ("CLT in multifractal time", multifractal_clt),
        ("residual CLT", residual_clt),
        ("time change and monofractality", time_change),
        ("critical conservative", critical),
        ("degeneracy", degeneracy),
        ("determinism and refinement", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = timed(Duration::MAX, f);
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
