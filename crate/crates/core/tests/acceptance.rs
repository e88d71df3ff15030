//! Acceptance gate: trend- and property-based checks of the simulator,
//! estimators, and oracles at desk scale. Every test prints one
//! `criterion NN (<name>): pass` line; tolerances are pinned here.

use graphmf::config::{
    EdgeModelSpec, InitialLaw, KernelRef, MembershipSpec, ScenarioConfig,
};
use graphmf::estimators::{
    self, drift_profile, fluctuation_field, girsanov_functionals, incomplete_u, mean_var,
    nystrom_covariance, pair_kernels, pair_values, poc_cross_covariance, test_function_lookup,
    Component, DriftProfile,
};
use graphmf::graph::{self, EdgeSystem};
use graphmf::oracles::{
    self, binomial_inverse_moment, binomial_inverse_moment_bound, binomial_inverse_moment_enumerated,
    BinomialSpec, InverseMomentValue,
};
use graphmf::particles::{simulate_coupled, PathEnsemble};
use std::sync::OnceLock;

fn scenario(n: usize, p: f64, steps: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: "acceptance".into(),
        n_vertices: n,
        dimension: 1,
        membership: MembershipSpec::Counts(vec![n]),
        drift: KernelRef {
            name: "sine_coupling".into(),
            params: vec![1.0],
        },
        diffusion: KernelRef {
            name: "identity_diffusion".into(),
            params: vec![],
        },
        edge_model: EdgeModelSpec::static_uniform(p, 1),
        horizon: 1.0,
        steps,
        replications: 1,
        seed,
        initial_law: InitialLaw::StandardNormal,
        output_dir: None,
    }
}

/// Shared reference sample: 2000 limit paths of the sine system on the
/// common 50-step grid, with the marginal drift profile built from them.
fn reference() -> &'static (ScenarioConfig, PathEnsemble, DriftProfile) {
    static CELL: OnceLock<(ScenarioConfig, PathEnsemble, DriftProfile)> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = scenario(2000, 1.0, 50, 777);
        let ens = simulate_coupled(&cfg, 0).unwrap();
        let kernel = cfg.kernels().unwrap().drift(0, 0);
        let profile = drift_profile(kernel, &ens).unwrap();
        (cfg, ens, profile)
    })
}

/// Fluctuation-field sample Var η^N(φ) at N = 512, p = 1.0, R = 2000,
/// φ the centered terminal coordinate; shared by criteria 9 and 10.
fn fluctuation_var_p1() -> (f64, usize) {
    static CELL: OnceLock<(f64, usize)> = OnceLock::new();
    *CELL.get_or_init(|| fluctuation_variance(1.0, 2001))
}

fn fluctuation_variance(p: f64, seed: u64) -> (f64, usize) {
    let (_, reference_ens, _) = reference();
    let mut phi = test_function_lookup("terminal_coordinate", &[]).unwrap();
    phi.center_on(reference_ens, Component::Limit).unwrap();
    let cfg = scenario(512, p, 50, seed);
    let r = 2000;
    let samples: Vec<f64> = (0..r as u64)
        .map(|rep| {
            let ens = simulate_coupled(&cfg, rep).unwrap();
            fluctuation_field(&ens, &phi, 1).unwrap()
        })
        .collect();
    let (_, var) = mean_var(&samples);
    (var, r)
}

#[test]
fn criterion_01_oracle_exactness() {
    let start = std::time::Instant::now();
    for n in 0..=20u64 {
        for pi in 1..=10u64 {
            let p = pi as f64 / 10.0;
            let spec = BinomialSpec::new(n, p).unwrap();
            let exact = binomial_inverse_moment(n, p).unwrap();
            let enumerated = binomial_inverse_moment_enumerated(spec, 1, 1);
            assert!(
                (exact - enumerated).abs() <= 1e-12,
                "n={n} p={p}: {exact} vs {enumerated}"
            );
            // All three upper bounds dominate exact enumerated values.
            for (shift, power) in [(2u64, 1u32), (1, 2), (1, 3)] {
                let truth = binomial_inverse_moment_enumerated(spec, shift, power);
                match binomial_inverse_moment_bound(spec, shift, power).unwrap() {
                    InverseMomentValue::UpperBound(b) => {
                        assert!(b >= truth - 1e-14, "bound ({shift},{power}) at n={n} p={p}")
                    }
                    InverseMomentValue::Exact(_) => panic!("expected a bound"),
                }
            }
        }
    }
    assert!(start.elapsed().as_secs_f64() < 1.0, "runtime budget");
    println!("criterion 01 (oracle exactness): pass");
}

#[test]
fn criterion_02_lln_rate() {
    let reps = 64u64;
    let mut entries = Vec::new();
    for &n in &[128usize, 256, 512, 1024] {
        let cfg = scenario(n, 0.5, 200, 20 + n as u64);
        let mut acc = 0.0;
        for rep in 0..reps {
            let ens = simulate_coupled(&cfg, rep).unwrap();
            acc += estimators::coupling_error(&ens).unwrap().mean_sup_sq;
        }
        entries.push((n as f64 * 0.5, acc / reps as f64));
    }
    let table = estimators::lln_rate_table(&entries).unwrap();
    assert!(table.slope <= -0.4, "slope {}", table.slope);
    // Factor-2 stability of √(Np)·error on the first-moment (RMS) scale.
    let scaled: Vec<f64> = entries
        .iter()
        .map(|&(s, e)| s.sqrt() * e.sqrt())
        .collect();
    let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().cloned().fold(0.0f64, f64::max);
    assert!(hi / lo < 2.0, "scaled spread {lo}..{hi}");
    println!(
        "criterion 02 (LLN rate): pass (slope {:.3}, scaled spread {:.3})",
        table.slope,
        hi / lo
    );
}

#[test]
fn criterion_03_decaying_probability_lln() {
    let reps = 32u64;
    let mut errors = Vec::new();
    for &n in &[256usize, 1024, 4096] {
        let p = (n as f64).powf(-0.25);
        let cfg = scenario(n, p, 200, 30 + n as u64);
        let mut acc = 0.0;
        for rep in 0..reps {
            let ens = simulate_coupled(&cfg, rep).unwrap();
            acc += estimators::coupling_error(&ens).unwrap().mean_sup_sq;
        }
        errors.push(acc / reps as f64);
    }
    assert!(
        errors[0] > errors[1] && errors[1] > errors[2],
        "errors not decreasing: {errors:?}"
    );
    println!("criterion 03 (decaying-probability LLN): pass ({errors:?})");
}

#[test]
fn criterion_04_coupling_null_exactness() {
    let mut cfg = scenario(64, 0.5, 100, 40);
    cfg.drift = KernelRef {
        name: "x_only_tanh".into(),
        params: vec![1.0],
    };
    let ens = simulate_coupled(&cfg, 0).unwrap();
    let ce = estimators::coupling_error(&ens).unwrap();
    let worst = ce
        .per_particle_sup_sq
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .sqrt();
    assert!(worst <= 1e-12, "max coupling gap {worst}");
    println!("criterion 04 (coupling-null exactness): pass (max gap {worst:.2e})");
}

#[test]
fn criterion_05_propagation_of_chaos() {
    let reps = 512u64;
    let phi = test_function_lookup("bounded_terminal", &[]).unwrap();
    let run = |n: usize, seed: u64| {
        let cfg = scenario(n, 0.5, 100, seed);
        let pairs: Vec<(f64, f64)> = (0..reps)
            .map(|rep| {
                let ens = simulate_coupled(&cfg, rep).unwrap();
                pair_values(&ens, &phi, &phi, 0, 1).unwrap()
            })
            .collect();
        poc_cross_covariance(&pairs).unwrap()
    };
    let (cov_small, _) = run(128, 50);
    let (cov_big, se_big) = run(1024, 51);
    assert!(
        cov_big.abs() < 3.0 * se_big,
        "N=1024 covariance {cov_big} exceeds 3·SE {se_big}"
    );
    assert!(
        cov_big.abs() < cov_small.abs(),
        "covariance did not shrink: {cov_big} vs {cov_small}"
    );
    println!(
        "criterion 05 (propagation of chaos): pass (|cov| {:.2e} → {:.2e}, se {:.2e})",
        cov_small.abs(),
        cov_big.abs(),
        se_big
    );
}

#[test]
fn criterion_06_markov_edge_marginal() {
    let (p0, lambda, mu, t) = (0.9, 1.0, 3.0, 1.0);
    let spec = EdgeModelSpec::Markov {
        prob0: vec![vec![p0]],
        lambda: vec![vec![lambda]],
        mu: vec![vec![mu]],
    };
    let membership = graphmf::config::build_membership(&MembershipSpec::Counts(vec![2]), 2).unwrap();
    let reps = 100_000usize;
    let mut hits = 0usize;
    for rep in 0..reps {
        let seed = graphmf::rng::mix(60, &[rep as u64]);
        let mut edges = EdgeSystem::sample(&membership, &spec, seed).unwrap();
        // The skeleton kernel is exact, so one step covers [0, t].
        edges.evolve_markov_edges(&membership, t).unwrap();
        hits += usize::from(edges.edge(0, 1));
    }
    let freq = hits as f64 / reps as f64;
    let truth = graph::marginal_edge_probability(t, p0, lambda, mu).unwrap();
    // 0.26190 is the closed form truncated to five digits.
    assert!((truth - 0.26190).abs() < 1e-5, "closed form mismatch: {truth}");
    let se = (truth * (1.0 - truth) / reps as f64).sqrt();
    assert!(
        (freq - truth).abs() <= 3.0 * se,
        "freq {freq} vs {truth} (se {se})"
    );
    println!("criterion 06 (Markov edge marginal): pass ({freq:.5} vs {truth:.5})");
}

#[test]
fn criterion_07_degree_tail() {
    let check = oracles::degree_tail_check(500, 0.5, 1.0, 1_000_000, 70).unwrap();
    assert!(
        check.passes(),
        "exceedance {} vs bound {} (se {})",
        check.empirical,
        check.bound,
        check.std_error
    );
    println!(
        "criterion 07 (degree tail): pass ({:.2e} ≤ {:.2e} + 3·{:.2e})",
        check.empirical, check.bound, check.std_error
    );
}

#[test]
fn criterion_08_trace_identities() {
    let (_, ens, profile) = reference();
    let cache = pair_kernels(ens, profile).unwrap();
    let mut sq = Vec::new();
    let mut cross = Vec::new();
    for r in 0..cache.r {
        for s in (r + 1)..cache.r {
            sq.push(cache.h[(r, s)] * cache.h[(r, s)]);
            sq.push(cache.h[(s, r)] * cache.h[(s, r)]);
            cross.push(cache.h[(r, s)] * cache.h[(s, r)]);
        }
    }
    // Pair products share paths; use the conservative effective sample
    // size R instead of R².
    let (m_sq, v_sq) = mean_var(&sq);
    let se_sq = (v_sq / cache.r as f64).sqrt();
    let target = profile.lambda_integral();
    assert!(
        (m_sq - target).abs() < 3.0 * se_sq,
        "Trace(AA*): {m_sq} vs {target} (se {se_sq})"
    );
    let (m_cross, v_cross) = mean_var(&cross);
    let se_cross = (v_cross / cache.r as f64).sqrt();
    assert!(m_cross.abs() < 3.0 * se_cross, "Trace(A²): {m_cross} (se {se_cross})");
    println!(
        "criterion 08 (trace identities): pass (AA* {m_sq:.4} vs {target:.4}, A² {m_cross:.1e})"
    );
}

#[test]
fn criterion_09_clt_variance_p_invariance() {
    let (v1, r1) = fluctuation_var_p1();
    let (v06, r06) = fluctuation_variance(0.6, 2002);
    let rel = (v1 - v06).abs() / v1.max(v06);
    assert!(rel <= 0.10, "relative difference {rel}");
    // 95% CI of a sample variance: v ± 1.96·v·√(2/(R−1)).
    let half = |v: f64, r: usize| 1.96 * v * (2.0 / (r as f64 - 1.0)).sqrt();
    let (lo1, hi1) = (v1 - half(v1, r1), v1 + half(v1, r1));
    let (lo2, hi2) = (v06 - half(v06, r06), v06 + half(v06, r06));
    assert!(lo1 <= hi2 && lo2 <= hi1, "CIs disjoint: [{lo1},{hi1}] vs [{lo2},{hi2}]");
    println!(
        "criterion 09 (CLT variance p-invariance): pass (p=1.0: {v1:.4}, p=0.6: {v06:.4}, rel {rel:.3})"
    );
}

#[test]
fn criterion_10_clt_covariance_formula() {
    let (_, ens, profile) = reference();
    let cache = pair_kernels(ens, profile).unwrap();
    let mut phi = test_function_lookup("terminal_coordinate", &[]).unwrap();
    phi.center_on(ens, Component::Limit).unwrap();
    let phi_bar: Vec<f64> = (0..ens.n)
        .map(|i| phi.eval(ens, Component::Limit, i).unwrap())
        .collect();
    let nystrom = nystrom_covariance(&cache, &phi_bar, &phi_bar).unwrap();
    let (empirical, _) = fluctuation_var_p1();
    let rel = (nystrom - empirical).abs() / empirical;
    assert!(rel <= 0.15, "Nyström {nystrom} vs empirical {empirical} (rel {rel})");
    println!(
        "criterion 10 (CLT covariance formula): pass (Nyström {nystrom:.4} vs empirical {empirical:.4}, rel {rel:.3})"
    );
}

#[test]
fn criterion_11_girsanov_reductions() {
    let (_, _, profile) = reference();
    let reps = 256u64;
    let mut d1 = Vec::new();
    let mut d2 = Vec::new();
    for &n in &[64usize, 128, 256] {
        let cfg = scenario(n, 0.5, 50, 110 + n as u64);
        let (mut acc1, mut acc2) = (0.0, 0.0);
        for rep in 0..reps {
            let ens = simulate_coupled(&cfg, rep).unwrap();
            let g = girsanov_functionals(&cfg, rep, &ens, profile).unwrap();
            acc1 += (g.j1 - g.j1_tilde) * (g.j1 - g.j1_tilde);
            acc2 += (g.j2 - g.j2_tilde).abs();
        }
        d1.push(acc1 / reps as f64);
        d2.push(acc2 / reps as f64);
    }
    assert!(d1[0] > d1[1] && d1[1] > d1[2], "|J1−J̃1|² not decreasing: {d1:?}");
    assert!(d2[0] > d2[1] && d2[1] > d2[2], "|J2−J̃2| not decreasing: {d2:?}");
    println!("criterion 11 (Girsanov reductions): pass (m1 {d1:?}, m2 {d2:?})");
}

#[test]
fn criterion_12_u_statistic_variance() {
    let (_, _, profile) = reference();
    let (n, p) = (256usize, 0.5);
    let cfg = scenario(n, p, 50, 120);
    let r = 2000u64;
    let us: Vec<f64> = (0..r)
        .map(|rep| {
            let ens = simulate_coupled(&cfg, rep).unwrap();
            incomplete_u(&cfg, rep, &ens, profile).unwrap()
        })
        .collect();
    let (_, var) = mean_var(&us);
    // σ_N² = (2/N²) Σ_{i<j} ∫(1−p)/p λ ds = ((N−1)/N)·(1−p)/p·∫λ ds.
    let sigma_sq =
        (n as f64 - 1.0) / n as f64 * (1.0 - p) / p * profile.lambda_integral();
    let se = var * (2.0 / (r as f64 - 1.0)).sqrt();
    assert!(
        (var - sigma_sq).abs() <= 3.0 * se,
        "var {var} vs σ² {sigma_sq} (se {se})"
    );
    println!("criterion 12 (U-statistic variance): pass ({var:.4} vs {sigma_sq:.4}, se {se:.4})");
}

#[test]
fn criterion_13_mwi_generating_identity() {
    fn factorial(n: usize) -> f64 {
        (1..=n).map(|v| v as f64).product()
    }
    for &(i1, h2) in &[(0.7, 0.4), (-1.2, 1.0), (0.3, 2.5), (2.0, 0.1)] {
        for &t in &[0.05f64, 0.2, 0.35, 0.5, -0.5, -0.25] {
            let mut truncated = 0.0;
            for k in 0..=6 {
                truncated +=
                    t.powi(k as i32) / factorial(k) * estimators::mwi_product(i1, h2, k).unwrap();
            }
            let exact = (t * i1 - t * t * h2 / 2.0).exp();
            // Analytic truncation remainder: the absolute tail of the
            // same series, summed far past machine precision.
            let mut remainder = 0.0;
            for k in 7..=60 {
                remainder += (t.powi(k as i32) / factorial(k)
                    * estimators::mwi_product(i1, h2, k).unwrap())
                .abs();
            }
            assert!(
                (truncated - exact).abs() <= remainder + 1e-12,
                "i1={i1} h2={h2} t={t}: {truncated} vs {exact} (rem {remainder})"
            );
        }
    }
    println!("criterion 13 (MWI generating identity): pass");
}

#[test]
fn criterion_14_determinism() {
    let bin = env!("CARGO_BIN_EXE_graphmf");
    let plan = concat!(env!("CARGO_MANIFEST_DIR"), "/../../plans/golden.json");
    let tmp = tempfile::tempdir().unwrap();
    let run = |tag: &str, threads: &str| {
        let out = tmp.path().join(tag);
        let status = std::process::Command::new(bin)
            .args(["run", "--plan", plan, "--seed", "14", "--strict"])
            .args(["--threads", threads])
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "run {tag} failed");
        out
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "4");
    let files = ["manifest.json", "plan.json", "coupling.tsv", "lln_rate.tsv", "summary.json"];
    for f in files {
        let fa = std::fs::read(a.join(f)).unwrap();
        assert_eq!(fa, std::fs::read(b.join(f)).unwrap(), "{f}: rerun differs");
        assert_eq!(fa, std::fs::read(c.join(f)).unwrap(), "{f}: thread count changes bytes");
    }
    println!("criterion 14 (determinism): pass");
}
