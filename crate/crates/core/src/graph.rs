//! Random edge system: static Bernoulli graphs and independently
//! evolving two-state Markov edges, evaluated on the integrator grid.
//!
//! Edge states are read only at grid times, using the exact skeleton
//! transition kernel of the two-state chain, so grid-time marginals and
//! the Markov property at grid points are exact. Storage is a bitset
//! with one row per vertex; symmetry and a set diagonal are maintained
//! by every operation. Randomness for edge (i,j) at step m comes from a
//! counter-based draw keyed by (seed, i, j, m), so results do not
//! depend on traversal order.

use crate::config::{EdgeModelSpec, MembershipMap};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq)]
enum EdgeMode {
    Static,
    Markov {
        lambda: Vec<Vec<f64>>,
        mu: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone)]
pub struct EdgeSystem {
    n: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    mode: EdgeMode,
    current_time: f64,
    step_counter: u64,
    seed: u64,
}

impl EdgeSystem {
    /// Samples the initial graph: independent Bernoulli(p_{αγ}(0)) per
    /// unordered pair, diagonal forced to 1.
    pub fn sample(membership: &MembershipMap, spec: &EdgeModelSpec, seed: u64) -> Result<Self> {
        spec.validate(membership.n_types())?;
        let n = membership.n_vertices();
        let words_per_row = n.div_ceil(64);
        let mut sys = EdgeSystem {
            n,
            words_per_row,
            bits: vec![0u64; n * words_per_row],
            mode: match spec {
                EdgeModelSpec::Static { .. } => EdgeMode::Static,
                EdgeModelSpec::Markov { lambda, mu, .. } => EdgeMode::Markov {
                    lambda: lambda.clone(),
                    mu: mu.clone(),
                },
            },
            current_time: 0.0,
            step_counter: 0,
            seed,
        };
        for i in 0..n {
            sys.set_edge(i, i, true);
        }
        let prob0 = spec.prob0();
        for i in 0..n {
            let alpha = membership.type_of(i);
            for j in (i + 1)..n {
                let p = prob0[alpha][membership.type_of(j)];
                let on = rng::uniform_at(seed, &[tag::EDGE_INIT, i as u64, j as u64]) < p;
                sys.set_edge(i, j, on);
            }
        }
        Ok(sys)
    }

    /// Convenience: static graph with the given probability matrix.
    pub fn sample_static_graph(
        membership: &MembershipMap,
        prob0: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        Self::sample(membership, &EdgeModelSpec::Static { prob0 }, seed)
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn current_time(&self) -> f64 {
        self.current_time
    }

    pub fn is_markov(&self) -> bool {
        matches!(self.mode, EdgeMode::Markov { .. })
    }

    #[inline]
    fn set_edge(&mut self, i: usize, j: usize, on: bool) {
        let idx_ij = i * self.words_per_row + j / 64;
        let idx_ji = j * self.words_per_row + i / 64;
        if on {
            self.bits[idx_ij] |= 1u64 << (j % 64);
            self.bits[idx_ji] |= 1u64 << (i % 64);
        } else {
            self.bits[idx_ij] &= !(1u64 << (j % 64));
            self.bits[idx_ji] &= !(1u64 << (i % 64));
        }
    }

    #[inline]
    pub fn edge(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words_per_row + j / 64] >> (j % 64) & 1 == 1
    }

    /// Bitset row for vertex i.
    #[inline]
    pub fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    /// Number of neighbors of `i` (self-loop included for its own type)
    /// within the vertex index range `lo..hi`.
    pub fn degree_in_range(&self, i: usize, lo: usize, hi: usize) -> usize {
        let row = self.row(i);
        let mut count = 0usize;
        let (wlo, whi) = (lo / 64, (hi + 63) / 64);
        for w in wlo..whi.min(self.words_per_row) {
            let mut word = row[w];
            if w == wlo {
                word &= !0u64 << (lo % 64);
            }
            let end = (w + 1) * 64;
            if end > hi {
                word &= (!0u64) >> (end - hi);
            }
            count += word.count_ones() as usize;
        }
        count
    }

    /// Calls `f(j)` for every neighbor j of i within `lo..hi`.
    #[inline]
    pub fn for_each_neighbor_in_range(&self, i: usize, lo: usize, hi: usize, mut f: impl FnMut(usize)) {
        let row = self.row(i);
        let (wlo, whi) = (lo / 64, (hi + 63) / 64);
        for w in wlo..whi.min(self.words_per_row) {
            let mut word = row[w];
            if w == wlo {
                word &= !0u64 << (lo % 64);
            }
            let end = (w + 1) * 64;
            if end > hi {
                word &= (!0u64) >> (end - hi);
            }
            while word != 0 {
                let b = word.trailing_zeros() as usize;
                f(w * 64 + b);
                word &= word - 1;
            }
        }
    }

    /// Advances every off-diagonal edge by Δ with the exact two-state
    /// transition kernel: with π = λ/(λ+μ) and e = exp(−(λ+μ)Δ),
    /// P(0→1) = π(1−e) and P(1→1) = π + (1−π)e.
    pub fn evolve_markov_edges(&mut self, membership: &MembershipMap, dt: f64) -> Result<()> {
        let (lambda, mu) = match &self.mode {
            EdgeMode::Static => {
                return Err(Error::ModeMismatch(
                    "evolve_markov_edges called on a static edge system".into(),
                ))
            }
            EdgeMode::Markov { lambda, mu } => (lambda.clone(), mu.clone()),
        };
        if !(dt > 0.0) {
            return Err(Error::Config("evolution step must be positive".into()));
        }
        let step = self.step_counter;
        let k = membership.n_types();
        for alpha in 0..k {
            for gamma in alpha..k {
                let lam = lambda[alpha][gamma];
                let m = mu[alpha][gamma];
                let pi = lam / (lam + m);
                let e = (-(lam + m) * dt).exp();
                let p_from_0 = pi * (1.0 - e);
                let p_from_1 = pi + (1.0 - pi) * e;
                let ablock = membership.block(alpha);
                let gblock = membership.block(gamma);
                for i in ablock.clone() {
                    let j_start = if alpha == gamma { i + 1 } else { gblock.start };
                    for j in j_start.max(gblock.start)..gblock.end {
                        let p = if self.edge(i, j) { p_from_1 } else { p_from_0 };
                        let u = rng::uniform_at(
                            self.seed,
                            &[tag::EDGE_STEP, step, i as u64, j as u64],
                        );
                        self.set_edge(i, j, u < p);
                    }
                }
            }
        }
        self.step_counter += 1;
        self.current_time += dt;
        Ok(())
    }

    /// FNV-1a over the packed state; used to assert static graphs never
    /// change and strict-mode reproducibility.
    pub fn state_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for &w in &self.bits {
            for b in w.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        }
        h
    }

    /// Run-length encoding of the upper-triangle edge indicators in
    /// row-major order, as "count:value" pairs. Debug output only.
    pub fn rle_snapshot(&self) -> String {
        let mut out = String::new();
        let mut run_val = None::<bool>;
        let mut run_len = 0usize;
        let flush = |out: &mut String, val: bool, len: usize| {
            if len > 0 {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(&format!("{}:{}", len, u8::from(val)));
            }
        };
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let v = self.edge(i, j);
                match run_val {
                    Some(rv) if rv == v => run_len += 1,
                    Some(rv) => {
                        flush(&mut out, rv, run_len);
                        run_val = Some(v);
                        run_len = 1;
                    }
                    None => {
                        run_val = Some(v);
                        run_len = 1;
                    }
                }
            }
        }
        if let Some(rv) = run_val {
            flush(&mut out, rv, run_len);
        }
        out
    }
}

/// Per-(vertex, type) neighbor counts at a grid time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeCounts {
    counts: Vec<usize>,
    n_types: usize,
}

impl DegreeCounts {
    pub fn get(&self, vertex: usize, type_idx: usize) -> usize {
        self.counts[vertex * self.n_types + type_idx]
    }
}

/// N_{i,γ} = Σ_{j∈𝒩_γ} ξ_ij, self-loop included when γ is i's type.
pub fn degree_counts(edges: &EdgeSystem, membership: &MembershipMap) -> DegreeCounts {
    let n = membership.n_vertices();
    let k = membership.n_types();
    let mut counts = vec![0usize; n * k];
    for i in 0..n {
        for gamma in 0..k {
            let b = membership.block(gamma);
            counts[i * k + gamma] = edges.degree_in_range(i, b.start, b.end);
        }
    }
    DegreeCounts { counts, n_types: k }
}

/// Closed-form marginal of the two-state chain:
/// p(t) = p0·e^{−(λ+μ)t} + (λ/(λ+μ))·(1 − e^{−(λ+μ)t}).
pub fn marginal_edge_probability(t: f64, p0: f64, lambda: f64, mu: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Config("time must be non-negative".into()));
    }
    if lambda <= 0.0 || mu <= 0.0 {
        return Err(Error::Config("rates must be positive".into()));
    }
    let e = (-(lambda + mu) * t).exp();
    Ok(p0 * e + lambda / (lambda + mu) * (1.0 - e))
}

/// p̄ = inf over time and type pairs of the edge probability. For the
/// static model this is the minimum initial probability; for the Markov
/// model the marginal is monotone in t, so the infimum over [0,T] is
/// attained at 0 or T.
pub fn pbar(spec: &EdgeModelSpec, horizon: f64) -> Result<f64> {
    let mut result = f64::INFINITY;
    match spec {
        EdgeModelSpec::Static { prob0 } => {
            for row in prob0 {
                for &p in row {
                    result = result.min(p);
                }
            }
        }
        EdgeModelSpec::Markov { prob0, lambda, mu } => {
            for (a, row) in prob0.iter().enumerate() {
                for (g, &p0) in row.iter().enumerate() {
                    let pt = marginal_edge_probability(horizon, p0, lambda[a][g], mu[a][g])?;
                    result = result.min(p0.min(pt));
                }
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{build_membership, MembershipSpec};

    fn single_type(n: usize) -> MembershipMap {
        build_membership(&MembershipSpec::Counts(vec![n]), n).unwrap()
    }

    #[test]
    fn complete_graph_degrees() {
        let m = build_membership(&MembershipSpec::Counts(vec![3, 4]), 7).unwrap();
        let e = EdgeSystem::sample_static_graph(&m, vec![vec![1.0; 2]; 2], 1).unwrap();
        let d = degree_counts(&e, &m);
        for i in 0..7 {
            assert_eq!(d.get(i, 0), 3);
            assert_eq!(d.get(i, 1), 4);
        }
    }

    #[test]
    fn empty_graph_self_loops_only() {
        let m = build_membership(&MembershipSpec::Counts(vec![3, 4]), 7).unwrap();
        let e = EdgeSystem::sample_static_graph(&m, vec![vec![0.0; 2]; 2], 1).unwrap();
        let d = degree_counts(&e, &m);
        for i in 0..7 {
            let own = m.type_of(i);
            for g in 0..2 {
                assert_eq!(d.get(i, g), usize::from(g == own));
            }
        }
    }

    #[test]
    fn symmetry_and_diagonal_after_sampling() {
        let m = single_type(50);
        let e = EdgeSystem::sample_static_graph(&m, vec![vec![0.4]], 9).unwrap();
        for i in 0..50 {
            assert!(e.edge(i, i));
            for j in 0..50 {
                assert_eq!(e.edge(i, j), e.edge(j, i));
            }
        }
    }

    #[test]
    fn bernoulli_edge_frequency_within_3se() {
        let n = 2000;
        let p = 0.3;
        let m = single_type(n);
        let e = EdgeSystem::sample_static_graph(&m, vec![vec![p]], 5).unwrap();
        let mut on = 0usize;
        let pairs = n * (n - 1) / 2;
        for i in 0..n {
            for j in (i + 1)..n {
                on += usize::from(e.edge(i, j));
            }
        }
        let freq = on as f64 / pairs as f64;
        let se = (p * (1.0 - p) / pairs as f64).sqrt();
        assert!((freq - p).abs() < 3.0 * se, "freq {freq}");
    }

    #[test]
    fn degree_mean_matches_binomial() {
        let n = 2000;
        let p = 0.25;
        let m = single_type(n);
        let e = EdgeSystem::sample_static_graph(&m, vec![vec![p]], 13).unwrap();
        let d = degree_counts(&e, &m);
        let mean: f64 = (0..n).map(|i| (d.get(i, 0) - 1) as f64).sum::<f64>() / n as f64;
        let target = (n - 1) as f64 * p;
        // conservative: degrees are positively dependent through shared edges
        let se = ((n - 1) as f64 * p * (1.0 - p)).sqrt();
        assert!((mean - target).abs() < 3.0 * se, "mean {mean} target {target}");
    }

    #[test]
    fn static_mode_cannot_evolve_and_never_changes() {
        let m = single_type(20);
        let mut e = EdgeSystem::sample_static_graph(&m, vec![vec![0.5]], 3).unwrap();
        let h = e.state_hash();
        assert!(matches!(
            e.evolve_markov_edges(&m, 0.1),
            Err(Error::ModeMismatch(_))
        ));
        assert_eq!(e.state_hash(), h);
    }

    fn markov_spec(p0: f64, lam: f64, mu: f64) -> EdgeModelSpec {
        EdgeModelSpec::Markov {
            prob0: vec![vec![p0]],
            lambda: vec![vec![lam]],
            mu: vec![vec![mu]],
        }
    }

    #[test]
    fn absorbing_off_state() {
        // λ≈0: an off edge must stay off (exactly, since P(0→1)→0).
        let m = single_type(10);
        let mut e = EdgeSystem::sample(&m, &markov_spec(0.0, 1e-12, 1.0), 2).unwrap();
        for _ in 0..5 {
            e.evolve_markov_edges(&m, 0.3).unwrap();
        }
        for i in 0..10 {
            for j in (i + 1)..10 {
                assert!(!e.edge(i, j));
            }
        }
    }

    #[test]
    fn marginal_formula_values() {
        assert_eq!(marginal_edge_probability(0.0, 0.7, 1.0, 3.0).unwrap(), 0.7);
        // stationary start is constant
        let p = 1.0 / (1.0 + 3.0);
        for t in [0.1, 0.5, 2.0] {
            let v = marginal_edge_probability(t, p, 1.0, 3.0).unwrap();
            assert!((v - p).abs() < 1e-15);
        }
        // p0=0.9, λ=1, μ=3, t=1 → 0.25 + 0.65 e^{−4}
        let v = marginal_edge_probability(1.0, 0.9, 1.0, 3.0).unwrap();
        let expect = 0.25 + 0.65 * (-4.0f64).exp();
        assert!((v - expect).abs() < 1e-15);
        assert!((v - 0.26190).abs() < 1e-4);
    }

    #[test]
    fn pbar_static_and_markov() {
        let s = EdgeModelSpec::static_uniform(0.3, 1);
        assert_eq!(pbar(&s, 1.0).unwrap(), 0.3);
        // stationary start
        assert!((pbar(&markov_spec(0.5, 1.0, 1.0), 1.0).unwrap() - 0.5).abs() < 1e-15);
        let v = pbar(&markov_spec(0.9, 1.0, 3.0), 1.0).unwrap();
        let expect = 0.25 + 0.65 * (-4.0f64).exp();
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn evolution_closed_form_one_step() {
        // λ=μ=1, start all-off, Δ with e^{-2Δ}=1/2 ⇒ P(on)=0.25.
        let n = 600;
        let m = single_type(n);
        let dt = 0.5f64.ln() / -2.0;
        let mut e = EdgeSystem::sample(&m, &markov_spec(0.0, 1.0, 1.0), 11).unwrap();
        e.evolve_markov_edges(&m, dt).unwrap();
        let pairs = (n * (n - 1) / 2) as f64;
        let mut on = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                on += usize::from(e.edge(i, j));
            }
        }
        let freq = on as f64 / pairs;
        let se = (0.25 * 0.75 / pairs).sqrt();
        assert!((freq - 0.25).abs() < 3.0 * se, "freq {freq}");
    }

    #[test]
    fn stationary_marginal_preserved() {
        let n = 500;
        let m = single_type(n);
        let pi = 0.4;
        let mut e = EdgeSystem::sample(&m, &markov_spec(pi, 2.0, 3.0), 21).unwrap();
        let pairs = (n * (n - 1) / 2) as f64;
        for _ in 0..4 {
            e.evolve_markov_edges(&m, 0.25).unwrap();
            let mut on = 0usize;
            for i in 0..n {
                for j in (i + 1)..n {
                    on += usize::from(e.edge(i, j));
                }
            }
            let freq = on as f64 / pairs;
            let se = (pi * (1.0 - pi) / pairs).sqrt();
            assert!((freq - pi).abs() < 3.0 * se, "freq {freq}");
        }
    }

    #[test]
    fn chapman_kolmogorov_on_one_edge() {
        // One evolve over Δ1+Δ2 vs two evolves over Δ1 then Δ2: same
        // single-edge marginal, Monte Carlo over replications.
        let m = single_type(2);
        let (d1, d2) = (0.3, 0.45);
        let reps = 40_000;
        let mut on_two = 0usize;
        let mut on_one = 0usize;
        for r in 0..reps {
            let spec = markov_spec(0.2, 1.3, 0.7);
            let mut a = EdgeSystem::sample(&m, &spec, r as u64).unwrap();
            a.evolve_markov_edges(&m, d1).unwrap();
            a.evolve_markov_edges(&m, d2).unwrap();
            on_two += usize::from(a.edge(0, 1));
            let mut b = EdgeSystem::sample(&m, &spec, (r + reps) as u64).unwrap();
            b.evolve_markov_edges(&m, d1 + d2).unwrap();
            on_one += usize::from(b.edge(0, 1));
        }
        let f_two = on_two as f64 / reps as f64;
        let f_one = on_one as f64 / reps as f64;
        let se = (2.0 * 0.25 / reps as f64).sqrt();
        assert!((f_two - f_one).abs() < 3.0 * se, "{f_two} vs {f_one}");
        // Also check against the closed-form marginal.
        let expect = marginal_edge_probability(d1 + d2, 0.2, 1.3, 0.7).unwrap();
        assert!((f_one - expect).abs() < 3.0 * se);
    }

    #[test]
    fn distinct_edges_uncorrelated() {
        let n = 3;
        let m = single_type(n);
        let reps = 20_000;
        let (mut s01, mut s02, mut s0102) = (0.0, 0.0, 0.0);
        for r in 0..reps {
            let e = EdgeSystem::sample_static_graph(&m, vec![vec![0.5]], r as u64).unwrap();
            let a = f64::from(e.edge(0, 1));
            let b = f64::from(e.edge(0, 2));
            s01 += a;
            s02 += b;
            s0102 += a * b;
        }
        let nrep = reps as f64;
        let cov = s0102 / nrep - (s01 / nrep) * (s02 / nrep);
        assert!(cov.abs() < 3.0 * 0.25 / nrep.sqrt(), "cov {cov}");
    }

    #[test]
    fn markov_symmetry_and_diagonal_preserved() {
        let m = build_membership(&MembershipSpec::Counts(vec![8, 9]), 17).unwrap();
        let spec = EdgeModelSpec::Markov {
            prob0: vec![vec![0.5, 0.2], vec![0.2, 0.8]],
            lambda: vec![vec![1.0, 2.0], vec![2.0, 0.5]],
            mu: vec![vec![1.0, 1.0], vec![1.0, 2.0]],
        };
        let mut e = EdgeSystem::sample(&m, &spec, 4).unwrap();
        for _ in 0..3 {
            e.evolve_markov_edges(&m, 0.2).unwrap();
            for i in 0..17 {
                assert!(e.edge(i, i));
                for j in 0..17 {
                    assert_eq!(e.edge(i, j), e.edge(j, i));
                }
            }
        }
    }

    #[test]
    fn rle_snapshot_roundtrip_length() {
        let m = single_type(10);
        let e = EdgeSystem::sample_static_graph(&m, vec![vec![0.5]], 7).unwrap();
        let total: usize = e
            .rle_snapshot()
            .split(' ')
            .map(|tok| tok.split(':').next().unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 45);
    }
}
