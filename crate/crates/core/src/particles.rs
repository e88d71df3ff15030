//! Euler–Maruyama integration of the graph-interacting particle system
//! and of the coupled mean-field limit system on a shared time grid,
//! with shared Brownian increments and initial points.
//!
//! The limit law entering the mean-field drift is not available in
//! closed form; it is approximated by the empirical law of the limit
//! ensemble itself (complete interaction within each type). The bias of
//! this proxy is the classical O(N^{-1/2}) mean-field error, so
//! experiments compare trends across N rather than absolute constants.

use crate::config::{DiffusionKernel, DriftKernel, InitialLaw, KernelSet, MembershipMap, ScenarioConfig};
use crate::error::{Error, Result};
use crate::graph::EdgeSystem;
use crate::rng::{self, tag};
use rand::Rng;
use rand_distr::StandardNormal;

/// Time-gridded trajectories. State arrays are time-major:
/// `z[t * n * d + i * d + k]` is coordinate k of particle i at grid
/// index t. Brownian increments are stored the same way with M rows.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: Vec<f64>,
    pub n: usize,
    pub dim: usize,
    pub z: Vec<f64>,
    pub x: Option<Vec<f64>>,
    pub dw: Vec<f64>,
}

impl PathEnsemble {
    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    #[inline]
    pub fn z_at(&self, t: usize) -> &[f64] {
        &self.z[t * self.n * self.dim..(t + 1) * self.n * self.dim]
    }

    #[inline]
    pub fn x_at(&self, t: usize) -> Option<&[f64]> {
        self.x
            .as_ref()
            .map(|x| &x[t * self.n * self.dim..(t + 1) * self.n * self.dim])
    }

    #[inline]
    pub fn dw_at(&self, t: usize) -> &[f64] {
        &self.dw[t * self.n * self.dim..(t + 1) * self.n * self.dim]
    }

    /// State of particle i at grid index t.
    #[inline]
    pub fn z_state(&self, i: usize, t: usize) -> &[f64] {
        let base = t * self.n * self.dim + i * self.dim;
        &self.z[base..base + self.dim]
    }

    #[inline]
    pub fn x_state(&self, i: usize, t: usize) -> Option<&[f64]> {
        self.x.as_ref().map(|x| {
            let base = t * self.n * self.dim + i * self.dim;
            &x[base..base + self.dim]
        })
    }
}

/// Weighted sample measure; the zero measure (empty neighborhood) is
/// represented by empty support and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.points.is_empty()
    }

    /// ⟨f, μ⟩ for a function on points.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }
}

/// Reference evaluation of the SDE coefficients for one vertex: the
/// drift vector Σ_γ (1/N_{i,γ}) Σ_{j∈𝒩_γ} ξ_ij b̄_{αγ}(z_i, z_j) and
/// the diffusion matrix built the same way, with a γ-term equal to zero
/// when the γ-neighborhood is empty. Plain double loop; the integrator
/// uses an algebraically identical fast path that is cross-checked
/// against this in tests.
pub fn drift_and_diffusion_eval(
    i: usize,
    states: &[f64],
    edges: &EdgeSystem,
    kernels: &KernelSet,
    membership: &MembershipMap,
) -> (Vec<f64>, Vec<f64>) {
    let d = kernels.dim();
    let alpha = membership.type_of(i);
    let xi = &states[i * d..(i + 1) * d];
    let mut drift = vec![0.0; d];
    let mut diffusion = vec![0.0; d * d];
    let mut tmp = vec![0.0; d];
    for gamma in 0..membership.n_types() {
        let block = membership.block(gamma);
        let mut acc = vec![0.0; d];
        let mut count = 0usize;
        edges.for_each_neighbor_in_range(i, block.start, block.end, |j| {
            kernels
                .drift(alpha, gamma)
                .eval(xi, &states[j * d..(j + 1) * d], &mut tmp);
            for k in 0..d {
                acc[k] += tmp[k];
            }
            count += 1;
        });
        if count > 0 {
            let inv = 1.0 / count as f64;
            for k in 0..d {
                drift[k] += acc[k] * inv;
            }
            match kernels.diffusion(alpha, gamma) {
                DiffusionKernel::Identity => {
                    // ∫ I θ(dy) = I for the (sub-)probability θ with mass 1.
                    for k in 0..d {
                        diffusion[k * d + k] += 1.0;
                    }
                }
                DiffusionKernel::Zero => {}
            }
        }
    }
    (drift, diffusion)
}

/// Per-step neighbor reduction strategy for a drift kernel.
enum DriftPlan {
    /// Kernel ignores y; only the non-empty indicator matters.
    YIndependent,
    /// a·sin(y−x): reduce precomputed (sin, cos) tables.
    SinCos { a: f64 },
    /// clamp(y): reduce a precomputed clipped table.
    Clip { b: f64 },
    /// Fall back to pairwise evaluation.
    Generic,
}

fn plan_for(kernel: DriftKernel) -> DriftPlan {
    match kernel {
        DriftKernel::SineCoupling(a) => DriftPlan::SinCos { a },
        DriftKernel::NeighborMeanClipped(b) => DriftPlan::Clip { b },
        k if k.y_independent() => DriftPlan::YIndependent,
        _ => DriftPlan::Generic,
    }
}

/// Tables indexed like the state array, computed once per step.
fn build_tables(plan: &DriftPlan, states: &[f64]) -> Vec<f64> {
    match plan {
        DriftPlan::SinCos { .. } => {
            let mut t = vec![0.0; states.len() * 2];
            for (idx, &s) in states.iter().enumerate() {
                let (sn, cs) = s.sin_cos();
                t[2 * idx] = sn;
                t[2 * idx + 1] = cs;
            }
            t
        }
        DriftPlan::Clip { b } => states.iter().map(|&s| s.clamp(-b, *b)).collect(),
        _ => Vec::new(),
    }
}

/// Accumulates the drift contribution of type block `gamma` for vertex
/// i over its graph neighbors. Returns the neighbor count.
#[allow(clippy::too_many_arguments)]
fn accumulate_block_graph(
    i: usize,
    xi: &[f64],
    states: &[f64],
    tables: &[f64],
    plan: &DriftPlan,
    kernel: DriftKernel,
    edges: &EdgeSystem,
    block: std::ops::Range<usize>,
    d: usize,
    drift: &mut [f64],
    scratch: &mut [f64],
) -> usize {
    match plan {
        DriftPlan::YIndependent => {
            let count = edges.degree_in_range(i, block.start, block.end);
            if count > 0 {
                kernel.eval(xi, xi, scratch);
                for k in 0..d {
                    drift[k] += scratch[k];
                }
            }
            count
        }
        DriftPlan::SinCos { a } => {
            let (ssin, scos) = scratch.split_at_mut(d);
            ssin.fill(0.0);
            scos.fill(0.0);
            let mut count = 0usize;
            edges.for_each_neighbor_in_range(i, block.start, block.end, |j| {
                let base = 2 * j * d;
                for k in 0..d {
                    ssin[k] += tables[base + 2 * k];
                    scos[k] += tables[base + 2 * k + 1];
                }
                count += 1;
            });
            if count > 0 {
                let inv = a / count as f64;
                for k in 0..d {
                    let (sx, cx) = xi[k].sin_cos();
                    drift[k] += inv * (cx * ssin[k] - sx * scos[k]);
                }
            }
            count
        }
        DriftPlan::Clip { .. } => {
            let acc = &mut scratch[..d];
            acc.fill(0.0);
            let mut count = 0usize;
            edges.for_each_neighbor_in_range(i, block.start, block.end, |j| {
                for k in 0..d {
                    acc[k] += tables[j * d + k];
                }
                count += 1;
            });
            if count > 0 {
                let inv = 1.0 / count as f64;
                for k in 0..d {
                    drift[k] += acc[k] * inv;
                }
            }
            count
        }
        DriftPlan::Generic => {
            let (acc, tmp) = scratch.split_at_mut(d);
            acc.fill(0.0);
            let mut count = 0usize;
            edges.for_each_neighbor_in_range(i, block.start, block.end, |j| {
                kernel.eval(xi, &states[j * d..(j + 1) * d], tmp);
                for k in 0..d {
                    acc[k] += tmp[k];
                }
                count += 1;
            });
            if count > 0 {
                let inv = 1.0 / count as f64;
                for k in 0..d {
                    drift[k] += acc[k] * inv;
                }
            }
            count
        }
    }
}

/// Mean-field drift for the limit system: complete interaction within
/// each type block, using block aggregates where the kernel allows.
#[allow(clippy::too_many_arguments)]
fn accumulate_block_mean_field(
    xi: &[f64],
    states: &[f64],
    block_aggs: &[f64],
    plan: &DriftPlan,
    kernel: DriftKernel,
    block: std::ops::Range<usize>,
    d: usize,
    drift: &mut [f64],
    scratch: &mut [f64],
) {
    let count = block.len();
    match plan {
        DriftPlan::YIndependent => {
            kernel.eval(xi, xi, scratch);
            for k in 0..d {
                drift[k] += scratch[k];
            }
        }
        DriftPlan::SinCos { a } => {
            // block_aggs holds [Σsin_k | Σcos_k] for this block.
            let inv = a / count as f64;
            for k in 0..d {
                let (sx, cx) = xi[k].sin_cos();
                drift[k] += inv * (cx * block_aggs[k] - sx * block_aggs[d + k]);
            }
        }
        DriftPlan::Clip { .. } => {
            let inv = 1.0 / count as f64;
            for k in 0..d {
                drift[k] += block_aggs[k] * inv;
            }
        }
        DriftPlan::Generic => {
            let (acc, tmp) = scratch.split_at_mut(d);
            acc.fill(0.0);
            for j in block {
                kernel.eval(xi, &states[j * d..(j + 1) * d], tmp);
                for k in 0..d {
                    acc[k] += tmp[k];
                }
            }
            let inv = 1.0 / count as f64;
            for k in 0..d {
                drift[k] += acc[k] * inv;
            }
        }
    }
}

fn block_aggregates(
    plan: &DriftPlan,
    states: &[f64],
    membership: &MembershipMap,
    d: usize,
) -> Vec<Vec<f64>> {
    let k_types = membership.n_types();
    let mut aggs = vec![Vec::new(); k_types];
    for (gamma, agg) in aggs.iter_mut().enumerate() {
        let block = membership.block(gamma);
        match plan {
            DriftPlan::SinCos { .. } => {
                let mut a = vec![0.0; 2 * d];
                for j in block {
                    for k in 0..d {
                        let (sn, cs) = states[j * d + k].sin_cos();
                        a[k] += sn;
                        a[d + k] += cs;
                    }
                }
                *agg = a;
            }
            DriftPlan::Clip { b } => {
                let mut a = vec![0.0; d];
                for j in block {
                    for k in 0..d {
                        a[k] += states[j * d + k].clamp(-b, *b);
                    }
                }
                *agg = a;
            }
            _ => {}
        }
    }
    aggs
}

fn sample_initial(law: &InitialLaw, rng: &mut impl Rng, d: usize, out: &mut [f64]) {
    match law {
        InitialLaw::StandardNormal => {
            for k in 0..d {
                out[k] = rng.sample(StandardNormal);
            }
        }
        InitialLaw::Uniform { lo, hi } => {
            for k in 0..d {
                out[k] = rng.gen_range(*lo..*hi);
            }
        }
        InitialLaw::Dirac { at } => out.fill(*at),
    }
}

fn simulate_impl(config: &ScenarioConfig, rep: u64, coupled: bool) -> Result<PathEnsemble> {
    config.validate()?;
    let membership = config.membership_map()?;
    let kernels = config.kernels()?;
    let n = config.n_vertices;
    let d = config.dimension;
    let m_steps = config.steps;
    let dt = config.horizon / m_steps as f64;
    let sqrt_dt = dt.sqrt();
    let rep_seed = rng::mix(config.seed, &[tag::REPLICATION, rep]);

    let mut z = vec![0.0; (m_steps + 1) * n * d];
    let mut x = if coupled {
        Some(vec![0.0; (m_steps + 1) * n * d])
    } else {
        None
    };
    let mut dw = vec![0.0; m_steps * n * d];

    // Initial states and Brownian increments from per-particle streams.
    for i in 0..n {
        let mut stream = rng::substream(rep_seed, &[tag::INITIAL_STATE, i as u64]);
        sample_initial(&config.initial_law, &mut stream, d, &mut z[i * d..(i + 1) * d]);
        let mut wstream = rng::substream(rep_seed, &[tag::BROWNIAN, i as u64]);
        for t in 0..m_steps {
            for k in 0..d {
                let g: f64 = wstream.sample(StandardNormal);
                dw[t * n * d + i * d + k] = g * sqrt_dt;
            }
        }
    }
    if let Some(x) = x.as_mut() {
        x[..n * d].copy_from_slice(&z[..n * d]);
    }

    let mut edges = EdgeSystem::sample(&membership, &config.edge_model, rep_seed)?;
    let markov = edges.is_markov();

    // Uniform kernels across type pairs (the only KernelSet constructor);
    // one reduction plan serves every pair.
    let drift_kernel = kernels.drift(0, 0);
    let plan = plan_for(drift_kernel);
    let k_types = membership.n_types();
    let scratch_len = (2 * d).max(4);
    let mut scratch = vec![0.0; scratch_len];
    let mut drift = vec![0.0; d];

    for t in 0..m_steps {
        if markov && t > 0 {
            edges.evolve_markov_edges(&membership, dt)?;
        }
        let row = n * d;
        // Z step: graph-weighted interaction.
        {
            let (prev_all, next_all) = z.split_at_mut((t + 1) * row);
            let prev = &prev_all[t * row..];
            let next = &mut next_all[..row];
            let tables = build_tables(&plan, prev);
            let dwt = &dw[t * row..(t + 1) * row];
            for i in 0..n {
                let alpha = membership.type_of(i);
                let xi = &prev[i * d..(i + 1) * d];
                drift.fill(0.0);
                let mut diff_mult = 0.0;
                for gamma in 0..k_types {
                    let block = membership.block(gamma);
                    let cnt = accumulate_block_graph(
                        i,
                        xi,
                        prev,
                        &tables,
                        &plan,
                        kernels.drift(alpha, gamma),
                        &edges,
                        block,
                        d,
                        &mut drift,
                        &mut scratch,
                    );
                    if cnt > 0 && kernels.diffusion(alpha, gamma) == DiffusionKernel::Identity {
                        diff_mult += 1.0;
                    }
                }
                for k in 0..d {
                    next[i * d + k] = xi[k] + drift[k] * dt + diff_mult * dwt[i * d + k];
                }
            }
        }
        // X step: complete mean-field interaction per type, same dW.
        if let Some(x) = x.as_mut() {
            let (prev_all, next_all) = x.split_at_mut((t + 1) * row);
            let prev = &prev_all[t * row..];
            let next = &mut next_all[..row];
            let aggs = block_aggregates(&plan, prev, &membership, d);
            let dwt = &dw[t * row..(t + 1) * row];
            for i in 0..n {
                let alpha = membership.type_of(i);
                let xi = &prev[i * d..(i + 1) * d];
                drift.fill(0.0);
                let mut diff_mult = 0.0;
                for gamma in 0..k_types {
                    let block = membership.block(gamma);
                    accumulate_block_mean_field(
                        xi,
                        prev,
                        &aggs[gamma],
                        &plan,
                        kernels.drift(alpha, gamma),
                        block,
                        d,
                        &mut drift,
                        &mut scratch,
                    );
                    if kernels.diffusion(alpha, gamma) == DiffusionKernel::Identity {
                        diff_mult += 1.0;
                    }
                }
                for k in 0..d {
                    next[i * d + k] = xi[k] + drift[k] * dt + diff_mult * dwt[i * d + k];
                }
            }
        }
        let new_states = &z[(t + 1) * row..(t + 2) * row];
        if new_states.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "particle state after step {t} (rep {rep})"
            )));
        }
    }

    Ok(PathEnsemble {
        grid: config.grid(),
        n,
        dim: d,
        z,
        x,
        dw,
    })
}

/// Integrates the interacting system only.
pub fn simulate_interacting(config: &ScenarioConfig, rep: u64) -> Result<PathEnsemble> {
    simulate_impl(config, rep, false)
}

/// Integrates the interacting system and the limit system with shared
/// Brownian increments and initial points.
pub fn simulate_coupled(config: &ScenarioConfig, rep: u64) -> Result<PathEnsemble> {
    simulate_impl(config, rep, true)
}

/// Empirical measure at a grid time. Without a vertex: uniform over the
/// type-γ particles. With (vertex, edges): uniform over the γ-neighbors
/// of the vertex per the given edge state, the zero measure if none.
pub fn snapshot_empirical(
    paths: &PathEnsemble,
    t: usize,
    gamma: usize,
    membership: &MembershipMap,
    neighborhood: Option<(usize, &EdgeSystem)>,
) -> EmpiricalMeasure {
    let d = paths.dim;
    let states = paths.z_at(t);
    let block = membership.block(gamma);
    let mut points = Vec::new();
    match neighborhood {
        None => {
            for j in block {
                points.push(states[j * d..(j + 1) * d].to_vec());
            }
        }
        Some((i, edges)) => {
            edges.for_each_neighbor_in_range(i, block.start, block.end, |j| {
                points.push(states[j * d..(j + 1) * d].to_vec());
            });
        }
    }
    let w = if points.is_empty() {
        0.0
    } else {
        1.0 / points.len() as f64
    };
    let weights = vec![w; points.len()];
    EmpiricalMeasure { points, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{EdgeModelSpec, KernelRef, MembershipSpec};

    fn base_config(n: usize, drift: &str, params: Vec<f64>, diffusion: &str) -> ScenarioConfig {
        ScenarioConfig {
            name: "test".into(),
            n_vertices: n,
            dimension: 1,
            membership: MembershipSpec::Counts(vec![n]),
            drift: KernelRef {
                name: drift.into(),
                params,
            },
            diffusion: KernelRef {
                name: diffusion.into(),
                params: vec![],
            },
            edge_model: EdgeModelSpec::static_uniform(0.5, 1),
            horizon: 1.0,
            steps: 50,
            replications: 1,
            seed: 77,
            initial_law: InitialLaw::StandardNormal,
            output_dir: None,
        }
    }

    #[test]
    fn zero_kernels_freeze_state() {
        let cfg = base_config(8, "zero", vec![], "zero_diffusion");
        let e = simulate_interacting(&cfg, 0).unwrap();
        for t in 1..=e.steps() {
            assert_eq!(e.z_at(t), e.z_at(0));
        }
    }

    #[test]
    fn pure_brownian_matches_increment_sums() {
        let cfg = base_config(6, "zero", vec![], "identity_diffusion");
        let e = simulate_interacting(&cfg, 1).unwrap();
        for i in 0..6 {
            let mut acc = e.z_state(i, 0)[0];
            for t in 0..e.steps() {
                acc += e.dw_at(t)[i];
                assert!((e.z_state(i, t + 1)[0] - acc).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn coupling_null_bitwise_tolerance() {
        // y-independent drift, K=1, identity diffusion: Z and X follow
        // the same recursion up to summation rounding.
        let mut cfg = base_config(16, "x_only_tanh", vec![0.8], "identity_diffusion");
        cfg.steps = 200;
        let e = simulate_coupled(&cfg, 3).unwrap();
        let x = e.x.as_ref().unwrap();
        let max_diff = e
            .z
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff <= 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn ou_terminal_moments() {
        // b̄(x,y) = −clamp(x, 10) with states staying well inside ±10:
        // Z is an Ornstein–Uhlenbeck process up to Euler bias.
        let mut cfg = base_config(4000, "mean_reversion_clipped", vec![10.0], "identity_diffusion");
        cfg.steps = 200;
        let e = simulate_interacting(&cfg, 5).unwrap();
        let t_end = e.steps();
        let zs: Vec<f64> = (0..4000).map(|i| e.z_state(i, t_end)[0]).collect();
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (zs.len() - 1) as f64;
        let target_var = (1.0 - (-2.0f64).exp()) / 2.0 + (-2.0f64).exp();
        let se_mean = (target_var / 4000.0).sqrt();
        let se_var = target_var * (2.0 / 4000.0f64).sqrt();
        // 3 standard errors plus O(Δt) discretization allowance.
        assert!(mean.abs() < 3.0 * se_mean + 0.01, "mean {mean}");
        assert!(
            (var - target_var).abs() < 3.0 * se_var + 0.02,
            "var {var} target {target_var}"
        );
    }

    #[test]
    fn neighbor_mean_drift_on_complete_graph() {
        // b̄(x,y) = clamp(y, B): on the complete graph the drift is the
        // ensemble mean of the (clipped) states.
        let mut cfg = base_config(12, "neighbor_mean_clipped", vec![50.0], "identity_diffusion");
        cfg.edge_model = EdgeModelSpec::static_uniform(1.0, 1);
        let membership = cfg.membership_map().unwrap();
        let kernels = cfg.kernels().unwrap();
        let e = simulate_interacting(&cfg, 2).unwrap();
        let edges = EdgeSystem::sample(
            &membership,
            &cfg.edge_model,
            rng::mix(cfg.seed, &[tag::REPLICATION, 2]),
        )
        .unwrap();
        let states = e.z_at(0);
        let mean: f64 = states.iter().sum::<f64>() / 12.0;
        let (drift, diffusion) = drift_and_diffusion_eval(0, states, &edges, &kernels, &membership);
        assert!((drift[0] - mean).abs() < 1e-12);
        assert_eq!(diffusion, vec![1.0]);
    }

    #[test]
    fn empty_neighborhood_contributes_zero() {
        // Two types, no cross or within edges beyond self-loops.
        let cfg = ScenarioConfig {
            membership: MembershipSpec::Counts(vec![3, 3]),
            edge_model: EdgeModelSpec::static_uniform(0.0, 2),
            ..base_config(6, "constant", vec![0.5], "identity_diffusion")
        };
        let membership = cfg.membership_map().unwrap();
        let kernels = cfg.kernels().unwrap();
        let edges = EdgeSystem::sample(&membership, &cfg.edge_model, 1).unwrap();
        let states = vec![0.0; 6];
        let (drift, diffusion) = drift_and_diffusion_eval(0, &states, &edges, &kernels, &membership);
        // Own-type term present (self-loop), other-type term exactly 0.
        assert_eq!(drift, vec![0.5]);
        assert_eq!(diffusion, vec![1.0]);
    }

    #[test]
    fn fast_path_matches_reference_eval() {
        let mut cfg = base_config(40, "sine_coupling", vec![1.3], "identity_diffusion");
        cfg.membership = MembershipSpec::Counts(vec![25, 15]);
        cfg.edge_model = EdgeModelSpec::static_uniform(0.4, 2);
        cfg.steps = 3;
        let membership = cfg.membership_map().unwrap();
        let kernels = cfg.kernels().unwrap();
        let rep_seed = rng::mix(cfg.seed, &[tag::REPLICATION, 0]);
        let edges = EdgeSystem::sample(&membership, &cfg.edge_model, rep_seed).unwrap();
        let e = simulate_interacting(&cfg, 0).unwrap();
        // Recompute step 0 with the reference evaluator.
        let dt = cfg.horizon / cfg.steps as f64;
        let states = e.z_at(0);
        for i in 0..40 {
            let (drift, diffusion) =
                drift_and_diffusion_eval(i, states, &edges, &kernels, &membership);
            let expected = states[i] + drift[0] * dt + diffusion[0] * e.dw_at(0)[i];
            let got = e.z_at(1)[i];
            assert!(
                (expected - got).abs() < 1e-12,
                "particle {i}: {expected} vs {got}"
            );
        }
    }

    #[test]
    fn determinism_same_seed_same_paths() {
        let cfg = base_config(20, "sine_coupling", vec![1.0], "identity_diffusion");
        let a = simulate_coupled(&cfg, 7).unwrap();
        let b = simulate_coupled(&cfg, 7).unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(a.x, b.x);
        assert_eq!(a.dw, b.dw);
    }

    #[test]
    fn boundedness_per_step() {
        let cfg = base_config(30, "sine_coupling", vec![1.0], "identity_diffusion");
        let e = simulate_interacting(&cfg, 9).unwrap();
        let dt = 1.0 / 50.0;
        let bound = 1.0 * dt; // d·K·L·Δ with d=K=L=1
        for t in 0..e.steps() {
            for i in 0..30 {
                let step = e.z_state(i, t + 1)[0] - e.z_state(i, t)[0];
                let noise = e.dw_at(t)[i];
                assert!(step.abs() <= bound + noise.abs() + 1e-12);
            }
        }
    }

    #[test]
    fn exchangeability_of_reference_eval_within_type() {
        // On the complete graph the drift of a vertex is invariant
        // under permutations of the other same-type states.
        let cfg = base_config(10, "sine_coupling", vec![1.0], "identity_diffusion");
        let membership = cfg.membership_map().unwrap();
        let kernels = cfg.kernels().unwrap();
        let edges =
            EdgeSystem::sample(&membership, &EdgeModelSpec::static_uniform(1.0, 1), 1).unwrap();
        let states: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut permuted = states.clone();
        permuted.swap(3, 7);
        let (d0, _) = drift_and_diffusion_eval(0, &states, &edges, &kernels, &membership);
        let (d1, _) = drift_and_diffusion_eval(0, &permuted, &edges, &kernels, &membership);
        assert!((d0[0] - d1[0]).abs() < 1e-13);
    }

    #[test]
    fn snapshot_measures() {
        let cfg = base_config(5, "zero", vec![], "identity_diffusion");
        let membership = cfg.membership_map().unwrap();
        let e = simulate_interacting(&cfg, 0).unwrap();
        // Full type measure.
        let mu = snapshot_empirical(&e, 0, 0, &membership, None);
        assert_eq!(mu.points.len(), 5);
        assert!((mu.total_mass() - 1.0).abs() < 1e-15);
        // Complete graph neighborhood equals the full measure.
        let edges =
            EdgeSystem::sample(&membership, &EdgeModelSpec::static_uniform(1.0, 1), 1).unwrap();
        let mu_n = snapshot_empirical(&e, 0, 0, &membership, Some((2, &edges)));
        assert_eq!(mu_n.points.len(), 5);
        // Empty cross-type neighborhood is the zero measure.
        let m2 = crate::config::build_membership(&MembershipSpec::Counts(vec![3, 2]), 5).unwrap();
        let empty = EdgeSystem::sample(&m2, &EdgeModelSpec::static_uniform(0.0, 2), 1).unwrap();
        let mu_z = snapshot_empirical(&e, 0, 1, &m2, Some((0, &empty)));
        assert!(mu_z.is_zero());
        assert_eq!(mu_z.total_mass(), 0.0);
    }

    #[test]
    fn point_mass_for_single_particle_type() {
        let cfg = ScenarioConfig {
            membership: MembershipSpec::Counts(vec![4, 1]),
            edge_model: EdgeModelSpec::static_uniform(0.5, 2),
            ..base_config(5, "zero", vec![], "identity_diffusion")
        };
        let membership = cfg.membership_map().unwrap();
        let e = simulate_interacting(&cfg, 0).unwrap();
        let mu = snapshot_empirical(&e, 0, 1, &membership, None);
        assert_eq!(mu.points.len(), 1);
        assert_eq!(mu.weights, vec![1.0]);
    }
}
