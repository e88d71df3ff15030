//! Change-of-measure functionals over coupled ensembles: the
//! log-density parts J^{N,1}, J^{N,2}, their graph-decoupled
//! reductions J̃^{N,1}, J̃^{N,2}, and the incomplete U-statistic U_N.
//! All stochastic integrals are left-point Itô sums on the shared grid.

use super::pairs::DriftProfile;
use crate::config::{DiffusionKernel, EdgeModelSpec, ScenarioConfig};
use crate::error::{Error, Result};
use crate::graph::{self, EdgeSystem};
use crate::particles::PathEnsemble;
use crate::rng::{self, tag};

/// Deterministic reconstruction of the edge trajectory of a
/// replication: same seeding and step tags as the integrator, so the
/// replayed edge state at each step is identical to the one the
/// simulation used.
pub struct EdgeReplay {
    edges: EdgeSystem,
    membership: crate::config::MembershipMap,
    dt: f64,
    step: usize,
}

impl EdgeReplay {
    pub fn new(config: &ScenarioConfig, rep: u64) -> Result<Self> {
        let membership = config.membership_map()?;
        let rep_seed = rng::mix(config.seed, &[tag::REPLICATION, rep]);
        let edges = EdgeSystem::sample(&membership, &config.edge_model, rep_seed)?;
        Ok(Self {
            edges,
            membership,
            dt: config.horizon / config.steps as f64,
            step: 0,
        })
    }

    /// Edge state used by the integrator during step `t`. Steps must be
    /// visited in non-decreasing order.
    pub fn at_step(&mut self, t: usize) -> Result<&EdgeSystem> {
        if t < self.step {
            return Err(Error::Estimator("edge replay cannot rewind".into()));
        }
        while self.step < t {
            if self.edges.is_markov() {
                self.edges.evolve_markov_edges(&self.membership, self.dt)?;
            }
            self.step += 1;
        }
        Ok(&self.edges)
    }
}

/// Marginal edge probability p_N(t) at the left grid endpoints, for a
/// single-type edge model.
pub fn edge_probability_steps(spec: &EdgeModelSpec, grid: &[f64]) -> Result<Vec<f64>> {
    if spec.prob0().len() != 1 {
        return Err(Error::ModeMismatch(
            "edge probability path is defined for a single vertex type".into(),
        ));
    }
    let p0 = spec.prob0()[0][0];
    match spec {
        EdgeModelSpec::Static { .. } => Ok(vec![p0; grid.len() - 1]),
        EdgeModelSpec::Markov { lambda, mu, .. } => grid[..grid.len() - 1]
            .iter()
            .map(|&t| graph::marginal_edge_probability(t, p0, lambda[0][0], mu[0][0]))
            .collect(),
    }
}

/// One replication's change-of-measure functionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GirsanovSample {
    pub j1: f64,
    pub j2: f64,
    pub j1_tilde: f64,
    pub j2_tilde: f64,
}

impl GirsanovSample {
    /// Log-density J^N(T) = J^{N,1}(T) − J^{N,2}(T)/2.
    pub fn j_total(&self) -> f64 {
        self.j1 - 0.5 * self.j2
    }
}

fn clt_setting_checks(config: &ScenarioConfig, ens: &PathEnsemble) -> Result<()> {
    let membership = config.membership_map()?;
    if membership.n_types() != 1 {
        return Err(Error::ModeMismatch(
            "change-of-measure functionals require a single vertex type".into(),
        ));
    }
    let kernels = config.kernels()?;
    if kernels.diffusion(0, 0) != DiffusionKernel::Identity {
        return Err(Error::ModeMismatch(
            "change-of-measure functionals require the identity diffusion".into(),
        ));
    }
    if ens.x.is_none() {
        return Err(Error::Estimator("limit trajectories required".into()));
    }
    Ok(())
}

/// Per-step feature tables over the limit states: raw centered
/// e-features (ecen) and coefficient-weighted g-features (gval), both
/// laid out as [i·d·q + k·q + f].
fn step_tables(
    profile: &DriftProfile,
    t: usize,
    states: &[f64],
    ecen: &mut [f64],
    gval: &mut [f64],
) {
    let d = profile.dim;
    let q = profile.rank();
    let n = states.len() / d;
    for i in 0..n {
        for k in 0..d {
            let v = states[i * d + k];
            let base = i * d * q + k * q;
            for (f, term) in profile.factors.terms.iter().enumerate() {
                ecen[base + f] = term.e.eval(v) - profile.ebar_at(t, k, f);
                gval[base + f] = term.coef * term.g.eval(v);
            }
        }
    }
}

/// Computes (J^{N,1}, J^{N,2}, J̃^{N,1}, J̃^{N,2}) for one replication,
/// replaying the replication's edge trajectory deterministically.
pub fn girsanov_functionals(
    config: &ScenarioConfig,
    rep: u64,
    ens: &PathEnsemble,
    profile: &DriftProfile,
) -> Result<GirsanovSample> {
    clt_setting_checks(config, ens)?;
    let p_steps = edge_probability_steps(&config.edge_model, &ens.grid)?;
    let mut replay = EdgeReplay::new(config, rep)?;
    let (n, d, q) = (ens.n, ens.dim, profile.rank());
    let dt = profile.dt;
    let mut ecen = vec![0.0; n * d * q];
    let mut gval = vec![0.0; n * d * q];
    let mut nsum = vec![0.0; d * q];
    let (mut j1, mut j2, mut j1t, mut j2t_pairs) = (0.0, 0.0, 0.0, 0.0);
    for t in 0..ens.steps() {
        let states = ens.x_at(t).expect("checked above");
        step_tables(profile, t, states, &mut ecen, &mut gval);
        let edges = replay.at_step(t)?;
        let dw = ens.dw_at(t);
        let p = p_steps[t];
        if p <= 0.0 {
            return Err(Error::Estimator("edge probability vanished on the grid".into()));
        }
        for i in 0..n {
            nsum.fill(0.0);
            let mut deg = 0usize;
            edges.for_each_neighbor_in_range(i, 0, n, |j| {
                let base = j * d * q;
                for c in 0..d * q {
                    nsum[c] += ecen[base + c];
                }
                deg += 1;
            });
            // Self-loops make N_i ≥ 1 always.
            let inv_deg = 1.0 / deg as f64;
            let inv_np = 1.0 / (n as f64 * p);
            let mut sq = 0.0;
            for k in 0..d {
                let mut sraw = 0.0;
                for f in 0..q {
                    sraw += gval[i * d * q + k * q + f] * nsum[k * q + f];
                }
                let w = dw[i * d + k];
                let bdiff = sraw * inv_deg;
                j1 += bdiff * w;
                sq += bdiff * bdiff;
                j1t += sraw * inv_np * w;
            }
            j2 += sq * dt;
        }
        j2t_pairs += profile.m_t_offdiagonal_sum(t, states) * dt;
    }
    let mut lambda_over_p = 0.0;
    for (t, &p) in p_steps.iter().enumerate() {
        lambda_over_p += profile.lambda[t] / p * dt;
    }
    let j2_tilde = (n as f64 - 2.0) / (n as f64 * n as f64) * j2t_pairs + lambda_over_p;
    Ok(GirsanovSample {
        j1,
        j2,
        j1_tilde: j1t,
        j2_tilde,
    })
}

/// Incomplete U-statistic U_N = (1/N) Σ_{i<j} u_N(ξ_ij, V^i, V^j) with
/// u_N the pair of Itô sums weighted by (ξ_ij(s) − p_N(s))/p_N(s).
pub fn incomplete_u(
    config: &ScenarioConfig,
    rep: u64,
    ens: &PathEnsemble,
    profile: &DriftProfile,
) -> Result<f64> {
    clt_setting_checks(config, ens)?;
    let p_steps = edge_probability_steps(&config.edge_model, &ens.grid)?;
    if p_steps.iter().any(|&p| p <= 0.0) {
        return Err(Error::Estimator("edge probability vanished on the grid".into()));
    }
    let mut replay = EdgeReplay::new(config, rep)?;
    let n = ens.n;
    let mut total = 0.0;
    if !config.edge_model.is_markov() {
        // Static graph: the weight is constant in time, so the pair
        // integrals reduce to the h-matrix of the ensemble itself.
        let a = profile.g_dw_table(ens)?;
        let b = profile.e_centered_table(ens)?;
        let h = &a * b.transpose();
        let p = p_steps[0];
        let edges = replay.at_step(0)?;
        for i in 0..n {
            for j in (i + 1)..n {
                let w = (f64::from(u8::from(edges.edge(i, j))) - p) / p;
                total += w * (h[(i, j)] + h[(j, i)]);
            }
        }
    } else {
        let (d, q) = (ens.dim, profile.rank());
        let mut ecen = vec![0.0; n * d * q];
        let mut gval = vec![0.0; n * d * q];
        for t in 0..ens.steps() {
            let states = ens.x_at(t).expect("checked above");
            step_tables(profile, t, states, &mut ecen, &mut gval);
            let edges = replay.at_step(t)?;
            let dw = ens.dw_at(t);
            let p = p_steps[t];
            for i in 0..n {
                for j in (i + 1)..n {
                    let w = (f64::from(u8::from(edges.edge(i, j))) - p) / p;
                    if w == 0.0 {
                        continue;
                    }
                    let mut pair = 0.0;
                    for k in 0..d {
                        let (bi, bj) = (i * d * q + k * q, j * d * q + k * q);
                        let mut bij = 0.0;
                        let mut bji = 0.0;
                        for f in 0..q {
                            bij += gval[bi + f] * ecen[bj + f];
                            bji += gval[bj + f] * ecen[bi + f];
                        }
                        pair += bij * dw[i * d + k] + bji * dw[j * d + k];
                    }
                    total += w * pair;
                }
            }
        }
    }
    Ok(total / n as f64)
}
