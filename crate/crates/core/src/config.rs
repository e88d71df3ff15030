//! Scenario definition: vertex types and membership, interaction kernels,
//! edge models, time grid, replication counts and seeds.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Assignment of vertices to types. Vertices of the same type occupy a
/// contiguous index block, so the assignment is fully determined by the
/// per-type counts. Fixed for the lifetime of a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipMap {
    type_counts: Vec<usize>,
    /// offsets[k]..offsets[k+1] is the index range of type k.
    offsets: Vec<usize>,
}

impl MembershipMap {
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Config("at least one type required".into()));
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Config(
                "every type must have at least one vertex".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(counts.len() + 1);
        let mut acc = 0usize;
        offsets.push(0);
        for &c in counts {
            acc += c;
            offsets.push(acc);
        }
        Ok(Self {
            type_counts: counts.to_vec(),
            offsets,
        })
    }

    pub fn n_vertices(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn n_types(&self) -> usize {
        self.type_counts.len()
    }

    pub fn type_counts(&self) -> &[usize] {
        &self.type_counts
    }

    /// N̄ = min over types of the type count.
    pub fn min_count(&self) -> usize {
        *self.type_counts.iter().min().unwrap()
    }

    /// Index range occupied by the given type.
    pub fn block(&self, type_idx: usize) -> std::ops::Range<usize> {
        self.offsets[type_idx]..self.offsets[type_idx + 1]
    }

    pub fn type_of(&self, vertex: usize) -> usize {
        debug_assert!(vertex < self.n_vertices());
        // offsets is sorted; number of blocks is tiny.
        match self.offsets.binary_search(&vertex) {
            Ok(k) if k < self.type_counts.len() => k,
            Ok(k) => k - 1,
            Err(k) => k - 1,
        }
    }

    pub fn assignments(&self) -> Vec<usize> {
        (0..self.n_vertices()).map(|i| self.type_of(i)).collect()
    }
}

/// Membership spec: explicit per-type counts, or proportions resolved by
/// the largest-remainder method (ties broken toward lower type index).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum MembershipSpec {
    Counts(Vec<usize>),
    Proportions(Vec<f64>),
}

pub fn build_membership(spec: &MembershipSpec, n: usize) -> Result<MembershipMap> {
    match spec {
        MembershipSpec::Counts(counts) => {
            let total: usize = counts.iter().sum();
            if total != n {
                return Err(Error::Config(format!(
                    "counts sum to {total}, expected {n}"
                )));
            }
            MembershipMap::from_counts(counts)
        }
        MembershipSpec::Proportions(props) => {
            if props.is_empty() {
                return Err(Error::Config("at least one proportion required".into()));
            }
            if props.iter().any(|&p| p <= 0.0) {
                return Err(Error::Config("proportions must be positive".into()));
            }
            let sum: f64 = props.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("proportions sum to {sum}, not 1")));
            }
            // Largest-remainder apportionment.
            let quotas: Vec<f64> = props.iter().map(|p| p * n as f64).collect();
            let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
            let assigned: usize = counts.iter().sum();
            let mut order: Vec<usize> = (0..props.len()).collect();
            order.sort_by(|&a, &b| {
                let ra = quotas[a] - quotas[a].floor();
                let rb = quotas[b] - quotas[b].floor();
                rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
            });
            for k in 0..(n - assigned) {
                counts[order[k % order.len()]] += 1;
            }
            if counts.iter().any(|&c| c == 0) {
                return Err(Error::Config(
                    "a type received zero vertices; increase N or its proportion".into(),
                ));
            }
            MembershipMap::from_counts(&counts)
        }
    }
}

/// Largest parameter magnitude accepted by the kernel registry.
pub const KERNEL_PARAM_CAP: f64 = 100.0;

/// Pairwise drift kernels b̄(x, y). All registry entries act
/// componentwise on R^d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftKernel {
    Zero,
    /// b̄(x,y) = a in every component.
    Constant(f64),
    /// b̄(x,y) = a·tanh(x_k); independent of y.
    XOnlyTanh(f64),
    /// b̄(x,y) = a·sin(y_k − x_k).
    SineCoupling(f64),
    /// b̄(x,y) = clamp(y_k, [−b, b]); neighbor averaging on compact data.
    NeighborMeanClipped(f64),
    /// b̄(x,y) = −clamp(x_k, [−b, b]); mean reversion, independent of y.
    MeanReversionClipped(f64),
    /// b̄(x,y) = x_k. Unbounded diagnostic kernel; fails BL validation on
    /// wide grids by design.
    LinearX,
}

impl DriftKernel {
    /// Evaluates b̄(x,y) into `out` (overwrites).
    pub fn eval(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match *self {
            DriftKernel::Zero => out.fill(0.0),
            DriftKernel::Constant(a) => out.fill(a),
            DriftKernel::XOnlyTanh(a) => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = a * xi.tanh();
                }
            }
            DriftKernel::SineCoupling(a) => {
                for ((o, &xi), &yi) in out.iter_mut().zip(x).zip(y) {
                    *o = a * (yi - xi).sin();
                }
            }
            DriftKernel::NeighborMeanClipped(b) => {
                for (o, &yi) in out.iter_mut().zip(y) {
                    *o = yi.clamp(-b, b);
                }
            }
            DriftKernel::MeanReversionClipped(b) => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = -xi.clamp(-b, b);
                }
            }
            DriftKernel::LinearX => out.copy_from_slice(x),
        }
    }

    /// True when the kernel does not depend on its second argument, in
    /// which case ∫b̄(x,y)θ(dy) = b̄(x,·) for any probability measure θ.
    pub fn y_independent(&self) -> bool {
        matches!(
            self,
            DriftKernel::Zero
                | DriftKernel::Constant(_)
                | DriftKernel::XOnlyTanh(_)
                | DriftKernel::MeanReversionClipped(_)
                | DriftKernel::LinearX
        )
    }

    /// Analytic bound on max(‖b̄‖_∞, Lip(b̄)) declared by the registry.
    /// The Lipschitz quotient is taken with respect to the sum metric
    /// ‖x−x'‖ + ‖y−y'‖ on argument pairs.
    pub fn analytic_bound(&self) -> f64 {
        match *self {
            DriftKernel::Zero => 0.0,
            DriftKernel::Constant(a) => a.abs(),
            DriftKernel::XOnlyTanh(a) => a.abs(),
            DriftKernel::SineCoupling(a) => a.abs(),
            DriftKernel::NeighborMeanClipped(b) => b.abs().max(1.0),
            DriftKernel::MeanReversionClipped(b) => b.abs().max(1.0),
            // Nominal; the true sup norm is infinite.
            DriftKernel::LinearX => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusionKernel {
    Zero,
    Identity,
}

impl DiffusionKernel {
    pub fn analytic_bound(&self) -> f64 {
        match self {
            DiffusionKernel::Zero => 0.0,
            DiffusionKernel::Identity => 1.0,
        }
    }
}

/// Serialized registry reference: a name plus numeric parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelRef {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

fn one_param(params: &[f64], name: &str) -> Result<f64> {
    if params.len() != 1 {
        return Err(Error::Config(format!(
            "kernel '{name}' takes exactly one parameter, got {}",
            params.len()
        )));
    }
    let a = params[0];
    if !a.is_finite() {
        return Err(Error::Config(format!("kernel '{name}': non-finite parameter")));
    }
    if a.abs() > KERNEL_PARAM_CAP {
        return Err(Error::BoundViolation(format!(
            "kernel '{name}': parameter {a} exceeds cap {KERNEL_PARAM_CAP}"
        )));
    }
    Ok(a)
}

fn no_params(params: &[f64], name: &str) -> Result<()> {
    if params.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("kernel '{name}' takes no parameters")))
    }
}

pub fn drift_registry_lookup(name: &str, params: &[f64]) -> Result<DriftKernel> {
    match name {
        "zero" => {
            no_params(params, name)?;
            Ok(DriftKernel::Zero)
        }
        "constant" => Ok(DriftKernel::Constant(one_param(params, name)?)),
        "x_only_tanh" => Ok(DriftKernel::XOnlyTanh(one_param(params, name)?)),
        "sine_coupling" => Ok(DriftKernel::SineCoupling(one_param(params, name)?)),
        "neighbor_mean_clipped" => {
            Ok(DriftKernel::NeighborMeanClipped(one_param(params, name)?))
        }
        "mean_reversion_clipped" => {
            Ok(DriftKernel::MeanReversionClipped(one_param(params, name)?))
        }
        "linear_x" => {
            no_params(params, name)?;
            Ok(DriftKernel::LinearX)
        }
        other => Err(Error::UnknownRegistryEntry(other.into())),
    }
}

pub fn diffusion_registry_lookup(name: &str, params: &[f64]) -> Result<DiffusionKernel> {
    match name {
        "zero_diffusion" => {
            no_params(params, name)?;
            Ok(DiffusionKernel::Zero)
        }
        "identity_diffusion" => {
            no_params(params, name)?;
            Ok(DiffusionKernel::Identity)
        }
        other => Err(Error::UnknownRegistryEntry(other.into())),
    }
}

pub fn drift_registry_names() -> &'static [&'static str] {
    &[
        "zero",
        "constant",
        "x_only_tanh",
        "sine_coupling",
        "neighbor_mean_clipped",
        "mean_reversion_clipped",
        "linear_x",
    ]
}

pub fn diffusion_registry_names() -> &'static [&'static str] {
    &["zero_diffusion", "identity_diffusion"]
}

/// Interaction kernels for all ordered type pairs, with the shared
/// bound L and dimension d.
#[derive(Debug, Clone)]
pub struct KernelSet {
    drift: Vec<DriftKernel>,
    diffusion: Vec<DiffusionKernel>,
    n_types: usize,
    dim: usize,
    bound: f64,
}

impl KernelSet {
    /// Same drift/diffusion kernel for every type pair.
    pub fn uniform(
        drift: DriftKernel,
        diffusion: DiffusionKernel,
        n_types: usize,
        dim: usize,
    ) -> Result<Self> {
        if dim == 0 || n_types == 0 {
            return Err(Error::Config("dimension and type count must be ≥ 1".into()));
        }
        let bound = drift.analytic_bound().max(diffusion.analytic_bound());
        Ok(Self {
            drift: vec![drift; n_types * n_types],
            diffusion: vec![diffusion; n_types * n_types],
            n_types,
            dim,
            bound,
        })
    }

    pub fn drift(&self, alpha: usize, gamma: usize) -> DriftKernel {
        self.drift[alpha * self.n_types + gamma]
    }

    pub fn diffusion(&self, alpha: usize, gamma: usize) -> DiffusionKernel {
        self.diffusion[alpha * self.n_types + gamma]
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// Looks up a single registry entry and wraps it as a one-type
/// KernelSet. Drift names get the identity diffusion; diffusion names
/// get zero drift.
pub fn kernel_registry_lookup(name: &str, params: &[f64], dim: usize) -> Result<KernelSet> {
    if let Ok(drift) = drift_registry_lookup(name, params) {
        return KernelSet::uniform(drift, DiffusionKernel::Identity, 1, dim);
    }
    match diffusion_registry_lookup(name, params) {
        Ok(diff) => KernelSet::uniform(DriftKernel::Zero, diff, 1, dim),
        Err(Error::UnknownRegistryEntry(_)) => Err(Error::UnknownRegistryEntry(name.into())),
        Err(e) => Err(e),
    }
}

/// Sampled bounded-Lipschitz norm estimate for a drift kernel.
#[derive(Debug, Clone, Copy)]
pub struct BlEstimate {
    pub sup_norm: f64,
    pub lipschitz: f64,
    /// max(sup_norm, lipschitz)
    pub estimate: f64,
    pub declared_bound: f64,
    pub violation: bool,
}

pub const BL_VALIDATION_TOLERANCE: f64 = 1e-6;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Estimates max(‖b̄‖_∞, Lipschitz quotient) over all pairs of grid
/// points. The Lipschitz quotient uses the sum metric ‖Δx‖ + ‖Δy‖.
/// A guard against registry mistakes, not the source of truth: the
/// declared analytic bound stays authoritative.
pub fn validate_bl_norm(kernel: DriftKernel, grid: &[Vec<f64>]) -> Result<BlEstimate> {
    if grid.is_empty() {
        return Err(Error::Config("validation grid is empty".into()));
    }
    let dim = grid[0].len();
    let pairs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|i| (0..grid.len()).map(move |j| (i, j)))
        .collect();
    let mut values = vec![vec![0.0; dim]; pairs.len()];
    for (v, &(i, j)) in values.iter_mut().zip(&pairs) {
        kernel.eval(&grid[i], &grid[j], v);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "kernel value at grid pair ({i},{j})"
            )));
        }
    }
    let sup_norm = values.iter().map(|v| norm(v)).fold(0.0, f64::max);
    let mut lipschitz: f64 = 0.0;
    let mut diff = vec![0.0; dim];
    for a in 0..pairs.len() {
        for b in (a + 1)..pairs.len() {
            let (ia, ja) = pairs[a];
            let (ib, jb) = pairs[b];
            for k in 0..dim {
                diff[k] = grid[ia][k] - grid[ib][k];
            }
            let dx = norm(&diff);
            for k in 0..dim {
                diff[k] = grid[ja][k] - grid[jb][k];
            }
            let dy = norm(&diff);
            let dist = dx + dy;
            if dist < 1e-12 {
                continue;
            }
            for k in 0..dim {
                diff[k] = values[a][k] - values[b][k];
            }
            lipschitz = lipschitz.max(norm(&diff) / dist);
        }
    }
    let estimate = sup_norm.max(lipschitz);
    let declared_bound = kernel.analytic_bound();
    Ok(BlEstimate {
        sup_norm,
        lipschitz,
        estimate,
        declared_bound,
        violation: estimate > declared_bound * (1.0 + BL_VALIDATION_TOLERANCE),
    })
}

/// Initial law per type; registry of standard laws.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, tag = "name", rename_all = "snake_case")]
pub enum InitialLaw {
    StandardNormal,
    Uniform { lo: f64, hi: f64 },
    /// Point mass; useful for deterministic tests.
    Dirac { at: f64 },
}

impl Default for InitialLaw {
    fn default() -> Self {
        InitialLaw::StandardNormal
    }
}

pub fn initial_law_names() -> &'static [&'static str] {
    &["standard_normal", "uniform", "dirac"]
}

/// Edge model: static Bernoulli snapshot or two-state Markov dynamics.
/// Probability/rate matrices are indexed by type pair and must be
/// symmetric.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, tag = "mode", rename_all = "snake_case")]
pub enum EdgeModelSpec {
    Static {
        prob0: Vec<Vec<f64>>,
    },
    Markov {
        prob0: Vec<Vec<f64>>,
        lambda: Vec<Vec<f64>>,
        mu: Vec<Vec<f64>>,
    },
}

impl EdgeModelSpec {
    /// Uniform probability over all type pairs, static graph.
    pub fn static_uniform(p: f64, n_types: usize) -> Self {
        EdgeModelSpec::Static {
            prob0: vec![vec![p; n_types]; n_types],
        }
    }

    pub fn prob0(&self) -> &Vec<Vec<f64>> {
        match self {
            EdgeModelSpec::Static { prob0 } | EdgeModelSpec::Markov { prob0, .. } => prob0,
        }
    }

    pub fn is_markov(&self) -> bool {
        matches!(self, EdgeModelSpec::Markov { .. })
    }

    fn check_matrix(m: &[Vec<f64>], k: usize, what: &str, lo: f64, hi: f64) -> Result<()> {
        if m.len() != k || m.iter().any(|row| row.len() != k) {
            return Err(Error::Config(format!("{what} must be a {k}x{k} matrix")));
        }
        for (i, row) in m.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < lo || v > hi {
                    return Err(Error::Config(format!(
                        "{what}[{i}][{j}] = {v} out of range [{lo},{hi}]"
                    )));
                }
                if (v - m[j][i]).abs() > 1e-12 {
                    return Err(Error::Config(format!("{what} must be symmetric")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self, n_types: usize) -> Result<()> {
        match self {
            EdgeModelSpec::Static { prob0 } => {
                Self::check_matrix(prob0, n_types, "prob0", 0.0, 1.0)
            }
            EdgeModelSpec::Markov { prob0, lambda, mu } => {
                Self::check_matrix(prob0, n_types, "prob0", 0.0, 1.0)?;
                Self::check_matrix(lambda, n_types, "lambda", 0.0, f64::INFINITY)?;
                Self::check_matrix(mu, n_types, "mu", 0.0, f64::INFINITY)?;
                let all_pos = lambda
                    .iter()
                    .chain(mu.iter())
                    .flatten()
                    .all(|&r| r > 0.0);
                if !all_pos {
                    return Err(Error::Config("markov rates must be positive".into()));
                }
                Ok(())
            }
        }
    }
}

/// A full scenario: everything needed to reproduce one simulation study.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_vertices: usize,
    pub dimension: usize,
    pub membership: MembershipSpec,
    pub drift: KernelRef,
    pub diffusion: KernelRef,
    pub edge_model: EdgeModelSpec,
    pub horizon: f64,
    pub steps: usize,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub initial_law: InitialLaw,
    #[serde(default)]
    pub output_dir: Option<String>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon <= 0.0 || !self.horizon.is_finite() {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("step count must be ≥ 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replication count must be ≥ 1".into()));
        }
        if self.dimension == 0 {
            return Err(Error::Config("dimension must be ≥ 1".into()));
        }
        let membership = build_membership(&self.membership, self.n_vertices)?;
        self.edge_model.validate(membership.n_types())?;
        self.kernels()?;
        Ok(())
    }

    pub fn membership_map(&self) -> Result<MembershipMap> {
        build_membership(&self.membership, self.n_vertices)
    }

    pub fn kernels(&self) -> Result<KernelSet> {
        let membership = self.membership_map()?;
        let drift = drift_registry_lookup(&self.drift.name, &self.drift.params)?;
        let diffusion = diffusion_registry_lookup(&self.diffusion.name, &self.diffusion.params)?;
        KernelSet::uniform(drift, diffusion, membership.n_types(), self.dimension)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Grid times 0 = t_0 < ... < t_M = T.
    pub fn grid(&self) -> Vec<f64> {
        let dt = self.horizon / self.steps as f64;
        (0..=self.steps).map(|m| m as f64 * dt).collect()
    }
}
