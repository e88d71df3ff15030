//! Statistical functionals over simulated ensembles: coupling errors
//! and rate tables, bounded-Lipschitz surrogate distances, chaos
//! correlations, fluctuation fields, symmetric statistics and multiple
//! Wiener integrals, plus the pair-kernel / change-of-measure machinery
//! in the submodules.

mod girsanov;
mod pairs;

pub use girsanov::{edge_probability_steps, girsanov_functionals, incomplete_u, EdgeReplay, GirsanovSample};
pub use pairs::{
    drift_profile, factorization, nystrom_covariance, pair_kernels, variance_targets,
    Basis, DriftProfile, FactorTerm, Factorization, PairKernelCache, VarianceTargets,
};

use crate::error::{Error, Result};
use crate::particles::{EmpiricalMeasure, PathEnsemble};

/// Which trajectory family of a coupled ensemble to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Interacting,
    Limit,
}

fn component_states<'a>(ens: &'a PathEnsemble, comp: Component, t: usize) -> Result<&'a [f64]> {
    match comp {
        Component::Interacting => Ok(ens.z_at(t)),
        Component::Limit => ens
            .x_at(t)
            .ok_or_else(|| Error::Estimator("ensemble has no limit-system trajectories".into())),
    }
}

/// Registry of scalar path functionals φ: path ↦ ℝ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathFunctional {
    /// Coordinate of the terminal state.
    TerminalCoordinate { coord: usize },
    /// Time average of a coordinate over the grid (left endpoints).
    TimeAveragedCoordinate { coord: usize },
    /// tanh of a terminal coordinate; bounded transform.
    BoundedTerminal { coord: usize },
}

/// A path functional with an optional centering constant. Centering
/// subtracts the empirical mean over a reference sample so that
/// ⟨φ, μ̂⟩ = 0 exactly on that sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub functional: PathFunctional,
    center: f64,
    centered: bool,
}

pub fn test_function_names() -> &'static [&'static str] {
    &["terminal_coordinate", "time_averaged_coordinate", "bounded_terminal"]
}

pub fn test_function_lookup(name: &str, params: &[f64]) -> Result<TestFunction> {
    let coord = match params {
        [] => 0usize,
        [c] if *c >= 0.0 && c.fract() == 0.0 => *c as usize,
        _ => {
            return Err(Error::Config(format!(
                "test function '{name}' takes at most one integer coordinate parameter"
            )))
        }
    };
    let functional = match name {
        "terminal_coordinate" => PathFunctional::TerminalCoordinate { coord },
        "time_averaged_coordinate" => PathFunctional::TimeAveragedCoordinate { coord },
        "bounded_terminal" => PathFunctional::BoundedTerminal { coord },
        other => return Err(Error::UnknownRegistryEntry(other.into())),
    };
    Ok(TestFunction {
        functional,
        center: 0.0,
        centered: false,
    })
}

impl TestFunction {
    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Raw (uncentered) value on particle i of the given component.
    pub fn raw(&self, ens: &PathEnsemble, comp: Component, i: usize) -> Result<f64> {
        let d = ens.dim;
        let m = ens.steps();
        Ok(match self.functional {
            PathFunctional::TerminalCoordinate { coord } => component_states(ens, comp, m)?[i * d + coord],
            PathFunctional::BoundedTerminal { coord } => {
                component_states(ens, comp, m)?[i * d + coord].tanh()
            }
            PathFunctional::TimeAveragedCoordinate { coord } => {
                let mut acc = 0.0;
                for t in 0..m {
                    acc += component_states(ens, comp, t)?[i * d + coord];
                }
                acc / m as f64
            }
        })
    }

    pub fn eval(&self, ens: &PathEnsemble, comp: Component, i: usize) -> Result<f64> {
        Ok(self.raw(ens, comp, i)? - self.center)
    }

    /// Centers against a reference sample: subsequent evaluations have
    /// empirical mean zero on that sample.
    pub fn center_on(&mut self, reference: &PathEnsemble, comp: Component) -> Result<()> {
        let mut acc = 0.0;
        for i in 0..reference.n {
            acc += self.raw(reference, comp, i)?;
        }
        self.center = acc / reference.n as f64;
        self.centered = true;
        Ok(())
    }

    /// Centers with an explicitly supplied constant.
    pub fn center_at(&mut self, center: f64) {
        self.center = center;
        self.centered = true;
    }
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 {
        0.0
    } else {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    };
    (mean, var)
}

/// Pathwise coupling discrepancy of a coupled ensemble.
#[derive(Debug, Clone)]
pub struct CouplingError {
    /// sup over the grid of ‖Z^i_t − X^i_t‖², per particle.
    pub per_particle_sup_sq: Vec<f64>,
    pub mean_sup_sq: f64,
    /// First-moment variant: mean over i of sup_t ‖Z^i_t − X^i_t‖.
    pub mean_sup: f64,
}

pub fn coupling_error(ens: &PathEnsemble) -> Result<CouplingError> {
    let x = ens
        .x
        .as_ref()
        .ok_or_else(|| Error::Estimator("coupling error needs limit trajectories".into()))?;
    let (n, d) = (ens.n, ens.dim);
    let mut sup_sq = vec![0.0f64; n];
    for t in 0..=ens.steps() {
        let base = t * n * d;
        for (i, s) in sup_sq.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..d {
                let diff = ens.z[base + i * d + k] - x[base + i * d + k];
                acc += diff * diff;
            }
            *s = s.max(acc);
        }
    }
    let mean_sup_sq = sup_sq.iter().sum::<f64>() / n as f64;
    let mean_sup = sup_sq.iter().map(|s| s.sqrt()).sum::<f64>() / n as f64;
    Ok(CouplingError {
        per_particle_sup_sq: sup_sq,
        mean_sup_sq,
        mean_sup,
    })
}

#[derive(Debug, Clone)]
pub struct LlnRow {
    /// N̄p̄_N for the row.
    pub scale: f64,
    pub error: f64,
    /// √(N̄p̄_N) · error.
    pub scaled: f64,
}

#[derive(Debug, Clone)]
pub struct LlnRateTable {
    pub rows: Vec<LlnRow>,
    /// Least-squares slope of log(error) against log(scale).
    pub slope: f64,
    /// Rows excluded because the error sat at or below the machine floor.
    pub excluded: usize,
}

/// Rate table over (N̄p̄_N, error) entries. The error column is
/// whatever moment the caller supplies; the slope and the √-scaling are
/// computed on it as given.
pub fn lln_rate_table(entries: &[(f64, f64)]) -> Result<LlnRateTable> {
    if entries.len() < 3 {
        return Err(Error::Estimator("rate table needs at least 3 entries".into()));
    }
    for w in entries.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::Estimator("rate table scales must be increasing".into()));
        }
    }
    const FLOOR: f64 = 1e-300;
    let mut rows = Vec::with_capacity(entries.len());
    let mut pts = Vec::new();
    let mut excluded = 0usize;
    for &(scale, error) in entries {
        rows.push(LlnRow {
            scale,
            error,
            scaled: scale.sqrt() * error,
        });
        if error > FLOOR {
            pts.push((scale.ln(), error.ln()));
        } else {
            excluded += 1;
        }
    }
    if pts.len() < 2 {
        return Err(Error::Estimator("too few positive errors for a slope".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(LlnRateTable {
        rows,
        slope: sxy / sxx,
        excluded,
    })
}

/// The fixed test-function dictionary for the bounded-Lipschitz
/// surrogate: all entries have sup-norm ≤ 1 and Lipschitz constant ≤ 1
/// (constant 1, per-coordinate tanh(x−c) for c ∈ {−2,…,2}, sin, cos).
fn dbl_dictionary(dim: usize) -> Vec<Box<dyn Fn(&[f64]) -> f64>> {
    let mut dict: Vec<Box<dyn Fn(&[f64]) -> f64>> = vec![Box::new(|_x: &[f64]| 1.0)];
    for k in 0..dim {
        for c in [-2.0f64, -1.0, 0.0, 1.0, 2.0] {
            dict.push(Box::new(move |x: &[f64]| (x[k] - c).tanh()));
        }
        dict.push(Box::new(move |x: &[f64]| x[k].sin()));
        dict.push(Box::new(move |x: &[f64]| x[k].cos()));
    }
    dict
}

/// Dictionary surrogate for d_BL: max over the fixed dictionary of
/// |⟨f, μ̂₁⟩ − ⟨f, μ̂₂⟩|. A lower bound of the true metric, intended
/// for convergence trends. Zero measures contribute their mass deficit
/// through the constant dictionary entry.
pub fn dbl_surrogate(mu1: &EmpiricalMeasure, mu2: &EmpiricalMeasure) -> Result<f64> {
    let dim = mu1
        .points
        .first()
        .or_else(|| mu2.points.first())
        .map(|p| p.len())
        .unwrap_or(0);
    for p in mu1.points.iter().chain(&mu2.points) {
        if p.len() != dim {
            return Err(Error::Estimator("measure dimensions differ".into()));
        }
    }
    if dim == 0 {
        return Ok((mu1.total_mass() - mu2.total_mass()).abs());
    }
    let mut best = 0.0f64;
    for f in dbl_dictionary(dim) {
        best = best.max((mu1.integrate(&f) - mu2.integrate(&f)).abs());
    }
    Ok(best)
}

/// Values of (φ(Z^{i₁}), ψ(Z^{i₂})) for one replication; the indices
/// must be distinct.
pub fn pair_values(
    ens: &PathEnsemble,
    phi: &TestFunction,
    psi: &TestFunction,
    i1: usize,
    i2: usize,
) -> Result<(f64, f64)> {
    if i1 == i2 {
        return Err(Error::Estimator("cross-covariance indices must differ".into()));
    }
    Ok((
        phi.eval(ens, Component::Interacting, i1)?,
        psi.eval(ens, Component::Interacting, i2)?,
    ))
}

/// Cross-covariance over replications of paired functional values, with
/// the Monte Carlo standard error of the covariance estimate.
pub fn poc_cross_covariance(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.len() < 2 {
        return Err(Error::Estimator("covariance needs at least 2 replications".into()));
    }
    let r = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / r;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / r;
    let prods: Vec<f64> = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).collect();
    let cov = prods.iter().sum::<f64>() / (r - 1.0);
    let (_, var_prod) = mean_var(&prods);
    Ok((cov, (var_prod / r).sqrt()))
}

/// Fluctuation field η^N(φ) = N^{−1/2} Σ_i φ(Z^i). CLT setting only:
/// a single vertex type, and φ centered against a reference sample.
pub fn fluctuation_field(ens: &PathEnsemble, phi: &TestFunction, n_types: usize) -> Result<f64> {
    if n_types != 1 {
        return Err(Error::ModeMismatch(
            "fluctuation field is defined for a single vertex type".into(),
        ));
    }
    if !phi.is_centered() {
        return Err(Error::Estimator("fluctuation field needs a centered test function".into()));
    }
    let mut acc = 0.0;
    for i in 0..ens.n {
        acc += phi.eval(ens, Component::Interacting, i)?;
    }
    Ok(acc / (ens.n as f64).sqrt())
}

/// Symmetric statistic 𝒰^n_k(φ): sum of φ over index combinations
/// i₁ < … < i_k, zero when n < k. Returns the plain sum and the
/// n^{−k/2}-scaled version.
pub fn u_statistic<T>(
    sample: &[T],
    k: usize,
    phi: &mut impl FnMut(&[&T]) -> f64,
) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::Estimator("u-statistic order must be ≥ 1".into()));
    }
    let n = sample.len();
    if n < k {
        return Ok((0.0, 0.0));
    }
    fn recurse<'a, T, F: FnMut(&[&T]) -> f64>(
        sample: &'a [T],
        start: usize,
        chosen: &mut Vec<&'a T>,
        k: usize,
        phi: &mut F,
        acc: &mut f64,
    ) {
        if chosen.len() == k {
            *acc += phi(chosen);
            return;
        }
        let remaining = k - chosen.len();
        for i in start..=(sample.len() - remaining) {
            chosen.push(&sample[i]);
            recurse(sample, i + 1, chosen, k, phi, acc);
            chosen.pop();
        }
    }
    let mut acc = 0.0;
    let mut chosen: Vec<&T> = Vec::with_capacity(k);
    recurse(sample, 0, &mut chosen, k, phi, &mut acc);
    let scaled = acc / (n as f64).powf(k as f64 / 2.0);
    Ok((acc, scaled))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Multiple Wiener integral of the k-fold product kernel:
/// I_k(φ_k^h) = Σ_j (−1)^j C_{k,j} ‖h‖^{2j} I₁^{k−2j} with
/// C_{k,j} = k!/((k−2j)! 2^j j!); I₀ = 1.
pub fn mwi_product(i1: f64, h_norm_sq: f64, k: usize) -> Result<f64> {
    if h_norm_sq < 0.0 {
        return Err(Error::Estimator(format!("negative squared norm {h_norm_sq}")));
    }
    let mut acc = 0.0;
    for j in 0..=(k / 2) {
        let c = factorial(k) / (factorial(k - 2 * j) * 2f64.powi(j as i32) * factorial(j));
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * c * h_norm_sq.powi(j as i32) * i1.powi((k - 2 * j) as i32);
    }
    Ok(acc)
}
