//! Pair-kernel machinery for the fluctuation analysis: the centered
//! drift kernel b̄_t, the Itô pair kernel h and its symmetrization, the
//! quadratic kernels m_t and l, the variance profile λ_t, and the
//! Nyström resolvent solve.
//!
//! Every registry drift kernel acts componentwise and factors as a
//! short sum b̄(x,y) = Σ_f c_f g_f(x_k) e_f(y_k) (the sine kernel via
//! the angle-difference identity). All pair statistics then reduce to
//! low-rank matrix products over per-path feature tables, which keeps
//! the R×R caches and the per-replication functionals tractable.

use crate::config::DriftKernel;
use crate::error::{Error, Result};
use crate::particles::PathEnsemble;
use nalgebra::DMatrix;

/// Scalar basis functions used by kernel factorizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Basis {
    One,
    Id,
    Sin,
    Cos,
    Tanh,
    Clamp(f64),
}

impl Basis {
    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        match *self {
            Basis::One => 1.0,
            Basis::Id => v,
            Basis::Sin => v.sin(),
            Basis::Cos => v.cos(),
            Basis::Tanh => v.tanh(),
            Basis::Clamp(b) => v.clamp(-b, b),
        }
    }
}

/// One term of a separable kernel: c · g(x_k) · e(y_k).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorTerm {
    pub coef: f64,
    pub g: Basis,
    pub e: Basis,
}

/// Separable form of a componentwise pairwise kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub terms: Vec<FactorTerm>,
}

impl Factorization {
    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    /// Direct evaluation of one component; reference for tests.
    pub fn eval_component(&self, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * t.g.eval(x) * t.e.eval(y))
            .sum()
    }
}

/// Exact separable factorization of a registry drift kernel.
pub fn factorization(kernel: DriftKernel) -> Factorization {
    let terms = match kernel {
        DriftKernel::Zero => vec![],
        DriftKernel::Constant(a) => vec![FactorTerm {
            coef: a,
            g: Basis::One,
            e: Basis::One,
        }],
        DriftKernel::XOnlyTanh(a) => vec![FactorTerm {
            coef: a,
            g: Basis::Tanh,
            e: Basis::One,
        }],
        // a·sin(y−x) = a·sin(y)cos(x) − a·cos(y)sin(x)
        DriftKernel::SineCoupling(a) => vec![
            FactorTerm {
                coef: a,
                g: Basis::Cos,
                e: Basis::Sin,
            },
            FactorTerm {
                coef: -a,
                g: Basis::Sin,
                e: Basis::Cos,
            },
        ],
        DriftKernel::NeighborMeanClipped(b) => vec![FactorTerm {
            coef: 1.0,
            g: Basis::One,
            e: Basis::Clamp(b),
        }],
        DriftKernel::MeanReversionClipped(b) => vec![FactorTerm {
            coef: -1.0,
            g: Basis::Clamp(b),
            e: Basis::One,
        }],
        DriftKernel::LinearX => vec![FactorTerm {
            coef: 1.0,
            g: Basis::Id,
            e: Basis::One,
        }],
    };
    Factorization { terms }
}

fn marginal_states(ens: &PathEnsemble, t: usize) -> &[f64] {
    // Pair-kernel statistics live on the limit system; fall back to the
    // interacting trajectories when the ensemble was not coupled.
    ens.x_at(t).unwrap_or_else(|| ens.z_at(t))
}

/// Time-indexed marginal statistics of a drift kernel against the limit
/// law proxy: per-step means of the e-features (for centering), Gram
/// means of the g-features (for m_t), centered e-feature covariances,
/// and the variance profile λ_t. All tables are indexed at the left
/// grid endpoints t_0, …, t_{M−1} used by the Itô sums.
#[derive(Debug, Clone)]
pub struct DriftProfile {
    pub factors: Factorization,
    pub dim: usize,
    pub steps: usize,
    pub dt: f64,
    /// ebar[(t·d + k)·q + f]: marginal mean of e_f at (t, coord k).
    ebar: Vec<f64>,
    /// gram[((t·d + k)·q + f)·q + f']: marginal mean of g_f·g_f'.
    gram: Vec<f64>,
    /// λ_t = ∬‖b̄_t‖² dμ̂_t dμ̂_t per step.
    pub lambda: Vec<f64>,
}

/// Builds the marginal profile of a kernel from a reference sample of
/// limit paths.
pub fn drift_profile(kernel: DriftKernel, marginal: &PathEnsemble) -> Result<DriftProfile> {
    let factors = factorization(kernel);
    let q = factors.rank();
    let d = marginal.dim;
    let m_steps = marginal.steps();
    let n = marginal.n;
    if n == 0 {
        return Err(Error::Estimator("empty marginal sample".into()));
    }
    let dt = marginal.grid[1] - marginal.grid[0];
    let mut ebar = vec![0.0; m_steps * d * q];
    let mut gram = vec![0.0; m_steps * d * q * q];
    let mut lambda = vec![0.0; m_steps];
    // Centered e-feature covariances, needed only for λ_t.
    let mut ecov = vec![0.0; q * q];
    let inv_n = 1.0 / n as f64;
    let mut evals = vec![0.0; q];
    let mut gvals = vec![0.0; q];
    for t in 0..m_steps {
        let states = marginal_states(marginal, t);
        for k in 0..d {
            let base = (t * d + k) * q;
            // First pass: feature means and g-Gram.
            for i in 0..n {
                let v = states[i * d + k];
                for (f, term) in factors.terms.iter().enumerate() {
                    evals[f] = term.e.eval(v);
                    gvals[f] = term.g.eval(v);
                }
                for f in 0..q {
                    ebar[base + f] += evals[f] * inv_n;
                    for f2 in 0..q {
                        gram[(base + f) * q + f2] += gvals[f] * gvals[f2] * inv_n;
                    }
                }
            }
            // Second pass: centered e-feature covariance.
            ecov.fill(0.0);
            for i in 0..n {
                let v = states[i * d + k];
                for (f, term) in factors.terms.iter().enumerate() {
                    evals[f] = term.e.eval(v) - ebar[base + f];
                }
                for f in 0..q {
                    for f2 in 0..q {
                        ecov[f * q + f2] += evals[f] * evals[f2] * inv_n;
                    }
                }
            }
            // λ_t component: Σ_{f,f'} c_f c_f' ⟨g_f g_f'⟩ ⟨ẽ_f ẽ_f'⟩.
            for f in 0..q {
                for f2 in 0..q {
                    lambda[t] += factors.terms[f].coef
                        * factors.terms[f2].coef
                        * gram[(base + f) * q + f2]
                        * ecov[f * q + f2];
                }
            }
        }
    }
    Ok(DriftProfile {
        factors,
        dim: d,
        steps: m_steps,
        dt,
        ebar,
        gram,
        lambda,
    })
}

impl DriftProfile {
    pub fn rank(&self) -> usize {
        self.factors.rank()
    }

    /// ∫λ_t dt by the left-point rule on the shared grid.
    pub fn lambda_integral(&self) -> f64 {
        self.lambda.iter().sum::<f64>() * self.dt
    }

    /// Marginal mean of e_f at (step, coord).
    #[inline]
    pub fn ebar_at(&self, t: usize, k: usize, f: usize) -> f64 {
        self.ebar[(t * self.dim + k) * self.rank() + f]
    }

    /// Centered kernel b̄_t(x, y), written into `out`.
    pub fn bbar_t(&self, t: usize, x: &[f64], y: &[f64], out: &mut [f64]) {
        let q = self.rank();
        for k in 0..self.dim {
            let base = (t * self.dim + k) * q;
            let mut acc = 0.0;
            for (f, term) in self.factors.terms.iter().enumerate() {
                acc += term.coef * term.g.eval(x[k]) * (term.e.eval(y[k]) - self.ebar[base + f]);
            }
            out[k] = acc;
        }
    }

    /// Quadratic kernel m_t(x, y) = ∫ b̄_t(z,x)·b̄_t(z,y) μ̂_t(dz).
    pub fn m_t(&self, t: usize, x: &[f64], y: &[f64]) -> f64 {
        let q = self.rank();
        let mut acc = 0.0;
        for k in 0..self.dim {
            let base = (t * self.dim + k) * q;
            for (f, tf) in self.factors.terms.iter().enumerate() {
                let ex = tf.e.eval(x[k]) - self.ebar[base + f];
                for (f2, tf2) in self.factors.terms.iter().enumerate() {
                    let ey = tf2.e.eval(y[k]) - self.ebar[base + f2];
                    acc += tf.coef * tf2.coef * self.gram[(base + f) * q + f2] * ex * ey;
                }
            }
        }
        acc
    }

    /// Σ_{j≠k} m_t(x_j, x_k) over a state slice, via feature block
    /// aggregates (O(n) in the number of states).
    pub fn m_t_offdiagonal_sum(&self, t: usize, states: &[f64]) -> f64 {
        let q = self.rank();
        let d = self.dim;
        let n = states.len() / d;
        let mut acc = 0.0;
        let mut s = vec![0.0; q];
        let mut diag = vec![0.0; q * q];
        let mut ec = vec![0.0; q];
        for k in 0..d {
            let base = (t * d + k) * q;
            s.fill(0.0);
            diag.fill(0.0);
            for i in 0..n {
                let v = states[i * d + k];
                for (f, term) in self.factors.terms.iter().enumerate() {
                    ec[f] = term.e.eval(v) - self.ebar[base + f];
                }
                for f in 0..q {
                    s[f] += ec[f];
                    for f2 in 0..q {
                        diag[f * q + f2] += ec[f] * ec[f2];
                    }
                }
            }
            for f in 0..q {
                for f2 in 0..q {
                    acc += self.factors.terms[f].coef
                        * self.factors.terms[f2].coef
                        * self.gram[(base + f) * q + f2]
                        * (s[f] * s[f2] - diag[f * q + f2]);
                }
            }
        }
        acc
    }

    fn check_grid(&self, ens: &PathEnsemble) -> Result<()> {
        if ens.steps() != self.steps || (ens.grid[1] - ens.grid[0] - self.dt).abs() > 1e-12 {
            return Err(Error::Estimator("ensemble grid does not match the profile grid".into()));
        }
        if ens.dim != self.dim {
            return Err(Error::Estimator("ensemble dimension does not match the profile".into()));
        }
        Ok(())
    }

    /// Feature table ẽ_f(x_i(t,k)) over an ensemble's limit paths,
    /// laid out as an n × (steps·dim·q) matrix.
    pub(crate) fn e_centered_table(&self, ens: &PathEnsemble) -> Result<DMatrix<f64>> {
        self.check_grid(ens)?;
        let q = self.rank();
        let cols = self.steps * self.dim * q;
        let mut m = DMatrix::zeros(ens.n, cols);
        for t in 0..self.steps {
            let states = marginal_states(ens, t);
            for i in 0..ens.n {
                for k in 0..self.dim {
                    let v = states[i * self.dim + k];
                    let base = (t * self.dim + k) * q;
                    for (f, term) in self.factors.terms.iter().enumerate() {
                        m[(i, base + f)] = term.e.eval(v) - self.ebar[base + f];
                    }
                }
            }
        }
        Ok(m)
    }

    /// Feature table c_f·g_f(x_i(t,k))·ΔW_i(t,k), same layout; the left
    /// factor of the Itô pair kernel h.
    pub(crate) fn g_dw_table(&self, ens: &PathEnsemble) -> Result<DMatrix<f64>> {
        self.check_grid(ens)?;
        let q = self.rank();
        let cols = self.steps * self.dim * q;
        let mut m = DMatrix::zeros(ens.n, cols);
        for t in 0..self.steps {
            let states = marginal_states(ens, t);
            let dw = ens.dw_at(t);
            for i in 0..ens.n {
                for k in 0..self.dim {
                    let v = states[i * self.dim + k];
                    let w = dw[i * self.dim + k];
                    let base = (t * self.dim + k) * q;
                    for (f, term) in self.factors.terms.iter().enumerate() {
                        m[(i, base + f)] = term.coef * term.g.eval(v) * w;
                    }
                }
            }
        }
        Ok(m)
    }
}

/// Sample-level pair kernels over R limit paths.
#[derive(Debug, Clone)]
pub struct PairKernelCache {
    pub r: usize,
    pub dt: f64,
    /// h[r, s] = h(ω_r, ω_s), the Itô pair kernel.
    pub h: DMatrix<f64>,
    /// (h + hᵀ)/2.
    pub h_sym: DMatrix<f64>,
    /// l[r, s] = ∫ m_s(X_r, X_s) ds; symmetric.
    pub l: DMatrix<f64>,
    /// λ_t table copied from the profile.
    pub lambda: Vec<f64>,
}

/// Builds the pair-kernel cache for a sample of limit paths against a
/// marginal profile on the same grid.
pub fn pair_kernels(sample: &PathEnsemble, profile: &DriftProfile) -> Result<PairKernelCache> {
    let a = profile.g_dw_table(sample)?;
    let b = profile.e_centered_table(sample)?;
    let h = &a * b.transpose();
    let h_sym = (&h + h.transpose()) * 0.5;

    // l = C·Dᵀ with D the Gram-contracted, dt-weighted feature table.
    let q = profile.rank();
    let d = profile.dim;
    let mut dmat = DMatrix::zeros(sample.n, profile.steps * d * q);
    for t in 0..profile.steps {
        for k in 0..d {
            let base = (t * d + k) * q;
            for s in 0..sample.n {
                for f in 0..q {
                    let mut acc = 0.0;
                    for f2 in 0..q {
                        acc += profile.factors.terms[f].coef
                            * profile.factors.terms[f2].coef
                            * profile.gram[(base + f) * q + f2]
                            * b[(s, base + f2)];
                    }
                    dmat[(s, base + f)] = acc * profile.dt;
                }
            }
        }
    }
    let l_raw = &b * dmat.transpose();
    // Symmetric in exact arithmetic; enforce against rounding.
    let l = (&l_raw + l_raw.transpose()) * 0.5;
    Ok(PairKernelCache {
        r: sample.n,
        dt: profile.dt,
        h,
        h_sym,
        l,
        lambda: profile.lambda.clone(),
    })
}

/// Variance targets from a λ_t table and an edge probability path:
/// ∫λ_t dt and σ² = ∫ (1−p(t))/p(t) · λ_t dt.
#[derive(Debug, Clone)]
pub struct VarianceTargets {
    pub lambda: Vec<f64>,
    pub lambda_integral: f64,
    pub sigma_sq: f64,
}

pub fn variance_targets(lambda: &[f64], dt: f64, p_steps: &[f64]) -> Result<VarianceTargets> {
    if p_steps.len() != lambda.len() {
        return Err(Error::Estimator("edge probability table length mismatch".into()));
    }
    let mut sigma_sq = 0.0;
    for (l, &p) in lambda.iter().zip(p_steps) {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Estimator(format!(
                "σ² needs edge probabilities in (0,1], got {p}"
            )));
        }
        sigma_sq += (1.0 - p) / p * l * dt;
    }
    Ok(VarianceTargets {
        lambda: lambda.to_vec(),
        lambda_integral: lambda.iter().sum::<f64>() * dt,
        sigma_sq,
    })
}

/// Nyström estimate of the limit covariance
/// ⟨(I−A)⁻¹φ̄, (I−A)⁻¹ψ̄⟩ where A acts by Af(ω) = ∫h(ω′,ω)f(ω′)ν(dω′).
/// At sample level A ≈ Hᵀ/R, so (I − Hᵀ/R)u = φ̄ is solved directly
/// (invertibility of I−A is analytic; no spectral-radius bound exists,
/// so a Neumann series would be unsafe). Returns (1/R)·u·v.
pub fn nystrom_covariance(cache: &PairKernelCache, phi: &[f64], psi: &[f64]) -> Result<f64> {
    let r = cache.r;
    if phi.len() != r || psi.len() != r {
        return Err(Error::Estimator("test-function vector length mismatch".into()));
    }
    let mut m = DMatrix::identity(r, r);
    m -= cache.h.transpose() / r as f64;
    let lu = m.lu();
    // Condition proxy from the LU pivot spread.
    let diag = lu.u().diagonal();
    let max_p = diag.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min_p = diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if !(min_p > max_p * 1e-12) {
        return Err(Error::NearSingular {
            cond: if min_p > 0.0 { max_p / min_p } else { f64::INFINITY },
        });
    }
    let u = lu
        .solve(&nalgebra::DVector::from_column_slice(phi))
        .ok_or(Error::NearSingular { cond: f64::INFINITY })?;
    let v = lu
        .solve(&nalgebra::DVector::from_column_slice(psi))
        .ok_or(Error::NearSingular { cond: f64::INFINITY })?;
    Ok(u.dot(&v) / r as f64)
}
