//! Exact closed forms and brute-force verifiers for the combinatorial
//! preliminaries: inverse moments of binomial variables, normalized
//! neighbor-sum second moments, and degree concentration tails. These
//! double as unit-test oracles for the estimators and as standalone
//! diagnostics in the report.

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use rand::Rng;
use rand_distr::{Binomial, Distribution};

/// Number of trials and success probability of a binomial variable.
#[derive(Debug, Clone, Copy)]
pub struct BinomialSpec {
    pub n: u64,
    pub p: f64,
}

impl BinomialSpec {
    pub fn new(n: u64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("binomial p out of [0,1]: {p}")));
        }
        Ok(Self { n, p })
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    /// Full pmf, exact up to rounding (point mass at 0 or n when
    /// degenerate). pmf[k] = P(X = k).
    pub fn pmf(&self) -> Vec<f64> {
        let n = self.n as usize;
        let mut pmf = vec![0.0; n + 1];
        if self.p == 0.0 {
            pmf[0] = 1.0;
        } else if self.p == 1.0 {
            pmf[n] = 1.0;
        } else {
            // Multiplicative recurrence from q^n; stable for desk-scale n.
            let ratio = self.p / self.q();
            pmf[0] = self.q().powi(self.n as i32);
            for k in 0..n {
                pmf[k + 1] = pmf[k] * ratio * (n - k) as f64 / (k + 1) as f64;
            }
        }
        pmf
    }
}

/// Whether an inverse-moment value is the exact expectation or a
/// proven upper bound on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InverseMomentValue {
    Exact(f64),
    UpperBound(f64),
}

impl InverseMomentValue {
    pub fn value(&self) -> f64 {
        match *self {
            InverseMomentValue::Exact(v) | InverseMomentValue::UpperBound(v) => v,
        }
    }
}

/// E[1/(X+1)] for X ~ Binomial(n, p): (1 − q^{n+1})/((n+1)p), defined
/// by continuity as 1 at p = 0.
pub fn binomial_inverse_moment(n: u64, p: f64) -> Result<f64> {
    let spec = BinomialSpec::new(n, p)?;
    if p == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - spec.q().powi(n as i32 + 1)) / ((n + 1) as f64 * p))
}

/// Inverse moments E[1/(X+shift)^power] of X ~ Binomial(n, p): the
/// exact closed form when shift = power = 1, otherwise the tightest of
/// the proven upper bounds
///   E[1/(X+m)]      ≤ (1 − q^{n+1})/((n+m)p),
///   E[1/(X+1)^m]    ≤ m^m/((n+1)^m p^m),
/// combined via 1/(X+m)^r ≤ 1/(X+1)^r for the mixed case. Degenerate
/// p = 0 values are continuity limits (∞ where the bound blows up).
pub fn binomial_inverse_moment_bound(
    spec: BinomialSpec,
    shift: u64,
    power: u32,
) -> Result<InverseMomentValue> {
    if shift < 1 || power < 1 {
        return Err(Error::Config("inverse moment needs shift ≥ 1, power ≥ 1".into()));
    }
    let (n, p, q) = (spec.n, spec.p, spec.q());
    if shift == 1 && power == 1 {
        return Ok(InverseMomentValue::Exact(binomial_inverse_moment(n, p)?));
    }
    if power == 1 {
        let m = shift as f64;
        let v = if p == 0.0 {
            (n as f64 + 1.0) / (n as f64 + m)
        } else {
            (1.0 - q.powi(n as i32 + 1)) / ((n as f64 + m) * p)
        };
        return Ok(InverseMomentValue::UpperBound(v));
    }
    let m = power as f64;
    let v = if p == 0.0 {
        f64::INFINITY
    } else {
        m.powf(m) / ((n as f64 + 1.0).powf(m) * p.powf(m))
    };
    Ok(InverseMomentValue::UpperBound(v))
}

/// Exact E[1/(X+shift)^power] by pmf enumeration; companion cross-check
/// for the closed form and the bounds.
pub fn binomial_inverse_moment_enumerated(spec: BinomialSpec, shift: u64, power: u32) -> f64 {
    spec.pmf()
        .iter()
        .enumerate()
        .map(|(k, &w)| w / ((k as u64 + shift) as f64).powi(power as i32))
        .sum()
}

/// One inequality check: an empirical mean against its analytic upper
/// bound, with the Monte Carlo standard error of the mean.
#[derive(Debug, Clone)]
pub struct BoundCheck {
    pub label: String,
    pub empirical: f64,
    pub bound: f64,
    pub std_error: f64,
}

impl BoundCheck {
    /// One-sided test: the bound is an inequality, so the pass region
    /// is [0, bound + 3 SE].
    pub fn passes(&self) -> bool {
        self.empirical <= self.bound + 3.0 * self.std_error
    }

    pub fn margin(&self) -> f64 {
        self.bound + 3.0 * self.std_error - self.empirical
    }
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let r = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / r;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Monte Carlo verification of the normalized neighbor-sum second
/// moments. Simulates the Bernoulli edge array ζ and checks
///   E(Σ_{k∈𝒩_α} N_γ ζ_{k i_γ} / (N_α N_{k,γ}) 1{N_{k,γ}>0} − 1)²
///     ≤ 4/(N_α p) + 2 e^{−N_γ p}        (cross-type, α ≠ γ)
///   E(Σ_{k∈𝒩_α} ζ_{k i_α} / N_{k,α} − 1)² ≤ 3/(N_α p)   (own type)
/// against the Monte Carlo means plus 3 standard errors.
pub fn neighbor_sum_checks(
    n_alpha: usize,
    n_gamma: usize,
    p: f64,
    replications: usize,
    seed: u64,
) -> Result<Vec<BoundCheck>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!("neighbor_sum_checks needs p in (0,1], got {p}")));
    }
    if n_alpha < 2 || n_gamma < 2 || replications < 2 {
        return Err(Error::Config("neighbor_sum_checks needs counts ≥ 2".into()));
    }
    let mut cross = Vec::with_capacity(replications);
    let mut own = Vec::with_capacity(replications);
    for rep in 0..replications {
        let mut stream = rng::substream(seed, &[tag::ORACLE, 1, rep as u64]);
        // Cross-type statistic: ζ_{kj} for k ∈ 𝒩_α, j ∈ 𝒩_γ, tagged
        // vertex i_γ = 0 in the γ block; no self-loops apply.
        let mut sum = 0.0;
        for _k in 0..n_alpha {
            let mut deg = 0usize;
            let mut zeta0 = false;
            for j in 0..n_gamma {
                if stream.gen::<f64>() < p {
                    deg += 1;
                    if j == 0 {
                        zeta0 = true;
                    }
                }
            }
            if zeta0 {
                sum += n_gamma as f64 / (n_alpha as f64 * deg as f64);
            }
        }
        cross.push((sum - 1.0) * (sum - 1.0));

        // Own-type statistic: symmetric ζ on 𝒩_α with ζ_ii ≡ 1, tagged
        // vertex i_α = 0; N_{k,α} counts the self-loop, so ≥ 1.
        let mut edges = vec![false; n_alpha * n_alpha];
        for i in 0..n_alpha {
            edges[i * n_alpha + i] = true;
            for j in (i + 1)..n_alpha {
                let on = stream.gen::<f64>() < p;
                edges[i * n_alpha + j] = on;
                edges[j * n_alpha + i] = on;
            }
        }
        let mut sum = 0.0;
        for k in 0..n_alpha {
            if edges[k * n_alpha] {
                let deg = edges[k * n_alpha..(k + 1) * n_alpha]
                    .iter()
                    .filter(|&&e| e)
                    .count();
                sum += 1.0 / deg as f64;
            }
        }
        own.push((sum - 1.0) * (sum - 1.0));
    }
    let (cross_mean, cross_se) = mean_and_se(&cross);
    let (own_mean, own_se) = mean_and_se(&own);
    Ok(vec![
        BoundCheck {
            label: "cross_type_neighbor_sum".into(),
            empirical: cross_mean,
            bound: 4.0 / (n_alpha as f64 * p) + 2.0 * (-(n_gamma as f64) * p).exp(),
            std_error: cross_se,
        },
        BoundCheck {
            label: "own_type_neighbor_sum".into(),
            empirical: own_mean,
            bound: 3.0 / (n_alpha as f64 * p),
            std_error: own_se,
        },
    ])
}

/// Concentration radius C_N(k) = √(k(N−1)log N) for the degree tail.
pub fn degree_tail_threshold(n: u64, k: f64) -> f64 {
    (k * (n as f64 - 1.0) * (n as f64).ln()).sqrt()
}

/// Monte Carlo verification of the degree tail bound: with
/// Y = 1 + Binomial(N−1, p), checks the exceedance frequency of
/// |Y − Np| > C_N(k) + 1 against 2/N^{2k} plus 3 standard errors.
pub fn degree_tail_check(
    n: u64,
    p: f64,
    k: f64,
    replications: usize,
    seed: u64,
) -> Result<BoundCheck> {
    if k <= 0.0 {
        return Err(Error::Config(format!("degree tail needs k > 0, got {k}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("degree tail p out of [0,1]: {p}")));
    }
    let threshold = degree_tail_threshold(n, k) + 1.0;
    let binom = Binomial::new(n - 1, p).map_err(|e| Error::Config(e.to_string()))?;
    let mut stream = rng::substream(seed, &[tag::ORACLE, 2]);
    let mut exceed = 0usize;
    for _ in 0..replications {
        let y = 1.0 + binom.sample(&mut stream) as f64;
        if (y - n as f64 * p).abs() > threshold {
            exceed += 1;
        }
    }
    let freq = exceed as f64 / replications as f64;
    let bound = 2.0 / (n as f64).powf(2.0 * k);
    // Standard error at the bound level (binomial proportion); use the
    // larger of the two so a zero empirical count does not zero the band.
    let se_emp = (freq * (1.0 - freq) / replications as f64).sqrt();
    let se_bound = (bound * (1.0 - bound) / replications as f64).sqrt();
    Ok(BoundCheck {
        label: "degree_tail".into(),
        empirical: freq,
        bound,
        std_error: se_emp.max(se_bound),
    })
}
