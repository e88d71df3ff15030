//! Python bindings: scenario configuration, simulation, and the main
//! estimator/oracle entry points, exchanged as JSON strings and plain
//! lists to keep the surface small.

use graphmf::config::ScenarioConfig;
use graphmf::{graph, oracles, particles};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: graphmf::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A scenario plus deterministic simulation entry points.
#[pyclass]
struct Scenario {
    config: ScenarioConfig,
}

#[pymethods]
impl Scenario {
    /// Parses and validates a scenario from its JSON document.
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        let config = ScenarioConfig::from_json(json).map_err(err)?;
        config.validate().map_err(err)?;
        Ok(Self { config })
    }

    fn to_json(&self) -> PyResult<String> {
        self.config.to_json().map_err(err)
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.config.n_vertices
    }

    #[getter]
    fn steps(&self) -> usize {
        self.config.steps
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn grid(&self) -> Vec<f64> {
        self.config.grid()
    }

    /// Uniform lower bound on the edge probability over the horizon.
    fn pbar(&self) -> PyResult<f64> {
        graph::pbar(&self.config.edge_model, self.config.horizon).map_err(err)
    }

    /// Simulates one replication of the interacting system. Returns the
    /// flat trajectory array, time-major: z[t][i][k] at
    /// index t*n*dim + i*dim + k, with steps+1 time rows.
    fn simulate(&self, rep: u64) -> PyResult<Vec<f64>> {
        let e = particles::simulate_interacting(&self.config, rep).map_err(err)?;
        Ok(e.z)
    }

    /// Simulates one coupled replication: (z, x) flat arrays sharing
    /// Brownian increments and initial points.
    fn simulate_coupled(&self, rep: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let e = particles::simulate_coupled(&self.config, rep).map_err(err)?;
        let x = e.x.clone().expect("coupled run retains the limit system");
        Ok((e.z, x))
    }

    /// Terminal coupling error sup_i |Z_T^i − X_T^i|² for one replication.
    fn coupling_error(&self, rep: u64) -> PyResult<f64> {
        let e = particles::simulate_coupled(&self.config, rep).map_err(err)?;
        let t = e.steps();
        let x = e.x.as_ref().expect("coupled run retains the limit system");
        let row = e.n * e.dim;
        let mut worst = 0.0f64;
        for i in 0..e.n {
            let mut d2 = 0.0;
            for k in 0..e.dim {
                let idx = t * row + i * e.dim + k;
                let diff = e.z[idx] - x[idx];
                d2 += diff * diff;
            }
            worst = worst.max(d2);
        }
        Ok(worst)
    }
}

/// E[1/(X+1)] for X ~ Binomial(n, p), exact closed form.
#[pyfunction]
fn binomial_inverse_moment(n: u64, p: f64) -> PyResult<f64> {
    oracles::binomial_inverse_moment(n, p).map_err(err)
}

/// Central binomial tail bound check: (threshold, bound) for the
/// degree concentration inequality at level k.
#[pyfunction]
fn degree_tail_threshold(n: u64, k: f64) -> f64 {
    oracles::degree_tail_threshold(n, k)
}

/// Names understood by the kernel registry.
#[pyfunction]
fn kernel_names() -> Vec<String> {
    graphmf::config::drift_registry_names()
        .iter()
        .chain(graphmf::config::diffusion_registry_names())
        .map(|s| s.to_string())
        .collect()
}

#[pymodule]
fn graphmf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(binomial_inverse_moment, m)?)?;
    m.add_function(wrap_pyfunction!(degree_tail_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_names, m)?)?;
    Ok(())
}
