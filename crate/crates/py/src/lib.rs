//! Python bindings for the picker routing engine.
//!
//! Exposes instance generation, the exact solver, the classical heuristics,
//! and greedy decoding of trained policy weights:
//!
//! ```text
//! import picker_rs
//! inst = picker_rs.Instance.generate(5, 30, "normal", seed=7)
//! opt, _ = inst.solve("optimal")
//! length, route = inst.solve("sshape")
//! print(picker_rs.optimality_gap(length, opt))
//! ```

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use picker_core::eval::{optimality_gap as core_gap, Method};
use picker_core::exact::{brute_force_tsp, solve_optimal};
use picker_core::heuristics::{solve_heuristic, HeuristicKind};
use picker_core::policy::{decode, DecodeMode, PolicyParameters};
use picker_core::warehouse::{generate_instance, DistributionMode, GeometrySpec, ProblemClass};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_py_err(err: picker_core::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// One tour step surfaced to Python: (aisle, vertical, horizontal, cost).
type RouteStep = (usize, String, String, i64);

fn parse_mode(mode: &str, sigma_ratio: Option<f64>) -> PyResult<DistributionMode> {
    match mode.to_ascii_lowercase().as_str() {
        "normal" => Ok(match sigma_ratio {
            Some(sigma_ratio) => DistributionMode::Normal { sigma_ratio },
            None => DistributionMode::normal(),
        }),
        "uniform" => Ok(DistributionMode::Uniform),
        other => Err(PyValueError::new_err(format!(
            "unknown distribution {other}; expected normal or uniform"
        ))),
    }
}

/// A pick-list instance in a rectangular warehouse.
#[pyclass]
struct Instance {
    inner: picker_core::Instance,
}

#[pymethods]
impl Instance {
    /// Generate a random instance: `items` distinct picks over `n_aisles`
    /// aisles of 90 slots, normally or uniformly distributed.
    #[staticmethod]
    #[pyo3(signature = (n_aisles, items, mode="normal", seed=0, sigma_ratio=None))]
    fn generate(
        n_aisles: usize,
        items: usize,
        mode: &str,
        seed: u64,
        sigma_ratio: Option<f64>,
    ) -> PyResult<Self> {
        let class = ProblemClass::new(n_aisles, items, parse_mode(mode, sigma_ratio)?);
        let inner = generate_instance(&class, &GeometrySpec::default(), seed).map_err(to_py_err)?;
        Ok(Instance { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Instance {
            inner: picker_core::Instance::load(&path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py_err)
    }

    /// Item locations as (aisle, y) pairs.
    #[getter]
    fn items(&self) -> Vec<(usize, i64)> {
        self.inner.items.iter().map(|l| (l.aisle, l.y)).collect()
    }

    #[getter]
    fn n_aisles(&self) -> usize {
        self.inner.geometry.n_aisles
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Tour length of visiting items in the given order (indices into
    /// `items`), depot to depot.
    fn route_length(&self, order: Vec<usize>) -> PyResult<i64> {
        self.inner.route_length(&order).map_err(to_py_err)
    }

    /// Exact minimum tour length via permutation DP; guarded to 12 items.
    fn brute_force_length(&self) -> PyResult<i64> {
        brute_force_tsp(&self.inner).map_err(to_py_err)
    }

    /// Solve with a method: optimal, sshape, return, largestgap, composite,
    /// or model (which needs `weights`). Returns the tour length and the
    /// route as (aisle, vertical, horizontal, cost) tuples.
    #[pyo3(signature = (method, weights=None))]
    fn solve(&self, method: &str, weights: Option<PathBuf>) -> PyResult<(i64, Vec<RouteStep>)> {
        let method = Method::parse(method).map_err(to_py_err)?;
        let seq = self.inner.aisle_sequence();
        let rollout = match method {
            Method::Optimal => solve_optimal(&self.inner).1,
            Method::SShape => solve_heuristic(HeuristicKind::SShape, &seq),
            Method::Return => solve_heuristic(HeuristicKind::Return, &seq),
            Method::LargestGap => solve_heuristic(HeuristicKind::LargestGap, &seq),
            Method::Composite => solve_heuristic(HeuristicKind::Composite, &seq),
            Method::Model => {
                let path = weights.ok_or_else(|| {
                    PyValueError::new_err("the model method needs a weights path")
                })?;
                let params = PolicyParameters::load(&path).map_err(to_py_err)?;
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                decode(&params, &seq, DecodeMode::Greedy, &mut rng)
            }
        };
        let route = rollout
            .actions
            .iter()
            .zip(&rollout.step_costs)
            .enumerate()
            .map(|(i, (pair, &cost))| {
                (
                    seq.entry(i).aisle,
                    pair.vertical.to_string(),
                    pair.horizontal.to_string(),
                    cost,
                )
            })
            .collect();
        Ok((rollout.total_length, route))
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(n_aisles={}, items={}, seed={})",
            self.inner.geometry.n_aisles,
            self.inner.items.len(),
            self.inner.seed
        )
    }
}

/// Percentage by which a tour exceeds the optimum.
#[pyfunction]
fn optimality_gap(length: i64, optimal: i64) -> PyResult<f64> {
    core_gap(length, optimal).map_err(to_py_err)
}

#[pymodule]
fn picker_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_function(wrap_pyfunction!(optimality_gap, m)?)?;
    Ok(())
}
