//! Python bindings: configuration, episode runs, the path oracle check, the
//! quantization bench and the quantizer itself.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(uavfed, UavfedError, PyException, "Error raised by the simulator core.");

fn py_err(e: uavfed_core::Error) -> PyErr {
    UavfedError::new_err(e.to_string())
}

fn load_config(config: Option<&str>, profile: &str) -> PyResult<uavfed_core::SimConfig> {
    match config {
        Some(text) => uavfed_core::SimConfig::from_toml_str(text),
        None => uavfed_core::SimConfig::profile(profile),
    }
    .map_err(py_err)
}

#[pymodule]
mod uavfed {
    use pyo3::prelude::*;
    use pyo3::types::PyDict;

    use uavfed_core::experiment::{self, PolicyKind, RunOptions};
    use uavfed_core::fedlearn;
    use uavfed_core::metrics::EpisodeMetrics;
    use uavfed_core::nn::Group;

    use super::{load_config, py_err};

    #[pymodule_export]
    use super::UavfedError;

    /// Effective configuration of a built-in profile as TOML text.
    #[pyfunction]
    #[pyo3(signature = (profile = "desk"))]
    fn default_config(profile: &str) -> PyResult<String> {
        Ok(load_config(None, profile)?.to_toml_string())
    }

    /// SHA-256 of the canonical form of `config` (TOML text).
    #[pyfunction]
    fn config_hash(config: &str) -> PyResult<String> {
        Ok(load_config(Some(config), "desk")?.hash())
    }

    fn episode_dict<'py>(py: Python<'py>, e: &EpisodeMetrics) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("seed", e.seed)?;
        d.set_item("episode", e.episode)?;
        d.set_item("policy", &e.policy)?;
        d.set_item("f_time_s", e.f_time)?;
        d.set_item("f_energy_j", e.f_energy)?;
        d.set_item("f_time_norm", e.f_time_norm)?;
        d.set_item("f_energy_norm", e.f_energy_norm)?;
        d.set_item("f_total", e.f_total)?;
        d.set_item("deadline_rate", e.deadline_rate)?;
        d.set_item("coverage_rate", e.coverage_rate)?;
        d.set_item("tasks", e.tasks)?;
        d.set_item("met", e.met)?;
        d.set_item("failed", e.failed)?;
        d.set_item("fl_bytes", e.fl_bytes.clone())?;
        d.set_item("reward", e.reward.total())?;
        d.set_item("violations", e.violations)?;
        Ok(d)
    }

    /// Runs `config` (TOML text, default profile when omitted) for one seed
    /// and returns one dict per episode.
    #[pyfunction]
    #[pyo3(signature = (config = None, seed = 1, policy = "learned", learn = true, episodes = None))]
    fn run<'py>(
        py: Python<'py>,
        config: Option<&str>,
        seed: u64,
        policy: &str,
        learn: bool,
        episodes: Option<usize>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let mut cfg = load_config(config, "desk")?;
        if let Some(n) = episodes {
            cfg.sim.episodes = n;
        }
        let kind: PolicyKind = policy.parse().map_err(py_err)?;
        let opts = RunOptions {
            learn: learn && kind == PolicyKind::Learned,
            ..RunOptions::reference(kind, seed)
        };
        let result = py.detach(|| experiment::run(&cfg, &opts)).map_err(py_err)?;
        result.episodes.iter().map(|e| episode_dict(py, e)).collect()
    }

    /// Engine timing against the brute-force path oracle.
    #[pyfunction]
    #[pyo3(signature = (snapshots = 200, seed = 0, max_uavs = 4))]
    fn oracle_check<'py>(py: Python<'py>, snapshots: usize, seed: u64, max_uavs: usize) -> PyResult<Bound<'py, PyDict>> {
        let cfg = load_config(None, "desk")?;
        let r = py.detach(|| experiment::oracle_check(&cfg, snapshots, max_uavs, seed)).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("snapshots", r.snapshots)?;
        d.set_item("paths", r.paths)?;
        d.set_item("worst_rel", r.worst_rel)?;
        d.set_item("set_mismatches", r.set_mismatches)?;
        d.set_item("seconds", r.seconds)?;
        Ok(d)
    }

    /// Per-round message size with and without quantization.
    #[pyfunction]
    #[pyo3(signature = (seed = 0, config = None))]
    fn quant_bench<'py>(py: Python<'py>, seed: u64, config: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
        let cfg = load_config(config, "desk")?;
        let r = py.detach(|| experiment::quant_bench(&cfg, seed)).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("params", r.params)?;
        d.set_item("bytes_full", r.bytes_full)?;
        d.set_item("bytes_quantized", r.bytes_quantized)?;
        d.set_item("wire_full", r.wire_full)?;
        d.set_item("wire_quantized", r.wire_quantized)?;
        d.set_item("reduction", r.reduction)?;
        Ok(d)
    }

    /// Bit width per parameter from gradient magnitudes.
    #[pyfunction]
    #[pyo3(signature = (grads, b_min = 4, b_max = 16))]
    fn bit_widths(grads: Vec<f64>, b_min: u8, b_max: u8) -> PyResult<Vec<u8>> {
        if b_min == 0 || b_min > b_max || b_max > 16 {
            return Err(pyo3::exceptions::PyValueError::new_err("need 1 <= b_min <= b_max <= 16"));
        }
        Ok(fedlearn::bit_width_schedule(&grads, b_min, b_max))
    }

    /// Quantizes `values` at `bits` and returns `(codes, dequantized, bounds)`.
    #[pyfunction]
    fn quantize(values: Vec<f64>, bits: Vec<u8>) -> PyResult<(Vec<u32>, Vec<f64>, Vec<f64>)> {
        if values.len() != bits.len() {
            return Err(pyo3::exceptions::PyValueError::new_err("values and bits differ in length"));
        }
        if bits.iter().any(|b| *b == 0 || *b > 32) {
            return Err(pyo3::exceptions::PyValueError::new_err("bit widths must lie in 1..=32"));
        }
        let blob = fedlearn::quantize(Group::Critic, &values, &bits).map_err(py_err)?;
        let back = fedlearn::dequantize(&blob);
        let bounds = (0..blob.len()).map(|i| fedlearn::quantization_bound(&blob, i)).collect();
        Ok((blob.codes, back, bounds))
    }

    /// Reputation-normalized aggregation weights, own entry first.
    #[pyfunction]
    fn aggregation_weights(reps: Vec<f64>) -> Vec<f64> {
        fedlearn::aggregation_weights(&reps)
    }
}
