//! Python bindings.
//!
//! Inputs use the same text formats as the `tdmh` command line tool; an
//! empty config string means the default configuration.

use std::fmt::Display;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

use tdmh_core::formats;
use tdmh_core::netconfig;
use tdmh_core::scheduler::{
    decode_schedule, dump_schedule, encode_schedule, latency_bounds, schedule_streams,
    verify_schedule,
};
use tdmh_core::sim::power::{estimate_power, CurrentModel, DataLoad};
use tdmh_core::sim::run_scenario;
use tdmh_core::NetworkConfiguration;

fn err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn config(text: &str) -> PyResult<NetworkConfiguration> {
    formats::parse_config(text).map_err(err)
}

/// Configuration violations, one string each; empty when valid.
#[pyfunction]
#[pyo3(signature = (config_text=""))]
fn validate_config(config_text: &str) -> PyResult<Vec<String>> {
    Ok(netconfig::validate(&config(config_text)?)
        .iter()
        .map(|v| v.to_string())
        .collect())
}

/// Fraction of time spent in control slots.
#[pyfunction]
#[pyo3(signature = (config_text=""))]
fn control_overhead(config_text: &str) -> PyResult<f64> {
    Ok(netconfig::control_overhead(&config(config_text)?))
}

/// Schedules `streams_text` on `graph_text`.
///
/// Returns a dict with the encoded schedule (`bytes`), a readable `dump`,
/// `rejections` as strings and `latency` per stream id in ms.
#[pyfunction]
#[pyo3(signature = (graph_text, streams_text, config_text=""))]
fn schedule<'py>(
    py: Python<'py>,
    graph_text: &str,
    streams_text: &str,
    config_text: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config(config_text)?;
    if let Some(first) = netconfig::validate(&cfg).first() {
        return Err(err(first));
    }
    let g = formats::parse_graph(graph_text).map_err(err)?;
    let streams = formats::parse_streams(streams_text).map_err(err)?;
    let out = schedule_streams(&g, &streams, &cfg);
    let d = PyDict::new(py);
    d.set_item(
        "bytes",
        PyBytes::new(py, &encode_schedule(&out.schedule).map_err(err)?),
    )?;
    d.set_item("dump", dump_schedule(&out.schedule))?;
    let rejections: Vec<String> = out
        .rejections
        .iter()
        .map(|r| format!("{}: {}", r.stream_id, r.reason))
        .collect();
    d.set_item("rejections", rejections)?;
    d.set_item("latency", latency_bounds(&out.schedule))?;
    Ok(d)
}

/// Violations of an encoded schedule against a graph; empty when valid.
#[pyfunction]
#[pyo3(signature = (schedule_bytes, graph_text, config_text=""))]
fn verify(schedule_bytes: &[u8], graph_text: &str, config_text: &str) -> PyResult<Vec<String>> {
    let s = decode_schedule(schedule_bytes, &config(config_text)?).map_err(err)?;
    let g = formats::parse_graph(graph_text).map_err(err)?;
    Ok(verify_schedule(&s, &g)
        .iter()
        .map(|v| v.to_string())
        .collect())
}

/// Runs a scenario and returns its metrics as a dict.
#[pyfunction]
#[pyo3(signature = (scenario_text, seed=None))]
fn simulate<'py>(
    py: Python<'py>,
    scenario_text: &str,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut sc = formats::parse_scenario(scenario_text).map_err(err)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    let m = py.detach(|| run_scenario(&sc)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("scenario", &m.scenario)?;
    d.set_item("seed", m.seed)?;
    d.set_item("formation_ms", m.formation_time_ms)?;
    let conv = PyList::empty(py);
    for c in &m.convergence {
        let e = PyDict::new(py);
        e.set_item("node", c.node.0)?;
        e.set_item("fail_ms", c.fail_ms)?;
        e.set_item("silent_ms", c.silent_ms)?;
        e.set_item("total_ms", c.total_ms)?;
        conv.append(e)?;
    }
    d.set_item("convergence", conv)?;
    let streams = PyList::empty(py);
    for s in &m.streams {
        let e = PyDict::new(py);
        e.set_item("src", s.src.0)?;
        e.set_item("dst", s.dst.0)?;
        e.set_item("period_ms", s.period_ms)?;
        e.set_item("elapsed", s.elapsed)?;
        e.set_item("delivered", s.delivered)?;
        e.set_item("reliability", s.reliability())?;
        streams.append(e)?;
    }
    d.set_item("streams", streams)?;
    d.set_item("control_overhead", m.control_overhead)?;
    d.set_item("collisions", m.collisions)?;
    let current = PyDict::new(py);
    for (n, ma) in &m.node_current_ma {
        current.set_item(n.0, ma)?;
    }
    d.set_item("node_current_ma", current)?;
    Ok(d)
}

/// Average node current in mA for a data slot utilisation `load` in [0, 1].
#[pyfunction]
#[pyo3(signature = (load, connectivity, config_text="", tx_share=0.5))]
fn power(load: f64, connectivity: f64, config_text: &str, tx_share: f64) -> PyResult<f64> {
    let cfg = config(config_text)?;
    Ok(estimate_power(
        &cfg,
        &DataLoad::fraction(&cfg, load, tx_share),
        connectivity,
        &CurrentModel::default(),
    ))
}

#[pymodule]
fn tdmh(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(control_overhead, m)?)?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(power, m)?)?;
    Ok(())
}
