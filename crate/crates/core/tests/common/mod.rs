#![allow(dead_code)]

use imemplan::scenario::Scenario;
use serde_json::{json, Value};

pub fn kernel(id: &str, binary_size: u64, rows: u32, cols: u32, latency: u64) -> Value {
    json!({
        "id": id,
        "name": id,
        "binary_size": binary_size,
        "footprint": { "rows": rows, "cols": cols },
        "compute_latency": latency,
        "input_volume": 64
    })
}

/// A straight-line tree visiting `kernels` in order.
pub fn chain(id: &str, kernels: &[&str]) -> Value {
    let nodes: Vec<Value> = kernels
        .iter()
        .enumerate()
        .map(|(i, k)| json!({ "id": format!("n{i}"), "kernel": k }))
        .collect();
    let edges: Vec<Value> = (1..kernels.len())
        .map(|i| json!({ "from": format!("n{}", i - 1), "outcome": "go", "to": format!("n{i}"), "probability": 1.0 }))
        .collect();
    json!({ "id": id, "root": "n0", "nodes": nodes, "edges": edges })
}

pub fn hardware(rows: u32, cols: u32) -> Value {
    json!({ "a_logic": 2.0, "a_imem_per_kb": 1.0, "a_sram": 5.0, "rows": rows, "cols": cols, "imem_limit": 4608 })
}

pub fn scenario(kernels: Vec<Value>, trees: Vec<Value>, arrivals: &[(u64, &str)], max_concurrent: u32, hw: Value) -> Scenario {
    let arrivals: Vec<Value> = arrivals.iter().map(|(t, tree)| json!({ "time": t, "tree": tree })).collect();
    let doc = json!({
        "kernels": kernels,
        "trees": trees,
        "stream": { "max_concurrent": max_concurrent, "arrivals": arrivals },
        "hardware": hw
    });
    Scenario::from_json(&doc.to_string(), "fixture.json".as_ref()).expect("fixture scenario is valid")
}

pub fn single_kernel(arrivals: &[(u64, &str)]) -> Scenario {
    scenario(
        vec![kernel("K", 1024, 1, 1, 100)],
        vec![chain("t", &["K"])],
        arrivals,
        4,
        hardware(2, 2),
    )
}
