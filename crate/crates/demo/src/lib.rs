//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export takes plain text from a form field and returns JSON, or
//! throws a string describing the bad input.

use std::collections::BTreeMap;

use riskbench::autodiff::{Graph, Tensor};
use riskbench::explain::path_integral;
use riskbench::network::{pagerank, PageRankConfig, WardTransferGraph};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn numbers(field: &str, text: &str) -> Result<Vec<f64>, String> {
    let values: Vec<f64> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("{field}: `{s}` is not a number")))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(format!("{field}: no values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(format!("{field}: values must be finite"));
    }
    Ok(values)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Activations {
    pub softmax: Vec<f64>,
    pub sparsemax: Vec<f64>,
    pub support: usize,
}

pub fn activations(scores: &str) -> Result<Activations, String> {
    let z = numbers("scores", scores)?;
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(vec![z.len()], z.clone()).map_err(|e| e.to_string())?);
    let s = g.softmax(x, 0).map_err(|e| e.to_string())?;
    let softmax = g.value(s).data().to_vec();
    let sparsemax = riskbench::autodiff::sparsemax::sparsemax(&z);
    let support = sparsemax.iter().filter(|&&p| p > 0.0).count();
    Ok(Activations {
        softmax,
        sparsemax,
        support,
    })
}

#[derive(Debug, Serialize)]
pub struct WardScores {
    pub degree: f64,
    pub closeness: f64,
    pub pagerank: f64,
}

/// One transfer per line: `from to [weight]`.
pub fn ward_scores(edges: &str, damping: f64) -> Result<BTreeMap<String, WardScores>, String> {
    if !(0.0..1.0).contains(&damping) {
        return Err(format!("damping {damping} outside [0, 1)"));
    }
    let mut g = WardTransferGraph::new();
    for (i, line) in edges.lines().enumerate() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            [] => {}
            [w] => {
                g.add_ward(w);
            }
            [a, b] => g.add_transfer(a, b, 1.0),
            [a, b, w] => {
                let w: f64 = w.parse().map_err(|_| format!("line {}: bad weight `{w}`", i + 1))?;
                if !(w > 0.0 && w.is_finite()) {
                    return Err(format!("line {}: weight must be positive", i + 1));
                }
                g.add_transfer(a, b, w);
            }
            _ => return Err(format!("line {}: expected `from to [weight]`", i + 1)),
        }
    }
    let cfg = PageRankConfig {
        damping,
        ..PageRankConfig::default()
    };
    let pr = pagerank(&g, &cfg).map_err(|e| e.to_string())?;
    let degree = g.degree_centrality();
    let closeness = g.closeness_centrality();
    Ok(pr
        .into_iter()
        .map(|(w, p)| {
            let s = WardScores {
                degree: degree[&w],
                closeness: closeness[&w],
                pagerank: p,
            };
            (w, s)
        })
        .collect())
}

#[derive(Debug, Serialize)]
pub struct Attribution {
    pub attributions: Vec<f64>,
    pub output: f64,
    pub baseline_output: f64,
    pub residual: f64,
}

/// IG of `sigmoid(Σ_k v_k tanh(Σ_i x_i w_ik))` with two hidden units.
pub fn attribute(x: &str, baseline: &str, w: &str, v: &str, steps: usize) -> Result<Attribution, String> {
    let x = numbers("input", x)?;
    let b = numbers("baseline", baseline)?;
    let w = numbers("hidden weights", w)?;
    let v = numbers("output weights", v)?;
    let d = x.len();
    if b.len() != d {
        return Err(format!("baseline has {} values, input has {d}", b.len()));
    }
    if w.len() != 2 * d || v.len() != 2 {
        return Err(format!("need {} hidden weights (row-major {d}x2) and 2 output weights", 2 * d));
    }
    if !(1..=4096).contains(&steps) {
        return Err("steps must be between 1 and 4096".into());
    }
    let tensor = |shape: Vec<usize>, data: Vec<f64>| Tensor::new(shape, data).map_err(|e| e.to_string());
    let (xt, bt) = (tensor(vec![1, d], x)?, tensor(vec![1, d], b)?);
    let (wt, vt) = (tensor(vec![d, 2], w)?, tensor(vec![2, 1], v)?);
    let ig = path_integral(&[xt], &[bt], steps, |g, inputs| {
        let w = g.constant(wt.clone());
        let v = g.constant(vt.clone());
        let h = g.matmul(inputs[0], w)?;
        let h = g.tanh(h);
        let o = g.matmul(h, v)?;
        Ok(g.sigmoid(o))
    })
    .map_err(|e| e.to_string())?;
    Ok(Attribution {
        attributions: ig.attributions[0].data().to_vec(),
        output: ig.outputs[0],
        baseline_output: ig.baseline_outputs[0],
        residual: ig.residuals[0],
    })
}

#[wasm_bindgen(js_name = compareActivations)]
pub fn compare_activations(scores: &str) -> Result<String, JsValue> {
    activations(scores).and_then(|a| to_json(&a)).map_err(JsValue::from)
}

#[wasm_bindgen(js_name = wardCentrality)]
pub fn ward_centrality(edges: &str, damping: f64) -> Result<String, JsValue> {
    ward_scores(edges, damping).and_then(|s| to_json(&s)).map_err(JsValue::from)
}

#[wasm_bindgen(js_name = integratedGradients)]
pub fn integrated_gradients(x: &str, baseline: &str, w: &str, v: &str, steps: usize) -> Result<String, JsValue> {
    attribute(x, baseline, w, v, steps).and_then(|a| to_json(&a)).map_err(JsValue::from)
}
