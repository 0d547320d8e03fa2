//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes the data as CSV text (header of feature names, one
//! sample per row, optional leading id column) and returns a JSON string.

use nalgebra::DMatrix;
use ridgenet_core::netstats::{communities, Network};
use ridgenet_core::sparsify::{sparsify, Threshold};
use ridgenet_core::tuning::{cn_curve, opt_penalty_kcv_auto};
use ridgenet_core::{cov_ml, default_target, prec_to_pcor, ridge_alt, DataMatrix, SymMatrix, TargetKind};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

type Res<T> = Result<T, String>;

pub fn parse_csv(text: &str) -> Res<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.len() < 2 {
        return Err("need a header line and at least one sample".into());
    }
    let header = rows.remove(0);
    let skip = usize::from(header[0].is_empty());
    let names = header[skip..].to_vec();
    let mut values = DMatrix::zeros(rows.len(), names.len());
    for (r, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(format!("line {}: expected {} fields, found {}", r + 2, header.len(), row.len()));
        }
        for (c, cell) in row[skip..].iter().enumerate() {
            values[(r, c)] = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("line {}, column {}: `{cell}` is not a number", r + 2, c + skip + 1))?;
        }
    }
    DataMatrix::new(values, names).map_err(|e| e.to_string())
}

fn prepare(csv: &str) -> Res<(DataMatrix, SymMatrix, SymMatrix)> {
    let x = parse_csv(csv)?;
    let s = cov_ml(&x, true, false).map_err(|e| e.to_string())?;
    let t = default_target(&s, &TargetKind::Dupv).map_err(|e| e.to_string())?;
    Ok((x, s, t))
}

fn matrix_json(m: &SymMatrix) -> Value {
    let rows: Vec<Vec<f64>> = (0..m.dim()).map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect()).collect();
    json!(rows)
}

/// Condition number of the estimate over a log-spaced penalty grid.
pub fn condition_curve(csv: &str, lambda_min: f64, lambda_max: f64, steps: usize) -> Res<String> {
    let (_, s, t) = prepare(csv)?;
    let curve = cn_curve(&s, &t, lambda_min, lambda_max, steps).map_err(|e| e.to_string())?;
    Ok(json!({
        "lambdas": curve.lambdas,
        "kappas": curve.kappas,
        "digitsLoss": curve.digits_loss,
    })
    .to_string())
}

/// Partial correlations at `lambda`, or at the cross-validated optimum when
/// `lambda` is not positive.
pub fn estimate(csv: &str, lambda: f64, folds: usize, seed: u64) -> Res<String> {
    let (x, s, t) = prepare(csv)?;
    let (lambda, omega, tuned) = if lambda > 0.0 {
        (lambda, ridge_alt(&s, &t, lambda).map_err(|e| e.to_string())?, false)
    } else {
        let best = opt_penalty_kcv_auto(&x, 1e-5, 1e5, folds, &t, seed).map_err(|e| e.to_string())?;
        (best.lambda, best.precision, true)
    };
    let pcor = prec_to_pcor(&omega).map_err(|e| e.to_string())?;
    Ok(json!({
        "lambda": lambda,
        "tuned": tuned,
        "names": omega.names(),
        "pcor": matrix_json(&pcor),
        "conditionNumber": omega.condition_number().map_err(|e| e.to_string())?,
    })
    .to_string())
}

/// Sparsified network at `lambda` with `method` in {"lfdr", "absvalue",
/// "top"}, plus its communities.
pub fn network(csv: &str, lambda: f64, method: &str, parameter: f64) -> Res<String> {
    let (_, s, t) = prepare(csv)?;
    let omega = ridge_alt(&s, &t, lambda).map_err(|e| e.to_string())?;
    let threshold = match method {
        "lfdr" => Threshold::LocalFdr { fdr_cut: parameter },
        "absvalue" => Threshold::AbsValue { cut: parameter },
        "top" if parameter >= 1.0 => Threshold::Top { top: parameter as usize },
        other => return Err(format!("unknown method `{other}` or bad parameter {parameter}")),
    };
    let (net, _) = sparsify(&omega, threshold).map_err(|e| e.to_string())?;
    let graph = Network::from_sparsified(&net, false);
    let comm = communities(&graph).map_err(|e| e.to_string())?;
    let edges: Vec<Value> = graph
        .edges()
        .iter()
        .map(|e| json!({"source": e.i, "target": e.j, "weight": e.weight}))
        .collect();
    Ok(json!({
        "nodes": graph.labels(),
        "edges": edges,
        "community": comm.membership,
        "modularity": comm.modularity,
        "report": net.report().to_string(),
    })
    .to_string())
}

#[wasm_bindgen(js_name = conditionCurve)]
pub fn condition_curve_js(csv: &str, lambda_min: f64, lambda_max: f64, steps: usize) -> Result<String, JsError> {
    condition_curve(csv, lambda_min, lambda_max, steps).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = estimate)]
pub fn estimate_js(csv: &str, lambda: f64, folds: usize, seed: u32) -> Result<String, JsError> {
    estimate(csv, lambda, folds, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = network)]
pub fn network_js(csv: &str, lambda: f64, method: &str, parameter: f64) -> Result<String, JsError> {
    network(csv, lambda, method, parameter).map_err(|e| JsError::new(&e))
}
