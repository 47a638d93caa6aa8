//! LPF model file (JSON): operating point, base voltages, and both dense
//! Jacobians (row-major), tied to a feeder by fingerprint so a model is never
//! applied to a network it was not linearized on.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use vvc_core::linmodels::LpfModel;
use vvc_core::network::NetworkModel;

use crate::error::{CliError, Result};
use crate::feeder;

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    feeder_fingerprint: String,
    finite_diff_eps: f64,
    v_base: Vec<f64>,
    p0: Vec<f64>,
    q0: Vec<f64>,
    /// Row-major dense rows.
    jp: Vec<Vec<f64>>,
    jq: Vec<Vec<f64>>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>], n: usize) -> Option<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return None;
    }
    Some(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn save_model(path: &Path, net: &NetworkModel, model: &LpfModel) -> Result<()> {
    let file = ModelFile {
        feeder_fingerprint: feeder::fingerprint_hex(net),
        finite_diff_eps: model.finite_diff_eps,
        v_base: model.v_base.iter().cloned().collect(),
        p0: model.p0.iter().cloned().collect(),
        q0: model.q0.iter().cloned().collect(),
        jp: matrix_rows(&model.jp),
        jq: matrix_rows(&model.jq),
    };
    let text = serde_json::to_string(&file).expect("model serializes");
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Load a model and verify it belongs to `net`.
pub fn load_model(path: &Path, net: &NetworkModel) -> Result<LpfModel> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    feeder::check_fingerprint(net, &file.feeder_fingerprint, "model file")?;
    let n = net.n();
    let bad = |message: &str| CliError::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if file.v_base.len() != n || file.p0.len() != n || file.q0.len() != n {
        return Err(bad("vector lengths do not match the feeder"));
    }
    let jp = rows_matrix(&file.jp, n).ok_or_else(|| bad("jp is not an n x n matrix"))?;
    let jq = rows_matrix(&file.jq, n).ok_or_else(|| bad("jq is not an n x n matrix"))?;
    Ok(LpfModel {
        v_base: DVector::from_vec(file.v_base),
        p0: DVector::from_vec(file.p0),
        q0: DVector::from_vec(file.q0),
        jp,
        jq,
        finite_diff_eps: file.finite_diff_eps,
    })
}
