//! Design file (JSON): the slopes as a sparse generator-id map plus the
//! objective breakdown and achieved stability values.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vvc_core::design::DesignResult;
use vvc_core::linmodels::LinearPlant;
use vvc_core::network::NetworkModel;
use vvc_core::stability::{check_stability, Criterion, GainVector};

use crate::error::{CliError, Result};
use crate::feeder;

#[derive(Debug, Serialize, Deserialize)]
pub struct AchievedValues {
    pub rho: f64,
    pub norm2: f64,
    pub norm1: f64,
    pub norminf: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DesignFile {
    pub feeder_fingerprint: String,
    /// Generator node id -> slope (p.u. VAr per p.u. volt, non-positive).
    pub k: BTreeMap<String, f64>,
    pub criterion: String,
    pub epsilon: f64,
    pub beta: f64,
    pub objective: f64,
    pub deviation_term: f64,
    pub regularization_term: f64,
    pub achieved: AchievedValues,
    pub seed: u64,
    pub starts_tried: usize,
    pub best_start_index: usize,
}

pub fn criterion_name(c: Criterion) -> &'static str {
    c.as_str()
}

pub fn parse_criterion(s: &str) -> Result<Criterion> {
    match s {
        "rho" => Ok(Criterion::Rho),
        "norm2" => Ok(Criterion::Norm2),
        "holder" => Ok(Criterion::Holder),
        other => Err(CliError::Usage(format!(
            "unknown criterion `{other}` (expected rho|norm2|holder)"
        ))),
    }
}

/// All four stability values of a gain vector against a plant.
pub fn achieved_values(plant: &LinearPlant, k: &GainVector, epsilon: f64) -> Result<AchievedValues> {
    let rho = check_stability(plant, k, Criterion::Rho, epsilon)?.value;
    let norm2 = check_stability(plant, k, Criterion::Norm2, epsilon)?.value;
    // split the Hölder pair for reporting
    let sens = plant.q_sensitivity();
    let kk = nalgebra::DMatrix::from_diagonal(k.as_vector());
    let m = sens * kk;
    let (norm1, norminf) = vvc_core::stability::norm1_inf(&m);
    Ok(AchievedValues {
        rho,
        norm2,
        norm1,
        norminf,
    })
}

pub fn save_design(
    path: &Path,
    net: &NetworkModel,
    plant: &LinearPlant,
    result: &DesignResult,
    beta: f64,
    epsilon: f64,
    seed: u64,
) -> Result<()> {
    let mut k = BTreeMap::new();
    for &g in net.generator_set() {
        k.insert(net.node(g).id.clone(), result.k.as_vector()[g]);
    }
    let file = DesignFile {
        feeder_fingerprint: feeder::fingerprint_hex(net),
        k,
        criterion: result.verdict.criterion.as_str().to_string(),
        epsilon,
        beta,
        objective: result.objective,
        deviation_term: result.deviation_term,
        regularization_term: result.regularization_term,
        achieved: achieved_values(plant, &result.k, epsilon)?,
        seed,
        starts_tried: result.starts_tried,
        best_start_index: result.best_start_index,
    };
    let text = serde_json::to_string_pretty(&file).expect("design serializes");
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Load a design file and rebuild the full-length gain vector against `net`.
pub fn load_design(path: &Path, net: &NetworkModel) -> Result<(GainVector, DesignFile)> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let file: DesignFile = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    feeder::check_fingerprint(net, &file.feeder_fingerprint, "design file")?;
    let mut full = nalgebra::DVector::zeros(net.n());
    for (id, slope) in &file.k {
        let idx = net
            .index_of(id)
            .ok_or_else(|| CliError::UnknownNode(id.clone()))?;
        full[idx] = *slope;
    }
    let k = GainVector::new(full, net.generator_set())?;
    Ok((k, file))
}
