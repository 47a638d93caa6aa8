//! Scenario CSV format and the small JSON artifacts around it (operating
//! point, selection results, synthesis config).
//!
//! The CSV is long format — `timestamp,node_id,p_d_kw,q_d_kvar,p_g_kw`, one
//! row per (timestamp, node) with nonzero data — so node ids stay explicit
//! and validation can be strict. Powers are in kW/kvar and are normalized on
//! the feeder's MVA base when loaded.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use vvc_core::network::NetworkModel;
use vvc_core::scenario::{Scenario, ScenarioPick, ScenarioSet, SynthConfig};

use crate::error::{CliError, Result};
use crate::feeder;

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    timestamp: String,
    node_id: String,
    p_d_kw: f64,
    q_d_kvar: f64,
    p_g_kw: f64,
}

/// Load a scenario CSV against a feeder: one scenario per timestamp in
/// first-seen order, unlisted nodes default to zero, powers converted to
/// per-unit.
pub fn load_timeseries(path: &Path, net: &NetworkModel) -> Result<ScenarioSet> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let n = net.n();
    let kw_to_pu = 1.0e-3 / net.base_mva();
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, Scenario> = BTreeMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let idx = net
            .index_of(&row.node_id)
            .ok_or_else(|| CliError::UnknownNode(row.node_id.clone()))?;
        let scen = by_id.entry(row.timestamp.clone()).or_insert_with(|| {
            order.push(row.timestamp.clone());
            Scenario {
                id: row.timestamp.clone(),
                p_g: DVector::zeros(n),
                p_d: DVector::zeros(n),
                q_d: DVector::zeros(n),
            }
        });
        scen.p_d[idx] += row.p_d_kw * kw_to_pu;
        scen.q_d[idx] += row.q_d_kvar * kw_to_pu;
        scen.p_g[idx] += row.p_g_kw * kw_to_pu;
    }
    let scenarios: Vec<Scenario> = order
        .iter()
        .map(|id| by_id.remove(id).expect("ordered ids exist"))
        .collect();
    let set = ScenarioSet::new(scenarios, Some(net.fingerprint()));
    set.validate_against(net)?;
    Ok(set)
}

/// Write a scenario set back to CSV, omitting all-zero (timestamp, node) rows.
pub fn save_timeseries(path: &Path, net: &NetworkModel, set: &ScenarioSet) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let pu_to_kw = 1.0e3 * net.base_mva();
    for scen in &set.scenarios {
        for i in 0..net.n() {
            if scen.p_d[i] == 0.0 && scen.q_d[i] == 0.0 && scen.p_g[i] == 0.0 {
                continue;
            }
            writer
                .serialize(Row {
                    timestamp: scen.id.clone(),
                    node_id: net.node(i).id.clone(),
                    p_d_kw: scen.p_d[i] * pu_to_kw,
                    q_d_kvar: scen.q_d[i] * pu_to_kw,
                    p_g_kw: scen.p_g[i] * pu_to_kw,
                })
                .map_err(|e| CliError::Write {
                    path: path.to_path_buf(),
                    source: std::io::Error::other(e.to_string()),
                })?;
        }
    }
    writer.flush().map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OperatingPointFile {
    pub feeder_fingerprint: String,
    pub samples: usize,
    pub p0: Vec<f64>,
    pub q0: Vec<f64>,
}

pub fn save_opoint(
    path: &Path,
    net: &NetworkModel,
    p0: &DVector<f64>,
    q0: &DVector<f64>,
    samples: usize,
) -> Result<()> {
    let file = OperatingPointFile {
        feeder_fingerprint: feeder::fingerprint_hex(net),
        samples,
        p0: p0.iter().cloned().collect(),
        q0: q0.iter().cloned().collect(),
    };
    write_json(path, &file)
}

pub fn load_opoint(path: &Path, net: &NetworkModel) -> Result<(DVector<f64>, DVector<f64>)> {
    let file: OperatingPointFile = read_json(path)?;
    feeder::check_fingerprint(net, &file.feeder_fingerprint, "operating-point file")?;
    if file.p0.len() != net.n() || file.q0.len() != net.n() {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            message: "operating-point vectors do not match the feeder".to_string(),
        });
    }
    Ok((DVector::from_vec(file.p0), DVector::from_vec(file.q0)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PickFile {
    pub id: String,
    pub index: usize,
    pub metric: f64,
}

impl From<&ScenarioPick> for PickFile {
    fn from(p: &ScenarioPick) -> Self {
        PickFile {
            id: p.id.clone(),
            index: p.index,
            metric: p.metric,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HoursFile {
    pub a: PickFile,
    pub b: PickFile,
    pub c: PickFile,
    pub d: PickFile,
}

/// Synthesis config (JSON): sparse per-node maps in kW, keyed by node id.
#[derive(Debug, Serialize, Deserialize)]
pub struct SynthConfigFile {
    pub peak_demand_kw: BTreeMap<String, f64>,
    pub reactive_ratio: BTreeMap<String, f64>,
    pub pv_capacity_kw: BTreeMap<String, f64>,
    pub noise: f64,
}

pub fn load_synth_config(path: &Path, net: &NetworkModel) -> Result<SynthConfig> {
    let file: SynthConfigFile = read_json(path)?;
    let n = net.n();
    let kw_to_pu = 1.0e-3 / net.base_mva();
    let gather = |map: &BTreeMap<String, f64>, scale: f64| -> Result<DVector<f64>> {
        let mut v = DVector::zeros(n);
        for (id, value) in map {
            let idx = net
                .index_of(id)
                .ok_or_else(|| CliError::UnknownNode(id.clone()))?;
            v[idx] = value * scale;
        }
        Ok(v)
    };
    Ok(SynthConfig {
        peak_demand: gather(&file.peak_demand_kw, kw_to_pu)?,
        reactive_ratio: gather(&file.reactive_ratio, 1.0)?,
        pv_capacity: gather(&file.pv_capacity_kw, kw_to_pu)?,
        noise: file.noise,
    })
}

pub fn save_synth_config(path: &Path, net: &NetworkModel, cfg: &SynthConfig) -> Result<()> {
    let pu_to_kw = 1.0e3 * net.base_mva();
    let scatter = |v: &DVector<f64>, scale: f64| -> BTreeMap<String, f64> {
        (0..net.n())
            .filter(|&i| v[i] != 0.0)
            .map(|i| (net.node(i).id.clone(), v[i] * scale))
            .collect()
    };
    let file = SynthConfigFile {
        peak_demand_kw: scatter(&cfg.peak_demand, pu_to_kw),
        reactive_ratio: scatter(&cfg.reactive_ratio, 1.0),
        pv_capacity_kw: scatter(&cfg.pv_capacity, pu_to_kw),
        noise: cfg.noise,
    };
    write_json_pretty(path, &file)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).expect("value serializes");
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}
