//! Feeder file format (JSON).
//!
//! ```json
//! {
//!   "base_mva": 100.0,
//!   "head_voltage_pu": 1.0,
//!   "nodes": [{"id": "n01", "role": "junction", "base_kv": 12.66}, ...],
//!   "branches": [{"from": "sub", "to": "n01", "r_pu": ..., "x_pu": ...}, ...]
//! }
//! ```
//!
//! Branches may carry `r_ohm`/`x_ohm` instead of per-unit values, in which
//! case the receiving node must declare `base_kv` so the impedance can be
//! normalized on `base_kv^2 / base_mva`. The head node is the unique id that
//! only ever appears as a branch source; listing it under `nodes` is allowed
//! but optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vvc_core::network::{FeederBuilder, NetworkModel, NodeRole};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct FeederFile {
    base_mva: f64,
    #[serde(default = "default_head_voltage")]
    head_voltage_pu: f64,
    nodes: Vec<NodeEntry>,
    branches: Vec<BranchEntry>,
}

fn default_head_voltage() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeEntry {
    id: String,
    role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_kv: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchEntry {
    from: String,
    to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_pu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r_ohm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_ohm: Option<f64>,
}

fn parse_role(role: &str, path: &Path, id: &str) -> Result<NodeRole> {
    match role {
        "load" => Ok(NodeRole::Load),
        "generator" => Ok(NodeRole::Generator),
        "junction" => Ok(NodeRole::Junction),
        other => Err(CliError::Feeder {
            path: path.to_path_buf(),
            message: format!("node `{id}` has unknown role `{other}`"),
        }),
    }
}

/// Load, validate, and normalize a feeder description into per-unit.
pub fn load_feeder(path: &Path) -> Result<NetworkModel> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let file: FeederFile = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;

    let mut builder = FeederBuilder::new(file.base_mva, file.head_voltage_pu);
    for node in &file.nodes {
        let role = parse_role(&node.role, path, &node.id)?;
        match node.base_kv {
            Some(kv) => builder = builder.node_kv(&node.id, role, kv),
            None => builder = builder.node(&node.id, role),
        }
    }
    let kv_of = |id: &str| file.nodes.iter().find(|n| n.id == id).and_then(|n| n.base_kv);
    for branch in &file.branches {
        let (r_pu, x_pu) = match (branch.r_pu, branch.x_pu, branch.r_ohm, branch.x_ohm) {
            (Some(r), Some(x), None, None) => (r, x),
            (None, None, Some(r_ohm), Some(x_ohm)) => {
                let kv = kv_of(&branch.to).ok_or_else(|| CliError::Feeder {
                    path: path.to_path_buf(),
                    message: format!(
                        "branch into `{}` is given in ohms but the node declares no base_kv",
                        branch.to
                    ),
                })?;
                let z_base = kv * kv / file.base_mva;
                (r_ohm / z_base, x_ohm / z_base)
            }
            _ => {
                return Err(CliError::Feeder {
                    path: path.to_path_buf(),
                    message: format!(
                        "branch {} -> {} must carry either r_pu/x_pu or r_ohm/x_ohm",
                        branch.from, branch.to
                    ),
                })
            }
        };
        builder = builder.branch(&branch.from, &branch.to, r_pu, x_pu);
    }
    Ok(builder.build()?)
}

/// Export a model back to the file format, always in per-unit.
pub fn save_feeder(path: &Path, net: &NetworkModel) -> Result<()> {
    let mut nodes = vec![NodeEntry {
        id: net.head_id().to_string(),
        role: "junction".to_string(),
        base_kv: None,
    }];
    for rec in net.nodes() {
        nodes.push(NodeEntry {
            id: rec.id.clone(),
            role: rec.role.as_str().to_string(),
            base_kv: rec.base_kv,
        });
    }
    let branches = (0..net.n())
        .map(|i| {
            let z = net.branch_into(i);
            BranchEntry {
                from: match net.parent(i) {
                    Some(p) => net.node(p).id.clone(),
                    None => net.head_id().to_string(),
                },
                to: net.node(i).id.clone(),
                r_pu: Some(z.r),
                x_pu: Some(z.x),
                r_ohm: None,
                x_ohm: None,
            }
        })
        .collect();
    let file = FeederFile {
        base_mva: net.base_mva(),
        head_voltage_pu: net.head_voltage(),
        nodes,
        branches,
    };
    let text = serde_json::to_string_pretty(&file).expect("feeder serializes");
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Fingerprint rendered the way files store it.
pub fn fingerprint_hex(net: &NetworkModel) -> String {
    format!("{:016x}", net.fingerprint())
}

pub fn check_fingerprint(net: &NetworkModel, stored: &str, what: &str) -> Result<()> {
    if fingerprint_hex(net) != stored {
        return Err(CliError::FingerprintMismatch(what.to_string()));
    }
    Ok(())
}
