//! Trace CSV (`step,node_id,v_pu,qg_pu`) and the run summary JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vvc_core::network::NetworkModel;
use vvc_core::simloop::ClosedLoopTrace;

use crate::error::{CliError, Result};

pub fn save_trace(path: &Path, net: &NetworkModel, trace: &ClosedLoopTrace) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::Write {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    writer
        .write_record(["step", "node_id", "v_pu", "qg_pu"])
        .map_err(|e| CliError::Write {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;
    for (slot, &step) in trace.history_steps.iter().enumerate() {
        for i in 0..net.n() {
            writer
                .write_record([
                    step.to_string(),
                    net.node(i).id.clone(),
                    trace.v_history[slot][i].to_string(),
                    trace.q_history[slot][i].to_string(),
                ])
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
pub struct RunSummary {
    pub outcome: String,
    pub steps: usize,
    pub dev2: f64,
    pub devinf: f64,
}

impl RunSummary {
    pub fn from_trace(trace: &ClosedLoopTrace) -> Self {
        RunSummary {
            outcome: trace.outcome.as_str().to_string(),
            steps: trace.steps,
            dev2: trace.metrics.dev2,
            devinf: trace.metrics.devinf,
        }
    }
}
