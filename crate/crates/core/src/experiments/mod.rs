//! Experiment drivers shared by the CLI and the acceptance tests.
//!
//! Every driver takes a serde config (unknown keys rejected), runs
//! deterministically for a given seed, and returns a report that carries its
//! own pass/fail checks. Artifacts are written only when an output directory
//! is given.

mod check;
mod classify;
mod config;
mod iso;
mod mine;

pub use check::{run_invariant_suite, CheckConfig, InvariantReport};
pub use classify::{
    run_graph_classification, run_motif_classification, run_node_classification, GraphClassifyConfig, GraphClassifyReport,
    MotifClassifyConfig, MotifClassifyReport, NodeClassifyConfig, NodeClassifyReport,
};
pub use classify::{graph_grid, node_grid, RunRecord, Tunable};
pub use config::{apply_overrides, grid_points, parse_assignment, parse_value, set_path, GridAxis};
pub use iso::{run_iso_learning, IsoConfig, IsoRecord, IsoReport, IsoSummary};
pub use mine::{run_pattern_mining, FilterInit, FilterVerdict, MineConfig, MineReport, MineSizeReport};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::export::write_filter_dot;
use crate::train::GraphFilter;

/// Outcome of one named check. Only gating checks decide overall success;
/// the others are diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub gate: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            gate: true,
            detail: detail.into(),
        }
    }

    pub fn info(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            gate: false,
            ..Self::new(name, passed, detail)
        }
    }

    /// `PASS name: detail`, `FAIL name: detail`, or `info ...` for
    /// non-gating checks.
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        if self.gate {
            format!("{verdict} {}: {}", self.name, self.detail)
        } else {
            format!("info {} ({verdict}): {}", self.name, self.detail)
        }
    }
}

/// True when every gating check passed.
pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed || !c.gate)
}

/// Independent stream for run `index` of an experiment seeded with `seed`.
pub(crate) fn sub_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn export_filters(dir: &Path, prefix: &str, filters: &[GraphFilter]) -> Result<()> {
    let dir = dir.join("filters");
    std::fs::create_dir_all(&dir)?;
    for (i, f) in filters.iter().enumerate() {
        let name = format!("{prefix}{i}");
        write_filter_dot(&dir.join(format!("{name}.dot")), f, &name)?;
    }
    Ok(())
}
