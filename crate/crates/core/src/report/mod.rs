//! Results of many chain runs folded into a per-stage vulnerability
//! matrix, plus mitigation advice.

mod advise;
mod emit;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chain::{ChainReport, Deployment, Stage};
use crate::corpus::AttackId;

pub use advise::{advise, advisory_for, SIC_ADVISORY};
pub use emit::{emit, parse_matrix, Format, UnknownFormat, PCT_NOTE};

pub const SCHEMA_VERSION: u32 = 1;

/// One scenario's row: which ids succeeded, bucketed by the stage blamed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub name: String,
    pub deployment: Deployment,
    pub cases: usize,
    pub successes: usize,
    /// Every stage is present; ids are sorted and unique.
    pub cells: BTreeMap<Stage, Vec<AttackId>>,
}

impl MatrixRow {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            deployment: Deployment::default(),
            cases: 0,
            successes: 0,
            cells: Stage::ALL.into_iter().map(|s| (s, Vec::new())).collect(),
        }
    }
}

/// Summary of one live delivery attempt.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LiveAttempt {
    pub target: String,
    pub case_id: String,
    pub attempt: u32,
    /// `delivered`, or the error that stopped the attempt.
    pub outcome: String,
    pub transcript: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultMatrix {
    pub schema_version: u32,
    /// Sorted by name.
    pub rows: Vec<MatrixRow>,
    #[serde(default)]
    pub live: Vec<LiveAttempt>,
}

impl ResultMatrix {
    pub fn empty() -> Self {
        Self { schema_version: SCHEMA_VERSION, rows: Vec::new(), live: Vec::new() }
    }

    pub fn row(&self, name: &str) -> Option<&MatrixRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn cell(&self, name: &str, stage: Stage) -> &[AttackId] {
        self.row(name).and_then(|r| r.cells.get(&stage)).map_or(&[], Vec::as_slice)
    }

    /// Attach live attempts, kept sorted so the result is order-free.
    pub fn with_live(mut self, mut live: Vec<LiveAttempt>) -> Self {
        self.live.append(&mut live);
        self.live.sort();
        self
    }
}

/// Group reports by scenario and place each succeeded id in the cell of
/// the stage it was attributed to. The result does not depend on input
/// order.
pub fn aggregate(reports: &[ChainReport]) -> ResultMatrix {
    let mut rows: BTreeMap<&str, MatrixRow> = BTreeMap::new();
    let mut cells: BTreeMap<&str, BTreeMap<Stage, BTreeSet<AttackId>>> = BTreeMap::new();
    for r in reports {
        let row = rows.entry(&r.scenario).or_insert_with(|| MatrixRow::new(&r.scenario));
        row.cases += 1;
        row.deployment = row.deployment.union(r.deployment);
        if !r.success {
            continue;
        }
        row.successes += 1;
        let cell = cells.entry(&r.scenario).or_default();
        for id in &r.ids {
            let stage = r.attribution.get(id).copied().unwrap_or_else(|| Stage::home_of(*id));
            cell.entry(stage).or_default().insert(*id);
        }
    }
    for (name, by_stage) in cells {
        let row = rows.get_mut(name).expect("row exists for every cell");
        for (stage, ids) in by_stage {
            row.cells.insert(stage, ids.into_iter().collect());
        }
    }
    ResultMatrix { schema_version: SCHEMA_VERSION, rows: rows.into_values().collect(), live: Vec::new() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{run_chain, scenario_by_name};
    use crate::corpus::{default_bindings, generate, GenOptions};

    fn report(id: AttackId, scenario: &str) -> ChainReport {
        let c = generate(id, &default_bindings(id), &GenOptions::default()).unwrap();
        run_chain(&c, &scenario_by_name(scenario).unwrap()).unwrap()
    }

    #[test]
    fn a13_lands_in_rendering() {
        let m = aggregate(&[report(AttackId::A13, "netease-like")]);
        assert_eq!(m.cell("netease-like", Stage::Rendering), [AttackId::A13]);
        assert!(m.cell("netease-like", Stage::Receiving).is_empty());
        assert!(m.row("netease-like").unwrap().deployment.sic);
    }

    #[test]
    fn failures_leave_cells_empty() {
        let m = aggregate(&[report(AttackId::A13, "strict-rfc")]);
        let row = m.row("strict-rfc").unwrap();
        assert_eq!((row.cases, row.successes), (1, 0));
        assert!(row.cells.values().all(Vec::is_empty));
        assert_eq!(row.cells.len(), 4);
    }

    #[test]
    fn empty_input() {
        assert_eq!(aggregate(&[]), ResultMatrix::empty());
    }
}
