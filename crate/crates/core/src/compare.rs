//! Reproducibility verdicts between two stored workflow runs, on workflow
//! structure, execution infrastructure and produced outputs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::basename;
use crate::store::{CapRecord, FileDirection, RecapStore, StoreError};
use crate::wms::{DagError, WorkflowDag};

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("workflow {wf_id} has no mapping for jobs {missing:?}")]
    IncompleteProvenance { wf_id: i64, missing: Vec<String> },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Dag(#[from] DagError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Equal,
    Different,
    Incomparable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureResult {
    pub status: Status,
    pub jobs_only_in_a: Vec<String>,
    pub jobs_only_in_b: Vec<String>,
    pub edges_only_in_a: Vec<(String, String)>,
    pub edges_only_in_b: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub job_name: String,
    pub field: String,
    pub a: String,
    pub b: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfrastructureResult {
    pub status: Status,
    pub diffs: Vec<FieldDiff>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    pub job_name: String,
    pub basename: String,
    pub md5_a: Option<String>,
    pub md5_b: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputsResult {
    pub status: Status,
    pub diffs: Vec<FileDiff>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Reproduced,
    NotReproduced,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub wf_a: i64,
    pub wf_b: i64,
    pub structure: StructureResult,
    pub infrastructure: InfrastructureResult,
    pub outputs: OutputsResult,
    pub verdict: Verdict,
    /// Jobs without a Cloud mapping, per side.
    pub unmapped_jobs: (usize, usize),
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn load_dag(store: &RecapStore, wf_id: i64) -> Result<WorkflowDag, CompareError> {
    Ok(WorkflowDag::from_toml_str(&store.get_source(wf_id)?.wf_dag)?)
}

fn only_in<T: Ord + Clone>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Vec<T> {
    a.difference(b).cloned().collect()
}

/// Labeled-DAG equality: same job names and same edges between them.
pub fn compare_structure(store: &RecapStore, wf_a: i64, wf_b: i64) -> Result<StructureResult, CompareError> {
    Ok(structure_of(&load_dag(store, wf_a)?, &load_dag(store, wf_b)?))
}

pub fn structure_of(a: &WorkflowDag, b: &WorkflowDag) -> StructureResult {
    let (ja, jb) = (a.job_names(), b.job_names());
    let (ea, eb) = (a.edge_set(), b.edge_set());
    let r = StructureResult {
        status: Status::Equal,
        jobs_only_in_a: only_in(&ja, &jb),
        jobs_only_in_b: only_in(&jb, &ja),
        edges_only_in_a: only_in(&ea, &eb),
        edges_only_in_b: only_in(&eb, &ea),
    };
    let equal = r.jobs_only_in_a.is_empty()
        && r.jobs_only_in_b.is_empty()
        && r.edges_only_in_a.is_empty()
        && r.edges_only_in_b.is_empty();
    StructureResult { status: if equal { Status::Equal } else { Status::Different }, ..r }
}

fn complete_caps(store: &RecapStore, wf_id: i64) -> Result<BTreeMap<String, CapRecord>, CompareError> {
    let dag = load_dag(store, wf_id)?;
    let caps: BTreeMap<String, CapRecord> = store.get_cap(wf_id)?.into_iter().map(|c| (c.job_name.clone(), c)).collect();
    let missing: Vec<String> = dag.job_names().into_iter().filter(|j| !caps.contains_key(j)).collect();
    if !missing.is_empty() {
        return Err(CompareError::IncompleteProvenance { wf_id, missing });
    }
    Ok(caps)
}

/// Per-job comparison of the provisionable resource fields. Nodenames,
/// `extra` and CPU figures are informational and do not count.
pub fn compare_infrastructure(store: &RecapStore, wf_a: i64, wf_b: i64) -> Result<InfrastructureResult, CompareError> {
    let a = complete_caps(store, wf_a)?;
    let b = complete_caps(store, wf_b)?;
    let jobs: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let mut diffs = Vec::new();
    for job in jobs {
        match (a.get(job), b.get(job)) {
            (Some(x), Some(y)) => {
                let (x, y) = (&x.resource, &y.resource);
                let fields = [
                    ("flavor_id", x.flavor_id.to_string(), y.flavor_id.to_string()),
                    ("min_ram_mb", x.min_ram_mb.to_string(), y.min_ram_mb.to_string()),
                    ("min_hd_gb", x.min_hd_gb.to_string(), y.min_hd_gb.to_string()),
                    ("min_cpu", x.min_cpu.to_string(), y.min_cpu.to_string()),
                    ("image_id", x.image_id.clone(), y.image_id.clone()),
                ];
                for (field, va, vb) in fields {
                    if va != vb {
                        diffs.push(FieldDiff { job_name: job.clone(), field: field.into(), a: va, b: vb });
                    }
                }
            }
            (x, y) => diffs.push(FieldDiff {
                job_name: job.clone(),
                field: "presence".into(),
                a: x.map_or("absent", |_| "present").into(),
                b: y.map_or("absent", |_| "present").into(),
            }),
        }
    }
    let status = if diffs.is_empty() { Status::Equal } else { Status::Different };
    Ok(InfrastructureResult { status, diffs })
}

fn outputs_of(store: &RecapStore, wf_id: i64) -> Result<BTreeMap<(String, String), String>, CompareError> {
    Ok(store
        .get_job_files(wf_id)?
        .into_iter()
        .filter(|f| f.direction == FileDirection::Out)
        .map(|f| ((f.job_name, basename(&f.file.keyname).to_string()), f.file.md5))
        .collect())
}

/// Pairs produced files by (job, basename) and compares their digests.
pub fn compare_outputs(store: &RecapStore, wf_a: i64, wf_b: i64) -> Result<OutputsResult, CompareError> {
    let a = outputs_of(store, wf_a)?;
    let b = outputs_of(store, wf_b)?;
    let keys: BTreeSet<&(String, String)> = a.keys().chain(b.keys()).collect();
    let mut diffs = Vec::new();
    let mut unpaired = false;
    for key in keys {
        let (ma, mb) = (a.get(key).cloned(), b.get(key).cloned());
        if ma.is_none() || mb.is_none() {
            unpaired = true;
        }
        if ma != mb {
            diffs.push(FileDiff { job_name: key.0.clone(), basename: key.1.clone(), md5_a: ma, md5_b: mb });
        }
    }
    let status = if unpaired {
        Status::Incomparable
    } else if diffs.is_empty() {
        Status::Equal
    } else {
        Status::Different
    };
    Ok(OutputsResult { status, diffs })
}

pub fn compare(store: &RecapStore, wf_a: i64, wf_b: i64) -> Result<ComparisonReport, CompareError> {
    let structure = compare_structure(store, wf_a, wf_b)?;
    // A report is still useful when one side lacks mappings; the infra
    // component then has nothing to compare.
    let infrastructure = match compare_infrastructure(store, wf_a, wf_b) {
        Err(CompareError::IncompleteProvenance { .. }) => {
            InfrastructureResult { status: Status::Incomparable, diffs: Vec::new() }
        }
        other => other?,
    };
    let outputs = compare_outputs(store, wf_a, wf_b)?;
    let verdict = if [structure.status, infrastructure.status, outputs.status].iter().all(|s| *s == Status::Equal) {
        Verdict::Reproduced
    } else {
        Verdict::NotReproduced
    };
    let unmapped = |wf| -> Result<usize, CompareError> {
        let names = load_dag(store, wf)?.job_names();
        let mapped: BTreeSet<String> = store.get_cap(wf)?.into_iter().map(|c| c.job_name).collect();
        Ok(names.difference(&mapped).count())
    };
    Ok(ComparisonReport {
        wf_a,
        wf_b,
        unmapped_jobs: (unmapped(wf_a)?, unmapped(wf_b)?),
        structure,
        infrastructure,
        outputs,
        verdict,
    })
}
