//! Abstract workflow description and its declarative TOML file format.
//!
//! ```toml
//! [[job]]
//! name = "split"
//! fixed_duration_s = 120.0        # or: length_mi = 1500000
//! ram_req_mb = 100
//! max_parallelism = 1
//! args = ["--parts", "2"]
//! inputs = [{ container = "wordcount-in", keyname = "input.txt" }]
//! outputs = [{ container = "wordcount-out", keyname = "chunks.txt" }]
//!
//! [[edge]]
//! parent = "split"
//! child = "analysis1"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DagError {
    #[error("malformed workflow file: {0}")]
    Malformed(String),
    #[error("duplicate job name `{0}`")]
    DuplicateJob(String),
    #[error("edge references unknown job `{0}`")]
    UnknownJob(String),
    #[error("self edge on `{0}`")]
    SelfEdge(String),
    #[error("job `{0}` must set exactly one of length_mi / fixed_duration_s")]
    AmbiguousWork(String),
    #[error("job `{0}`: {1}")]
    InvalidJob(String, String),
    #[error("workflow contains a cycle through `{0}`")]
    CyclicDag(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectRef {
    pub container: String,
    pub keyname: String,
}

impl ObjectRef {
    pub fn new(container: impl Into<String>, keyname: impl Into<String>) -> Self {
        ObjectRef { container: container.into(), keyname: keyname.into() }
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.container, self.keyname)
    }
}

/// What a job costs to run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Work {
    /// Million instructions, executed at the host's MIPS.
    Compute { length_mi: f64 },
    /// A sleep-style job whose duration ignores the host.
    Fixed { duration: SimTime },
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobSpec {
    pub name: String,
    pub work: Work,
    pub ram_req_mb: u32,
    pub max_parallelism: u32,
    pub inputs: Vec<ObjectRef>,
    pub outputs: Vec<ObjectRef>,
    pub args: Vec<String>,
}

impl JobSpec {
    pub fn compute(name: impl Into<String>, length_mi: f64) -> Self {
        JobSpec::with_work(name, Work::Compute { length_mi })
    }

    pub fn fixed(name: impl Into<String>, secs: f64) -> Self {
        JobSpec::with_work(name, Work::Fixed { duration: SimTime::from_secs_f64(secs) })
    }

    fn with_work(name: impl Into<String>, work: Work) -> Self {
        JobSpec {
            name: name.into(),
            work,
            ram_req_mb: 0,
            max_parallelism: 1,
            inputs: Vec::new(),
            outputs: Vec::new(),
            args: Vec::new(),
        }
    }

    pub fn ram(mut self, mb: u32) -> Self {
        self.ram_req_mb = mb;
        self
    }

    pub fn parallelism(mut self, p: u32) -> Self {
        self.max_parallelism = p;
        self
    }

    pub fn input(mut self, container: &str, key: &str) -> Self {
        self.inputs.push(ObjectRef::new(container, key));
        self
    }

    pub fn output(mut self, container: &str, key: &str) -> Self {
        self.outputs.push(ObjectRef::new(container, key));
        self
    }

    pub fn args<I, S>(mut self, args: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.args = args.into_iter().map(Into::into).collect();
        self
    }

    fn validate(&self) -> Result<(), DagError> {
        if self.name.is_empty() {
            return Err(DagError::InvalidJob(self.name.clone(), "empty name".into()));
        }
        if self.max_parallelism == 0 {
            return Err(DagError::InvalidJob(self.name.clone(), "max_parallelism must be >= 1".into()));
        }
        if let Work::Compute { length_mi } = self.work {
            if !length_mi.is_finite() || length_mi < 0.0 {
                return Err(DagError::InvalidJob(self.name.clone(), "length_mi must be a nonnegative number".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkflowDag {
    jobs: Vec<JobSpec>,
    edges: Vec<(String, String)>,
}

impl WorkflowDag {
    pub fn new(jobs: Vec<JobSpec>, edges: Vec<(String, String)>) -> Result<Self, DagError> {
        let dag = WorkflowDag { jobs, edges };
        dag.validate()?;
        Ok(dag)
    }

    pub fn empty() -> Self {
        WorkflowDag { jobs: Vec::new(), edges: Vec::new() }
    }

    fn validate(&self) -> Result<(), DagError> {
        let mut index = BTreeMap::new();
        for (i, job) in self.jobs.iter().enumerate() {
            job.validate()?;
            if index.insert(job.name.as_str(), i).is_some() {
                return Err(DagError::DuplicateJob(job.name.clone()));
            }
        }
        let mut graph = DiGraph::<usize, ()>::with_capacity(self.jobs.len(), self.edges.len());
        let nodes: Vec<_> = (0..self.jobs.len()).map(|i| graph.add_node(i)).collect();
        for (p, c) in &self.edges {
            if p == c {
                return Err(DagError::SelfEdge(p.clone()));
            }
            let pi = *index.get(p.as_str()).ok_or_else(|| DagError::UnknownJob(p.clone()))?;
            let ci = *index.get(c.as_str()).ok_or_else(|| DagError::UnknownJob(c.clone()))?;
            graph.update_edge(nodes[pi], nodes[ci], ());
        }
        petgraph::algo::toposort(&graph, None)
            .map(|_| ())
            .map_err(|cycle| DagError::CyclicDag(self.jobs[graph[cycle.node_id()]].name.clone()))
    }

    pub fn jobs(&self) -> &[JobSpec] {
        &self.jobs
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn job(&self, name: &str) -> Option<&JobSpec> {
        self.jobs.iter().find(|j| j.name == name)
    }

    pub fn job_names(&self) -> BTreeSet<String> {
        self.jobs.iter().map(|j| j.name.clone()).collect()
    }

    pub fn edge_set(&self) -> BTreeSet<(String, String)> {
        self.edges.iter().cloned().collect()
    }

    /// Parent indices per job index.
    pub(crate) fn parent_indices(&self) -> Vec<Vec<usize>> {
        let index: BTreeMap<&str, usize> = self.jobs.iter().enumerate().map(|(i, j)| (j.name.as_str(), i)).collect();
        let mut parents = vec![Vec::new(); self.jobs.len()];
        for (p, c) in &self.edges {
            let (pi, ci) = (index[p.as_str()], index[c.as_str()]);
            if !parents[ci].contains(&pi) {
                parents[ci].push(pi);
            }
        }
        parents
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DagError> {
        let file: DagFile = toml::from_str(text).map_err(|e| DagError::Malformed(e.message().to_string()))?;
        let mut jobs = Vec::with_capacity(file.job.len());
        for j in file.job {
            let work = match (j.length_mi, j.fixed_duration_s) {
                (Some(length_mi), None) => Work::Compute { length_mi },
                (None, Some(s)) if s.is_finite() && s >= 0.0 => Work::Fixed { duration: SimTime::from_secs_f64(s) },
                (None, Some(_)) => return Err(DagError::InvalidJob(j.name, "fixed_duration_s must be nonnegative".into())),
                _ => return Err(DagError::AmbiguousWork(j.name)),
            };
            jobs.push(JobSpec {
                name: j.name,
                work,
                ram_req_mb: j.ram_req_mb,
                max_parallelism: j.max_parallelism,
                inputs: j.inputs,
                outputs: j.outputs,
                args: j.args,
            });
        }
        let edges = file.edge.into_iter().map(|e| (e.parent, e.child)).collect();
        WorkflowDag::new(jobs, edges)
    }

    pub fn to_toml_string(&self) -> String {
        let file = DagFile {
            job: self
                .jobs
                .iter()
                .map(|j| {
                    let (length_mi, fixed_duration_s) = match j.work {
                        Work::Compute { length_mi } => (Some(length_mi), None),
                        Work::Fixed { duration } => (None, Some(duration.as_secs_f64())),
                    };
                    JobEntry {
                        name: j.name.clone(),
                        length_mi,
                        fixed_duration_s,
                        ram_req_mb: j.ram_req_mb,
                        max_parallelism: j.max_parallelism,
                        args: j.args.clone(),
                        inputs: j.inputs.clone(),
                        outputs: j.outputs.clone(),
                    }
                })
                .collect(),
            edge: self.edges.iter().map(|(p, c)| EdgeEntry { parent: p.clone(), child: c.clone() }).collect(),
        };
        toml::to_string(&file).expect("workflow file serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DagFile {
    #[serde(default)]
    job: Vec<JobEntry>,
    #[serde(default)]
    edge: Vec<EdgeEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobEntry {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length_mi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixed_duration_s: Option<f64>,
    #[serde(default)]
    ram_req_mb: u32,
    #[serde(default = "one")]
    max_parallelism: u32,
    #[serde(default)]
    args: Vec<String>,
    #[serde(default)]
    inputs: Vec<ObjectRef>,
    #[serde(default)]
    outputs: Vec<ObjectRef>,
}

fn one() -> u32 {
    1
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeEntry {
    parent: String,
    child: String,
}
