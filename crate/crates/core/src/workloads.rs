//! Synthetic workflows shaped like the ones used in the evaluation:
//! Wordcount, a 35-job Montage and single-job ReconAll, plus a random DAG
//! generator for property tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::Cloud;
use crate::wms::{JobSpec, ObjectRef, WorkflowDag};

/// How job durations are expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WorkMode {
    /// Jobs sleep for a fixed time regardless of the VM.
    Sleep,
    /// Jobs execute a number of instructions, so MIPS and cores matter.
    Compute,
}

/// MIPS the compute-mode lengths are calibrated against: at this rate a
/// compute job takes as long as its sleep-mode twin.
pub const REFERENCE_MIPS: f64 = 12_500.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub name: &'static str,
    pub dag: WorkflowDag,
    pub inputs: Vec<(ObjectRef, Vec<u8>)>,
}

impl Workload {
    /// Stores the workload's input files.
    pub fn install_inputs(&self, cloud: &mut Cloud) {
        for (r, bytes) in &self.inputs {
            cloud.put_object(&r.container, &r.keyname, bytes.clone(), Default::default());
        }
    }
}

fn job(name: &str, mode: WorkMode, secs: f64) -> JobSpec {
    match mode {
        WorkMode::Sleep => JobSpec::fixed(name, secs),
        WorkMode::Compute => JobSpec::compute(name, secs * REFERENCE_MIPS),
    }
}

fn edges(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(p, c)| (p.to_string(), c.to_string())).collect()
}

pub const WORDCOUNT_CONTAINER: &str = "wordcount";
pub const WORDCOUNT_INPUT: &str = "input.txt";

const WORDCOUNT_TEXT: &str = "It is a truth universally acknowledged that a workflow run on the Cloud\n\
should be repeatable. Split the text, count the words in each half, then add the counts.\n";

/// split, analysis1 and analysis2 on its halves, merge. Sleep times 120/120/60/60 s.
pub fn wordcount(mode: WorkMode) -> Workload {
    let c = WORDCOUNT_CONTAINER;
    let jobs = vec![
        job("split", mode, 120.0).ram(128).input(c, WORDCOUNT_INPUT).output(c, "part1.txt").output(c, "part2.txt"),
        job("analysis1", mode, 120.0).ram(128).input(c, "part1.txt").output(c, "count1.txt").args(["part1.txt"]),
        job("analysis2", mode, 60.0).ram(128).input(c, "part2.txt").output(c, "count2.txt").args(["part2.txt"]),
        job("merge", mode, 60.0).ram(128).input(c, "count1.txt").input(c, "count2.txt").output(c, "total.txt"),
    ];
    let dag = WorkflowDag::new(
        jobs,
        edges(&[("split", "analysis1"), ("split", "analysis2"), ("analysis1", "merge"), ("analysis2", "merge")]),
    )
    .expect("wordcount DAG is valid");
    Workload {
        name: "wordcount",
        dag,
        inputs: vec![(ObjectRef::new(c, WORDCOUNT_INPUT), WORDCOUNT_TEXT.as_bytes().to_vec())],
    }
}

pub const MONTAGE_CONTAINER: &str = "montage";

/// 35 jobs over 8 input images: project, fit pairwise differences, model
/// the background, correct, then co-add into a shrunk JPEG mosaic.
pub fn montage(mode: WorkMode) -> Workload {
    let c = MONTAGE_CONTAINER;
    let images = 8;
    let mut jobs = Vec::new();
    let mut es: Vec<(String, String)> = Vec::new();
    let mut inputs = Vec::new();
    for i in 0..images {
        let raw = format!("2mass-{i}.fits");
        inputs.push((ObjectRef::new(c, raw.clone()), format!("SIMPLE = T / raw tile {i}\n").into_bytes()));
        jobs.push(job(&format!("mProjectPP_{i}"), mode, 8.0).ram(256).input(c, &raw).output(c, &format!("proj-{i}.fits")));
    }
    let mut pairs = Vec::new();
    for step in [1, 2] {
        for i in 0..images - step {
            pairs.push((i, i + step));
        }
    }
    for &(a, b) in &pairs {
        let name = format!("mDiffFit_{a}_{b}");
        jobs.push(
            job(&name, mode, 3.0)
                .ram(128)
                .input(c, &format!("proj-{a}.fits"))
                .input(c, &format!("proj-{b}.fits"))
                .output(c, &format!("fit-{a}-{b}.txt")),
        );
        es.push((format!("mProjectPP_{a}"), name.clone()));
        es.push((format!("mProjectPP_{b}"), name));
    }
    let mut concat = job("mConcatFit", mode, 2.0).ram(128).output(c, "fits.tbl");
    for &(a, b) in &pairs {
        concat = concat.input(c, &format!("fit-{a}-{b}.txt"));
        es.push((format!("mDiffFit_{a}_{b}"), "mConcatFit".into()));
    }
    jobs.push(concat);
    jobs.push(job("mBgModel", mode, 4.0).ram(256).input(c, "fits.tbl").output(c, "corrections.tbl"));
    es.push(("mConcatFit".into(), "mBgModel".into()));
    let mut imgtbl = job("mImgtbl", mode, 2.0).ram(128).output(c, "images.tbl");
    let mut add = job("mAdd", mode, 10.0).ram(512).input(c, "images.tbl").output(c, "mosaic.fits");
    for i in 0..images {
        let name = format!("mBackground_{i}");
        let out = format!("corr-{i}.fits");
        jobs.push(job(&name, mode, 4.0).ram(256).input(c, &format!("proj-{i}.fits")).input(c, "corrections.tbl").output(c, &out));
        es.push(("mBgModel".into(), name.clone()));
        es.push((format!("mProjectPP_{i}"), name.clone()));
        es.push((name.clone(), "mImgtbl".into()));
        es.push((name, "mAdd".into()));
        imgtbl = imgtbl.input(c, &out);
        add = add.input(c, &out);
    }
    jobs.push(imgtbl);
    jobs.push(add);
    es.push(("mImgtbl".into(), "mAdd".into()));
    jobs.push(job("mShrink", mode, 3.0).ram(256).input(c, "mosaic.fits").output(c, "mosaic-small.fits"));
    es.push(("mAdd".into(), "mShrink".into()));
    jobs.push(job("mJPEG", mode, 2.0).ram(128).input(c, "mosaic-small.fits").output(c, "mosaic.jpg"));
    es.push(("mShrink".into(), "mJPEG".into()));
    let dag = WorkflowDag::new(jobs, es).expect("montage DAG is valid");
    Workload { name: "montage", dag, inputs }
}

pub const RECONALL_CONTAINER: &str = "reconall";

/// One recon-all job over a single MRI scan. In compute mode it can use up to
/// `cores` cores.
pub fn reconall(mode: WorkMode, cores: u32) -> Workload {
    let c = RECONALL_CONTAINER;
    let j = job("recon-all", mode, 32_599.0)
        .ram(1536)
        .parallelism(cores.max(1))
        .input(c, "subject.nii")
        .output(c, "subject-recon.tar")
        .args(["-all", "-s", "subject"]);
    Workload {
        name: "reconall",
        dag: WorkflowDag::new(vec![j], vec![]).expect("single job is valid"),
        inputs: vec![(ObjectRef::new(c, "subject.nii"), b"NIFTI-1 synthetic scan\n".to_vec())],
    }
}

/// Random layered DAG with 1..=max_jobs jobs. Each job depends on a random
/// subset of earlier jobs, so the result is acyclic by construction.
pub fn random_dag(seed: u64, max_jobs: usize, mode: WorkMode) -> WorkflowDag {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_jobs.max(1));
    let mut jobs = Vec::with_capacity(n);
    let mut es = Vec::new();
    for i in 0..n {
        let secs = f64::from(rng.random_range(1u32..=120));
        let mut j = job(&format!("job{i:02}"), mode, secs).ram(rng.random_range(0..=400));
        if mode == WorkMode::Compute {
            j = j.parallelism(rng.random_range(1..=4));
        }
        jobs.push(j);
        for p in 0..i {
            if rng.random_bool(0.25) {
                es.push((format!("job{p:02}"), format!("job{i:02}")));
            }
        }
    }
    WorkflowDag::new(jobs, es).expect("layered DAG is acyclic")
}
