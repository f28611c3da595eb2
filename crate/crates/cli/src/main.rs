//! `recap`: operator entry point over the provenance toolkit.
//!
//! Every verb that touches stored provenance reads the INI config given by
//! `--config`. The simulated cloud is rebuilt from the scenario file named in
//! `cloud_settings.scenario` on each invocation (a two-VM wordcount pool when
//! absent); provenance persists in the
//! sqlite file from `recapdb_settings.dburl`.

use std::collections::BTreeMap;
use std::fs;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use recap_core::compare::{compare, Verdict};
use recap_core::config::RecapConfig;
use recap_core::cloud::MipsModel;
use recap_core::experiments::{run_experiment, wordcount_pool, ExperimentReport, EXPERIMENTS};
use recap_core::replay::{reproduce, ReplayError, ReplayOptions};
use recap_core::scenario::Scenario;
use recap_core::store::{RecapStore, SourceFiles};
use recap_core::testbed::Testbed;
use recap_core::workloads::{wordcount, WorkMode};
use recap_service::{AppState, ClockMode, WsClient};

#[derive(Parser)]
#[command(name = "recap", version, about = "Cloud-aware workflow provenance: capture, replay, compare")]
struct Cli {
    /// INI configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Submit a workflow, run it in virtual time and capture its provenance.
    Submit {
        #[arg(long)]
        dag: PathBuf,
        #[arg(long)]
        site: PathBuf,
        #[arg(long)]
        tc: PathBuf,
        #[arg(long)]
        props: PathBuf,
        /// Jobs log their host (always on under the snohi mapping).
        #[arg(long)]
        instrumented: bool,
        /// Send to the wrapper service at the configured endpoint instead.
        #[arg(long)]
        remote: bool,
    },
    /// Stored workflows and their mapping coverage.
    Status {
        #[arg(long)]
        wf_id: Option<i64>,
    },
    /// Re-provision the captured resources and re-run a stored workflow.
    Reproduce {
        #[arg(long)]
        wf_id: i64,
        /// Provision flavor TO wherever FROM was captured.
        #[arg(long = "flavor-sub", value_name = "FROM=TO", value_parser = parse_substitution)]
        flavor_sub: Vec<(i64, i64)>,
    },
    /// Compare two stored runs; exit status 0 iff reproduced.
    Compare {
        #[arg(long)]
        wf_a: i64,
        #[arg(long)]
        wf_b: i64,
    },
    /// Run a named experiment, write its CSV and print its summary.
    Experiment {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(EXPERIMENTS))]
        name: String,
        /// CSV destination; defaults to <name>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the wrapper service.
    Serve {
        /// Listen address; defaults to the host and port of the configured endpoint.
        #[arg(long)]
        bind: Option<String>,
        #[arg(long, default_value = "complete")]
        clock: ClockMode,
    },
}

fn parse_substitution(s: &str) -> Result<(i64, i64), String> {
    let (a, b) = s.split_once('=').ok_or("expected FROM=TO")?;
    Ok((a.trim().parse().map_err(|_| "FROM is not a flavor id")?, b.trim().parse().map_err(|_| "TO is not a flavor id")?))
}

type CmdResult = Result<ExitCode, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn load_config(path: Option<&Path>) -> Result<RecapConfig, String> {
    let path = path.ok_or("this command needs --config")?;
    RecapConfig::load(path).map_err(err)
}

fn load_scenario(cfg: &RecapConfig) -> Result<Scenario, String> {
    match cfg.scenario_path() {
        Some(p) => {
            let text = fs::read_to_string(&p).map_err(|e| format!("cannot read scenario {}: {e}", p.display()))?;
            Scenario::from_toml_str(&text).map_err(err)
        }
        None => Ok(default_scenario()),
    }
}

/// Two m1.small workers holding the wordcount input, for configs without a scenario.
fn default_scenario() -> Scenario {
    let mut s = wordcount_pool(MipsModel::fixed(12_500));
    for (obj, bytes) in wordcount(WorkMode::Sleep).inputs {
        s = s.with_object(&obj.container, &obj.keyname, &String::from_utf8_lossy(&bytes));
    }
    s
}

fn open_testbed(cfg: &RecapConfig) -> Result<Testbed, String> {
    let store = RecapStore::open(cfg.recap_db_path().map_err(err)?).map_err(err)?;
    Testbed::new(&load_scenario(cfg)?, store, cfg.mapping_type()).map_err(err)
}

fn open_store(cfg: &RecapConfig) -> Result<RecapStore, String> {
    RecapStore::open(cfg.recap_db_path().map_err(err)?).map_err(err)
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn print(json_mode: bool, value: serde_json::Value, text: impl FnOnce() -> String) {
    if json_mode {
        println!("{value}");
    } else {
        println!("{}", text());
    }
}

fn cmd_submit(cli: &Cli, files: SourceFiles, instrumented: bool, remote: bool) -> CmdResult {
    let cfg = load_config(cli.config.as_deref())?;
    if remote {
        let client = WsClient::new(cfg.endpoint(), cfg.service_user(), cfg.service_password()).map_err(err)?;
        let r = client.submit(&files, instrumented).map_err(err)?;
        print(cli.json, json!({ "wf_id": r.wf_id, "wms_wfid": r.wms_wfid }), || {
            format!("submitted {} as workflow {}", r.wms_wfid, r.wf_id)
        });
        return Ok(ExitCode::SUCCESS);
    }
    let mut tb = open_testbed(&cfg)?;
    let sub = tb.submit(files, instrumented).map_err(err)?;
    let s = tb.run_until_done(&sub.wms_wfid).map_err(err)?;
    let outcome = s.outcome.clone().unwrap_or_default();
    let value = json!({
        "wf_id": s.wf_id,
        "wms_wfid": s.wms_wfid,
        "state": s.state,
        "makespan_s": s.makespan_s,
        "mapping": tb.mapping().as_str(),
        "mapped": outcome.mapped.len(),
        "unmapped": outcome.unmapped,
    });
    tb.into_store().close().map_err(err)?;
    print(cli.json, value, || {
        format!(
            "workflow {} ({}) {:?} after {} s; {} mapping covered {} of {} jobs",
            s.wf_id,
            s.wms_wfid,
            s.state,
            s.makespan_s,
            cfg.mapping_type(),
            outcome.mapped.len(),
            outcome.mapped.len() + outcome.unmapped.len()
        )
    });
    Ok(ExitCode::SUCCESS)
}

fn cmd_status(cli: &Cli, wf_id: Option<i64>) -> CmdResult {
    let cfg = load_config(cli.config.as_deref())?;
    let store = open_store(&cfg)?;
    let mut rows = Vec::new();
    for (id, wms_wfid) in store.list_workflows().map_err(err)? {
        if wf_id.is_some_and(|w| w != id) {
            continue;
        }
        let src = store.get_source(id).map_err(err)?;
        let jobs = recap_core::wms::WorkflowDag::from_toml_str(&src.wf_dag).map(|d| d.len()).unwrap_or(0);
        let mapped = store.get_cap(id).map_err(err)?.len();
        let files = store.get_job_files(id).map_err(err)?.len();
        rows.push(json!({ "wf_id": id, "wms_wfid": wms_wfid, "jobs": jobs, "mapped": mapped, "files": files }));
    }
    if let Some(w) = wf_id {
        if rows.is_empty() {
            return Err(format!("unknown workflow {w}"));
        }
    }
    print(cli.json, json!(rows), || {
        let mut out = format!("{:>6}  {:<10} {:>5} {:>7} {:>6}", "wf_id", "wms_wfid", "jobs", "mapped", "files");
        for r in &rows {
            out.push_str(&format!(
                "\n{:>6}  {:<10} {:>5} {:>7} {:>6}",
                r["wf_id"], r["wms_wfid"].as_str().unwrap_or_default(), r["jobs"], r["mapped"], r["files"]
            ));
        }
        out
    });
    Ok(ExitCode::SUCCESS)
}

fn cmd_reproduce(cli: &Cli, wf_id: i64, subs: &[(i64, i64)]) -> CmdResult {
    let cfg = load_config(cli.config.as_deref())?;
    let mut tb = open_testbed(&cfg)?;
    let opts = ReplayOptions { flavor_substitution: subs.iter().copied().collect::<BTreeMap<_, _>>(), ..ReplayOptions::default() };
    let r = match reproduce(&mut tb, wf_id, &opts) {
        Ok(r) => r,
        Err(e @ ReplayError::IncompleteProvenance { .. }) => return Err(format!("IncompleteProvenance: {e}")),
        Err(e) => return Err(e.to_string()),
    };
    tb.into_store().close().map_err(err)?;
    // Always the bare id pair, so callers can parse it.
    println!("{}", json!({ "wf_id": r.submission.wf_id, "wms_wfid": r.submission.wms_wfid }));
    if !cli.json {
        eprintln!("replayed workflow {wf_id} on {} in {} s", r.provisioned.join(", "), r.summary.makespan_s);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(cli: &Cli, wf_a: i64, wf_b: i64) -> CmdResult {
    let cfg = load_config(cli.config.as_deref())?;
    let store = open_store(&cfg)?;
    let report = compare(&store, wf_a, wf_b).map_err(err)?;
    if cli.json {
        println!("{}", report.to_json());
    } else {
        println!("structure:      {:?}", report.structure.status);
        println!("infrastructure: {:?}", report.infrastructure.status);
        for d in &report.infrastructure.diffs {
            println!("  {} {}: {} vs {}", d.job_name, d.field, d.a, d.b);
        }
        println!("outputs:        {:?}", report.outputs.status);
        for d in &report.outputs.diffs {
            println!("  {} {}: {:?} vs {:?}", d.job_name, d.basename, d.md5_a, d.md5_b);
        }
        println!("unmapped jobs:  {} / {}", report.unmapped_jobs.0, report.unmapped_jobs.1);
        println!("verdict:        {:?}", report.verdict);
    }
    Ok(if report.verdict == Verdict::Reproduced { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn write_csv(report: &ExperimentReport, path: &Path) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(&report.header).map_err(err)?;
    for row in &report.rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(err)
}

fn cmd_experiment(cli: &Cli, name: &str, out: Option<PathBuf>) -> CmdResult {
    let report = run_experiment(name).map_err(err)?;
    let path = out.unwrap_or_else(|| PathBuf::from(format!("{name}.csv")));
    write_csv(&report, &path)?;
    print(cli.json, json!({ "name": name, "csv": path, "rows": report.rows.len(), "summary": report.summary }), || {
        format!("{name}: {} rows written to {}\n{}", report.rows.len(), path.display(), report.summary)
    });
    Ok(ExitCode::SUCCESS)
}

fn endpoint_addr(endpoint: &str) -> Result<SocketAddr, String> {
    let rest = endpoint.split_once("://").map_or(endpoint, |(_, r)| r);
    let authority = rest.split('/').next().unwrap_or_default();
    let authority = if authority.contains(':') { authority.to_string() } else { format!("{authority}:80") };
    authority
        .to_socket_addrs()
        .map_err(|e| format!("cannot resolve endpoint `{endpoint}`: {e}"))?
        .next()
        .ok_or_else(|| format!("endpoint `{endpoint}` resolves to nothing"))
}

fn cmd_serve(cli: &Cli, bind: Option<String>, clock: ClockMode) -> CmdResult {
    let cfg = load_config(cli.config.as_deref())?;
    let addr = match bind {
        Some(b) => b.parse().map_err(|e| format!("bad --bind `{b}`: {e}"))?,
        None => endpoint_addr(cfg.endpoint())?,
    };
    let tb = open_testbed(&cfg)?;
    let state = AppState::new(tb, cfg.service_user(), cfg.service_password(), clock);
    recap_service::serve_blocking(addr, state).map_err(err)?;
    Ok(ExitCode::SUCCESS)
}

fn init_logging(config: Option<&Path>) {
    // log_conf may name a level; anything else (e.g. a logging config path) keeps the default.
    let level = config
        .and_then(|p| RecapConfig::load(p).ok())
        .map(|c| c.log_conf().to_ascii_lowercase())
        .filter(|l| ["error", "warn", "info", "debug", "trace", "off"].contains(&l.as_str()))
        .unwrap_or_else(|| "warn".into());
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.config.as_deref());
    let result = match &cli.cmd {
        Command::Submit { dag, site, tc, props, instrumented, remote } => {
            (|| Ok::<_, String>(SourceFiles::new(read(dag)?, read(site)?, read(tc)?, read(props)?)))()
                .and_then(|files| cmd_submit(&cli, files, *instrumented, *remote))
        }
        Command::Status { wf_id } => cmd_status(&cli, *wf_id),
        Command::Reproduce { wf_id, flavor_sub } => cmd_reproduce(&cli, *wf_id, flavor_sub),
        Command::Compare { wf_a, wf_b } => cmd_compare(&cli, *wf_a, *wf_b),
        Command::Experiment { name, out } => cmd_experiment(&cli, name, out.clone()),
        Command::Serve { bind, clock } => cmd_serve(&cli, bind.clone(), *clock),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
