//! ReCAP provenance store on an embedded SQLite file.
//!
//! One connection guarded by a mutex: every public call runs inside its own
//! transaction, so callers on different threads see serialized, atomic
//! operations.

mod records;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::path::Path;
use std::sync::{Mutex, MutexGuard};

use rusqlite::{params, Connection, OptionalExtension, Row, Transaction};
use thiserror::Error;

pub use records::{
    CapRecord, CpuSpecRow, FileDirection, JobCloudFile, JobHostTemp, LazyVmObservation, ResourceConfig, SourceFiles,
    TempMapping, WorkflowExport, WorkflowSource,
};

use crate::cloud::CloudFileRecord;
use crate::time::SimTime;

const SCHEMA_V1: &str = include_str!("../../migrations/V1__recap.sql");

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("workflow `{0}` is already registered")]
    DuplicateWmsWfid(String),
    #[error("missing {0} file")]
    MissingFile(&'static str),
    #[error("job `{job_name}` of workflow {wf_id} is already mapped")]
    DuplicateMapping { wf_id: i64, job_name: String },
    #[error("unknown workflow {0}")]
    UnknownWorkflow(i64),
    #[error("flavor {flavor_id} was recorded with a different (ram, disk, vcpus) triple")]
    FlavorMismatch { flavor_id: i64 },
    #[error("corrupt row: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Sql(#[from] rusqlite::Error),
}

pub type StoreResult<T> = Result<T, StoreError>;

pub struct RecapStore {
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for RecapStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RecapStore").finish_non_exhaustive()
    }
}

fn us(t: SimTime) -> i64 {
    t.as_micros() as i64
}

fn time_col(row: &Row<'_>, idx: &str) -> rusqlite::Result<SimTime> {
    Ok(SimTime::from_micros(row.get::<_, i64>(idx)?.max(0) as u64))
}

fn ip_col(row: &Row<'_>, idx: &str) -> rusqlite::Result<Ipv4Addr> {
    let text: String = row.get(idx)?;
    text.parse().map_err(|e| rusqlite::Error::FromSqlConversionFailure(0, rusqlite::types::Type::Text, Box::new(e)))
}

fn resource_cols(row: &Row<'_>) -> rusqlite::Result<ResourceConfig> {
    Ok(ResourceConfig {
        nodename: row.get("nodename")?,
        flavor_id: row.get("flavor_id")?,
        flavor_name: row.get("flavor_name")?,
        min_ram_mb: row.get("min_ram_mb")?,
        min_hd_gb: row.get("min_hd_gb")?,
        min_cpu: row.get("min_cpu")?,
        image_name: row.get("image_name")?,
        image_id: row.get("image_id")?,
        extra: row.get("extra")?,
    })
}

fn cap_row(row: &Row<'_>) -> rusqlite::Result<CapRecord> {
    Ok(CapRecord { wf_id: row.get("wf_id")?, job_name: row.get("job_name")?, resource: resource_cols(row)? })
}

fn observation_row(row: &Row<'_>) -> rusqlite::Result<LazyVmObservation> {
    Ok(LazyVmObservation {
        vm_id: row.get("vm_id")?,
        ip: ip_col(row, "ip")?,
        resource: resource_cols(row)?,
        created_at: time_col(row, "created_at")?,
        first_seen: time_col(row, "first_seen")?,
        last_seen: time_col(row, "last_seen")?,
    })
}

fn file_row(row: &Row<'_>) -> rusqlite::Result<CloudFileRecord> {
    let meta: String = row.get("metadata")?;
    Ok(CloudFileRecord {
        container: row.get("container")?,
        keyname: row.get("keyname")?,
        md5: row.get("md5")?,
        metadata: serde_json::from_str(&meta).unwrap_or_default(),
        created: time_col(row, "created")?,
        modified: time_col(row, "modified")?,
    })
}

fn is_unique_violation(e: &rusqlite::Error) -> bool {
    matches!(e, rusqlite::Error::SqliteFailure(f, _) if f.extended_code == rusqlite::ffi::SQLITE_CONSTRAINT_UNIQUE
        || f.extended_code == rusqlite::ffi::SQLITE_CONSTRAINT_PRIMARYKEY)
}

fn ensure_workflow(tx: &Transaction<'_>, wf_id: i64) -> StoreResult<()> {
    let found: Option<i64> =
        tx.query_row("SELECT wf_id FROM WorkflowSource WHERE wf_id = ?1", [wf_id], |r| r.get(0)).optional()?;
    found.map(|_| ()).ok_or(StoreError::UnknownWorkflow(wf_id))
}

fn check_flavor(tx: &Transaction<'_>, r: &ResourceConfig) -> StoreResult<()> {
    let seen: Option<(u32, u32, u32)> = tx
        .query_row(
            "SELECT min_ram_mb, min_hd_gb, min_cpu FROM WfCloudMapping WHERE flavor_id = ?1 LIMIT 1",
            [r.flavor_id],
            |row| Ok((row.get(0)?, row.get(1)?, row.get(2)?)),
        )
        .optional()?;
    match seen {
        Some(triple) if triple != (r.min_ram_mb, r.min_hd_gb, r.min_cpu) => {
            Err(StoreError::FlavorMismatch { flavor_id: r.flavor_id })
        }
        _ => Ok(()),
    }
}

fn insert_cap(tx: &Transaction<'_>, rec: &CapRecord) -> StoreResult<i64> {
    ensure_workflow(tx, rec.wf_id)?;
    check_flavor(tx, &rec.resource)?;
    let r = &rec.resource;
    let res = tx.execute(
        "INSERT INTO WfCloudMapping (wf_id, job_name, nodename, flavor_id, flavor_name, min_ram_mb, min_hd_gb, min_cpu, image_name, image_id, extra)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11)",
        params![rec.wf_id, rec.job_name, r.nodename, r.flavor_id, r.flavor_name, r.min_ram_mb, r.min_hd_gb, r.min_cpu, r.image_name, r.image_id, r.extra],
    );
    match res {
        Ok(_) => Ok(tx.last_insert_rowid()),
        Err(e) if is_unique_violation(&e) => {
            Err(StoreError::DuplicateMapping { wf_id: rec.wf_id, job_name: rec.job_name.clone() })
        }
        Err(e) => Err(e.into()),
    }
}

fn upsert_file(tx: &Transaction<'_>, f: &CloudFileRecord) -> StoreResult<i64> {
    let meta = serde_json::to_string(&f.metadata).expect("string map serializes");
    tx.execute(
        "INSERT INTO CloudFileCatalog (container, keyname, md5, metadata, created, modified) VALUES (?1, ?2, ?3, ?4, ?5, ?6)
         ON CONFLICT (container, keyname) DO UPDATE SET md5 = excluded.md5, metadata = excluded.metadata,
             created = excluded.created, modified = excluded.modified",
        params![f.container, f.keyname, f.md5, meta, us(f.created), us(f.modified)],
    )?;
    Ok(tx.query_row(
        "SELECT file_id FROM CloudFileCatalog WHERE container = ?1 AND keyname = ?2",
        params![f.container, f.keyname],
        |r| r.get(0),
    )?)
}

impl RecapStore {
    /// Opens (creating if needed) a store file. `:memory:` gives a private in-memory store.
    pub fn open(path: impl AsRef<Path>) -> StoreResult<Self> {
        let conn = Connection::open(path)?;
        Self::init(conn)
    }

    pub fn open_in_memory() -> StoreResult<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> StoreResult<Self> {
        conn.pragma_update(None, "foreign_keys", true)?;
        conn.execute_batch(SCHEMA_V1)?;
        Ok(RecapStore { conn: Mutex::new(conn) })
    }

    /// Flushes and closes the underlying connection.
    pub fn close(self) -> StoreResult<()> {
        let conn = self.conn.into_inner().unwrap_or_else(|p| p.into_inner());
        conn.close().map_err(|(_, e)| e.into())
    }

    fn lock(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn with_tx<T>(&self, f: impl FnOnce(&Transaction<'_>) -> StoreResult<T>) -> StoreResult<T> {
        let mut conn = self.lock();
        let tx = conn.transaction()?;
        let out = f(&tx)?;
        tx.commit()?;
        Ok(out)
    }

    // --- WorkflowSource ---

    pub fn register_source(&self, wms_wfid: &str, files: &SourceFiles) -> StoreResult<i64> {
        let dag = files.dag.as_ref().ok_or(StoreError::MissingFile("dag"))?;
        let site = files.site.as_ref().ok_or(StoreError::MissingFile("site"))?;
        let tc = files.tc.as_ref().ok_or(StoreError::MissingFile("tc"))?;
        let props = files.props.as_ref().ok_or(StoreError::MissingFile("props"))?;
        self.with_tx(|tx| {
            let res = tx.execute(
                "INSERT INTO WorkflowSource (wms_wfid, wf_dag, wf_site, wf_tc, wf_props) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![wms_wfid, dag, site, tc, props],
            );
            match res {
                Ok(_) => Ok(tx.last_insert_rowid()),
                Err(e) if is_unique_violation(&e) => Err(StoreError::DuplicateWmsWfid(wms_wfid.into())),
                Err(e) => Err(e.into()),
            }
        })
    }

    /// Removes a source row and everything hanging off it.
    pub fn delete_source(&self, wf_id: i64) -> StoreResult<()> {
        self.with_tx(|tx| {
            tx.execute("DELETE FROM WfCloudTempMapping WHERE wf_id = ?1", [wf_id])?;
            tx.execute("DELETE FROM JobHostTempMap WHERE wf_id = ?1", [wf_id])?;
            tx.execute("DELETE FROM JobCloudFile WHERE wf_id = ?1", [wf_id])?;
            tx.execute("DELETE FROM CPUSpecs WHERE map_id IN (SELECT map_id FROM WfCloudMapping WHERE wf_id = ?1)", [wf_id])?;
            tx.execute("DELETE FROM WfCloudMapping WHERE wf_id = ?1", [wf_id])?;
            tx.execute("DELETE FROM WorkflowSource WHERE wf_id = ?1", [wf_id])?;
            Ok(())
        })
    }

    pub fn get_source(&self, wf_id: i64) -> StoreResult<WorkflowSource> {
        self.lock()
            .query_row(
                "SELECT wf_id, wms_wfid, wf_dag, wf_site, wf_tc, wf_props FROM WorkflowSource WHERE wf_id = ?1",
                [wf_id],
                |r| {
                    Ok(WorkflowSource {
                        wf_id: r.get(0)?,
                        wms_wfid: r.get(1)?,
                        wf_dag: r.get(2)?,
                        wf_site: r.get(3)?,
                        wf_tc: r.get(4)?,
                        wf_props: r.get(5)?,
                    })
                },
            )
            .optional()?
            .ok_or(StoreError::UnknownWorkflow(wf_id))
    }

    pub fn wf_id_for(&self, wms_wfid: &str) -> StoreResult<Option<i64>> {
        Ok(self
            .lock()
            .query_row("SELECT wf_id FROM WorkflowSource WHERE wms_wfid = ?1", [wms_wfid], |r| r.get(0))
            .optional()?)
    }

    /// `(wf_id, wms_wfid)` of every registered workflow, oldest first.
    pub fn list_workflows(&self) -> StoreResult<Vec<(i64, String)>> {
        let conn = self.lock();
        let mut stmt = conn.prepare("SELECT wf_id, wms_wfid FROM WorkflowSource ORDER BY wf_id")?;
        let rows = stmt.query_map([], |r| Ok((r.get(0)?, r.get(1)?)))?.collect::<Result<_, _>>()?;
        Ok(rows)
    }

    /// The id the next registration will receive.
    pub fn next_wf_id(&self) -> StoreResult<i64> {
        let conn = self.lock();
        let seq: Option<i64> = conn
            .query_row("SELECT seq FROM sqlite_sequence WHERE name = 'WorkflowSource'", [], |r| r.get(0))
            .optional()?;
        Ok(seq.unwrap_or(0) + 1)
    }

    // --- WfCloudMapping ---

    pub fn insert_cap_record(&self, rec: &CapRecord) -> StoreResult<()> {
        self.with_tx(|tx| insert_cap(tx, rec).map(|_| ()))
    }

    /// Final mappings of a workflow ordered by job name.
    pub fn get_cap(&self, wf_id: i64) -> StoreResult<Vec<CapRecord>> {
        let conn = self.lock();
        let mut stmt = conn.prepare("SELECT * FROM WfCloudMapping WHERE wf_id = ?1 ORDER BY job_name")?;
        let rows = stmt.query_map([wf_id], cap_row)?.collect::<Result<_, _>>()?;
        Ok(rows)
    }

    pub fn get_cap_for_job(&self, wf_id: i64, job_name: &str) -> StoreResult<Option<CapRecord>> {
        Ok(self
            .lock()
            .query_row("SELECT * FROM WfCloudMapping WHERE wf_id = ?1 AND job_name = ?2", params![wf_id, job_name], cap_row)
            .optional()?)
    }

    // --- WfCloudTempMapping ---

    /// Inserts or replaces the temporary mapping of a job.
    pub fn upsert_temp_mapping(&self, t: &TempMapping) -> StoreResult<()> {
        let r = &t.cap.resource;
        self.with_tx(|tx| {
            tx.execute(
                "INSERT OR REPLACE INTO WfCloudTempMapping
                 (wf_id, job_name, vm_id, ip, nodename, flavor_id, flavor_name, min_ram_mb, min_hd_gb, min_cpu, image_name, image_id, extra, capture_time)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14)",
                params![
                    t.cap.wf_id, t.cap.job_name, t.vm_id, t.ip.to_string(), r.nodename, r.flavor_id, r.flavor_name,
                    r.min_ram_mb, r.min_hd_gb, r.min_cpu, r.image_name, r.image_id, r.extra, us(t.capture_time)
                ],
            )?;
            Ok(())
        })
    }

    pub fn get_temp_mapping(&self, wf_id: i64, job_name: &str) -> StoreResult<Option<TempMapping>> {
        Ok(self
            .lock()
            .query_row(
                "SELECT * FROM WfCloudTempMapping WHERE wf_id = ?1 AND job_name = ?2",
                params![wf_id, job_name],
                temp_row,
            )
            .optional()?)
    }

    /// Returns and deletes the temporary mapping of a job in one transaction.
    pub fn take_temp_mapping(&self, wf_id: i64, job_name: &str) -> StoreResult<Option<TempMapping>> {
        self.with_tx(|tx| {
            let found = tx
                .query_row(
                    "SELECT * FROM WfCloudTempMapping WHERE wf_id = ?1 AND job_name = ?2",
                    params![wf_id, job_name],
                    temp_row,
                )
                .optional()?;
            if found.is_some() {
                tx.execute("DELETE FROM WfCloudTempMapping WHERE wf_id = ?1 AND job_name = ?2", params![wf_id, job_name])?;
            }
            Ok(found)
        })
    }

    pub fn temp_mapping_count(&self, wf_id: i64) -> StoreResult<usize> {
        let n: i64 =
            self.lock().query_row("SELECT COUNT(*) FROM WfCloudTempMapping WHERE wf_id = ?1", [wf_id], |r| r.get(0))?;
        Ok(n as usize)
    }

    pub fn clear_temp_mappings(&self, wf_id: i64) -> StoreResult<usize> {
        Ok(self.lock().execute("DELETE FROM WfCloudTempMapping WHERE wf_id = ?1", [wf_id])?)
    }

    // --- JobHostTempMap ---

    pub fn upsert_job_host(&self, h: &JobHostTemp) -> StoreResult<()> {
        self.lock().execute(
            "INSERT OR REPLACE INTO JobHostTempMap (wf_id, job_name, host_ip, hostname) VALUES (?1, ?2, ?3, ?4)",
            params![h.wf_id, h.job_name, h.host_ip.to_string(), h.hostname],
        )?;
        Ok(())
    }

    pub fn get_job_hosts(&self, wf_id: i64) -> StoreResult<Vec<JobHostTemp>> {
        let conn = self.lock();
        let mut stmt = conn.prepare("SELECT * FROM JobHostTempMap WHERE wf_id = ?1 ORDER BY job_name")?;
        let rows = stmt
            .query_map([wf_id], |r| {
                Ok(JobHostTemp {
                    wf_id: r.get("wf_id")?,
                    job_name: r.get("job_name")?,
                    host_ip: ip_col(r, "host_ip")?,
                    hostname: r.get("hostname")?,
                })
            })?
            .collect::<Result<_, _>>()?;
        Ok(rows)
    }

    pub fn delete_job_host(&self, wf_id: i64, job_name: &str) -> StoreResult<bool> {
        let n = self
            .lock()
            .execute("DELETE FROM JobHostTempMap WHERE wf_id = ?1 AND job_name = ?2", params![wf_id, job_name])?;
        Ok(n > 0)
    }

    pub fn clear_job_hosts(&self, wf_id: i64) -> StoreResult<usize> {
        Ok(self.lock().execute("DELETE FROM JobHostTempMap WHERE wf_id = ?1", [wf_id])?)
    }

    // --- CPUSpecs ---

    /// Attaches CPU details to an existing mapping; replaces earlier ones.
    pub fn upsert_cpu_spec(&self, row: &CpuSpecRow) -> StoreResult<()> {
        self.with_tx(|tx| {
            let map_id: i64 = tx
                .query_row(
                    "SELECT map_id FROM WfCloudMapping WHERE wf_id = ?1 AND job_name = ?2",
                    params![row.wf_id, row.job_name],
                    |r| r.get(0),
                )
                .optional()?
                .ok_or(StoreError::UnknownWorkflow(row.wf_id))?;
            tx.execute(
                "INSERT OR REPLACE INTO CPUSpecs (map_id, arch, os, mips, kflops) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![map_id, row.arch, row.os, row.mips, row.kflops as i64],
            )?;
            Ok(())
        })
    }

    pub fn get_cpu_specs(&self, wf_id: i64) -> StoreResult<Vec<CpuSpecRow>> {
        let conn = self.lock();
        let mut stmt = conn.prepare(
            "SELECT m.wf_id, m.job_name, c.arch, c.os, c.mips, c.kflops
             FROM CPUSpecs c JOIN WfCloudMapping m ON m.map_id = c.map_id
             WHERE m.wf_id = ?1 ORDER BY m.job_name",
        )?;
        let rows = stmt
            .query_map([wf_id], |r| {
                Ok(CpuSpecRow {
                    wf_id: r.get(0)?,
                    job_name: r.get(1)?,
                    arch: r.get(2)?,
                    os: r.get(3)?,
                    mips: r.get(4)?,
                    kflops: r.get::<_, i64>(5)? as u64,
                })
            })?
            .collect::<Result<_, _>>()?;
        Ok(rows)
    }

    // --- JobCloudFile / CloudFileCatalog ---

    /// Records a job-file link and refreshes the catalog entry of the file.
    pub fn link_job_file(&self, link: &JobCloudFile) -> StoreResult<()> {
        self.with_tx(|tx| {
            ensure_workflow(tx, link.wf_id)?;
            let file_id = upsert_file(tx, &link.file)?;
            tx.execute(
                "INSERT OR IGNORE INTO JobCloudFile (wf_id, job_name, file_id, direction) VALUES (?1, ?2, ?3, ?4)",
                params![link.wf_id, link.job_name, file_id, link.direction.as_str()],
            )?;
            Ok(())
        })
    }

    pub fn get_job_files(&self, wf_id: i64) -> StoreResult<Vec<JobCloudFile>> {
        let conn = self.lock();
        let mut stmt = conn.prepare(
            "SELECT j.wf_id, j.job_name, j.direction, f.*
             FROM JobCloudFile j JOIN CloudFileCatalog f ON f.file_id = j.file_id
             WHERE j.wf_id = ?1 ORDER BY j.job_name, j.direction, f.container, f.keyname",
        )?;
        let rows = stmt
            .query_map([wf_id], |r| {
                let dir: String = r.get("direction")?;
                Ok(JobCloudFile {
                    wf_id: r.get("wf_id")?,
                    job_name: r.get("job_name")?,
                    direction: FileDirection::parse(&dir).unwrap_or(FileDirection::Out),
                    file: file_row(r)?,
                })
            })?
            .collect::<Result<_, _>>()?;
        Ok(rows)
    }

    // --- LazyVmObservation ---

    /// Records a VM sighting. Returns true when `(vm_id, created_at)` was unseen.
    pub fn record_vm_observation(&self, obs: &LazyVmObservation) -> StoreResult<bool> {
        let r = &obs.resource;
        self.with_tx(|tx| {
            let updated = tx.execute(
                "UPDATE LazyVmObservation SET last_seen = MAX(last_seen, ?3) WHERE vm_id = ?1 AND created_at = ?2",
                params![obs.vm_id, us(obs.created_at), us(obs.last_seen)],
            )?;
            if updated > 0 {
                return Ok(false);
            }
            tx.execute(
                "INSERT INTO LazyVmObservation
                 (vm_id, ip, nodename, flavor_id, flavor_name, min_ram_mb, min_hd_gb, min_cpu, image_name, image_id, extra, created_at, first_seen, last_seen)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14)",
                params![
                    obs.vm_id, obs.ip.to_string(), r.nodename, r.flavor_id, r.flavor_name, r.min_ram_mb, r.min_hd_gb,
                    r.min_cpu, r.image_name, r.image_id, r.extra, us(obs.created_at), us(obs.first_seen), us(obs.last_seen)
                ],
            )?;
            Ok(true)
        })
    }

    pub fn vm_observations(&self) -> StoreResult<Vec<LazyVmObservation>> {
        let conn = self.lock();
        let mut stmt = conn.prepare("SELECT * FROM LazyVmObservation ORDER BY created_at, vm_id")?;
        let rows = stmt.query_map([], observation_row)?.collect::<Result<_, _>>()?;
        Ok(rows)
    }

    /// The observation with this IP whose creation time is nearest to `t`;
    /// on equal distance the one created at or before `t` wins, then the lower vm id.
    pub fn find_vm_by_ip_near(&self, ip: Ipv4Addr, t: SimTime) -> StoreResult<Option<LazyVmObservation>> {
        let conn = self.lock();
        let mut stmt = conn.prepare(
            "SELECT * FROM LazyVmObservation WHERE ip = ?1
             ORDER BY ABS(created_at - ?2), created_at > ?2, vm_id LIMIT 1",
        )?;
        Ok(stmt.query_row(params![ip.to_string(), us(t)], observation_row).optional()?)
    }

    // --- export / import ---

    pub fn export_workflow(&self, wf_id: i64) -> StoreResult<WorkflowExport> {
        Ok(WorkflowExport {
            source: self.get_source(wf_id)?,
            cap: self.get_cap(wf_id)?,
            cpu_specs: self.get_cpu_specs(wf_id)?,
            files: self.get_job_files(wf_id)?,
        })
    }

    pub fn export_json(&self, wf_id: i64) -> StoreResult<String> {
        let doc = self.export_workflow(wf_id)?;
        Ok(serde_json::to_string_pretty(&doc).expect("export serializes"))
    }

    /// Loads an exported workflow under a fresh wf_id.
    pub fn import_workflow(&self, doc: &WorkflowExport) -> StoreResult<i64> {
        let s = &doc.source;
        let files = SourceFiles::new(s.wf_dag.clone(), s.wf_site.clone(), s.wf_tc.clone(), s.wf_props.clone());
        let wf_id = self.register_source(&s.wms_wfid, &files)?;
        let result = (|| {
            for cap in &doc.cap {
                self.insert_cap_record(&CapRecord { wf_id, ..cap.clone() })?;
            }
            for cpu in &doc.cpu_specs {
                self.upsert_cpu_spec(&CpuSpecRow { wf_id, ..cpu.clone() })?;
            }
            for f in &doc.files {
                self.link_job_file(&JobCloudFile { wf_id, ..f.clone() })?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            self.delete_source(wf_id)?;
            return Err(e);
        }
        Ok(wf_id)
    }

    pub fn import_json(&self, text: &str) -> StoreResult<i64> {
        let doc: WorkflowExport = serde_json::from_str(text).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        self.import_workflow(&doc)
    }

    /// Row counts per table, for status output and tests.
    pub fn table_counts(&self) -> StoreResult<BTreeMap<&'static str, usize>> {
        const TABLES: [&str; 8] = [
            "WorkflowSource",
            "WfCloudMapping",
            "WfCloudTempMapping",
            "JobHostTempMap",
            "CPUSpecs",
            "CloudFileCatalog",
            "JobCloudFile",
            "LazyVmObservation",
        ];
        let conn = self.lock();
        let mut out = BTreeMap::new();
        for t in TABLES {
            let n: i64 = conn.query_row(&format!("SELECT COUNT(*) FROM {t}"), [], |r| r.get(0))?;
            out.insert(t, n as usize);
        }
        Ok(out)
    }
}

fn temp_row(row: &Row<'_>) -> rusqlite::Result<TempMapping> {
    Ok(TempMapping {
        cap: cap_row(row)?,
        vm_id: row.get("vm_id")?,
        ip: ip_col(row, "ip")?,
        capture_time: time_col(row, "capture_time")?,
    })
}
