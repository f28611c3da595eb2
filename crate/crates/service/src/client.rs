use std::collections::BTreeMap;
use std::time::Duration;

use reqwest::blocking::{multipart, Client, RequestBuilder, Response};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use thiserror::Error;

use recap_core::store::SourceFiles;
use recap_core::wms::{CondorHost, CondorQuery, PoolMachine, WmsError};

use crate::{ClockResponse, StatusResponse, SubmitResponse};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("service answered {status}: {body}")]
    Status { status: u16, body: String },
    #[error("missing `{0}` file")]
    MissingFile(&'static str),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }

    /// The `error` field of a JSON error body, if there is one.
    pub fn kind(&self) -> Option<String> {
        let ClientError::Status { body, .. } = self else { return None };
        let v: serde_json::Value = serde_json::from_str(body).ok()?;
        v.get("error")?.as_str().map(str::to_string)
    }
}

/// Blocking client for the wrapper service.
#[derive(Clone, Debug)]
pub struct WsClient {
    http: Client,
    endpoint: String,
    user: String,
    password: String,
}

impl WsClient {
    /// `endpoint` is the service base URL including the API prefix.
    pub fn new(endpoint: impl Into<String>, user: impl Into<String>, password: impl Into<String>) -> Result<Self, ClientError> {
        let http = Client::builder().timeout(Duration::from_secs(30)).build()?;
        Ok(WsClient {
            http,
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            user: user.into(),
            password: password.into(),
        })
    }

    fn url(&self, op: &str) -> String {
        format!("{}/{op}", self.endpoint)
    }

    fn send(&self, req: RequestBuilder) -> Result<Response, ClientError> {
        let resp = req.basic_auth(&self.user, Some(&self.password)).send()?;
        if resp.status() == StatusCode::OK {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        Err(ClientError::Status { status, body: resp.text().unwrap_or_default() })
    }

    fn json<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T, ClientError> {
        Ok(self.send(req)?.json()?)
    }

    pub fn submit(&self, files: &SourceFiles, instrumented: bool) -> Result<SubmitResponse, ClientError> {
        let mut form = multipart::Form::new();
        for (name, text) in [("dag", &files.dag), ("site", &files.site), ("tc", &files.tc), ("props", &files.props)] {
            let text = text.clone().ok_or(ClientError::MissingFile(name))?;
            form = form.text(name, text);
        }
        form = form.text("instrumented", instrumented.to_string());
        self.json(self.http.post(self.url("submit")).multipart(form))
    }

    /// `kind` is `stdout`, `stderr` or `submit_output`.
    pub fn wms_get_file(&self, wms_wfid: &str, job: Option<&str>, kind: &str) -> Result<String, ClientError> {
        let mut q = vec![("wfid", wms_wfid), ("kind", kind)];
        if let Some(job) = job {
            q.push(("job", job));
        }
        Ok(self.send(self.http.get(self.url("wms_get_file")).query(&q))?.text()?)
    }

    /// `None` when the job is not running.
    pub fn jobmon(&self, condor_id: u64) -> Result<Option<CondorHost>, ClientError> {
        match self.json(self.http.get(self.url("jobmon")).query(&[("condor_id", condor_id)])) {
            Err(e) if e.status() == Some(404) => Ok(None),
            other => other.map(Some),
        }
    }

    pub fn cpool_mips(&self) -> Result<BTreeMap<String, PoolMachine>, ClientError> {
        self.json(self.http.get(self.url("cpool_mips")))
    }

    pub fn status(&self, wms_wfid: &str) -> Result<StatusResponse, ClientError> {
        self.json(self.http.get(self.url("status")).query(&[("wfid", wms_wfid)]))
    }

    pub fn advance(&self, secs: f64) -> Result<ClockResponse, ClientError> {
        self.json(self.http.post(self.url("advance")).query(&[("secs", secs)]))
    }

    pub fn run_until_done(&self, wms_wfid: &str) -> Result<ClockResponse, ClientError> {
        self.json(self.http.post(self.url("advance")).query(&[("until_done", wms_wfid)]))
    }
}

impl CondorQuery for WsClient {
    fn condor_lookup(&self, condor_id: u64) -> Result<CondorHost, WmsError> {
        match self.jobmon(condor_id) {
            Ok(Some(host)) => Ok(host),
            Ok(None) => Err(WmsError::NotRunning(condor_id)),
            Err(e) => {
                log::warn!("jobmon {condor_id}: {e}");
                Err(WmsError::NotRunning(condor_id))
            }
        }
    }
}
