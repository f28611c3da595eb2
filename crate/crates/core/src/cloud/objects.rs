use std::collections::BTreeMap;

use md5::{Digest, Md5};

use super::model::CloudFileRecord;
use super::CloudError;
use crate::time::SimTime;

pub fn md5_hex(bytes: &[u8]) -> String {
    format!("{:x}", Md5::digest(bytes))
}

#[derive(Clone, Debug)]
struct StoredObject {
    bytes: Vec<u8>,
    record: CloudFileRecord,
}

/// Swift-like container/key object store. Containers are created on first put.
#[derive(Clone, Debug, Default)]
pub struct ObjectStore {
    containers: BTreeMap<String, BTreeMap<String, StoredObject>>,
}

impl ObjectStore {
    pub fn put(
        &mut self,
        container: &str,
        keyname: &str,
        bytes: Vec<u8>,
        metadata: BTreeMap<String, String>,
        now: SimTime,
    ) -> CloudFileRecord {
        let md5 = md5_hex(&bytes);
        let objects = self.containers.entry(container.to_string()).or_default();
        let created = objects.get(keyname).map_or(now, |o| o.record.created);
        let record = CloudFileRecord {
            container: container.to_string(),
            keyname: keyname.to_string(),
            md5,
            metadata,
            created,
            modified: now,
        };
        objects.insert(keyname.to_string(), StoredObject { bytes, record: record.clone() });
        record
    }

    pub fn get(&self, container: &str, keyname: &str) -> Result<(Vec<u8>, CloudFileRecord), CloudError> {
        self.containers
            .get(container)
            .and_then(|c| c.get(keyname))
            .map(|o| (o.bytes.clone(), o.record.clone()))
            .ok_or_else(|| CloudError::UnknownObject { container: container.into(), keyname: keyname.into() })
    }

    pub fn head(&self, container: &str, keyname: &str) -> Option<&CloudFileRecord> {
        self.containers.get(container)?.get(keyname).map(|o| &o.record)
    }

    /// Records whose key starts with `prefix`, in key order. A missing
    /// container is an error; a prefix with no matches is an empty list.
    pub fn list(&self, container: &str, prefix: &str) -> Result<Vec<CloudFileRecord>, CloudError> {
        let objects = self
            .containers
            .get(container)
            .ok_or_else(|| CloudError::UnknownObject { container: container.into(), keyname: prefix.into() })?;
        Ok(objects
            .range(prefix.to_string()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(_, o)| o.record.clone())
            .collect())
    }

    pub fn containers(&self) -> impl Iterator<Item = &str> {
        self.containers.keys().map(String::as_str)
    }
}
