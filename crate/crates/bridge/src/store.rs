//! Persistent service state: a single JSON file replaced atomically on
//! every write.

use forge_core::job::TaskResult;
use forge_core::results::MarkStore;
use forge_core::sched::JobState;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const STORE_FILE: &str = "store.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    #[default]
    Private,
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    /// Creation order; the `since` cursor of the job list.
    pub seq: u64,
    pub name: String,
    pub author: String,
    pub access: Access,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub priority: i64,
    pub state: JobState,
    /// Directory against which relative paths of the job configuration
    /// resolve.
    pub root: PathBuf,
    /// Configuration files attached to the job, by name. `job.json` is the
    /// job configuration the tasks were prepared from.
    pub files: BTreeMap<String, String>,
    /// Bumped on every change of `files`.
    pub files_version: u32,
    /// Digest of every program source file, filled in when tasks are prepared.
    pub sources: BTreeMap<String, String>,
    pub task_total: usize,
    #[serde(default)]
    pub started_at: Option<u64>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// A solved or cancelled task, in arrival order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    /// Position in the job's result list; the `since` cursor.
    pub seq: usize,
    /// Service-wide task id `<job>:<task>`.
    pub id: String,
    #[serde(flatten)]
    pub result: TaskResult,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StoreData {
    pub jobs: BTreeMap<String, JobRecord>,
    pub results: BTreeMap<String, Vec<ResultRecord>>,
    pub marks: MarkStore,
    pub next_job: u64,
}

impl StoreData {
    pub fn load(dir: &Path) -> std::io::Result<StoreData> {
        let path = dir.join(STORE_FILE);
        if !path.exists() {
            return Ok(StoreData::default());
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    /// Write to a temporary file and rename it over the store file.
    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!("{STORE_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?)?;
        std::fs::rename(&tmp, dir.join(STORE_FILE))
    }

    pub fn task(&self, id: &str) -> Option<&ResultRecord> {
        let (job, _) = id.split_once(':')?;
        self.results.get(job)?.iter().find(|r| r.id == id)
    }
}

pub fn task_key(job: &str, task: &str) -> String {
    format!("{job}:{task}")
}

/// Stable 64-bit FNV-1a digest, hex encoded.
pub fn digest(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
