//! Requirement specification bases, verifier profiles and the four-file
//! verification task bundle.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("task error: {0}")]
    Task(String),
}

fn config<T>(msg: impl Into<String>) -> Result<T, TaskError> {
    Err(TaskError::Config(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plugin {
    pub name: String,
    #[serde(default)]
    pub options: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Template {
    #[serde(default)]
    pub plugins: Vec<Plugin>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpecNode {
    #[serde(default)]
    pub identifier: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub template: Option<String>,
    #[serde(default)]
    pub plugins: Vec<Plugin>,
    #[serde(default)]
    pub children: Vec<SpecNode>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReqSpecBase {
    #[serde(default)]
    pub templates: BTreeMap<String, Template>,
    #[serde(rename = "requirement specifications")]
    pub tree: SpecNode,
}

impl ReqSpecBase {
    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        serde_json::from_str(text).map_err(|e| TaskError::Config(format!("requirement specifications base: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedReqSpec {
    /// Identifiers along the tree path joined with `:`.
    pub id: String,
    pub plugins: Vec<Plugin>,
    pub verifier_profile: String,
    /// Verifier `(name, version)` requested by the FVTP plugin.
    pub verifier: Option<(String, String)>,
}

impl ResolvedReqSpec {
    pub fn plugin_options(&self, name: &str) -> Option<&Map<String, Value>> {
        self.plugins.iter().find(|p| p.name == name).map(|p| &p.options)
    }

    /// String list option of a plugin; missing means empty.
    pub fn string_list(&self, plugin: &str, key: &str) -> Vec<String> {
        self.plugin_options(plugin)
            .and_then(|o| o.get(key))
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default()
    }
}

/// Overlay plugin options; keys of `over` replace those of `base`.
fn overlay(base: &mut Vec<Plugin>, over: &[Plugin]) {
    for p in over {
        match base.iter_mut().find(|b| b.name == p.name) {
            Some(b) => {
                for (k, v) in &p.options {
                    b.options.insert(k.clone(), v.clone());
                }
            }
            None => base.push(p.clone()),
        }
    }
}

/// Resolve every leaf of the tree depth first.
pub fn resolve_req_specs(base: &ReqSpecBase) -> Result<Vec<ResolvedReqSpec>, TaskError> {
    fn walk(
        base: &ReqSpecBase,
        node: &SpecNode,
        path: &mut Vec<String>,
        inherited: Option<(&str, Vec<Plugin>)>,
        out: &mut Vec<ResolvedReqSpec>,
    ) -> Result<(), TaskError> {
        let pushed = match &node.identifier {
            Some(id) => {
                path.push(id.clone());
                true
            }
            None => false,
        };
        let mut scope = match (&node.template, inherited) {
            (Some(t), _) => {
                let tpl = base
                    .templates
                    .get(t)
                    .ok_or_else(|| TaskError::Config(format!("unknown template {t:?}")))?;
                Some((t.as_str(), tpl.plugins.clone()))
            }
            (None, inh) => inh,
        };
        if let Some((_, plugins)) = scope.as_mut() {
            overlay(plugins, &node.plugins);
        }
        if node.children.is_empty() {
            let id = path.join(":");
            let Some((_, plugins)) = scope else {
                return config(format!("requirement specification {id:?} has no template"));
            };
            let fvtp = plugins.iter().find(|p| p.name == "FVTP").map(|p| &p.options);
            let verifier_profile = fvtp
                .and_then(|o| o.get("verifier profile"))
                .and_then(Value::as_str)
                .ok_or_else(|| TaskError::Config(format!("requirement specification {id:?} names no verifier profile")))?
                .to_string();
            let verifier = fvtp.and_then(|o| o.get("verifier")).and_then(|v| {
                Some((v.get("name")?.as_str()?.to_string(), v.get("version")?.as_str()?.to_string()))
            });
            out.push(ResolvedReqSpec {
                id,
                plugins,
                verifier_profile,
                verifier,
            });
        } else {
            for c in &node.children {
                walk(base, c, path, scope.clone(), out)?;
            }
        }
        if pushed {
            path.pop();
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(base, &base.tree, &mut Vec::new(), None, &mut out)?;
    let mut seen = BTreeSet::new();
    for s in &out {
        if !seen.insert(s.id.as_str()) {
            return config(format!("duplicate requirement specification {:?}", s.id));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileNode {
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub inherit: Option<String>,
    #[serde(rename = "safety properties", default)]
    pub safety_properties: Option<Vec<String>>,
    /// Each entry is a single-key object `{flag: value}`.
    #[serde(rename = "add options", default)]
    pub add_options: Vec<Map<String, Value>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileStore {
    #[serde(default)]
    pub templates: BTreeMap<String, ProfileNode>,
    /// Profile name → tool → version → node.
    #[serde(default)]
    pub profiles: BTreeMap<String, BTreeMap<String, BTreeMap<String, ProfileNode>>>,
}

impl ProfileStore {
    pub fn from_json(text: &str) -> Result<Self, TaskError> {
        serde_json::from_str(text).map_err(|e| TaskError::Config(format!("verifier profiles: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedProfile {
    pub name: String,
    pub tool: String,
    pub version: String,
    /// `(flag, value)` in inheritance order, root first; empty value means a bare flag.
    pub options: Vec<(String, String)>,
    pub safety_properties: Vec<String>,
}

pub fn resolve_profile(store: &ProfileStore, name: &str, tool: &str, version: &str) -> Result<ResolvedProfile, TaskError> {
    let leaf = store
        .profiles
        .get(name)
        .ok_or_else(|| TaskError::Config(format!("unknown verifier profile {name:?}")))?
        .get(tool)
        .ok_or_else(|| TaskError::Config(format!("verifier profile {name:?} has no options for {tool}")))?
        .get(version)
        .ok_or_else(|| TaskError::Config(format!("verifier profile {name:?} has no options for {tool} {version}")))?;
    let mut chain = vec![leaf];
    let mut seen = BTreeSet::new();
    let mut cur = leaf;
    while let Some(parent) = &cur.inherit {
        if !seen.insert(parent.as_str()) {
            return config(format!("inheritance cycle through template {parent:?}"));
        }
        cur = store
            .templates
            .get(parent)
            .ok_or_else(|| TaskError::Config(format!("unknown profile template {parent:?}")))?;
        chain.push(cur);
    }
    let mut options = Vec::new();
    let mut safety_properties = Vec::new();
    for node in chain.iter().rev() {
        for opt in &node.add_options {
            for (flag, value) in opt {
                let value = match value {
                    Value::String(s) => s.clone(),
                    Value::Null => String::new(),
                    v => v.to_string(),
                };
                options.push((flag.clone(), value));
            }
        }
        if let Some(p) = &node.safety_properties {
            safety_properties = p.clone();
        }
    }
    if safety_properties.is_empty() {
        return config(format!("verifier profile {name:?} defines no safety properties"));
    }
    Ok(ResolvedProfile {
        name: name.into(),
        tool: tool.into(),
        version: version.into(),
        options,
        safety_properties,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub cpu_seconds: u64,
    pub wall_seconds: u64,
    pub memory_bytes: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            cpu_seconds: 270,
            wall_seconds: 300,
            memory_bytes: 1 << 30,
        }
    }
}

impl Limits {
    /// Hard limit keeping the 270 to 300 ratio of the default limits.
    pub fn hard_time_limit(&self) -> u64 {
        (self.cpu_seconds * 300).div_ceil(270)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFiles {
    pub program: String,
    pub property: String,
    pub task_def: String,
    pub benchmark: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationTask {
    pub id: String,
    pub fragment: String,
    pub requirement: String,
    pub entry_point: String,
    pub files: TaskFiles,
    pub limits: Limits,
    pub priority: i64,
}

pub const PROGRAM_FILE: &str = "cil.i";
pub const PROPERTY_FILE: &str = "safe-prps.prp";
pub const TASK_FILE: &str = "cil.yml";
pub const BENCHMARK_FILE: &str = "benchmark.xml";
pub const META_FILE: &str = "task.json";

pub fn property_file(profile: &ResolvedProfile, entry_point: &str) -> String {
    profile
        .safety_properties
        .iter()
        .map(|p| format!("{}\n", p.replace("{entry_point}", entry_point)))
        .collect()
}

pub fn task_definition() -> String {
    format!("format_version: '1.0'\n\ninput_files: '{PROGRAM_FILE}'\n\nproperties:\n  - property_file: {PROPERTY_FILE}\n")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn benchmark_definition(profile: &ResolvedProfile, limits: &Limits) -> String {
    let mut x = String::from("<?xml version=\"1.0\" ?>\n");
    let _ = writeln!(
        x,
        "<benchmark hardtimelimit=\"{}\" timelimit=\"{}\" tool=\"{}\">",
        limits.hard_time_limit(),
        limits.cpu_seconds,
        xml_escape(&profile.tool.to_lowercase())
    );
    x.push_str("    <rundefinition>\n");
    for (flag, value) in &profile.options {
        if value.is_empty() {
            let _ = writeln!(x, "        <option name=\"{}\"/>", xml_escape(flag));
        } else {
            let _ = writeln!(x, "        <option name=\"{}\">{}</option>", xml_escape(flag), xml_escape(value));
        }
    }
    x.push_str("    </rundefinition>\n");
    let _ = writeln!(x, "    <tasks>\n        <include>{TASK_FILE}</include>\n    </tasks>");
    let _ = writeln!(x, "    <propertyfile>{PROPERTY_FILE}</propertyfile>\n</benchmark>");
    x
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

pub fn task_id(fragment: &str, requirement: &str) -> String {
    format!("{}--{}", sanitize(fragment), sanitize(requirement))
}

pub fn emit_task(
    fragment: &str,
    spec: &ResolvedReqSpec,
    profile: &ResolvedProfile,
    harness: &str,
    entry_point: &str,
    limits: Limits,
    priority: i64,
) -> Result<VerificationTask, TaskError> {
    if harness.trim().is_empty() {
        return Err(TaskError::Task(format!("empty program for {fragment} and {}", spec.id)));
    }
    if limits.cpu_seconds == 0 || limits.wall_seconds == 0 || limits.memory_bytes == 0 {
        return Err(TaskError::Task("limits must be positive".into()));
    }
    Ok(VerificationTask {
        id: task_id(fragment, &spec.id),
        fragment: fragment.into(),
        requirement: spec.id.clone(),
        entry_point: entry_point.into(),
        files: TaskFiles {
            program: harness.into(),
            property: property_file(profile, entry_point),
            task_def: task_definition(),
            benchmark: benchmark_definition(profile, &limits),
        },
        limits,
        priority,
    })
}

impl VerificationTask {
    /// Write the bundle files plus a metadata file into `dir`.
    pub fn write_bundle(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(PROGRAM_FILE), &self.files.program)?;
        std::fs::write(dir.join(PROPERTY_FILE), &self.files.property)?;
        std::fs::write(dir.join(TASK_FILE), &self.files.task_def)?;
        std::fs::write(dir.join(BENCHMARK_FILE), &self.files.benchmark)?;
        let meta = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(dir.join(META_FILE), meta)
    }

    pub fn read_bundle(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join(META_FILE))?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}
