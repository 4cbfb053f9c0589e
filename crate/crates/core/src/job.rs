//! One verification job: decomposition, environment and requirement models,
//! weaving, merging, task emission, solution and result processing.
//!
//! Paths in a [`JobConfig`] are relative to the directory of the job file.
//! Requirement models named by the `RSG` plugin (`common models` and
//! `models`) live under `models_dir`, each with an optional sibling
//! `.aspect` file binding it to the program.

use crate::buildbase::BuildBase;
use crate::emg::{self, GeneratorSpec, TranslateOptions};
use crate::miniver::{self, VerdictKind};
use crate::pfg::{self, DecompositionSpec, PfgConfig, ProgramFragment};
use crate::results::{self, CoverageBase, CoverageReport, ErrorTrace, FileTotals, Signature, TaskCoverage, VerdictStatistics};
use crate::sched::{Backend, JobSpec, Outcome, ResourceLimits, Scheduler, Speculation, TaskRef, TaskStatus, Verdict};
use crate::taskgen::{self, Limits, ProfileStore, ReqSpecBase, ResolvedReqSpec, VerificationTask};
use crate::weave;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JobError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    BuildBase(#[from] crate::buildbase::BuildBaseError),
    #[error(transparent)]
    Pfg(#[from] crate::pfg::PfgError),
    #[error(transparent)]
    Emg(#[from] crate::emg::EmgError),
    #[error(transparent)]
    Weave(#[from] crate::weave::WeaveError),
    #[error(transparent)]
    Merge(#[from] crate::weave::MergeError),
    #[error(transparent)]
    Task(#[from] crate::taskgen::TaskError),
}

fn read(path: &Path) -> Result<String, JobError> {
    std::fs::read_to_string(path).map_err(|source| JobError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    pub name: String,
    #[serde(default)]
    pub id: Option<String>,
    /// A saved build base, or a directory to ingest.
    pub build_base: PathBuf,
    pub pfg: PfgConfig,
    #[serde(default)]
    pub decomposition_spec: Option<PathBuf>,
    pub requirements: PathBuf,
    /// Requirement ids or id prefixes (`kernel` selects `kernel:module`);
    /// empty selects all.
    #[serde(default)]
    pub requirement_ids: Vec<String>,
    pub models_dir: PathBuf,
    pub profiles: PathBuf,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub priority: i64,
    /// Output directory; defaults to `<name>.out` next to the job file.
    #[serde(default)]
    pub workdir: Option<PathBuf>,
}

impl JobConfig {
    pub fn load(path: &Path) -> Result<(JobConfig, PathBuf), JobError> {
        let conf: JobConfig =
            serde_json::from_str(&read(path)?).map_err(|e| JobError::Config(format!("{}: {e}", path.display())))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((conf, root))
    }

    pub fn job_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| taskgen::task_id(&self.name, "job"))
    }
}

/// A task bundle on disk plus what result processing needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedTask {
    pub task: VerificationTask,
    pub dir: PathBuf,
    /// `(file name in the merged program, text)` of requirement and
    /// environment models, for relevance annotation.
    pub model_sources: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedJob {
    pub id: String,
    pub name: String,
    pub priority: i64,
    pub workdir: PathBuf,
    pub tasks: Vec<PreparedTask>,
    /// Files of every fragment, for coverage totals.
    pub files: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

fn selected(id: &str, filters: &[String]) -> bool {
    filters.is_empty()
        || filters
            .iter()
            .any(|f| id == f || id.strip_prefix(f.as_str()).is_some_and(|r| r.starts_with(':')))
}

/// Generator specs from the EMG plugin: a list of `{"name", "options"}`
/// objects or of single-key `{"<name>": {options}}` objects.
fn generator_specs(spec: &ResolvedReqSpec) -> Result<Vec<GeneratorSpec>, JobError> {
    let Some(list) = spec.plugin_options("EMG").and_then(|o| o.get("generators options")) else {
        return Ok(vec![GeneratorSpec {
            name: "entry_caller".into(),
            options: Default::default(),
        }]);
    };
    let list = list
        .as_array()
        .ok_or_else(|| JobError::Config(format!("{}: EMG generators options must be a list", spec.id)))?;
    list.iter()
        .map(|v| {
            if let Ok(g) = serde_json::from_value::<GeneratorSpec>(v.clone()) {
                return Ok(g);
            }
            match v.as_object() {
                Some(o) if o.len() == 1 => {
                    let (name, options) = o.iter().next().unwrap();
                    Ok(GeneratorSpec {
                        name: name.clone(),
                        options: options.as_object().cloned().unwrap_or_default(),
                    })
                }
                _ => Err(JobError::Config(format!("{}: bad generator entry {v}", spec.id))),
            }
        })
        .collect()
}

fn entry_point_of(spec: &ResolvedReqSpec) -> String {
    spec.plugin_options("EMG")
        .and_then(|o| o.get("translation options"))
        .and_then(|t| t.get("entry point"))
        .and_then(Value::as_str)
        .unwrap_or("main")
        .to_string()
}

/// Name of the environment model file inside the merged program.
pub fn environment_file(fragment: &str) -> String {
    format!("environment model {fragment}.c")
}

/// `(file name, text)` of every requirement model woven into a program.
pub type ModelSources = Vec<(String, String)>;

/// Build the merged program of one fragment and requirement.
///
/// Returns the merged text, the entry point and the model sources.
pub fn build_program(
    fragment: &ProgramFragment,
    base: &BuildBase,
    spec: &ResolvedReqSpec,
    models_dir: &Path,
) -> Result<(String, String, ModelSources), JobError> {
    let mut models: Vec<(String, String)> = Vec::new();
    let mut advice = Vec::new();
    let mut seen = BTreeSet::new();
    for m in spec
        .string_list("RSG", "common models")
        .into_iter()
        .chain(spec.string_list("RSG", "models"))
    {
        if !seen.insert(m.clone()) {
            continue;
        }
        let path = models_dir.join(&m);
        models.push((m.clone(), read(&path)?));
        let aspect = path.with_extension("aspect");
        if aspect.exists() {
            advice.extend(weave::parse_aspect(&read(&aspect)?)?);
        }
    }
    let finalizers: Vec<String> = models
        .iter()
        .any(|(_, text)| text.contains("ldv_check_final_state(void)"))
        .then(|| "ldv_check_final_state".to_string())
        .into_iter()
        .collect();

    let entry_point = entry_point_of(spec);
    let model = emg::run_generator_pipeline(fragment, base, &generator_specs(spec)?)?;
    let harness = emg::translate(
        &model,
        &TranslateOptions {
            entry_point: entry_point.clone(),
            action_hooks: false,
            finalizers,
        },
    )?;
    for (_, text) in &harness.aspects {
        advice.extend(weave::parse_aspect(text)?);
    }
    let env_name = environment_file(&fragment.name);
    let mut sources = models.clone();
    let (env_woven, _) = weave::weave(&harness.environment_c, &advice)?;
    sources.push((env_name.clone(), env_woven));
    for file in &fragment.files {
        let text = base.read_source(file)?;
        let (woven, _) = weave::weave(&text, &advice)?;
        sources.push((file.clone(), woven));
    }
    let merged = weave::merge(&sources, Some(&entry_point))?;
    models.push((env_name, harness.environment_c));
    Ok((merged, entry_point, models))
}

/// Decompose, generate and write every task bundle of the job.
pub fn prepare(conf: &JobConfig, root: &Path) -> Result<PreparedJob, JobError> {
    let base_path = root.join(&conf.build_base);
    let base = if base_path.is_dir() {
        crate::buildbase::ingest_build_base(&base_path)?
    } else {
        BuildBase::load(&base_path)?
    };
    let spec = match &conf.decomposition_spec {
        Some(p) => Some(DecompositionSpec::from_json(&read(&root.join(p))?, conf.pfg.program_version.as_deref())?),
        None => None,
    };
    let fragments = pfg::decompose(&conf.pfg, &base, spec.as_ref())?;
    let reqs = ReqSpecBase::from_json(&read(&root.join(&conf.requirements))?)?;
    let reqs: Vec<ResolvedReqSpec> = taskgen::resolve_req_specs(&reqs)?
        .into_iter()
        .filter(|r| selected(&r.id, &conf.requirement_ids))
        .collect();
    if reqs.is_empty() {
        return Err(JobError::Config(format!("no requirement specification matches {:?}", conf.requirement_ids)));
    }
    let profiles = ProfileStore::from_json(&read(&root.join(&conf.profiles))?)?;
    let workdir = root.join(conf.workdir.clone().unwrap_or_else(|| PathBuf::from(format!("{}.out", conf.name))));
    let models_dir = root.join(&conf.models_dir);

    let mut job = PreparedJob {
        id: conf.job_id(),
        name: conf.name.clone(),
        priority: conf.priority,
        workdir: workdir.clone(),
        tasks: Vec::new(),
        files: BTreeMap::new(),
        warnings: Vec::new(),
    };
    for fragment in &fragments {
        for file in &fragment.files {
            if !job.files.contains_key(file) {
                job.files.insert(file.clone(), base.read_source(file)?);
            }
        }
        for req in &reqs {
            let (tool, version) = req
                .verifier
                .clone()
                .ok_or_else(|| JobError::Config(format!("{}: FVTP names no verifier", req.id)))?;
            let profile = taskgen::resolve_profile(&profiles, &req.verifier_profile, &tool, &version)?;
            let (merged, entry, model_sources) = match build_program(fragment, &base, req, &models_dir) {
                Ok(r) => r,
                Err(e) => {
                    job.warnings.push(format!("{} / {}: {e}", fragment.name, req.id));
                    continue;
                }
            };
            let task = taskgen::emit_task(&fragment.name, req, &profile, &merged, &entry, conf.limits, conf.priority)?;
            let dir = workdir.join("tasks").join(&task.id);
            task.write_bundle(&dir).map_err(|source| JobError::Io {
                path: dir.clone(),
                source,
            })?;
            job.tasks.push(PreparedTask {
                task,
                dir,
                model_sources,
            });
        }
    }
    Ok(job)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub fragment: String,
    pub requirement: String,
    pub status: TaskStatus,
    pub verdict: Option<Verdict>,
    pub trace: Option<ErrorTrace>,
    pub signature: Option<Signature>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub id: String,
    pub name: String,
    pub results: Vec<TaskResult>,
    pub statistics: VerdictStatistics,
    pub coverage: CoverageReport,
    pub warnings: Vec<String>,
}

/// Turn a scheduler outcome into a task result with processed trace.
pub fn process_outcome(prepared: &PreparedTask, outcome: &Outcome) -> TaskResult {
    let mut verdict = outcome.verdict.clone();
    let mut trace = None;
    let mut signature = None;
    if let Some(v) = verdict.as_mut() {
        match (v.kind, v.witness.as_deref()) {
            (VerdictKind::Unsafe, Some(w)) => {
                match results::parse_witness(w, &prepared.task.files.program, taskgen::PROGRAM_FILE) {
                    Ok(t) => {
                        let t = results::annotate_relevance(t, &prepared.model_sources);
                        signature = Some(results::mark_signature(&t));
                        trace = Some(t);
                    }
                    Err(e) => *v = Verdict::unknown(format!("component-failure: {e}")),
                }
            }
            (VerdictKind::Unknown, _) => {
                signature = v.reason.as_deref().map(results::failure_signature);
            }
            _ => {}
        }
    }
    TaskResult {
        task: prepared.task.id.clone(),
        fragment: prepared.task.fragment.clone(),
        requirement: prepared.task.requirement.clone(),
        status: outcome.status,
        verdict,
        trace,
        signature,
        wall_seconds: outcome.wall_seconds,
    }
}

/// Code lines of a source file: lines the checker considers code, or
/// non-blank lines outside comments and directives when it cannot parse it.
pub fn code_line_count(text: &str) -> usize {
    if let Ok(p) = miniver::parse_program(text) {
        return p.code_lines.len();
    }
    let mut in_comment = false;
    text.lines()
        .filter(|l| {
            let t = l.trim();
            let was = in_comment;
            if t.contains("/*") && !t.contains("*/") {
                in_comment = true;
            }
            if in_comment && t.contains("*/") {
                in_comment = false;
                return false;
            }
            !(was || t.is_empty() || t.starts_with("//") || t.starts_with("/*") || t.starts_with('#'))
        })
        .count()
}

pub fn coverage_base(files: &BTreeMap<String, String>) -> CoverageBase {
    CoverageBase {
        files: files
            .iter()
            .map(|(name, text)| {
                let functions = miniver::parse_program(text).map(|p| p.functions.len()).unwrap_or(0);
                (
                    name.clone(),
                    FileTotals {
                        lines: code_line_count(text),
                        functions,
                    },
                )
            })
            .collect(),
    }
}

/// Solve a prepared job and process its results. Outcomes are passed to
/// `on_outcome` as soon as they arrive.
pub fn run_prepared(
    job: &PreparedJob,
    backend: Arc<dyn Backend>,
    workers: usize,
    speculation: Speculation,
    mut on_outcome: impl FnMut(&TaskResult),
) -> JobReport {
    let scheduler = Scheduler::new(backend, workers, speculation);
    scheduler.submit(JobSpec {
        id: job.id.clone(),
        name: job.name.clone(),
        priority: job.priority,
        tasks: job
            .tasks
            .iter()
            .map(|t| TaskRef {
                id: t.task.id.clone(),
                job: job.id.clone(),
                dir: t.dir.clone(),
                limits: ResourceLimits::from(t.task.limits),
                priority: t.task.priority,
            })
            .collect(),
    });
    let by_id: BTreeMap<&str, &PreparedTask> = job.tasks.iter().map(|t| (t.task.id.as_str(), t)).collect();
    let mut results_list = Vec::new();
    let mut coverages: Vec<TaskCoverage> = Vec::new();
    for _ in 0..job.tasks.len() {
        let Ok(outcome) = scheduler.outcomes().recv() else {
            break;
        };
        let prepared = by_id[outcome.task.as_str()];
        let r = process_outcome(prepared, &outcome);
        if let Some(c) = r.verdict.as_ref().and_then(|v| v.coverage.clone()) {
            coverages.push(c);
        }
        on_outcome(&r);
        results_list.push(r);
    }
    scheduler.shutdown();
    let verdicts: Vec<Verdict> = results_list.iter().filter_map(|r| r.verdict.clone()).collect();
    JobReport {
        id: job.id.clone(),
        name: job.name.clone(),
        statistics: results::verdict_statistics(&verdicts, &[]),
        coverage: results::merge_coverage(&coverages, &coverage_base(&job.files)),
        results: results_list,
        warnings: job.warnings.clone(),
    }
}

/// Prepare and run a job file, writing `report.json` into the work directory.
pub fn run_job_file(path: &Path, backend: Arc<dyn Backend>, workers: usize, on_outcome: impl FnMut(&TaskResult)) -> Result<JobReport, JobError> {
    let (conf, root) = JobConfig::load(path)?;
    let job = prepare(&conf, &root)?;
    let report = run_prepared(&job, backend, workers, Speculation::default(), on_outcome);
    let out = job.workdir.join("report.json");
    std::fs::write(&out, serde_json::to_string_pretty(&report).expect("report serializes")).map_err(|source| JobError::Io {
        path: out,
        source,
    })?;
    Ok(report)
}
