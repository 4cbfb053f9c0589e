//! Scenario generators and the pipeline running them.

use super::model::{parse_model, Action, EntryOrder, IntermediateModel, Label, ScenarioModel};
use super::process::ProcessExpr;
use super::EmgError;
use crate::buildbase::BuildBase;
use crate::pfg::ProgramFragment;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub name: String,
    #[serde(default)]
    pub options: Map<String, Value>,
}

type Generator = fn(&ProgramFragment, &BuildBase, &Map<String, Value>, &IntermediateModel) -> Result<IntermediateModel, String>;

fn generator(name: &str) -> Option<Generator> {
    match name {
        "entry_caller" => Some(|f, b, o, _| entry_caller_generate(f, b, o)),
        "user_model_composer" => Some(user_model_composer),
        _ => None,
    }
}

/// Run generators in order; each result is merged into the model built so
/// far, replacing scenarios of the same name.
pub fn run_generator_pipeline(
    fragment: &ProgramFragment,
    base: &BuildBase,
    specs: &[GeneratorSpec],
) -> Result<IntermediateModel, EmgError> {
    let mut model = IntermediateModel::default();
    for spec in specs {
        let gen = generator(&spec.name).ok_or_else(|| EmgError::Generation {
            stage: spec.name.clone(),
            message: "unknown generator".into(),
        })?;
        let part = gen(fragment, base, &spec.options, &model).map_err(|message| EmgError::Generation {
            stage: spec.name.clone(),
            message,
        })?;
        model.merge(part);
    }
    if model.is_empty() {
        return Err(EmgError::Generation {
            stage: "pipeline".into(),
            message: "no scenario models were generated, so no entry point can be derived".into(),
        });
    }
    Ok(model)
}

fn glob_regex(glob: &str) -> Regex {
    let mut re = String::from("^");
    for c in glob.chars() {
        match c {
            '*' => re.push_str(".*"),
            '?' => re.push('.'),
            c => re.push_str(&regex::escape(&c.to_string())),
        }
    }
    re.push('$');
    Regex::new(&re).expect("escaped glob is a valid regex")
}

/// One thread model per entry function calling it with undefined arguments.
///
/// Options: `functions` (explicit names) or `pattern` (glob, default `*_main`),
/// and `order` (`random` by default, or `sequence`).
pub fn entry_caller_generate(
    fragment: &ProgramFragment,
    base: &BuildBase,
    options: &Map<String, Value>,
) -> Result<IntermediateModel, String> {
    let defs: Vec<_> = base
        .callgraph
        .definitions
        .iter()
        .filter(|d| fragment.files.contains(&d.file))
        .collect();
    let mut chosen: BTreeMap<String, &crate::buildbase::FunctionDef> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    if let Some(list) = options.get("functions").and_then(Value::as_array) {
        for f in list.iter().filter_map(Value::as_str) {
            let d = defs
                .iter()
                .find(|d| d.name == f)
                .ok_or_else(|| format!("function {f} is not defined in fragment {}", fragment.name))?;
            if d.is_static {
                return Err(format!("function {f} is static and cannot be called from the environment model"));
            }
            if chosen.insert(f.to_string(), d).is_none() {
                order.push(f.to_string());
            }
        }
    } else {
        let pattern = options.get("pattern").and_then(Value::as_str).unwrap_or("*_main");
        let re = glob_regex(pattern);
        for d in &defs {
            if !d.is_static && re.is_match(&d.name) && chosen.insert(d.name.clone(), d).is_none() {
                order.push(d.name.clone());
            }
        }
        if chosen.is_empty() {
            return Err(format!("no function of fragment {} matches {pattern}", fragment.name));
        }
        order.sort();
    }
    let entry_order = match options.get("order").and_then(Value::as_str) {
        None | Some("random") => EntryOrder::Random,
        Some("sequence") => EntryOrder::Sequence,
        Some(o) => return Err(format!("unknown order {o:?}")),
    };

    let mut model = IntermediateModel {
        entry_order,
        ..Default::default()
    };
    for name in order {
        let d = chosen[&name];
        let mut labels = Vec::new();
        let mut args = Vec::new();
        for (i, p) in d.params.iter().enumerate() {
            let label = format!("ldv_arg_{i}");
            let declaration = if p.ty.ends_with('*') {
                format!("{}{label}", p.ty)
            } else {
                format!("{} {label}", p.ty)
            };
            let value = p.ty.contains('*').then(|| "external_allocated_data()".to_string());
            labels.push((label.clone(), Label { declaration, value }));
            args.push(format!("%{label}%"));
        }
        let mut actions = BTreeMap::new();
        actions.insert(
            "call".to_string(),
            Action::Block {
                condition: None,
                statements: vec![format!("{name}({});", args.join(", "))],
                comment: format!("Call entry point {name}."),
            },
        );
        model.thread_models.push(ScenarioModel {
            name: name.clone(),
            category: "entry point".into(),
            declaration: None,
            labels,
            actions,
            process: ProcessExpr::Block("call".into()),
        });
    }
    Ok(model)
}

/// Hand-written model given inline (`model`) or as a file (`model_file`).
fn user_model_composer(
    _fragment: &ProgramFragment,
    _base: &BuildBase,
    options: &Map<String, Value>,
    _so_far: &IntermediateModel,
) -> Result<IntermediateModel, String> {
    let doc = match (options.get("model"), options.get("model_file").and_then(Value::as_str)) {
        (Some(m), _) => m.clone(),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
            serde_json::from_str(&text).map_err(|e| format!("{path}: {e}"))?
        }
        (None, None) => return Err("either model or model_file is required".into()),
    };
    parse_model(&doc).map_err(|e| e.to_string())
}
