use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn forge(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_forge")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "forge {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn buildbase_then_decompose() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path().join("base.json");
    let frags = tmp.path().join("fragments.json");
    let linked = fixtures().join("linked_components");
    forge(&["buildbase", "--dir", s(&linked), "--out", s(&base)]);
    forge(&["decompose", "--base", s(&base), "--conf", s(&linked.join("pfg.json")), "--out", s(&frags)]);
    let fragments: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(&frags).unwrap()).unwrap();
    let mut files: Vec<Vec<String>> = fragments
        .iter()
        .map(|f| f["files"].as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect())
        .collect();
    files.sort();
    assert_eq!(
        files,
        vec![
            vec!["comp1.c", "core.c", "lib1.c", "lib2.c"],
            vec!["comp2.c", "core.c", "helper.c", "lib1.c", "lib2.c"],
        ]
    );
}

#[test]
fn decompose_with_spec_excludes_files() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tmp.path().join("base.json");
    let frags = tmp.path().join("fragments.json");
    let bb = fixtures().join("busybox");
    forge(&["buildbase", "--dir", s(&bb), "--out", s(&base)]);
    forge(&[
        "decompose",
        "--base",
        s(&base),
        "--conf",
        s(&bb.join("pfg.json")),
        "--spec",
        s(&bb.join("decomposition.json")),
        "--out",
        s(&frags),
    ]);
    let text = std::fs::read_to_string(&frags).unwrap();
    assert!(text.contains("coreutils/ls.c"));
    assert!(!text.contains("libbb/getopt32.c"));
}

#[test]
fn weave_a_c_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cil.i");
    let aspect = fixtures().join("models/linux/kernel/module.aspect");
    let src = fixtures().join("toy/drivers/toy_unbalanced.c");
    forge(&["weave", "--fragment", s(&src), "--aspects", s(&aspect), "--out", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("ldv_module_put"));
}

#[test]
fn run_job_and_check_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let toy = fixtures().join("toy");
    let mut conf: Value = serde_json::from_str(&std::fs::read_to_string(toy.join("job.json")).unwrap()).unwrap();
    for key in ["build_base", "requirements", "models_dir", "profiles"] {
        let rel = conf[key].as_str().unwrap().to_string();
        conf[key] = Value::from(s(&toy.join(rel)).to_string());
    }
    conf["workdir"] = Value::from(s(&tmp.path().join("work")).to_string());
    let job = tmp.path().join("job.json");
    std::fs::write(&job, conf.to_string()).unwrap();
    let out = forge(&["run", "--job", s(&job), "--workers", "2"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let status = |task: &str| {
        stdout
            .lines()
            .filter_map(|l| l.split_once('\t'))
            .find(|(t, _)| *t == task)
            .unwrap_or_else(|| panic!("{stdout}"))
            .1
            .to_string()
    };
    assert_eq!(status("drivers_toy_balanced.ko--kernel_module"), "SAFE");
    assert_eq!(status("drivers_toy_unbalanced.ko--kernel_module"), "UNSAFE");
    assert!(tmp.path().join("work/report.json").exists());

    let tasks = tmp.path().join("work/tasks");
    let bundle = std::fs::read_dir(&tasks)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with("drivers_toy_unbalanced.ko"))
        .unwrap();
    let out = forge(&["check", "--task", s(&bundle)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "UNSAFE");
    assert!(bundle.join("witness.graphml").exists());
}

#[test]
fn bad_input_fails_with_message() {
    let out = Command::new(env!("CARGO_BIN_EXE_forge"))
        .args(["decompose", "--base", "/nonexistent.json", "--conf", "/nonexistent.json", "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("forge: "));
}
