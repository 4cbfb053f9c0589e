use serde_json::{json, Value};
use std::path::PathBuf;
use std::time::{Duration, Instant};

fn toy_job() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/toy/job.json")
}

struct Server {
    base: String,
    client: reqwest::Client,
    _store: tempfile::TempDir,
}

impl Server {
    async fn start() -> Server {
        let store = tempfile::tempdir().unwrap();
        let app = forge_bridge::router(store.path(), 2).await.unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        Server {
            base: format!("http://{addr}"),
            client: reqwest::Client::new(),
            _store: store,
        }
    }

    async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap_or(Value::Null))
    }

    async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.client.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap_or(Value::Null))
    }

    async fn put(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.client.put(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap_or(Value::Null))
    }

    async fn create_toy(&self) -> String {
        let (status, job) = self
            .post("/jobs", json!({"job_file": toy_job(), "author": "alice", "access": "shared"}))
            .await;
        assert_eq!(status, 201, "{job}");
        job["id"].as_str().unwrap().to_string()
    }

    /// Long-poll results until the job completes, checking monotonicity.
    async fn collect_results(&self, job: &str) -> Vec<Value> {
        let deadline = Instant::now() + Duration::from_secs(60);
        let mut all: Vec<Value> = Vec::new();
        let mut since = 0;
        loop {
            assert!(Instant::now() < deadline, "job {job} did not finish");
            let (status, page) = self.get(&format!("/jobs/{job}/results?since={since}&wait=5")).await;
            assert_eq!(status, 200);
            for r in page["results"].as_array().unwrap() {
                assert_eq!(r["seq"].as_u64().unwrap() as usize, all.len());
                all.push(r.clone());
            }
            since = page["next"].as_u64().unwrap();
            // Everything seen so far is still there.
            let (_, again) = self.get(&format!("/jobs/{job}/results?since=0&limit=1000")).await;
            let ids: Vec<&Value> = again["results"].as_array().unwrap().iter().map(|r| &r["id"]).collect();
            for r in &all {
                assert!(ids.contains(&&r["id"]));
            }
            if page["complete"] == json!(true) {
                return all;
            }
        }
    }
}

fn verdict_of<'a>(results: &'a [Value], fragment_part: &str) -> &'a Value {
    let r = results
        .iter()
        .find(|r| r["fragment"].as_str().unwrap().ends_with(fragment_part))
        .unwrap_or_else(|| panic!("no result for {fragment_part}"));
    &r["verdict"]["kind"]
}

#[tokio::test(flavor = "multi_thread")]
async fn create_start_poll_and_complete() {
    let s = Server::start().await;
    let id = s.create_toy().await;
    let (_, job) = s.get(&format!("/jobs/{id}")).await;
    assert_eq!(job["state"], "pending");
    assert_eq!(job["task_total"], 3);
    assert_eq!(job["files_version"], 1);

    let (status, _) = s.post(&format!("/jobs/{id}/start"), json!({})).await;
    assert_eq!(status, 200);
    let (status, err) = s.post(&format!("/jobs/{id}/start"), json!({})).await;
    assert_eq!(status, 409);
    assert_eq!(err["code"], "conflict");

    let results = s.collect_results(&id).await;
    assert_eq!(results.len(), 3);
    assert_eq!(verdict_of(&results, "toy_balanced.ko"), "safe");
    assert_eq!(verdict_of(&results, "toy_unbalanced.ko"), "unsafe");
    assert_eq!(verdict_of(&results, "toy_unbalanced_twin.ko"), "unsafe");

    let (_, progress) = s.get(&format!("/jobs/{id}/progress")).await;
    assert_eq!(progress["progress"]["solved"], 3);
    assert_eq!(progress["progress"]["total"], 3);
    assert_eq!(progress["state"], "done");

    let (_, job) = s.get(&format!("/jobs/{id}")).await;
    assert_eq!(job["statistics"]["total"], 3);

    let unsafe_task = results
        .iter()
        .find(|r| r["fragment"].as_str().unwrap().ends_with("toy_unbalanced.ko"))
        .unwrap()["id"]
        .as_str()
        .unwrap()
        .to_string();
    let (status, trace) = s.get(&format!("/tasks/{unsafe_task}/trace")).await;
    assert_eq!(status, 200);
    let events = trace["trace"]["events"].as_array().unwrap();
    let last = events.last().unwrap();
    assert_eq!(last["kind"], "error");
    assert_eq!(
        last["assert_desc"],
        "Decremented module reference counter should be greater than its initial state"
    );

    let (status, cov) = s.get(&format!("/jobs/{id}/coverage")).await;
    assert_eq!(status, 200);
    assert!(cov["directories"]["all"]["drivers"]["lines_covered"].as_u64().unwrap() > 0);

    let file = last["file"].as_str().unwrap();
    let r = s
        .client
        .get(format!("{}/jobs/{id}/source", s.base))
        .query(&[("path", file)])
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 200);
    assert!(r.text().await.unwrap().contains("ldv_assert"));
}

#[tokio::test(flavor = "multi_thread")]
async fn cancel_pending_job_cancels_all_tasks() {
    let s = Server::start().await;
    let id = s.create_toy().await;
    let (status, job) = s.post(&format!("/jobs/{id}/cancel"), json!({})).await;
    assert_eq!(status, 200);
    assert_eq!(job["state"], "cancelled");
    let (_, page) = s.get(&format!("/jobs/{id}/results")).await;
    let results = page["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    assert!(results.iter().all(|r| r["status"] == "cancelled"));
    assert_eq!(page["complete"], true);
    let (status, _) = s.post(&format!("/jobs/{id}/start"), json!({})).await;
    assert_eq!(status, 409);
    let (status, _) = s.post(&format!("/jobs/{id}/cancel"), json!({})).await;
    assert_eq!(status, 409);
}

#[tokio::test(flavor = "multi_thread")]
async fn diff_of_job_with_itself_is_empty() {
    let s = Server::start().await;
    let id = s.create_toy().await;
    s.post(&format!("/jobs/{id}/start"), json!({})).await;
    s.collect_results(&id).await;
    let (status, diff) = s.get(&format!("/jobs/{id}/diff/{id}")).await;
    assert_eq!(status, 200);
    assert_eq!(diff["files"], json!({"added": [], "removed": [], "changed": []}));
    assert_eq!(diff["verdicts"], json!([]));

    // A cancelled clone differs in every verdict but not in files.
    let (status, clone) = s.post("/jobs", json!({"clone_of": id})).await;
    assert_eq!(status, 201);
    let cid = clone["id"].as_str().unwrap();
    s.post(&format!("/jobs/{cid}/cancel"), json!({})).await;
    let (_, diff) = s.get(&format!("/jobs/{id}/diff/{cid}")).await;
    assert_eq!(diff["files"]["changed"], json!([]));
    assert_eq!(diff["verdicts"].as_array().unwrap().len(), 3);
    assert!(diff["verdicts"].as_array().unwrap().iter().all(|v| v["b"] == "cancelled"));
}

#[tokio::test(flavor = "multi_thread")]
async fn mark_on_one_trace_assesses_shifted_twin() {
    let s = Server::start().await;
    let id = s.create_toy().await;
    s.post(&format!("/jobs/{id}/start"), json!({})).await;
    let results = s.collect_results(&id).await;
    let task_of = |suffix: &str| {
        results
            .iter()
            .find(|r| r["fragment"].as_str().unwrap().ends_with(suffix))
            .unwrap()["id"]
            .as_str()
            .unwrap()
            .to_string()
    };
    let plain = task_of("toy_unbalanced.ko");
    let twin = task_of("toy_unbalanced_twin.ko");

    // The traces differ in line numbers only.
    let (_, a) = s.get(&format!("/tasks/{plain}/trace")).await;
    let (_, b) = s.get(&format!("/tasks/{twin}/trace")).await;
    assert_ne!(a["trace"], b["trace"]);
    assert_eq!(a["signature"], b["signature"]);

    let (status, _) = s
        .post("/marks", json!({"task": plain, "verdict_class": "fault", "description": ""}))
        .await;
    assert_eq!(status, 400);

    let (status, created) = s
        .post(
            "/marks",
            json!({"task": plain, "verdict_class": "false_alarm:environment", "description": "missing open before release", "tags": ["env"]}),
        )
        .await;
    assert_eq!(status, 201, "{created}");
    let mark = created["mark"]["id"].as_u64().unwrap();
    let assoc = created["associations"].as_array().unwrap();
    assert!(assoc.iter().any(|a| a["task_id"] == plain.as_str() && a["mode"] == "manual"));
    assert!(assoc.iter().any(|a| a["task_id"] == twin.as_str() && a["mode"] == "automatic"));

    // Results and statistics reflect the assessment.
    let (_, page) = s.get(&format!("/jobs/{id}/results")).await;
    let twin_row = page["results"].as_array().unwrap().iter().find(|r| r["id"] == twin.as_str()).unwrap().clone();
    assert_eq!(twin_row["assessments"][0]["verdict_class"], "false_alarm:environment");
    let (_, job) = s.get(&format!("/jobs/{id}")).await;
    let fa = &job["statistics"]["by_false_alarm"];
    assert!(fa.to_string().contains("\"count\":2"), "{fa}");

    // A clone's twin is assessed as soon as its result arrives.
    let (_, clone) = s.post("/jobs", json!({"clone_of": id})).await;
    let cid = clone["id"].as_str().unwrap().to_string();
    s.post(&format!("/jobs/{cid}/start"), json!({})).await;
    s.collect_results(&cid).await;
    let (_, assoc) = s.get(&format!("/marks/{mark}/associations")).await;
    let auto = assoc["associations"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|a| a["mode"] == "automatic" && a["task_id"].as_str().unwrap().starts_with(&format!("{cid}:")))
        .count();
    assert_eq!(auto, 2);

    // Edits keep history and never rewrite earlier revisions.
    let (status, edited) = s
        .put(
            &format!("/marks/{mark}"),
            json!({"verdict_class": "false_alarm:verifier", "description": "changed"}),
        )
        .await;
    assert_eq!(status, 200, "{edited}");
    let history = edited["mark"]["history"].as_array().unwrap();
    assert_eq!(history.len(), 2);
    assert_eq!(history[0]["description"], "missing open before release");
    assert_eq!(history[0]["verdict_class"], "false_alarm:environment");
    let (_, list) = s.get("/marks").await;
    assert_eq!(list["marks"].as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn error_envelopes() {
    let s = Server::start().await;
    for path in ["/jobs/j99", "/jobs/j99/progress", "/jobs/j99/results", "/tasks/j99:x/trace", "/marks/7", "/nowhere"] {
        let (status, body) = s.get(path).await;
        assert_eq!(status, 404, "{path}");
        assert_eq!(body["code"], "not_found");
        assert!(body["message"].is_string());
    }
    let (status, body) = s.post("/jobs", json!({"bogus": 1})).await;
    assert_eq!(status, 400);
    assert_eq!(body["code"], "bad_request");
    let (status, _) = s.post("/jobs", json!({})).await;
    assert_eq!(status, 400);
    let r = s
        .client
        .post(format!("{}/jobs", s.base))
        .body("not json")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 400);
    let (status, _) = s.post("/jobs/j99/start", json!({})).await;
    assert_eq!(status, 404);
    let id = s.create_toy().await;
    let (status, _) = s.get(&format!("/jobs/{id}/results?since=abc")).await;
    assert_eq!(status, 400);
    let (status, _) = s.put(&format!("/jobs/{id}/files/other.json"), json!({})).await;
    assert_eq!(status, 400);
    let (status, _) = s.post("/marks", json!({"task": "j99:x", "verdict_class": "fault", "description": "d"})).await;
    assert_eq!(status, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn job_list_filters_and_cursor() {
    let s = Server::start().await;
    let a = s.create_toy().await;
    let (_, b) = s
        .post("/jobs", json!({"job_file": toy_job(), "author": "bob", "name": "second"}))
        .await;
    let b = b["id"].as_str().unwrap().to_string();
    let (_, all) = s.get("/jobs").await;
    assert_eq!(all["jobs"].as_array().unwrap().len(), 2);
    let (_, shared) = s.get("/jobs?access=shared").await;
    assert_eq!(shared["jobs"][0]["id"], a.as_str());
    assert_eq!(shared["jobs"].as_array().unwrap().len(), 1);
    let (_, bobs) = s.get("/jobs?author=bob").await;
    assert_eq!(bobs["jobs"][0]["name"], "second");
    let (_, page) = s.get("/jobs?limit=1").await;
    assert_eq!(page["jobs"].as_array().unwrap().len(), 1);
    let next = page["next"].as_u64().unwrap();
    let (_, rest) = s.get(&format!("/jobs?since={next}")).await;
    assert_eq!(rest["jobs"][0]["id"], b.as_str());
}

#[tokio::test(flavor = "multi_thread")]
async fn replacing_job_file_bumps_version_and_reprepares() {
    let s = Server::start().await;
    let id = s.create_toy().await;
    let (_, job) = s.get(&format!("/jobs/{id}")).await;
    let mut conf: Value = serde_json::from_str(job["files"]["job.json"].as_str().unwrap()).unwrap();
    conf["pfg"]["targets"] = json!(["drivers/toy_balanced.*"]);
    let r = s
        .client
        .put(format!("{}/jobs/{id}/files/job.json", s.base))
        .body(conf.to_string())
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 200);
    let job: Value = r.json().await.unwrap();
    assert_eq!(job["files_version"], 2);
    assert_eq!(job["task_total"], 1);
    s.post(&format!("/jobs/{id}/start"), json!({})).await;
    let results = s.collect_results(&id).await;
    assert_eq!(results.len(), 1);
    let r = s
        .client
        .put(format!("{}/jobs/{id}/files/job.json", s.base))
        .body(conf.to_string())
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 409);
}

#[tokio::test(flavor = "multi_thread")]
async fn store_survives_restart() {
    let store = tempfile::tempdir().unwrap();
    let id = {
        let app = forge_bridge::router(store.path(), 1).await.unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let server = tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        let client = reqwest::Client::new();
        let job: Value = client
            .post(format!("http://{addr}/jobs"))
            .json(&json!({"job_file": toy_job()}))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        server.abort();
        job["id"].as_str().unwrap().to_string()
    };
    // Let the writer flush.
    tokio::time::sleep(Duration::from_millis(200)).await;
    let app = forge_bridge::router(store.path(), 1).await.unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    let r = reqwest::get(format!("http://{addr}/jobs/{id}")).await.unwrap();
    assert_eq!(r.status().as_u16(), 200);
    let job: Value = r.json().await.unwrap();
    assert_eq!(job["state"], "pending");
    assert!(store.path().join("store.json").exists());
    assert!(!store.path().join("store.json.tmp").exists());
}
