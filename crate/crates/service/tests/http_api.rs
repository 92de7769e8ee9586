mod common;

use common::{spawn_server, Client};
use prefloop::config::Config;
use serde_json::{json, Value};

fn setup() -> (tempfile::TempDir, Client) {
    let dir = tempfile::tempdir().unwrap();
    let config = Config {
        memory_log_path: dir.path().join("memory.jsonl"),
        ..Config::default()
    };
    let addr = spawn_server(&config);
    (dir, Client::new(addr))
}

fn samples() -> Value {
    json!([
        {"media_uri": "a.png", "score": 90, "prompt": "bright vivid meadow"},
        {"media_uri": "b.png", "score": 65},
        {"media_uri": "c.png", "score": 80, "prompt": "warm sunset"}
    ])
}

#[test]
fn full_session_flow() {
    let (_dir, client) = setup();
    let (status, session) = client.post("/v1/sessions", &json!({"user_id": "ann"}));
    assert_eq!(status, 200, "{session}");
    let sid = session["session_id"].as_str().unwrap().to_string();
    assert_eq!(session["config"]["regulator"]["beta2"], 0.1);

    let (status, boot) = client.post(&format!("/v1/sessions/{sid}/bootstrap"), &json!({"task": "T2I", "samples": samples()}));
    assert_eq!(status, 200, "{boot}");
    assert_eq!(boot["record_count"], 3);

    let gen = json!({"prompt": "draw a heron", "source": "Closed", "seed": 7});
    let (status, summary) = client.post(&format!("/v1/sessions/{sid}/generate"), &gen);
    assert_eq!(status, 200, "{summary}");
    assert_eq!(summary["threshold_used"], boot["threshold"]);
    assert!(summary["result"]["output"]["uri"].as_str().unwrap().starts_with("mock://seeddream4/"));
    assert!(!summary["notes"].as_str().unwrap().is_empty());

    let rid = summary["result"]["result_id"].as_str().unwrap().to_string();
    let (status, profile) = client.post(&format!("/v1/results/{rid}/feedback"), &json!({"score": 85}));
    assert_eq!(status, 200, "{profile}");
    assert_eq!(profile["intra_record_count"], 4);

    let (status, again) = client.post(&format!("/v1/results/{rid}/feedback"), &json!({"score": 85}));
    assert_eq!(status, 409);
    assert_eq!(again["code"], "AlreadyScored");

    let (status, read) = client.get("/v1/users/ann/profile?task=t2i");
    assert_eq!(status, 200);
    assert_eq!(read, profile);
}

#[test]
fn generate_is_deterministic_for_a_fixed_seed() {
    let run = || {
        let (_dir, client) = setup();
        let (_, session) = client.post("/v1/sessions", &json!({"user_id": "u"}));
        let sid = session["session_id"].as_str().unwrap().to_string();
        let (status, summary) = client.post(
            &format!("/v1/sessions/{sid}/generate"),
            &json!({"prompt": "a short video clip of waves", "seed": 3}),
        );
        assert_eq!(status, 200);
        summary
    };
    let (a, b) = (run(), run());
    // result ids fold in the session id, everything else must match
    let strip = |mut v: Value| {
        v["result"]["result_id"] = Value::Null;
        v
    };
    assert_eq!(strip(a.clone()), strip(b));
    assert_eq!(a["profile_after"]["task"], "T2V");
}

#[test]
fn error_mapping() {
    let (_dir, client) = setup();
    let (_, session) = client.post("/v1/sessions", &json!({"user_id": "u"}));
    let sid = session["session_id"].as_str().unwrap().to_string();

    let (status, body) = client.post(&format!("/v1/sessions/{sid}/generate"), &json!({"prompt": "restyle", "task": "V2V"}));
    assert_eq!(status, 400);
    assert_eq!(body["code"], "MediaMismatch");
    assert!(body["message"].is_string() && body["details"].is_object());

    let (status, body) = client.post("/v1/sessions/ses-missing/generate", &json!({"prompt": "x"}));
    assert_eq!((status, body["code"].as_str()), (404, Some("UnknownSession")));

    let (status, body) = client.post("/v1/results/res-missing/feedback", &json!({"score": 50}));
    assert_eq!((status, body["code"].as_str()), (404, Some("UnknownResult")));

    let (status, body) = client.post("/v1/results/res-missing/feedback", &json!({"score": 500}));
    assert_eq!((status, body["code"].as_str()), (400, Some("OutOfRange")));

    let (status, body) = client.post(&format!("/v1/sessions/{sid}/bootstrap"), &json!({"task": "T2I", "samples": []}));
    assert_eq!((status, body["code"].as_str()), (400, Some("EmptyBootstrap")));

    let (status, body) = client.get("/v1/users/u/profile?task=X9");
    assert_eq!((status, body["code"].as_str()), (400, Some("UnknownTask")));

    let (status, body) = client.get("/v1/users/u/profile");
    assert_eq!((status, body["code"].as_str()), (400, Some("BadRequest")));

    let (status, body) = client.post("/v1/sessions", &json!({"nope": 1}));
    assert_eq!((status, body["code"].as_str()), (400, Some("BadRequest")));
}

#[test]
fn tool_failure_maps_to_bad_gateway() {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("registry.json");
    // a generator pointing at a closed local port: connection refused, retried, then failed
    let mut descriptors = serde_json::to_value(prefloop_core::toolkit::default_descriptors()).unwrap();
    for d in descriptors.as_array_mut().unwrap() {
        if d["tool_id"] == "qwen-image" {
            d["endpoint"] = json!("http://127.0.0.1:9/generate");
            d["max_retries"] = json!(0);
            d["timeout_ms"] = json!(500);
        }
    }
    std::fs::write(&registry, descriptors.to_string()).unwrap();
    let config = Config {
        memory_log_path: dir.path().join("memory.jsonl"),
        registry_path: Some(registry),
        ..Config::default()
    };
    let client = Client::new(spawn_server(&config));
    let (_, session) = client.post("/v1/sessions", &json!({"user_id": "u"}));
    let sid = session["session_id"].as_str().unwrap().to_string();
    let (status, body) = client.post(&format!("/v1/sessions/{sid}/generate"), &json!({"prompt": "draw a cat"}));
    assert_eq!(status, 502, "{body}");
    assert_eq!(body["code"], "ToolFailure");
    assert_eq!(body["details"]["tool_id"], "qwen-image");
}

#[test]
fn bench_report_endpoint() {
    let (_dir, client) = setup();
    let annotations = "user_id,method,task,category,sample_id,score\n\
u1,m,T2I,Single,a,20\nu1,m,T2I,Two,b,80\nu2,m,T2I,Single,c,90\nu2,m,T2I,Two,d,50\nu2,m,T2I,Color,e,10\n";
    let (status, report) = client.post(
        "/v1/bench/report",
        &json!({"annotations": annotations, "predictions": [{"method": "e1", "csv": "sample_id,score\na,1\nb,2\nc,3\nd,2\ne,1\n"}]}),
    );
    assert_eq!(status, 200, "{report}");
    let row = &report["generation"]["tables"][0]["rows"][0];
    assert_eq!(row["cells"][0], 50.0);
    assert_eq!(row["cells"][1], 75.0);
    assert_eq!(report["evaluation"]["scopes"], json!(["T2I", "Overall"]));

    let (status, body) = client.post(
        "/v1/bench/report",
        &json!({"annotations": annotations, "predictions": [{"csv": "sample_id,score\nzz,1\n"}]}),
    );
    assert_eq!((status, body["code"].as_str()), (400, Some("JoinFailure")));
    assert_eq!(body["details"]["orphans"], json!(["zz"]));
}
