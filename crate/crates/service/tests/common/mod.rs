#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use prefloop::config::Config;
use serde_json::Value;

/// Starts the HTTP service on an ephemeral port in a background runtime.
pub fn spawn_server(config: &Config) -> SocketAddr {
    let engine = Arc::new(config.build_engine().expect("engine"));
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, prefloop::api::router(engine)).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

pub struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    pub fn new(addr: SocketAddr) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Client {
            base: format!("http://{addr}"),
            agent,
        }
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let mut resp = self
            .agent
            .post(&format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .send(body.to_string())
            .unwrap();
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        let mut resp = self.agent.get(&format!("{}{path}", self.base)).call().unwrap();
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }
}

pub fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("prefloop.toml");
    std::fs::write(&path, format!("memory_log_path = \"memory.jsonl\"\n{extra}")).unwrap();
    path
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn cli(dir: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_prefloop"))
        .current_dir(dir)
        .args(["--config", "prefloop.toml"])
        .args(args)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

pub const SAMPLES_CSV: &str = "media_uri,score,prompt\n\
samples/meadow.png,90,bright vivid meadow at dawn\n\
samples/street.png,62,grey rainy street\n\
samples/sunset.png,84,warm sunset over water\n\
samples/forest.png,77,misty pine forest\n\
samples/city.png,45,crowded neon city\n";
