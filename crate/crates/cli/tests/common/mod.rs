//! Helpers shared by the CLI test targets.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};
use std::thread;

use clinfix_core::synth::swap_pairs;
use tiny_http::{Header, Response, Server};

pub fn clinfix() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_clinfix"));
    c.env_remove("MEDIFACT_BACKEND_URL").env("RUST_LOG", "error");
    c
}

/// Runs the binary and returns its output; panics with stderr if `ok` is not met.
pub fn run(args: &[&str], expect_success: bool) -> Output {
    let out = clinfix().args(args).output().expect("spawn clinfix");
    if out.status.success() != expect_success {
        panic!(
            "clinfix {args:?} exited with {:?}\nstdout:\n{}\nstderr:\n{}",
            out.status.code(),
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Correction service that undoes the synthetic corpus' word swaps.
/// Returns the base URL; the server lives until the process exits.
pub fn start_fixing_backend() -> String {
    let server = Server::http("127.0.0.1:0").expect("bind stub backend");
    let url = format!("http://{}", server.server_addr().to_ip().expect("ip listener"));
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            thread::spawn(move || {
                let (code, body) = match req.url() {
                    "/health" => (200, r#"{"status":"ok"}"#.to_string()),
                    "/correct" => {
                        let mut raw = String::new();
                        let _ = req.as_reader().read_to_string(&mut raw);
                        match serde_json::from_str::<serde_json::Value>(&raw) {
                            Ok(v) => {
                                let mut s = v["error_sentence"].as_str().unwrap_or_default().to_string();
                                for (wrong, right) in swap_pairs() {
                                    s = s.replace(wrong, right);
                                }
                                (200, serde_json::json!({ "corrected_sentence": s, "confidence": 0.9 }).to_string())
                            }
                            Err(_) => (400, r#"{"error":"malformed body"}"#.to_string()),
                        }
                    }
                    _ => (404, "{}".to_string()),
                };
                let json = Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = req.respond(Response::from_string(body).with_status_code(code).with_header(json));
            });
        }
    });
    url
}
