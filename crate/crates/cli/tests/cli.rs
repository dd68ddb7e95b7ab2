mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use common::{clinfix, p, run, start_fixing_backend};

const TEN_ROWS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/ten_rows.csv");

/// Synthetic corpus plus a model trained on it, shared by the tests below.
struct Workspace {
    _dir: tempfile::TempDir,
    model: PathBuf,
    test: PathBuf,
}

fn workspace() -> &'static Workspace {
    static CELL: OnceLock<Workspace> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        run(&["synth", "--out-dir", p(&root), "--n-train", "160", "--n-test", "60"], true);
        run(&["train", "--train", p(&root.join("train.csv")), "-o", p(&root.join("model.bin"))], true);
        Workspace { model: root.join("model.bin"), test: root.join("test.csv"), _dir: dir }
    })
}

fn code(args: &[&str]) -> Option<i32> {
    clinfix().args(args).output().unwrap().status.code()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn missing_input_is_io_error() {
    let ws = workspace();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never.run");
    assert_eq!(code(&["predict", "--model", p(&ws.model), "--input", "/no/such.csv", "-o", p(&out)]), Some(2));
    assert_eq!(code(&["train", "--train", "/no/such.csv", "-o", p(&out)]), Some(2));
}

#[test]
fn corrupt_model_is_validation_error() {
    let ws = workspace();
    let tmp = tempfile::tempdir().unwrap();
    let mut bytes = fs::read(&ws.model).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    let bad = tmp.path().join("bad.bin");
    fs::write(&bad, bytes).unwrap();
    let out = clinfix()
        .args(["predict", "--model", p(&bad), "--input", p(&ws.test), "-o", p(&tmp.path().join("x.run"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn rejected_rows_need_opt_in() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("m.bin");
    let rejects = tmp.path().join("rejects.jsonl");
    let base = ["train", "--train", TEN_ROWS, "-o", p(&model), "--rejects", p(&rejects)];
    assert_eq!(code(&base), Some(1));
    assert!(!model.exists());
    assert_eq!(lines(&rejects).len(), 2);

    let mut allowed = base.to_vec();
    allowed.push("--allow-rejects");
    let out = run(&allowed, true);
    assert!(String::from_utf8_lossy(&out.stdout).contains("records             8"));
    assert!(model.exists());
}

#[test]
fn run_file_has_one_line_per_record() {
    let ws = workspace();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("test.run");
    run(&["predict", "--model", p(&ws.model), "--input", p(&ws.test), "-o", p(&out)], true);
    let run_lines = lines(&out);
    assert_eq!(run_lines.len(), 60);
    for l in &run_lines {
        let parts: Vec<&str> = l.splitn(4, ' ').collect();
        assert_eq!(parts.len(), 4, "{l}");
        match parts[1] {
            "0" => assert_eq!((parts[2], parts[3]), ("-1", "NA")),
            "1" => assert!(parts[2].parse::<u32>().is_ok() && parts[3] != "NA"),
            other => panic!("bad flag {other}"),
        }
    }

    let report = PathBuf::from(format!("{}.report.json", out.display()));
    let stdout = run(&["evaluate", "--run", p(&out), "--gold", p(&ws.test)], true).stdout;
    assert!(String::from_utf8_lossy(&stdout).contains("error flag accuracy"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["n_items"], 60);
}

#[test]
fn config_file_and_flags() {
    let ws = workspace();
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("c.toml");
    fs::write(&config, "flag_threshold = 1e9\nmode = \"qa\"\n").unwrap();
    let out = tmp.path().join("a.run");
    let args = ["predict", "--model", p(&ws.model), "--input", p(&ws.test), "-o", p(&out)];
    let mut with_config = args.to_vec();
    with_config.extend(["--config", p(&config)]);
    run(&with_config, true);
    assert!(lines(&out).iter().all(|l| l.ends_with(" 0 -1 NA")));

    // The flag beats the file.
    with_config.extend(["--flag-threshold", "0"]);
    run(&with_config, true);
    assert!(lines(&out).iter().any(|l| l.contains(" 1 ")));

    fs::write(&config, "flag_treshold = 0.5\n").unwrap();
    let mut typo = args.to_vec();
    typo.extend(["--config", p(&config)]);
    assert_eq!(code(&typo), Some(1));
}

#[test]
fn backend_url_from_environment() {
    let ws = workspace();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("qa.run");
    let url = start_fixing_backend();
    let args = ["predict", "--model", p(&ws.model), "--input", p(&ws.test), "-o", p(&out)];
    let with_env = clinfix().args(args).args(["--mode", "qa"]).env("MEDIFACT_BACKEND_URL", &url).output().unwrap();
    assert!(with_env.status.success());
    let stdout = String::from_utf8_lossy(&with_env.stdout);
    assert!(!stdout.contains("abstractive=0 "), "{stdout}");

    // Nothing listening: prediction still succeeds on the fallback.
    let dead = clinfix()
        .args(args)
        .args(["--mode", "qa", "--backend-url", "http://127.0.0.1:9", "--timeout", "1"])
        .output()
        .unwrap();
    assert!(dead.status.success());
    let stdout = String::from_utf8_lossy(&dead.stdout);
    assert!(stdout.contains("abstractive=0 "), "{stdout}");
}

#[test]
fn evaluate_rejects_bad_external_spec() {
    let ws = workspace();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t.run");
    run(&["predict", "--model", p(&ws.model), "--input", p(&ws.test), "-o", p(&out)], true);
    let eval = ["evaluate", "--run", p(&out), "--gold", p(&ws.test)];
    let mut bad = eval.to_vec();
    bad.extend(["--external", "no-equals-sign"]);
    assert_eq!(code(&bad), Some(1));
    let mut missing = eval.to_vec();
    missing.extend(["--external", "BLEURT=/no/such/file.jsonl"]);
    assert_eq!(code(&missing), Some(2));
}

#[test]
fn ablate_writes_one_run_per_mode() {
    let ws = workspace();
    let tmp = tempfile::tempdir().unwrap();
    let args = ["ablate", "--model", p(&ws.model), "--input", p(&ws.test), "--out-dir", p(tmp.path())];
    let stdout = run(&args, true).stdout;
    let text = String::from_utf8_lossy(&stdout);
    assert!(text.contains("R1F qa - extractive_only"));
    for mode in ["extractive_only", "qa", "qa_with_resolver"] {
        assert_eq!(lines(&tmp.path().join(format!("{mode}.run"))).len(), 60, "{mode}");
    }
}
