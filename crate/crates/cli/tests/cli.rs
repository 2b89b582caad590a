use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use irl_dr_cli::manifest::Manifest;

const BIN: &str = env!("CARGO_BIN_EXE_irl-dr");

// one spring day of an AC-only household, trained and scored on itself
const TINY: &str = r#"
version = 1
seed = 3

[data]
source = "synth"
archetype = "ac-only"
seed = 1
days = 20

[split]
train = [{ start = "2018-04-16", end = "2018-04-17" }]
test = [{ start = "2018-04-16", end = "2018-04-17" }]
allow_overlap = true

[dqn]
episodes = 30
hidden = [8]
buffer_capacity = 2000

[irl]
max_iterations = 2
"#;

fn irl_dr(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let o = irl_dr(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn pipeline(config: &Path, out: &Path) {
    for cmd in ["simulate-expert", "learn-reward", "evaluate"] {
        ok(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    }
}

fn manifest(out: &Path, command: &str) -> Manifest {
    let text = fs::read_to_string(out.join("manifests").join(format!("{command}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn artifact_bytes(out: &Path, m: &Manifest) -> BTreeMap<String, Vec<u8>> {
    m.artifacts
        .iter()
        .map(|a| (a.path.clone(), fs::read(out.join(&a.path)).unwrap()))
        .collect()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn missing_data_file_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.csv");
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        format!(
            "version = 1\n[data]\nsource = \"csv\"\npath = {:?}\n",
            missing.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = irl_dr(&["simulate-expert", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.csv"));
}

#[test]
fn missing_prerequisites_are_user_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, TINY).unwrap();
    for cmd in ["learn-reward", "evaluate"] {
        let o = irl_dr(&[cmd, "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
    }
}

#[test]
fn pipeline_is_reproducible_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline(&cfg, &a);
    pipeline(&cfg, &b);
    for cmd in ["simulate-expert", "learn-reward", "evaluate"] {
        let (ma, mb) = (manifest(&a, cmd), manifest(&b, cmd));
        assert_eq!(ma, mb, "{cmd} manifests differ");
        assert_eq!(artifact_bytes(&a, &ma), artifact_bytes(&b, &mb), "{cmd} artifacts differ");
        for art in &ma.artifacts {
            let (sha, bytes) = irl_dr_cli::manifest::sha256_file(&a.join(&art.path)).unwrap();
            assert_eq!((sha, bytes), (art.sha256.clone(), art.bytes));
        }
    }

    // rerun every command from its own manifest
    let c = dir.path().join("c");
    for cmd in ["simulate-expert", "learn-reward", "evaluate"] {
        let m = a.join("manifests").join(format!("{cmd}.json"));
        ok(&[cmd, "--config", m.to_str().unwrap(), "--out", c.to_str().unwrap()]);
        let (ma, mc) = (manifest(&a, cmd), manifest(&c, cmd));
        assert_eq!(artifact_bytes(&a, &ma), artifact_bytes(&c, &mc), "{cmd} rerun differs");
    }

    // result: weights in the box, one margin row per iteration run
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("irl/result.json")).unwrap()).unwrap();
    let alpha = result["alpha"].as_array().unwrap();
    assert_eq!(alpha.len(), 6);
    assert!(alpha.iter().all(|v| v.as_f64().unwrap().abs() <= 1.0 + 1e-9));
    let history = result["history"].as_array().unwrap();
    assert!(!history.is_empty() && history.len() <= 3);
    assert_eq!(csv_rows(&a.join("irl/margins.csv")).len(), history.len());

    let prov = csv_rows(&a.join("eval/provision.csv"));
    assert_eq!(prov.len(), 2 * 96);
    for r in &prov {
        let p: f64 = r[6].parse().unwrap();
        assert!((-1.0..=1.0).contains(&p));
    }
    for r in csv_rows(&a.join("eval/schedule.csv")) {
        let v: f64 = r[4].parse().unwrap();
        if &r[3] == "ac" {
            assert!((0.0..=1.0).contains(&v), "{r:?}");
        } else {
            assert!([-1.0, 0.0, 1.0].contains(&v), "{r:?}");
        }
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("eval/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["days"], 1);
}

#[test]
fn identical_policies_score_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    fs::write(&cfg, TINY.replace("max_iterations = 2", "max_iterations = 0")).unwrap();
    let out = dir.path().join("run");
    for cmd in ["simulate-expert", "learn-reward"] {
        ok(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    }
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("irl/result.json")).unwrap()).unwrap();
    let sel = result["selected_iteration"].as_u64().unwrap();
    let ckpt = out.join("irl/checkpoints");
    for ext in ["bin", "bin.json"] {
        fs::copy(
            out.join(format!("expert/checkpoint.{ext}")),
            ckpt.join(format!("iter_{sel:02}.{ext}")),
        )
        .unwrap();
    }
    ok(&["evaluate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    for r in csv_rows(&out.join("eval/metrics.csv")) {
        assert_eq!(r[2].parse::<f64>().unwrap(), 0.0);
        assert_eq!(r[3].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn bench_with_heavy_penalty_returns_zero_reward() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b.toml");
    fs::write(
        &cfg,
        "version = 1\n[data]\nsource = \"synth\"\narchetype = \"ac-only\"\n[exact]\nlambdas = [1e6]\n",
    )
    .unwrap();
    ok(&["bench-exact", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bench/report.json")).unwrap()).unwrap();
    let row = &report["rows"][0];
    assert!(row["max_abs_reward"].as_f64().unwrap() < 1e-9, "{row}");
}
