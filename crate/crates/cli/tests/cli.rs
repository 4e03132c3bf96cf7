use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SPIKE_FREE: [&str; 8] = [
    "--set",
    "synth.returns.shock_rate=0",
    "--set",
    "synth.news.jump_fraction=0",
    "--set",
    "synth.market.rate=0",
    "--set",
    "synth.market.sector_rate=0",
];

fn jumplab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumplab"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("JUMPLAB_THREADS")
        .output()
        .expect("spawn jumplab")
}

fn ok(out: &Path, args: &[&str]) {
    let o = jumplab(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn small_synth(out: &Path) {
    let mut args: Vec<&str> = SPIKE_FREE.to_vec();
    args.extend(["synth", "--n-stocks", "40", "--n-days", "20"]);
    ok(out, &args);
}

#[test]
fn detected_scores_carry_the_generated_tail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    small_synth(out);
    ok(out, &["ingest"]);
    ok(out, &["detect-jumps"]);

    let truth = json(&out.join("synth/truth.json"))["returns"]["tail_exponent"].as_f64().unwrap();
    let mut rdr = csv::Reader::from_path(out.join("detect-jumps/jumps.csv")).unwrap();
    let col = rdr.headers().unwrap().iter().position(|h| h == "score").unwrap();
    let mut scores: Vec<f64> = rdr.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    // plain Hill on the top 5 %
    let k = scores.len() / 20;
    let mean_log: f64 = scores[..k].iter().map(|x| (x / scores[k]).ln()).sum::<f64>() / k as f64;
    let alpha = 1.0 / mean_log;
    let stderr = alpha / (k as f64).sqrt();
    assert!(
        (alpha - truth).abs() <= 2.0 * stderr,
        "Hill {alpha:.3} ± {stderr:.3} on {k} scores vs generated {truth}"
    );
    let summary = json(&out.join("detect-jumps/summary.json"));
    assert_eq!(summary["n_jumps"].as_u64().unwrap() as usize, scores.len());
}

#[test]
fn report_lists_missing_artifacts_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = jumplab(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("missing artifacts"), "{err}");
    for name in ["ingest/summary.json", "detect-jumps/score_ccdf.csv", "collective/summary.json", "taildep/bars.csv"] {
        assert!(err.contains(name), "{name} not listed:\n{err}");
    }
    assert!(!dir.path().join("report").exists());
}

#[test]
fn missing_input_exits_1_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = jumplab(dir.path(), &["ingest", "--bars", "/no/such/bars.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/bars.csv"), "{}", stderr(&o));
}

#[test]
fn bad_parameter_exits_1_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let o = jumplab(dir.path(), &["--set", "detect-jumps.s=0.5", "detect-jumps"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("detect-jumps.s"), "{}", stderr(&o));

    let o = jumplab(dir.path(), &["--set", "collective.bogus=1", "collective"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn flags_beat_set_beat_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    small_synth(out);
    ok(out, &["ingest"]);
    let cfg = out.join("run.toml");
    std::fs::write(&cfg, "[detect-jumps]\ns = 5.0\nwindow = 60\n").unwrap();
    let c = cfg.to_str().unwrap();

    ok(out, &["-c", c, "--set", "detect-jumps.s=6.0", "detect-jumps", "--s", "7.0"]);
    let m = json(&out.join("detect-jumps/manifest.json"));
    assert_eq!(m["parameters"]["s"].as_f64(), Some(7.0));
    assert_eq!(m["parameters"]["window"].as_u64(), Some(60));

    ok(out, &["-c", c, "--set", "detect-jumps.s=6.0", "detect-jumps"]);
    assert_eq!(json(&out.join("detect-jumps/summary.json"))["s"].as_f64(), Some(6.0));
}

fn manifests_without_timing(dir: &Path) -> BTreeMap<PathBuf, Value> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let sub = entry.unwrap().path();
        let path = sub.join("manifest.json");
        if path.is_file() {
            let mut m = json(&path);
            m.as_object_mut().unwrap().remove("timing");
            out.insert(path, m);
        }
    }
    out
}

#[test]
fn reruns_reproduce_manifests_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let steps: [&[&str]; 3] = [&["synth", "--n-stocks", "30", "--n-days", "15"], &["ingest"], &["detect-jumps"]];
    let mut runs = Vec::new();
    for threads in ["1", "3"] {
        for step in steps {
            let mut args = vec!["--threads", threads];
            args.extend_from_slice(step);
            ok(out, &args);
        }
        runs.push(manifests_without_timing(out));
    }
    assert_eq!(runs[0].len(), 3);
    assert_eq!(runs[0], runs[1]);
    let m = &runs[0][&out.join("detect-jumps/manifest.json")];
    assert_eq!(m["command"], "detect-jumps");
    assert!(m["outputs"].as_array().unwrap().iter().all(|f| f["sha256"].as_str().unwrap().len() == 64));
}
