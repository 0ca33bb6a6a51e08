use std::path::Path;
use std::process::{Command, Output};

use coverage_cli::{compute_metrics, read_summary};
use coverage_core::EpisodeLog;
use coverage_sac::TrainConfig;

fn coverage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coverage")).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_exits_zero() {
    for args in [&["--help"][..], &["eval", "--help"], &["baseline", "--help"], &["gen-maps", "--help"], &["train", "--help"], &["render", "--help"]] {
        let out = coverage(args);
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn bad_invocations_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["baseline", "--planner", "bsa", "--map", "/nonexistent/map.pgm"],
        vec!["eval", "--random", "--maps", "/nonexistent/map.pgm", "--out", d],
        vec!["eval", "--checkpoint", "/nonexistent/final.ckpt", "--maps", "empty:1.2", "--out", d],
        vec!["baseline", "--planner", "spiral", "--map", "empty:1.2"],
        vec!["baseline", "--planner", "bsa", "--map", "empty:1.2", "--bogus"],
        vec!["--noise-level", "7", "baseline", "--planner", "bsa", "--map", "empty:1.2"],
        vec!["--config", "/nonexistent/c.json", "baseline", "--planner", "bsa", "--map", "empty:1.2"],
        vec!["eval", "--random", "--planner", "bsa", "--maps", "empty:1.2", "--out", d],
        vec!["render", "--log", "/nonexistent/log.csv", "--map", "empty:1.2", "--out", "x.ppm"],
    ];
    for args in cases {
        let out = coverage(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!stderr(&out).trim().is_empty(), "{args:?} gave no message");
    }
}

#[test]
fn gen_maps_then_eval_then_render() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps");
    let out = coverage(&["--seed", "3", "gen-maps", "--out", maps.to_str().unwrap(), "--count", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let m3 = maps.join("map_00003.pgm");
    assert!(m3.is_file() && maps.join("map_00004.json").is_file());

    let eval_dir = dir.path().join("eval");
    let out = coverage(&["eval", "--planner", "bsa", "--maps", m3.to_str().unwrap(), "empty:1.8", "--out", eval_dir.to_str().unwrap(), "--max-steps", "300"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_summary(std::fs::File::open(eval_dir.join("summary.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2].map, "Total");
    assert_eq!(rows[2].collisions, rows[0].collisions + rows[1].collisions);
    assert!((rows[2].duration - rows[0].duration - rows[1].duration).abs() < 1e-9);

    // metrics recomputed from the exported logs match the summary
    for (row, file) in rows.iter().zip(["map_00003.csv", "empty-1.8.csv"]) {
        let log = EpisodeLog::read_csv(std::fs::File::open(eval_dir.join(file)).unwrap()).unwrap();
        let m = compute_metrics(&log);
        assert_eq!(m.t90, row.t90);
        assert_eq!(m.final_coverage, row.final_coverage);
        assert_eq!(m.collisions, row.collisions);
    }

    let img = dir.path().join("path.ppm");
    let log = eval_dir.join("empty-1.8.csv");
    let out = coverage(&["render", "--log", log.to_str().unwrap(), "--map", "empty:1.8", "--out", img.to_str().unwrap(), "--scale", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let bytes = std::fs::read(&img).unwrap();
    assert!(bytes.starts_with(b"P6\n"));
}

#[test]
fn baseline_writes_a_reproducible_log() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = coverage(&["--seed", "5", "baseline", "--planner", "tsp-offline", "--map", "empty:1.8", "--out", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        let metrics: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(metrics["final_coverage"].as_f64().unwrap() >= 0.99);
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn config_schema_lists_every_field() {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas/train-config.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let config = serde_json::to_value(TrainConfig::default()).unwrap();
    let props = schema["properties"].as_object().unwrap();
    let fields = config.as_object().unwrap();
    let mut a: Vec<_> = props.keys().collect();
    let mut b: Vec<_> = fields.keys().collect();
    a.sort();
    b.sort();
    assert_eq!(a, b);
    for section in ["sac", "network", "encoder"] {
        let mut a: Vec<_> = props[section]["properties"].as_object().unwrap().keys().collect();
        let mut b: Vec<_> = fields[section].as_object().unwrap().keys().collect();
        a.sort();
        b.sort();
        assert_eq!(a, b, "{section}");
        // documented defaults are the real ones
        for (k, v) in fields[section].as_object().unwrap() {
            assert_eq!(&props[section]["properties"][k]["default"], v, "{section}.{k}");
        }
    }
}
