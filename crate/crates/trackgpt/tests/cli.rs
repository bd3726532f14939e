mod common;

use std::path::Path;

use common::*;
use trackgpt::ingest::tracks_to_csv;

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// One line on stderr, `error[CODE]: ...`, and the expected status.
fn assert_error(out: &Output, code: &str, status: i32) {
    assert_eq!(out.code, status, "stderr: {}", out.stderr);
    let lines: Vec<&str> = out.stderr.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {}", out.stderr);
    assert!(lines[0].starts_with(&format!("error[{code}]: ")), "{}", lines[0]);
}

#[test]
fn help_lists_every_subcommand() {
    let out = trackgpt(&["--help"], &[]);
    assert_eq!(out.code, 0);
    for sub in ["prep", "train", "forecast", "eval", "plot"] {
        assert!(out.stdout.contains(sub), "{sub} missing from help");
    }
    assert!(out.stdout.contains("TRACKGPT_SEED"));
}

#[test]
fn usage_errors_are_one_line() {
    assert_error(&trackgpt(&["prep", "--bogus"], &[]), "E_USAGE", 2);
    assert_error(&trackgpt(&[], &[]), "E_USAGE", 2);
    assert_error(&trackgpt(&["eval", "--input", "x.csv", "--out", "o"], &[]), "E_USAGE", 2);
    assert_error(&trackgpt(&["--protocol", "nope", "plot", "-i", "a", "-o", "b"], &[]), "E_USAGE", 2);
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = trackgpt(&["prep", "--input", p(&dir.path().join("none.csv")), "--out", p(dir.path())], &[]);
    assert_error(&out, "E_IO", 3);
}

#[test]
fn bad_config_and_bad_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("in.csv");
    std::fs::write(&csv, "entity_id,timestamp,lat,lon\na,1,x,y\na,2,z,w\na,3,55.0,11.0\n").unwrap();

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[model]\nwidth = 3\n").unwrap();
    assert_error(&trackgpt(&["--config", p(&cfg), "prep", "-i", p(&csv), "-o", p(dir.path())], &[]), "E_PARSE", 4);

    std::fs::write(&cfg, "[protocol]\nprompt_len = 0\n").unwrap();
    assert_error(&trackgpt(&["--config", p(&cfg), "prep", "-i", p(&csv), "-o", p(dir.path())], &[]), "E_CONFIG", 2);

    assert_error(&trackgpt(&["prep", "-i", p(&csv), "-o", p(dir.path())], &[]), "E_INGEST", 4);

    std::fs::write(&csv, "id,timestamp,lat,lon\na,1,55.0,11.0\n").unwrap();
    assert_error(&trackgpt(&["prep", "-i", p(&csv), "-o", p(dir.path())], &[]), "E_CONFIG", 2);

    let geo = dir.path().join("broken.geojson");
    std::fs::write(&geo, "{\"type\": \"Feature\"}").unwrap();
    assert_error(&trackgpt(&["plot", "-i", p(&geo), "-o", p(&dir.path().join("x.svg"))], &[]), "E_PARSE", 4);
}

#[test]
fn every_subcommand_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.toml");
    std::fs::write(&cfg, SMALL_RUN_TOML).unwrap();
    let csv = d.join("train.csv");
    std::fs::write(&csv, tracks_to_csv(&vessel_fleet(6, 6.0, 51, "v"))).unwrap();
    let test_csv = d.join("test.csv");
    std::fs::write(&test_csv, tracks_to_csv(&vessel_fleet(3, 6.0, 52, "t"))).unwrap();
    let c = p(&cfg);
    let ok = |args: &[&str]| {
        let out = trackgpt(args, &[("TRACKGPT_SEED", "3")]);
        assert_eq!(out.code, 0, "{args:?}: {}", out.stderr);
        out.stdout
    };

    let s = ok(&["--config", c, "prep", "-i", p(&csv), "-o", p(d)]);
    assert!(s.contains("hop>1 fraction") && s.contains("6 tracks"), "{s}");
    let ckpt = d.join("model.ckpt");
    let log = d.join("train.log");
    let corpus = d.join("corpus.txt");
    let s = ok(&["--config", c, "train", "--corpus", p(&corpus), "-o", p(&ckpt), "--log", p(&log), "--stop-at", "7"]);
    assert!(s.contains("0..7"), "{s}");
    let s = ok(&["--config", c, "train", "--corpus", p(&corpus), "-o", p(&ckpt), "--log", p(&log), "--resume"]);
    assert!(s.contains("7..12"), "{s}");
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 12);

    let geo = d.join("forecast.geojson");
    let s = ok(&["--config", c, "forecast", "--checkpoint", p(&ckpt), "-i", p(&test_csv), "-o", p(&geo)]);
    assert!(s.contains("t0000"), "{s}");
    let eval_dir = d.join("eval");
    let s = ok(&["--config", c, "eval", "--checkpoint", p(&ckpt), "-i", p(&test_csv), "-o", p(&eval_dir)]);
    assert!(s.contains("ADE (km)"), "{s}");
    let base_dir = d.join("baseline");
    let s = ok(&["--config", c, "eval", "--baseline", "const-velocity", "--corpus", p(&corpus), "-i", p(&test_csv), "-o", p(&base_dir)]);
    assert!(s.contains("constant velocity"), "{s}");

    ok(&["plot", "-i", p(&geo), "-o", p(&d.join("map.svg"))]);
    ok(&["--config", c, "plot", "-i", p(&eval_dir.join("report.csv")), "-o", p(&d.join("curve.svg"))]);
    let curve = std::fs::read_to_string(d.join("curve.svg")).unwrap();
    assert_eq!(curve.matches(r#"class="tick""#).count(), 2);
    assert!(std::fs::read_to_string(d.join("map.svg")).unwrap().contains("<polyline"));

    // The model only knows the training area.
    let far = d.join("far.csv");
    std::fs::write(&far, "entity_id,timestamp,lat,lon\nz,0,-40.0,170.0\nz,3600,-40.1,170.1\n").unwrap();
    let out = trackgpt(&["--config", c, "forecast", "--checkpoint", p(&ckpt), "-i", p(&far), "-o", p(&geo)], &[]);
    assert_error(&out, "E_COVERAGE", 1);
}
