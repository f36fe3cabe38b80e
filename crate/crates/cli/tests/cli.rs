use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rnntrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rnntrack"))
        .args(args)
        .output()
        .expect("run rnntrack")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(rnntrack(&["gen-data", "--seed", "3", "--out", s(&data)]).status.success());
    let gt = data.join("scene_0000/gt.csv");
    let out = rnntrack(&["eval", "--gt", s(&gt), "--res", s(&gt)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mota = header.iter().position(|h| *h == "MOTA").unwrap();
    assert_eq!(row[mota].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn track_without_model_is_a_usage_error() {
    let out = rnntrack(&["track", "--det", "d.csv", "--out", "r.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(rnntrack(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert!(rnntrack(&["gen-data", "--seed", "7", "--scenes", "2", "--out", s(d)]).status.success());
    }
    for scene in ["scene_0000", "scene_0001"] {
        for file in ["gt.csv", "det.csv", "provenance.csv"] {
            let x = fs::read(a.join(scene).join(file)).unwrap();
            let y = fs::read(b.join(scene).join(file)).unwrap();
            assert_eq!(x, y, "{scene}/{file}");
        }
    }
}

#[test]
fn missing_input_file_exits_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = rnntrack(&[
        "baseline",
        "--det",
        s(&dir.path().join("missing.csv")),
        "--out",
        s(&dir.path().join("r.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn bad_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "seed = 4\nmotion.bogus = 1\n").unwrap();
    let out = rnntrack(&["gen-data", "--config", s(&cfg), "--out", s(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("motion.bogus"));
}
