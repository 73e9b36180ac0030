use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_steerers"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON on stdout")
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["match", "a.desc"]).status.code(), Some(1));
    assert_eq!(run(&["spectrum", "/definitely/missing.steer"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.steer");
    std::fs::write(&junk, b"not a steerer").unwrap();
    let out = run(&["decompose", junk.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
}

#[test]
fn perm_steerer_histogram() {
    let path = data_dir().join("steerers/perm256.steer");
    let v = json_stdout(&run(&["decompose", path.to_str().unwrap()]));
    let hist = &v["frequency_histogram"];
    assert_eq!(hist["0"], 64);
    assert_eq!(hist["1"], 128);
    assert_eq!(hist["2"], 64);
    assert!(v["residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn random_init_spectrum_inside_unit_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.steer");
    let out = run(&["steerer", "--kind", "random", "--dim", "96", "--seed", "11", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let v = json_stdout(&run(&["spectrum", path.to_str().unwrap()]));
    assert_eq!(v["dimension"], 96);
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 96);
    let max = v["max_modulus"].as_f64().unwrap();
    assert!(max > 0.0 && max < 1.0, "max modulus {max}");
}

#[test]
fn bundled_textures_match_generator() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["textures", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    for i in 0..10 {
        let name = format!("texture_{i:02}.pgm");
        let fresh = std::fs::read(dir.path().join(&name)).unwrap();
        let bundled = std::fs::read(data_dir().join("textures").join(&name)).unwrap();
        assert!(fresh == bundled, "{name} differs from its regeneration");
    }
    let s = dir.path().join("perm.steer");
    assert!(run(&["steerer", "--kind", "perm", "--dim", "256", "--out", s.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(s).unwrap(), std::fs::read(data_dir().join("steerers/perm256.steer")).unwrap());
}

#[test]
fn quarter_bench_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("run");
    let textures = data_dir().join("textures");
    let out = run(&[
        "bench",
        textures.to_str().unwrap(),
        "--mode",
        "quarter",
        "--max-keypoints",
        "128",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(prefix.with_extension("json")).unwrap()).unwrap();
    let rows = v["angles"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert_eq!(row["ratio"].as_array().unwrap().len(), 3);
    }
    assert!(v.get("timings").is_none_or(Value::is_null));
    let csv = std::fs::read_to_string(prefix.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
}

#[test]
fn bench_is_deterministic() {
    let textures = data_dir().join("textures");
    let args = [
        "bench",
        textures.to_str().unwrap(),
        "--max-keypoints",
        "64",
        "--strategy",
        "subset",
        "--seed",
        "5",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn describe_and_match_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let img = data_dir().join("textures/texture_03.pgm");
    let desc = d.join("a.desc");
    let kp = d.join("a.json");
    let out = run(&[
        "describe",
        img.to_str().unwrap(),
        "--out",
        desc.to_str().unwrap(),
        "--keypoints",
        kp.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let kps: Value = serde_json::from_str(&std::fs::read_to_string(kp).unwrap()).unwrap();
    let n = kps["keypoints"].as_array().unwrap().len();
    assert!(n > 10);

    let steer = d.join("u.steer");
    assert!(run(&["steerer", "--kind", "upsift", "--out", steer.to_str().unwrap()]).status.success());
    let v = json_stdout(&run(&[
        "match",
        desc.to_str().unwrap(),
        desc.to_str().unwrap(),
        "--steerer",
        steer.to_str().unwrap(),
        "--strategy",
        "plain",
    ]));
    let matches = v["matches"].as_array().unwrap();
    assert_eq!(matches.len(), n);
    for (i, m) in matches.iter().enumerate() {
        assert_eq!(m[0], i);
        assert_eq!(m[1], i);
    }
}

#[test]
fn fit_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let img = data_dir().join("textures/texture_00.pgm");
    let desc = d.join("a.desc");
    assert!(run(&["describe", img.to_str().unwrap(), "--out", desc.to_str().unwrap()]).status.success());
    std::fs::write(d.join("m.json"), r#"{"pairs":[{"before":"a.desc","after":"a.desc","k":1}]}"#).unwrap();
    let out = run(&["fit", d.join("m.json").to_str().unwrap(), "--out", d.join("f.steer").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("underdetermined"));

    std::fs::write(d.join("bad.json"), r#"{"pairs":[{"before":"a.desc","after":"a.desc"}]}"#).unwrap();
    let out = run(&["fit", d.join("bad.json").to_str().unwrap(), "--out", d.join("f.steer").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_recovers_planted_steerer() {
    use steerers::descriptor::DescriptorMatrix;
    use steerers::group_reps::{build_fixed_steerer, FixedSteererKind};
    use steerers::io::{read_steerer, write_descriptions};

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let truth = build_fixed_steerer(FixedSteererKind::Perm, 8).unwrap();
    let mut state = 12345u64;
    let y = nalgebra::DMatrix::from_fn(8, 200, |_, _| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });
    let before = DescriptorMatrix::normalized(y).unwrap();
    let after = DescriptorMatrix::normalized(truth.matrix() * before.data()).unwrap();
    write_descriptions(&d.join("b.desc"), &before).unwrap();
    write_descriptions(&d.join("a.desc"), &after).unwrap();
    std::fs::write(d.join("m.json"), r#"{"pairs":[{"before":"b.desc","after":"a.desc","k":1}]}"#).unwrap();
    let report = d.join("r.json");
    let out = run(&[
        "fit",
        d.join("m.json").to_str().unwrap(),
        "--order",
        "4",
        "--out",
        d.join("f.steer").to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fitted = read_steerer(&d.join("f.steer")).unwrap();
    assert!((fitted.matrix() - truth.matrix()).amax() < 1e-5);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 8);
    assert!(v["residual"].as_f64().unwrap() < 1e-5);
}
