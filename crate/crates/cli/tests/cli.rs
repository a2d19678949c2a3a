use std::path::Path;
use std::process::{Command, Output};

fn ifsthermo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ifsthermo")).args(args).output().expect("spawn ifsthermo")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const TWO_MAPS: &str = r#"{
  "system": {
    "maps": ["x / 3", "x / 3 + 2 / 3"],
    "weights": [WEIGHTS]
  }
}"#;

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let good = ifsthermo(&["validate", "--preset", "cantor"]);
    assert_eq!(good.status.code(), Some(0));
    assert!(stdout(&good).contains("normalization=PASS"));

    let heavy = write_config(dir.path(), "heavy.json", &TWO_MAPS.replace("WEIGHTS", r#""0.6", "0.6""#));
    let out = ifsthermo(&["validate", "--config", &heavy]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("normalization=FAIL"));

    let broken = write_config(dir.path(), "broken.json", &TWO_MAPS.replace("WEIGHTS", r#""0.5 *", "0.5""#));
    assert_eq!(ifsthermo(&["validate", "--config", &broken]).status.code(), Some(2));

    let unknown = write_config(dir.path(), "unknown.json", r#"{"system": {"maps": ["x"], "weights": ["1"]}, "extra": 1}"#);
    assert_eq!(ifsthermo(&["validate", "--config", &unknown]).status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(ifsthermo(&["integrate", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(ifsthermo(&["integrate", "--preset", "simple_4_1", "--f", "sin("]).status.code(), Some(2));
    assert_eq!(ifsthermo(&["dimension", "--preset", "cantor", "--lambda", "0"]).status.code(), Some(2));
}

#[test]
fn dense_sweep_has_one_row_per_point() {
    let out = ifsthermo(&["sweep", "--preset", "ex_4_3", "--points", "321", "--depth", "6", "--threads", "4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows = data_lines(&text);
    assert_eq!(rows[0], "param,value,err_estimate,engine,depth_or_samples,seed,error");
    assert_eq!(rows.len(), 322);
    let params: Vec<f64> = rows[1..].iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(params.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*params.last().unwrap(), 1.0 / 3.0);
}

#[test]
fn out_path_receives_metadata_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    let out = ifsthermo(&["integrate", "--preset", "simple_4_1", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# ifsthermo"));
    assert!(text.lines().any(|l| l.starts_with("# timestamp=")));
    let rows = data_lines(&text);
    assert_eq!(rows.len(), 2);
    let value: f64 = rows[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!((value - 0.5).abs() < 1e-9);
}

#[test]
fn emitted_config_reproduces_the_preset() {
    let dir = tempfile::tempdir().unwrap();
    let emitted = ifsthermo(&["sweep", "--preset", "cantor", "--emit-config"]);
    assert!(emitted.status.success());
    let path = write_config(dir.path(), "cantor.json", &stdout(&emitted));
    let a = ifsthermo(&["sweep", "--preset", "cantor"]);
    let b = ifsthermo(&["sweep", "--config", &path]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(data_lines(&stdout(&a)), data_lines(&stdout(&b)));
}

#[test]
fn dimension_reports_cantor_root() {
    let out = ifsthermo(&["dimension", "--preset", "cantor"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows = data_lines(&text);
    let header: Vec<&str> = rows[0].split(',').collect();
    let values: Vec<&str> = rows[1].split(',').collect();
    let t: f64 = values[header.iter().position(|h| *h == "t_star").unwrap()].parse().unwrap();
    assert!((t - 2f64.ln() / 3f64.ln()).abs() < 1e-6);
}

#[test]
fn diagnose_flags_divergence() {
    let out = ifsthermo(&["diagnose", "--preset", "ex_4_4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("verdict=diverging"));
}
