use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use fractal_spectra_cli::output::sha256_hex;

const BIN: &str = env!("CARGO_BIN_EXE_fractal-spectra");

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env("FRACTAL_SPECTRA_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn hanoi(cmd: &str, level: &str) -> Vec<String> {
    [cmd, "--model", "hanoi", "--level", level, "--r", "1/6", "--a", "1/6"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn run_ok(args: &[String], out: &Path) -> Value {
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = run(&args, out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'), "LF line endings");
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn error_of(o: &Output) -> Value {
    let v: Value = serde_json::from_slice(&o.stderr).expect("error JSON on stderr");
    v["error"].clone()
}

#[test]
fn level1_spectrum_matches_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&hanoi("spectrum", "1"), dir.path());
    let rows = read_csv(&dir.path().join("spectrum.csv"));
    let reference = [(43.20, 1), (57.19, 2), (135.55, 2), (149.54, 1)];
    assert_eq!(rows.len(), reference.len());
    for (row, (value, mult)) in rows.iter().zip(reference) {
        let got: f64 = row[1].parse().unwrap();
        assert!((got / value - 1.0).abs() < 5e-3, "{got} vs {value}");
        assert_eq!(row[2].parse::<usize>().unwrap(), mult);
        assert_eq!(row[3], "dirichlet");
    }
}

#[test]
fn manifest_hashes_every_output_and_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_ok(&hanoi("spectrum", "2"), dir.path());
    let outputs = first["outputs"].as_array().unwrap();
    let mut listed: Vec<String> = outputs.iter().map(|f| f["path"].as_str().unwrap().to_string()).collect();
    listed.sort();
    let mut on_disk: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    assert_eq!(listed, on_disk);
    for f in outputs {
        let bytes = std::fs::read(dir.path().join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
    assert_eq!(first["config"]["r"], "1/6");
    assert_eq!(first["threads"], 1);

    let second = run_ok(&hanoi("spectrum", "2"), dir.path());
    assert_eq!(first["outputs"], second["outputs"]);
}

#[test]
fn counting_plot_is_monotone_and_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = hanoi("plot", "3");
    args.extend(["--kind".into(), "counting".into()]);
    run_ok(&args, dir.path());
    let first = std::fs::read(dir.path().join("counting.svg")).unwrap();
    run_ok(&args, dir.path());
    assert_eq!(first, std::fs::read(dir.path().join("counting.svg")).unwrap());

    let svg = String::from_utf8(first).unwrap();
    let line = svg.lines().find(|l| l.starts_with("<polyline class=\"series\"")).unwrap();
    let pts: Vec<(f64, f64)> = line
        .split("points=\"")
        .nth(1)
        .unwrap()
        .split('"')
        .next()
        .unwrap()
        .split(' ')
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            (x.parse().unwrap(), y.parse().unwrap())
        })
        .collect();
    assert!(pts.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 <= w[0].1));
}

#[test]
fn other_plot_kinds_render() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, file) in [("loglog", "loglog.svg"), ("weyl", "weyl.svg"), ("eigfun", "eigfun.svg")] {
        let mut args = hanoi("plot", "3");
        args.extend(["--kind".into(), kind.into(), "--index".into(), "2".into()]);
        run_ok(&args, dir.path());
        let svg = std::fs::read_to_string(dir.path().join(file)).unwrap();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
    let loglog = std::fs::read_to_string(dir.path().join("loglog.svg")).unwrap();
    assert!(loglog.contains("slope "));
}

#[test]
fn renormalized_column_is_thirteen_thirds() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = hanoi("qg-spectrum", "1");
    args.extend(["--lambda-max".into(), "12".into(), "--renormalize".into()]);
    run_ok(&args, dir.path());
    let rows = read_csv(&dir.path().join("qg_spectrum.csv"));
    assert!(rows.len() >= 4);
    for row in rows {
        let sq: f64 = row[1].parse().unwrap();
        let ren: f64 = row[2].parse().unwrap();
        assert!((ren - sq * 13.0 / 3.0).abs() <= 1e-10 * ren, "{ren} vs {sq}");
    }
}

#[test]
fn every_command_runs() {
    let dir = tempfile::tempdir().unwrap();
    let expect = [
        ("build", vec!["graph.json", "masses.csv", "build.json"]),
        ("analyze", vec!["analysis.json", "counting.csv", "weyl.csv", "dn.csv"]),
        ("resistance", vec!["resistance.json"]),
        ("export-eigfun", vec!["eigfun.csv", "eigfun.json"]),
    ];
    for (cmd, files) in expect {
        let out = dir.path().join(cmd);
        let m = run_ok(&hanoi(cmd, "3"), &out);
        assert_eq!(m["command"], cmd);
        for f in files {
            assert!(out.join(f).exists(), "{cmd} wrote {f}");
        }
    }
    let res: Value = serde_json::from_slice(&std::fs::read(dir.path().join("resistance/resistance.json")).unwrap()).unwrap();
    let series = res["series"]["truncated"].as_f64().unwrap();
    assert!((res["boundary_resistance"].as_f64().unwrap() - series).abs() < 1e-10);

    let an: Value = serde_json::from_slice(&std::fs::read(dir.path().join("analyze/analysis.json")).unwrap()).unwrap();
    assert_eq!(an["dim"], 96);
    assert!(an["dn_offspring"].as_u64().unwrap() > 0);

    let eig = read_csv(&dir.path().join("export-eigfun/eigfun.csv"));
    assert_eq!(eig.len(), 99);
}

#[test]
fn sg3_analyze_reports_regime() {
    let dir = tempfile::tempdir().unwrap();
    let args: Vec<String> = ["analyze", "--model", "sg3", "--level", "2", "--r", "1/12", "--a", "1/12", "--b", "1/13"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    run_ok(&args, dir.path());
    let an: Value = serde_json::from_slice(&std::fs::read(dir.path().join("analysis.json")).unwrap()).unwrap();
    assert_eq!(an["regime"]["regime"], "Sub");
    assert!(dir.path().join("supported_counting.csv").exists());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"model":"hanoi","level":6,"r":"1/6","a":"1/6","bc":"dirichlet"}"#).unwrap();
    let out = dir.path().join("o");
    let m = run_ok(
        &["build".into(), "--config".into(), cfg.to_string_lossy().into(), "--level".into(), "1".into()],
        &out,
    );
    assert_eq!(m["config"]["level"], 1);
    assert_eq!(m["config"]["a"], "1/6");
}

#[test]
fn config_errors_exit_2_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["spectrum", "--model", "hanoi", "--level", "1", "--r", "1/6"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_of(&o)["key"], ".a");

    let o = run(
        &["spectrum", "--model", "sg3", "--level", "1", "--r", "1/2", "--a", "1/12", "--b", "1/13"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_of(&o)["key"], ".r");

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"model":"hanoi","level":1,"r":"1/6","a":"1/6","colour":1}"#).unwrap();
    let o = run(&["build", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_of(&o)["key"], ".colour");

    let o = run(&["export-eigfun", "--model", "hanoi", "--level", "1", "--r", "1/6", "--a", "1/6", "--index", "99"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_of(&o)["key"], ".index");
}

#[test]
fn vertex_cap_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["build", "--model", "hanoi", "--level", "5", "--r", "1/6", "--a", "1/6", "--vertex-cap", "100"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(error_of(&o)["kind"], "resource");
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["build", "--model", "hanoi", "--level", "1", "--r", "1/6", "--a", "1/6", "--out"])
        .arg(dir.path())
        .env("FRACTAL_SPECTRA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_of(&o)["key"], "FRACTAL_SPECTRA_THREADS");
}
