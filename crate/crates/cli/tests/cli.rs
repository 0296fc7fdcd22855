use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn gformula(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gformula"))
        .args(args)
        .env_remove("GFORMULA_WORKERS")
        .output()
        .expect("binary runs")
}

/// Copies a fixture config into `dir` with edits applied, pointing at the fixture data.
fn config(dir: &Path, name: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(fixture(name)).unwrap();
    let data = if name.starts_with("eof") { "eof.csv" } else { "survival.csv" };
    let text = text.replace(&format!("path = \"{data}\""), &format!("path = {:?}", fixture(data)));
    let path = dir.join(name);
    fs::write(&path, edit(text)).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_to(dir: &Path, cfg: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", cfg.to_str().unwrap(), "--output-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    gformula(&args)
}

#[test]
fn validate_accepts_fixture_with_warning() {
    let o = gformula(&["validate", fixture("survival.toml").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: nsimul"));
}

#[test]
fn validate_reports_unresolved_reference() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "survival.toml", |t| t.replace("Y ~ L + A + lag1_A + t", "Y ~ L + lag1_Z"));
    let o = gformula(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("error: ymodel") && err.contains("lag1_Z"), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "survival.toml", |t| format!("colour = 3\n{t}"));
    let o = gformula(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));
}

#[test]
fn run_writes_artifacts_matching_stdout() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = config(tmp.path(), "survival.toml", |t| t);
    let o = run_to(&out, &cfg, &["--workers", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("results.txt")).unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), text);
    assert!(text.contains("k Interv.   NP risk g-form risk Risk ratio Risk difference"));

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(json["metadata"]["n_subjects"], 300);
    assert_eq!(json["interventions"].as_array().unwrap().len(), 3);
    // The text table is a rendering of the same numbers.
    for row in json["results"].as_array().unwrap().iter().filter(|r| r["k"] == 3) {
        let est = format!("{:.7}", row["estimate"].as_f64().unwrap());
        let line = text
            .lines()
            .find(|l| l.split_whitespace().take(2).eq(["3".to_string(), row["intervention"].to_string()].iter().map(|s| s.as_str())))
            .unwrap();
        assert!(line.contains(&est), "{line} lacks {est}");
    }

    let plot = fs::read_to_string(out.join("natural_course_plotdata.csv")).unwrap();
    assert!(plot.starts_with("k,quantity,nonparametric,parametric\n"));
    for k in 0..4 {
        assert_eq!(plot.lines().filter(|l| l.starts_with(&format!("{k},risk,"))).count(), 1);
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "survival.toml", |t| t.replace("nsimul = 2000", "nsimul = 1000\nnsamples = 4"));
    let mut docs = Vec::new();
    for w in ["1", "3"] {
        let out = tmp.path().join(format!("w{w}"));
        let o = run_to(&out, &cfg, &["--workers", w]);
        assert!(o.status.success(), "{}", stderr(&o));
        docs.push(fs::read(out.join("results.json")).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
}

#[test]
fn malformed_workers_env_var_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "survival.toml", |t| t.replace("nsimul = 2000", "nsimul = 500"));
    let o = Command::new(env!("CARGO_BIN_EXE_gformula"))
        .args(["run", cfg.to_str().unwrap(), "--output-dir", tmp.path().join("o").to_str().unwrap()])
        .env("GFORMULA_WORKERS", "0x")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--workers"), "{}", stderr(&o));
}

#[test]
fn seed_flag_changes_estimates() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "survival.toml", |t| t);
    let a = run_to(&tmp.path().join("a"), &cfg, &["--seed", "1"]);
    let b = run_to(&tmp.path().join("b"), &cfg, &["--seed", "2"]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn rmses_section_lists_every_model() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "survival.toml", |t| t);
    let o = run_to(tmp.path(), &cfg, &["--rmses"]);
    let text = String::from_utf8(o.stdout).unwrap();
    let section = text.split(" RMSE Values").nth(1).expect("RMSE section");
    for model in ["L", "A", "Y", "D"] {
        assert!(section.lines().any(|l| l.split_whitespace().next() == Some(model)), "{model} missing");
    }
}

#[test]
fn eof_bootstrap_table_has_interval_columns() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "eof.toml", |t| t);
    let o = run_to(tmp.path(), &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for col in ["NP mean", "g-form mean", "Mean SE", "Mean lower 95% CI", "Mean upper 95% CI", "Mean difference"] {
        assert!(text.contains(col), "missing {col}");
    }
    assert!(text.contains("Number of bootstrap samples = 20"));
}

#[test]
fn sim_data_with_bootstrap_is_refused() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "eof.toml", |t| t);
    let o = run_to(tmp.path(), &cfg, &["--emit-sim-data"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("keep_sim_data"));
    assert!(!tmp.path().join("results.json").exists());
}

#[test]
fn sim_data_is_written_per_intervention() {
    let tmp = TempDir::new().unwrap();
    let cfg = config(tmp.path(), "survival.toml", |t| t.replace("nsimul = 2000", "nsimul = 200"));
    let o = run_to(tmp.path(), &cfg, &["--emit-sim-data"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sims: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("simdata."))
        .collect();
    assert_eq!(sims.len(), 3, "{sims:?}");
    let never = sims.iter().find(|n| n.contains("never")).unwrap();
    let body = fs::read_to_string(tmp.path().join(never)).unwrap();
    let header: Vec<&str> = body.lines().next().unwrap().split(',').collect();
    let a = header.iter().position(|h| *h == "A").unwrap();
    assert_eq!(body.lines().count(), 1 + 200 * 4);
    assert!(body.lines().skip(1).all(|l| l.split(',').nth(a) == Some("0")));
}

#[test]
fn runtime_errors_name_the_stage() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("bad.csv");
    fs::write(&csv, "id,t,L,A,Y,D\n1,0,0,0,0,0\n1,0,1,0,0,0\n").unwrap();
    let cfg = config(tmp.path(), "survival.toml", |t| t.replace(&format!("{:?}", fixture("survival.csv")), &format!("{csv:?}")));
    let o = run_to(&tmp.path().join("o"), &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("panel data"), "{}", stderr(&o));
}
