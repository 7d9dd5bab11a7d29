use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn epimob(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epimob")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn config(dir: &Path, seed: u64, extra: &str) -> PathBuf {
    let path = dir.join("cfg.toml");
    let text = format!(
        "seed = {seed}\nout = {:?}\n[rt]\niterations = 1500\nburn_in = 500\n[fda]\nwindow_start = \"2020-02-01\"\n{extra}",
        dir.join("out")
    );
    fs::write(&path, text).unwrap();
    path
}

fn full_run(seed: u64) -> TempDir {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), seed, "");
    let o = epimob(&["--config", cfg.to_str().unwrap(), "run"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir
}

fn files(root: &Path, ext: &str) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == ext) {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn table(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn help_succeeds_and_bad_usage_fails() {
    assert_eq!(code(&epimob(&["--help"])), 0);
    assert_eq!(code(&epimob(&["--version"])), 0);
    let o = epimob(&["frobnicate"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn missing_inputs_exit_two() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nowhere");
    let o = epimob(&["rt", "--cases", missing.to_str().unwrap(), "--out", dir.path().join("rt").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = epimob(&["rt", "--cases", empty.to_str().unwrap(), "--out", dir.path().join("rt").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&epimob(&["--config", missing.to_str().unwrap(), "report"])), 2);
}

#[test]
fn out_of_range_parameters_exit_three() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 1, "");
    assert_eq!(code(&epimob(&["--config", cfg.to_str().unwrap(), "rt", "--shape=-1"])), 3);
    let cfg = config(dir.path(), 1, "[fof]\nlevel = 1.5\n");
    assert_eq!(code(&epimob(&["--config", cfg.to_str().unwrap(), "run"])), 3);
}

#[test]
fn simulate_then_estimate() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), 3, "[simulate]\nn_units = 4\ndays = 120\n");
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&epimob(&["--config", cfg, "simulate"])), 0);
    let out = dir.path().join("out");
    assert_eq!(files(&out.join("cases"), "csv").len(), 4);
    assert_eq!(files(&out.join("mobility"), "csv").len(), 4);
    let o = epimob(&["--config", cfg, "rt"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rt = table(&out.join("rt/unit01.csv"));
    let truth = table(&out.join("truth/unit01.csv"));
    assert_eq!(rt.len(), truth.len());
    let estimated = rt.iter().filter(|row| !row[1].is_empty()).count();
    assert!(estimated > 100, "{estimated}");
}

#[test]
fn full_run_bundle() {
    let dir = full_run(11);
    let out = dir.path().join("out");
    let units = files(&out.join("report/units"), "svg").len();
    assert_eq!(units, 20);
    assert_eq!(files(&out.join("report/units"), "csv").len(), 20);
    for name in ["beta_surface", "lag_slice", "delay_incidence"] {
        assert!(out.join(format!("report/{name}.svg")).exists());
        assert!(out.join(format!("report/{name}.csv")).exists());
    }
    let svg = fs::read_to_string(out.join("report/lag_slice.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));

    // Chart data equal the stage outputs they were drawn from.
    let slice = table(&out.join("fof/slice.csv"));
    let plotted = table(&out.join("report/lag_slice.csv"));
    assert_eq!(slice.len(), plotted.len());
    for (a, b) in slice.iter().zip(&plotted) {
        for k in 0..4 {
            let (x, y): (f64, f64) = (a[k].parse().unwrap(), b[k].parse().unwrap());
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
    let delays = table(&out.join("delay/delay.csv"));
    let scatter = table(&out.join("report/delay_incidence.csv"));
    for row in &scatter {
        let src = delays.iter().find(|d| d[0] == row[0]).unwrap();
        assert_eq!(src[3], row[1]);
        let (x, y): (f64, f64) = (src[4].parse().unwrap(), row[2].parse().unwrap());
        assert!((x - y).abs() <= 1e-12 * x.abs());
    }

    // The constructed lag shows up as a positive stretch early in the window.
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("fof/summary.json")).unwrap()).unwrap();
    let hi = summary["domain"][1].as_f64().unwrap();
    let early = summary["significant_intervals"]
        .as_array()
        .unwrap()
        .iter()
        .any(|iv| iv[2].as_i64() == Some(1) && iv[0].as_f64().unwrap() < hi / 3.0);
    assert!(early, "{}", summary["significant_intervals"]);
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (full_run(5), full_run(5));
    let (fa, fb) = (files(&a.path().join("out"), "csv"), files(&b.path().join("out"), "csv"));
    assert!(fa.len() > 100);
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{} differs", k.display());
    }
    let c = full_run(6);
    assert_ne!(fa, files(&c.path().join("out"), "csv"));
}
