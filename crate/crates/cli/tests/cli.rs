use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn coalmap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coalmap"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run coalmap")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = coalmap(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn quadrants(dir: &Path, name: &str, classes: [&str; 4]) {
    let regions: Vec<Value> = [(0, 0), (32, 0), (0, 32), (32, 32)]
        .iter()
        .zip(classes)
        .map(|(&(x, y), c)| serde_json::json!({"x": x, "y": y, "width": 32, "height": 32, "class": c}))
        .collect();
    let layout = serde_json::json!({"width": 64, "height": 64, "rng_seed": 1, "regions": regions});
    fs::write(dir.join(name), layout.to_string()).unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn all_water_scene_classifies_to_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("water.json"),
        r#"{"width": 16, "height": 12, "regions": [{"x":0,"y":0,"width":16,"height":12,"class":"water"}]}"#,
    )
    .unwrap();
    ok(
        d,
        &[
            "synth",
            "--layout",
            "water.json",
            "--seed",
            "7",
            "--out",
            "scene.tif",
            "--truth",
            "truth.tif",
        ],
    );
    ok(
        d,
        &[
            "classify",
            "-i",
            "scene.tif",
            "--index",
            "acmi",
            "-o",
            "mask.tif",
            "--emit-index",
            "acmi.tif",
            "--report",
            "r.json",
        ],
    );
    let r = read_json(&d.join("r.json"));
    assert_eq!(r["counts"]["ec"], 0);
    assert_eq!(r["counts"]["non_ec"], 16 * 12);
    assert_eq!(r["counts"]["nodata"], 0);
    assert_eq!(r["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(d.join("acmi.tif").exists());
}

#[test]
fn compare_reproduces_bci_failure_on_swapped_swir() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    quadrants(
        d,
        "swapped.json",
        ["ec_swapped_swir", "dark_soil", "water", "vegetation"],
    );
    ok(
        d,
        &[
            "synth",
            "--layout",
            "swapped.json",
            "--out",
            "scene.tif",
            "--truth",
            "truth.tif",
        ],
    );
    ok(
        d,
        &[
            "compare",
            "-i",
            "scene.tif",
            "--truth-raster",
            "truth.tif",
            "--seed",
            "42",
            "--out-dir",
            "cmp",
        ],
    );
    for f in [
        "acmi_mask.tif",
        "bci_mask.tif",
        "agreement.tif",
        "report.json",
        "report.csv",
        "samples.csv",
    ] {
        assert!(d.join("cmp").join(f).exists(), "{f}");
    }
    let r = read_json(&d.join("cmp/report.json"));
    let reports = r["reports"].as_array().unwrap();
    let (acmi, bci) = (&reports[0], &reports[1]);
    assert_eq!(acmi["method"], "acmi");
    assert_eq!(bci["pa"].as_f64().unwrap(), 0.0);
    assert!(bci["ua"].is_null());
    assert!(acmi["pa"].as_f64().unwrap() > 0.0);
    // identical post-processing for both methods
    assert_eq!(
        r["config"]["acmi"]["median_filter"],
        r["config"]["bci"]["median_filter"]
    );
    let csv = fs::read_to_string(d.join("cmp/report.csv")).unwrap();
    assert!(csv
        .lines()
        .nth(2)
        .unwrap()
        .starts_with("bci,0,0,300,450,-,0.00,"));
}

#[test]
fn assess_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    quadrants(d, "l.json", ["ec", "dark_soil", "water", "vegetation"]);
    ok(
        d,
        &[
            "synth",
            "--layout",
            "l.json",
            "--out",
            "scene.tif",
            "--truth",
            "truth.tif",
        ],
    );
    ok(d, &["classify", "-i", "scene.tif", "-o", "mask.tif"]);
    fs::write(
        d.join("ec.json"),
        r#"{"coordinate_space": "pixel", "polygons": [[[0,0],[32,0],[32,32],[0,32],[0,0]]]}"#,
    )
    .unwrap();
    let run = |tag: &str| {
        let (j, c, s) = (
            format!("{tag}.json"),
            format!("{tag}.csv"),
            format!("{tag}_samples.csv"),
        );
        ok(
            d,
            &[
                "assess",
                "--mask",
                "mask.tif",
                "--truth",
                "ec.json",
                "--seed",
                "42",
                "--out-json",
                &j,
                "--out-csv",
                &c,
                "--samples-out",
                &s,
            ],
        );
        (
            fs::read(d.join(j)).unwrap(),
            fs::read(d.join(c)).unwrap(),
            fs::read(d.join(s)).unwrap(),
        )
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let r: Value = serde_json::from_slice(&a.0).unwrap();
    assert_eq!(r["config"]["n_ec"], 300);
    assert_eq!(r["config"]["n_bg"], 450);
    assert!(r["report"]["f1"].as_f64().unwrap() > 0.9);

    // a different seed draws a different sample
    ok(
        d,
        &[
            "assess",
            "--mask",
            "mask.tif",
            "--truth",
            "ec.json",
            "--seed",
            "43",
            "--samples-out",
            "c.csv",
            "--out-csv",
            "c_r.csv",
        ],
    );
    assert_ne!(fs::read(d.join("c.csv")).unwrap(), a.2);
}

#[test]
fn synth_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    quadrants(d, "l.json", ["ec", "bright_soil", "red_bus", "dark_bus"]);
    ok(
        d,
        &[
            "synth", "--layout", "l.json", "--seed", "9", "--out", "a.tif", "--truth", "ta.tif",
        ],
    );
    ok(
        d,
        &[
            "synth", "--layout", "l.json", "--seed", "9", "--out", "b.tif", "--truth", "tb.tif",
        ],
    );
    assert_eq!(
        fs::read(d.join("a.tif")).unwrap(),
        fs::read(d.join("b.tif")).unwrap()
    );
    ok(
        d,
        &[
            "synth", "--layout", "l.json", "--seed", "10", "--out", "c.tif", "--truth", "tc.tif",
        ],
    );
    assert_ne!(
        fs::read(d.join("a.tif")).unwrap(),
        fs::read(d.join("c.tif")).unwrap()
    );
}

#[test]
fn stats_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut csv = String::from("class,blue,green,red,nir,swir1,swir2\n");
    for i in 0..20 {
        let e = f64::from(i) * 1e-3;
        csv.push_str(&format!(
            "coal,{},{},{},{},{},{}\n",
            0.04 + e,
            0.045 + e * 0.7,
            0.05 + e * 0.3,
            0.055 + e * 0.9,
            0.065 + e * 0.2,
            0.07 + e * 0.5
        ));
        csv.push_str(&format!(
            "veg,{},{},{},{},{},{}\n",
            0.03 + e * 0.4,
            0.06 + e,
            0.04 + e * 0.2,
            0.35 + e * 0.8,
            0.18 + e * 0.6,
            0.09 + e * 0.1
        ));
    }
    fs::write(d.join("s.csv"), csv).unwrap();
    ok(d, &["stats", "--samples", "s.csv", "--out-dir", "st"]);
    let pct = fs::read_to_string(d.join("st/percentiles.csv")).unwrap();
    assert_eq!(pct.lines().count(), 1 + 2 * 6);
    assert!(pct.lines().nth(1).unwrap().starts_with("coal,blue,20,"));
    let jm = fs::read_to_string(d.join("st/jm.csv")).unwrap();
    let rows: Vec<Vec<&str>> = jm.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["class", "coal", "veg"]);
    assert_eq!(rows[1][1], "0.000000");
    assert_eq!(rows[1][2], rows[2][1]);
    let v: f64 = rows[1][2].parse().unwrap();
    assert!(v > 1.9 && v <= 2.0);
    let json = read_json(&d.join("st/stats.json"));
    assert_eq!(json["classes"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes_and_cleanup() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = coalmap(d, &["classify", "-i", "missing.tif", "-o", "m.tif"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error code=3 kind=io: "), "{err}");

    let out = coalmap(
        d,
        &[
            "classify",
            "-i",
            "x.tif",
            "-o",
            "m.tif",
            "--index",
            "bci",
            "--emit-index",
            "i.tif",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = coalmap(
        d,
        &["classify", "-i", "x.tif", "-o", "m.tif", "--qa-bits", "3,4"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);
    fs::write(d.join("bad.json"), r#"{"unknown_key": 1}"#).unwrap();
    let out = coalmap(
        d,
        &[
            "--config", "bad.json", "classify", "-i", "x.tif", "-o", "m.tif",
        ],
    );
    assert_eq!(out.status.code(), Some(2));

    // more EC samples than EC pixels: data error after masks were written; all removed
    quadrants(d, "l.json", ["ec", "dark_soil", "water", "vegetation"]);
    ok(
        d,
        &[
            "synth",
            "--layout",
            "l.json",
            "--out",
            "scene.tif",
            "--truth",
            "truth.tif",
        ],
    );
    let out = coalmap(
        d,
        &[
            "compare",
            "-i",
            "scene.tif",
            "--truth-raster",
            "truth.tif",
            "--n-ec",
            "5000",
            "--out-dir",
            "cmp",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!d.join("cmp").exists());

    let out = coalmap(d, &["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn config_file_and_qa_band() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    quadrants(d, "l.json", ["ec", "ec", "ec", "ec"]);
    ok(
        d,
        &[
            "synth",
            "--layout",
            "l.json",
            "--out",
            "scene.tif",
            "--truth",
            "truth.tif",
        ],
    );
    fs::write(
        d.join("cfg.json"),
        r#"{"pipeline": {"median_filter": false}}"#,
    )
    .unwrap();
    // the all-EC truth raster holds 1 everywhere, so a QA bit list containing bit 0
    // flags every pixel
    ok(
        d,
        &[
            "--config",
            "cfg.json",
            "classify",
            "-i",
            "scene.tif",
            "-o",
            "m.tif",
            "--qa",
            "truth.tif",
            "--qa-bits",
            "0,4",
            "--report",
            "r.json",
        ],
    );
    let r = read_json(&d.join("r.json"));
    assert_eq!(r["counts"]["nodata"], 64 * 64);
    assert_eq!(r["config"]["pipeline"]["median_filter"], false);
    assert_eq!(r["inputs"].as_array().unwrap().len(), 2);
}
