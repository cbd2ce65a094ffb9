use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eyelab::report::{
    ADJUSTED_HEADER, DERIVED_HEADER, EVAL_HEADER, LABEL_HEADER, PPV_HEADER, SKIP_HEADER, SUBGROUP_HEADER,
};

fn eyelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eyelab"))
        .args(args)
        .env("EYELAB_LOG", "error")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(str::to_string).collect()
}

fn synth(dir: &Path, n: usize) -> PathBuf {
    let out = dir.join("cohort");
    let o = eyelab(&["synth", "--seed", "3", "--n-patients", &n.to_string(), "--out-dir", &s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = eyelab(&["evaluate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_target_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cohort = synth(tmp.path(), 300);
    let o = eyelab(&["evaluate", "--input", &s(&cohort), "--targets", "Unobtainium>1.0", "--out-dir", &s(&tmp.path().join("e"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_input_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = eyelab(&["derive", "--input", &s(&tmp.path().join("nope")), "--out-dir", &s(&tmp.path().join("d"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let o = eyelab(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["ingest", "derive", "fit-baseline", "evaluate", "ppv", "subgroup", "sensitivity", "adjust", "ablate", "downres", "synth", "report"] {
        assert!(text.contains(cmd), "help lacks {cmd}");
    }
}

#[test]
fn single_class_target_exits_three_with_skip_record() {
    let tmp = tempfile::tempdir().unwrap();
    let cohort = synth(tmp.path(), 300);
    // Flatten hemoglobin so no visit can be positive for Hgb<11.0.
    let path = cohort.join("measurements.csv");
    let mut r = csv::Reader::from_path(&path).unwrap();
    let head = r.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    let mut w = csv::Writer::from_path(&path).unwrap();
    w.write_record(&head).unwrap();
    for row in rows {
        if &row[1] == "Hgb" {
            w.write_record([&row[0], "Hgb", "14.0", &row[3]]).unwrap();
        } else {
            w.write_record(&row).unwrap();
        }
    }
    w.flush().unwrap();

    let out = tmp.path().join("eval");
    let o = eyelab(&["evaluate", "--input", &s(&cohort), "--targets", "Hgb<11.0", "--dataset-slice", "ValA", "--replicates", "100", "--out-dir", &s(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("skipped.csv")), SKIP_HEADER);
    let mut r = csv::Reader::from_path(out.join("skipped.csv")).unwrap();
    let rec = r.records().next().unwrap().unwrap();
    assert_eq!(&rec[0], "Hgb<11.0");
    assert_eq!(&rec[1], "insufficient cases");
    assert_eq!(&rec[2], "0");
    assert!(out.join("run_manifest.json").exists());
}

#[test]
fn pipeline_outputs_follow_their_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let cohort = synth(tmp.path(), 1500);
    let c = s(&cohort);
    let d = |n: &str| s(&tmp.path().join(n));

    assert_eq!(eyelab(&["derive", "--input", &c, "--out-dir", &d("derive")]).status.code(), Some(0));
    assert_eq!(header(&tmp.path().join("derive/derived.csv")), DERIVED_HEADER);
    assert_eq!(header(&tmp.path().join("derive/labels.csv")), LABEL_HEADER);

    let common = ["--input", c.as_str(), "--dataset-slice", "ValA", "--replicates", "100", "--targets", "eGFR<60.0,ACR>=300.0"];
    for (cmd, file, want) in [
        ("evaluate", "evaluation.csv", EVAL_HEADER),
        ("ppv", "ppv.csv", PPV_HEADER),
        ("subgroup", "subgroups.csv", SUBGROUP_HEADER),
        ("adjust", "adjusted.csv", ADJUSTED_HEADER),
    ] {
        let out = d(cmd);
        let mut args = vec![cmd];
        args.extend_from_slice(&common);
        args.extend_from_slice(&["--out-dir", &out]);
        let o = eyelab(&args);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(header(&tmp.path().join(cmd).join(file)), want, "{cmd}");
    }

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("evaluate/run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "evaluate");
    assert_eq!(manifest["rng"], eyelab::rng::GENERATOR_NAME);
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|f| f["path"] == "evaluation.csv"));
    assert!(!manifest["inputs"].as_array().unwrap().is_empty());
}

#[test]
fn markdown_output_names_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cohort = synth(tmp.path(), 1500);
    let out = tmp.path().join("md");
    let o = eyelab(&["evaluate", "--input", &s(&cohort), "--dataset-slice", "ValA", "--replicates", "100", "--targets", "eGFR<60.0", "--format", "md", "--out-dir", &s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let md = fs::read_to_string(out.join("evaluation.md")).unwrap();
    assert!(md.lines().next().unwrap().starts_with("| Prediction"));
    assert!(md.contains("run_manifest.json"));
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "seed = 11\n\n[synth]\nn_patients = 250\n").unwrap();
    let a = tmp.path().join("a");
    let o = eyelab(&["synth", "--config", &s(&cfg), "--out-dir", &s(&a)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv::Reader::from_path(a.join("patients.csv")).unwrap().records().count();
    assert_eq!(rows, 250);
    let m: serde_json::Value = serde_json::from_slice(&fs::read(a.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 11);
    assert!(m["config_sha256"].is_string());

    let b = tmp.path().join("b");
    let o = eyelab(&["synth", "--config", &s(&cfg), "--seed", "12", "--n-patients", "260", "--out-dir", &s(&b)]);
    assert_eq!(o.status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(b.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 12);
    assert_eq!(csv::Reader::from_path(b.join("patients.csv")).unwrap().records().count(), 260);

    fs::write(&cfg, "sed = 11\n").unwrap();
    let o = eyelab(&["synth", "--config", &s(&cfg), "--out-dir", &s(&tmp.path().join("c"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ablate_and_downres_write_images() {
    let tmp = tempfile::tempdir().unwrap();
    let images = tmp.path().join("images");
    fs::create_dir_all(&images).unwrap();
    let img = image::RgbImage::from_fn(64, 64, |x, y| image::Rgb([(x * 4) as u8, (y * 4) as u8, 90]));
    img.save(images.join("e1.png")).unwrap();
    fs::write(images.join("annotations.csv"), "image_id,pupil_cx,pupil_cy,pupil_w,pupil_h,iris_cx,iris_cy,iris_w,iris_h\ne1,32,32,10,10,32,32,30,30\n").unwrap();

    let out = tmp.path().join("abl");
    let o = eyelab(&["ablate", "--images", &s(&images), "--out-dir", &s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let pupil = image::open(out.join("no-pupil/e1.png")).unwrap().to_rgb8();
    assert_eq!(pupil.get_pixel(32, 32).0, [0, 0, 0]);
    assert_eq!(pupil.get_pixel(0, 0).0, [0, 0, 90]);
    let only = image::open(out.join("only-iris/e1.png")).unwrap().to_rgb8();
    assert_eq!(only.get_pixel(32, 32).0, [0, 0, 0]);
    assert_ne!(only.get_pixel(32, 44).0, [0, 0, 0]);
    assert!(out.join("ablation_index.csv").exists());

    let out = tmp.path().join("down");
    let o = eyelab(&["downres", "--images", &s(&images), "--sizes", "16,8", "--out-dir", &s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d = image::open(out.join("16/e1.png")).unwrap().to_rgb8();
    assert_eq!(d.dimensions(), (587, 587));
}
