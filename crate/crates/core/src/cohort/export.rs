use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::ingest::{ANNOTATIONS_FILE, MEASUREMENTS_FILE, PATIENTS_FILE, SCORES_FILE, VISITS_FILE};
use super::Cohort;
use crate::error::{Error, Result};

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the cohort in the ingestion schemas, sorted by key. Annotations
/// are written only when at least one image carries one.
pub fn write_cohort(cohort: &Cohort, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join(PATIENTS_FILE);
    let mut w = writer(&path)?;
    w.write_record(["patient_id", "sex", "race_ethnicity", "age", "years_with_diabetes", "diabetic", "dataset_id"])?;
    for p in cohort.patients() {
        w.write_record([
            p.patient_id.as_str(),
            p.sex.as_str(),
            p.race_ethnicity.as_str(),
            &opt_f64(p.age),
            &opt_f64(p.years_with_diabetes),
            opt_bool(p.diabetic),
            p.dataset_id.as_str(),
        ])?;
    }
    finish(w, &path)?;
    written.push(path);

    let path = dir.join(VISITS_FILE);
    let mut w = writer(&path)?;
    w.write_record(["visit_id", "patient_id", "visit_date", "cataract", "iol"])?;
    for v in cohort.visits() {
        w.write_record([
            v.visit_id.as_str(),
            v.patient_id.as_str(),
            &v.visit_date.format("%Y-%m-%d").to_string(),
            opt_bool(v.cataract_present),
            opt_bool(v.intraocular_lens),
        ])?;
    }
    finish(w, &path)?;
    written.push(path);

    let path = dir.join(MEASUREMENTS_FILE);
    let mut w = writer(&path)?;
    w.write_record(["patient_id", "analyte", "value", "measured_date"])?;
    for m in cohort.measurements() {
        w.write_record([
            m.patient_id.as_str(),
            m.analyte.name(),
            &m.value.to_string(),
            &m.measured_date.format("%Y-%m-%d").to_string(),
        ])?;
    }
    finish(w, &path)?;
    written.push(path);

    let path = dir.join(SCORES_FILE);
    let mut w = writer(&path)?;
    w.write_record(["image_id", "visit_id", "patient_id", "eye", "model_member", "target_name", "score"])?;
    for s in cohort.scores() {
        w.write_record([
            s.image_id.as_str(),
            s.visit_id.as_str(),
            s.patient_id.as_str(),
            s.eye.as_str(),
            s.model_member.as_str(),
            s.target_name.as_str(),
            &s.score.to_string(),
        ])?;
    }
    finish(w, &path)?;
    written.push(path);

    let annotated: Vec<_> = cohort
        .visits()
        .flat_map(|v| v.images.iter())
        .filter_map(|im| im.annotation.map(|a| (im.image_id.as_str(), a)))
        .collect();
    if !annotated.is_empty() {
        let path = dir.join(ANNOTATIONS_FILE);
        let mut w = writer(&path)?;
        w.write_record([
            "image_id", "pupil_cx", "pupil_cy", "pupil_w", "pupil_h", "iris_cx", "iris_cy", "iris_w", "iris_h",
        ])?;
        for (id, a) in annotated {
            let nums = [
                a.pupil.cx, a.pupil.cy, a.pupil.width, a.pupil.height, a.iris.cx, a.iris.cy, a.iris.width,
                a.iris.height,
            ];
            let mut rec = vec![id.to_string()];
            rec.extend(nums.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        finish(w, &path)?;
        written.push(path);
    }
    Ok(written)
}
