use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::{
    validate_patient, Analyte, Cohort, DatasetId, Eye, Measurement, Patient, RaceEthnicity,
    ScoreRecord, Sex, Visit,
};
use crate::ablation::{Ellipse, EllipseAnnotation};
use crate::error::{Error, Result};

pub const PATIENTS_FILE: &str = "patients.csv";
pub const VISITS_FILE: &str = "visits.csv";
pub const MEASUREMENTS_FILE: &str = "measurements.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";

/// Locations of the tabular inputs.
#[derive(Debug, Clone)]
pub struct CohortFiles {
    pub patients: PathBuf,
    pub visits: PathBuf,
    pub measurements: PathBuf,
    pub scores: PathBuf,
    pub annotations: Option<PathBuf>,
}

impl CohortFiles {
    /// Standard file names inside `dir`; annotations are picked up when present.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let ann = dir.join(ANNOTATIONS_FILE);
        CohortFiles {
            patients: dir.join(PATIENTS_FILE),
            visits: dir.join(VISITS_FILE),
            measurements: dir.join(MEASUREMENTS_FILE),
            scores: dir.join(SCORES_FILE),
            annotations: ann.exists().then_some(ann),
        }
    }

    pub fn all_paths(&self) -> Vec<&Path> {
        let mut v = vec![
            self.patients.as_path(),
            self.visits.as_path(),
            self.measurements.as_path(),
            self.scores.as_path(),
        ];
        if let Some(a) = &self.annotations {
            v.push(a);
        }
        v
    }
}

/// Header-indexed CSV rows with file/line context for errors.
struct Table {
    file: String,
    columns: BTreeMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path, required: &[&str]) -> Result<Table> {
        let file = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => Error::Parse {
                    file: file.clone(),
                    line: 1,
                    message: format!("{other:?}"),
                },
            })?;
        let headers = rdr.headers()?.clone();
        let columns: BTreeMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        for col in required {
            if !columns.contains_key(*col) {
                return Err(Error::Parse {
                    file,
                    line: 1,
                    message: format!("missing column `{col}`"),
                });
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::Parse {
                    file: file.clone(),
                    line,
                    message: e.to_string(),
                }
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, rec));
        }
        Ok(Table { file, columns, rows })
    }

    fn field<'r>(&self, rec: &'r csv::StringRecord, col: &str) -> Option<&'r str> {
        self.columns
            .get(col)
            .and_then(|&i| rec.get(i))
            .filter(|s| !s.is_empty())
    }

    fn err(&self, line: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line,
            message: message.into(),
        }
    }

    fn required<'r>(&self, line: u64, rec: &'r csv::StringRecord, col: &str) -> Result<&'r str> {
        self.field(rec, col)
            .ok_or_else(|| self.err(line, format!("empty `{col}`")))
    }

    fn parse<T: std::str::FromStr>(&self, line: u64, col: &str, s: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        s.parse::<T>()
            .map_err(|e| self.err(line, format!("bad `{col}` value `{s}`: {e}")))
    }

    fn opt_f64(&self, line: u64, rec: &csv::StringRecord, col: &str) -> Result<Option<f64>> {
        self.field(rec, col)
            .map(|s| self.parse::<f64>(line, col, s))
            .transpose()
    }

    fn opt_bool(&self, line: u64, rec: &csv::StringRecord, col: &str) -> Result<Option<bool>> {
        self.field(rec, col)
            .map(|s| parse_bool(s).ok_or_else(|| self.err(line, format!("bad `{col}` value `{s}`"))))
            .transpose()
    }

    fn date(&self, line: u64, rec: &csv::StringRecord, col: &str) -> Result<NaiveDate> {
        let s = self.required(line, rec, col)?;
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|e| self.err(line, format!("bad date `{s}`: {e}")))
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "y" => Some(true),
        "false" | "0" | "no" | "n" => Some(false),
        _ => None,
    }
}

/// Reads, validates and cross-links the cohort files.
pub fn ingest_cohort(files: &CohortFiles) -> Result<Cohort> {
    let mut cohort = Cohort::default();

    let t = Table::read(
        &files.patients,
        &["patient_id", "sex", "race_ethnicity", "age", "years_with_diabetes", "diabetic", "dataset_id"],
    )?;
    for (line, rec) in &t.rows {
        let line = *line;
        let patient_id = t.required(line, rec, "patient_id")?.to_string();
        let sex = t.parse::<Sex>(line, "sex", t.field(rec, "sex").unwrap_or(""))?;
        let race_ethnicity =
            t.parse::<RaceEthnicity>(line, "race_ethnicity", t.field(rec, "race_ethnicity").unwrap_or(""))?;
        let dataset_id = t.parse::<DatasetId>(line, "dataset_id", t.required(line, rec, "dataset_id")?)?;
        let p = Patient {
            patient_id: patient_id.clone(),
            sex,
            race_ethnicity,
            age: t.opt_f64(line, rec, "age")?,
            years_with_diabetes: t.opt_f64(line, rec, "years_with_diabetes")?,
            diabetic: t.opt_bool(line, rec, "diabetic")?,
            dataset_id,
        };
        validate_patient(&p).map_err(|e| t.err(line, e.to_string()))?;
        if cohort.patients.contains_key(&patient_id) {
            return Err(Error::DuplicateKey {
                file: t.file.clone(),
                line,
                key: patient_id,
            });
        }
        cohort.patients.insert(patient_id, p);
    }

    let t = Table::read(&files.visits, &["visit_id", "patient_id", "visit_date", "cataract", "iol"])?;
    for (line, rec) in &t.rows {
        let line = *line;
        let visit_id = t.required(line, rec, "visit_id")?.to_string();
        let patient_id = t.required(line, rec, "patient_id")?.to_string();
        if !cohort.patients.contains_key(&patient_id) {
            return Err(Error::UnknownReference {
                file: t.file.clone(),
                line,
                kind: "patient",
                id: patient_id,
            });
        }
        let v = Visit {
            visit_id: visit_id.clone(),
            patient_id,
            visit_date: t.date(line, rec, "visit_date")?,
            images: Vec::new(),
            cataract_present: t.opt_bool(line, rec, "cataract")?,
            intraocular_lens: t.opt_bool(line, rec, "iol")?,
        };
        if cohort.visits.contains_key(&visit_id) {
            return Err(Error::DuplicateKey {
                file: t.file.clone(),
                line,
                key: visit_id,
            });
        }
        cohort.visits.insert(visit_id, v);
    }

    let t = Table::read(&files.measurements, &["patient_id", "analyte", "value", "measured_date"])?;
    for (line, rec) in &t.rows {
        let line = *line;
        let patient_id = t.required(line, rec, "patient_id")?.to_string();
        let name = t.required(line, rec, "analyte")?;
        let analyte = name.parse::<Analyte>().map_err(|_| Error::UnknownAnalyte {
            file: t.file.clone(),
            line,
            name: name.to_string(),
            valid: Analyte::valid_names(),
        })?;
        if let Some(unit) = t.field(rec, "unit") {
            if !analyte.unit_matches(unit) {
                return Err(t.err(
                    line,
                    format!("{analyte} must be reported in {}, got `{unit}`", analyte.unit()),
                ));
            }
        }
        let value: f64 = t.parse(line, "value", t.required(line, rec, "value")?)?;
        if !value.is_finite() {
            return Err(t.err(line, "non-finite value"));
        }
        if !cohort.patients.contains_key(&patient_id) {
            return Err(Error::UnknownReference {
                file: t.file.clone(),
                line,
                kind: "patient",
                id: patient_id,
            });
        }
        let m = Measurement {
            patient_id,
            analyte,
            value,
            measured_date: t.date(line, rec, "measured_date")?,
        };
        cohort.push_measurement(m)?;
    }

    let t = Table::read(
        &files.scores,
        &["image_id", "visit_id", "patient_id", "eye", "model_member", "target_name", "score"],
    )?;
    let mut seen = HashSet::new();
    for (line, rec) in &t.rows {
        let line = *line;
        let s = ScoreRecord {
            image_id: t.required(line, rec, "image_id")?.to_string(),
            visit_id: t.required(line, rec, "visit_id")?.to_string(),
            patient_id: t.required(line, rec, "patient_id")?.to_string(),
            eye: t.parse::<Eye>(line, "eye", t.field(rec, "eye").unwrap_or(""))?,
            model_member: t.required(line, rec, "model_member")?.to_string(),
            target_name: t.required(line, rec, "target_name")?.to_string(),
            score: t.parse(line, "score", t.required(line, rec, "score")?)?,
        };
        if !cohort.patients.contains_key(&s.patient_id) {
            return Err(Error::UnknownReference {
                file: t.file.clone(),
                line,
                kind: "patient",
                id: s.patient_id,
            });
        }
        if !cohort.visits.contains_key(&s.visit_id) {
            return Err(Error::UnknownReference {
                file: t.file.clone(),
                line,
                kind: "visit",
                id: s.visit_id,
            });
        }
        cohort.check_score(&s).map_err(|e| t.err(line, e.to_string()))?;
        let key = (s.image_id.clone(), s.model_member.clone(), s.target_name.clone());
        if !seen.insert(key) {
            return Err(Error::DuplicateKey {
                file: t.file.clone(),
                line,
                key: format!("{}/{}/{}", s.image_id, s.model_member, s.target_name),
            });
        }
        cohort.scores.push(s);
    }
    cohort.finish();

    if let Some(path) = &files.annotations {
        let file = path.display().to_string();
        for (line, image_id, ann) in read_annotation_rows(path)? {
            if !cohort.attach_annotation(&image_id, ann) {
                return Err(Error::UnknownReference {
                    file: file.clone(),
                    line,
                    kind: "image",
                    id: image_id,
                });
            }
        }
    }
    Ok(cohort)
}

fn read_annotation_rows(path: &Path) -> Result<Vec<(u64, String, EllipseAnnotation)>> {
    const COLS: [&str; 8] = [
        "pupil_cx", "pupil_cy", "pupil_w", "pupil_h", "iris_cx", "iris_cy", "iris_w", "iris_h",
    ];
    let mut required = vec!["image_id"];
    required.extend(COLS);
    let t = Table::read(path, &required)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let line = *line;
        let image_id = t.required(line, rec, "image_id")?.to_string();
        let mut v = [0.0f64; 8];
        for (slot, col) in v.iter_mut().zip(COLS) {
            *slot = t.parse(line, col, t.required(line, rec, col)?)?;
        }
        let ann = EllipseAnnotation {
            pupil: Ellipse::new(v[0], v[1], v[2], v[3]),
            iris: Ellipse::new(v[4], v[5], v[6], v[7]),
        };
        ann.validate().map_err(|e| t.err(line, e.to_string()))?;
        if !seen.insert(image_id.clone()) {
            return Err(Error::DuplicateKey {
                file: t.file.clone(),
                line,
                key: image_id,
            });
        }
        out.push((line, image_id, ann));
    }
    Ok(out)
}

/// Standalone annotation reader keyed by image id, for image batch processing.
pub fn read_annotations(path: &Path) -> Result<BTreeMap<String, EllipseAnnotation>> {
    Ok(read_annotation_rows(path)?
        .into_iter()
        .map(|(_, id, a)| (id, a))
        .collect())
}
