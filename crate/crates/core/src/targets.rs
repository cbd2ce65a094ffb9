//! Prediction targets: thresholded labs and vitals.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::Analyte;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    AboveIsPositive,
    BelowIsPositive,
}

/// One binary evaluation target. `cutoffs` holds every cutoff of the
/// analyte's multi-class head in the same direction; `headline` indexes the
/// cutoff that defines this target's binary label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub analyte: Analyte,
    pub cutoffs: Vec<f64>,
    pub direction: Direction,
    pub inclusive: Vec<bool>,
    pub headline: usize,
    pub primary: bool,
    pub unit: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabel {
    pub class_index: usize,
    pub binary_positive: bool,
}

impl TargetSpec {
    pub fn headline_cutoff(&self) -> f64 {
        self.cutoffs[self.headline]
    }

    pub fn operator(&self) -> &'static str {
        operator(self.direction, self.inclusive[self.headline])
    }

    /// Number of classes of the multi-class head (cutoffs + 1).
    pub fn n_classes(&self) -> usize {
        self.cutoffs.len() + 1
    }

    fn beyond(&self, value: f64, i: usize) -> bool {
        let c = self.cutoffs[i];
        match (self.direction, self.inclusive[i]) {
            (Direction::AboveIsPositive, true) => value >= c,
            (Direction::AboveIsPositive, false) => value > c,
            (Direction::BelowIsPositive, true) => value <= c,
            (Direction::BelowIsPositive, false) => value < c,
        }
    }

    /// Class index counts the cutoffs passed in the positive direction.
    pub fn label_value(&self, value: f64) -> Result<ClassLabel> {
        if value.is_nan() {
            return Err(Error::invalid(format!("NaN value for {}", self.name)));
        }
        let class_index = (0..self.cutoffs.len()).filter(|&i| self.beyond(value, i)).count();
        Ok(ClassLabel {
            class_index,
            binary_positive: self.beyond(value, self.headline),
        })
    }

    pub fn is_positive(&self, value: f64) -> Result<bool> {
        self.label_value(value).map(|l| l.binary_positive)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("target `{}`: {m}", self.name)));
        if self.cutoffs.is_empty() || self.cutoffs.len() > 4 {
            return bad("needs 1 to 4 cutoffs");
        }
        if self.cutoffs.iter().any(|c| !c.is_finite()) {
            return bad("cutoffs must be finite");
        }
        if self.cutoffs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("cutoffs must be strictly increasing");
        }
        if self.inclusive.len() != self.cutoffs.len() {
            return bad("one inclusive flag per cutoff");
        }
        if self.headline >= self.cutoffs.len() {
            return bad("headline index out of range");
        }
        if self.unit != self.analyte.unit() {
            return bad(&format!("unit must be {}", self.analyte.unit()));
        }
        Ok(())
    }
}

fn operator(direction: Direction, inclusive: bool) -> &'static str {
    match (direction, inclusive) {
        (Direction::AboveIsPositive, true) => ">=",
        (Direction::AboveIsPositive, false) => ">",
        (Direction::BelowIsPositive, true) => "<=",
        (Direction::BelowIsPositive, false) => "<",
    }
}

pub fn target_name(analyte: Analyte, direction: Direction, inclusive: bool, cutoff: f64) -> String {
    format!("{}{}{:.1}", analyte.name(), operator(direction, inclusive), cutoff)
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Canonical form of a target name: spaces dropped, `≥`/`≤` spelled ASCII.
pub fn normalize_name(name: &str) -> String {
    name.chars()
        .filter(|c| !c.is_whitespace())
        .collect::<String>()
        .replace('≥', ">=")
        .replace('≤', "<=")
}

struct Group {
    analyte: Analyte,
    direction: Direction,
    inclusive: bool,
    cutoffs: &'static [f64],
    primary: &'static [f64],
}

const fn above(analyte: Analyte, cutoffs: &'static [f64], primary: &'static [f64]) -> Group {
    Group { analyte, direction: Direction::AboveIsPositive, inclusive: true, cutoffs, primary }
}

const fn above_strict(analyte: Analyte, cutoffs: &'static [f64], primary: &'static [f64]) -> Group {
    Group { analyte, direction: Direction::AboveIsPositive, inclusive: false, cutoffs, primary }
}

const fn below(analyte: Analyte, cutoffs: &'static [f64], primary: &'static [f64]) -> Group {
    Group { analyte, direction: Direction::BelowIsPositive, inclusive: false, cutoffs, primary }
}

const BUILTIN: &[Group] = &[
    above(Analyte::Acr, &[30.0, 300.0, 1500.0], &[300.0]),
    below(Analyte::Albumin, &[3.5], &[3.5]),
    above_strict(Analyte::Alt, &[29.0], &[]),
    above_strict(Analyte::Ast, &[36.0], &[36.0]),
    above(Analyte::Bmi, &[25.0, 30.0, 35.0, 40.0], &[]),
    above_strict(Analyte::Bun, &[20.0], &[]),
    below(Analyte::Calcium, &[8.6], &[8.6]),
    above_strict(Analyte::Creatinine, &[1.2], &[]),
    above(Analyte::DiastolicBp, &[80.0, 90.0], &[]),
    below(Analyte::Egfr, &[15.0, 30.0, 60.0, 90.0], &[60.0]),
    above(Analyte::Hba1c, &[6.5, 7.0, 8.0, 9.0], &[]),
    below(Analyte::Hct, &[39.0], &[]),
    above(Analyte::Hdl, &[45.0, 60.0], &[]),
    below(Analyte::Hgb, &[11.0, 12.5], &[11.0]),
    below(Analyte::Inr, &[1.1], &[]),
    above(Analyte::Ldl, &[100.0, 130.0, 160.0, 190.0], &[]),
    above(Analyte::MeanArterialPressure, &[80.0, 90.0, 110.0], &[]),
    above(Analyte::NonHdl, &[130.0, 160.0], &[]),
    below(Analyte::Platelet, &[100.0, 150.0], &[150.0]),
    below(Analyte::Potassium, &[3.5], &[]),
    above_strict(Analyte::Potassium, &[5.0], &[]),
    above(Analyte::PulsePressure, &[40.0, 55.0, 65.0], &[]),
    above_strict(Analyte::Rdw, &[14.5], &[]),
    below(Analyte::Sodium, &[136.0], &[]),
    above(Analyte::SystolicBp, &[120.0, 140.0], &[]),
    above_strict(Analyte::TotalBilirubin, &[1.0], &[]),
    above(Analyte::TotalCholesterol, &[200.0, 240.0], &[]),
    above(Analyte::Triglycerides, &[150.0, 200.0, 500.0], &[]),
    below(Analyte::Tsh, &[0.5], &[]),
    above_strict(Analyte::Tsh, &[4.0], &[4.0]),
    below(Analyte::Wbc, &[4.0], &[4.0]),
    above_strict(Analyte::Wbc, &[11.0], &[]),
];

/// Every built-in target, one binary spec per cutoff.
pub fn builtin_registry() -> Vec<TargetSpec> {
    let mut out = Vec::new();
    for g in BUILTIN {
        for (i, &c) in g.cutoffs.iter().enumerate() {
            out.push(TargetSpec {
                name: target_name(g.analyte, g.direction, g.inclusive, c),
                analyte: g.analyte,
                cutoffs: g.cutoffs.to_vec(),
                direction: g.direction,
                inclusive: vec![g.inclusive; g.cutoffs.len()],
                headline: i,
                primary: g.primary.contains(&c),
                unit: g.analyte.unit().to_string(),
            });
        }
    }
    out
}

/// Entry of a target override file.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct TargetOverride {
    pub name: Option<String>,
    pub analyte: Analyte,
    pub cutoffs: Vec<f64>,
    pub direction: Direction,
    pub inclusive: Vec<bool>,
    #[serde(default)]
    pub primary: bool,
    #[serde(default)]
    pub headline: usize,
}

#[derive(Debug, Deserialize, Serialize)]
struct OverrideFile {
    #[serde(default)]
    target: Vec<TargetOverride>,
}

/// The active set of targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRegistry {
    specs: Vec<TargetSpec>,
}

impl Default for TargetRegistry {
    fn default() -> Self {
        TargetRegistry { specs: builtin_registry() }
    }
}

impl TargetRegistry {
    pub fn new(specs: Vec<TargetSpec>) -> Result<Self> {
        let mut names = HashSet::new();
        for s in &specs {
            s.validate()?;
            if !names.insert(s.name.clone()) {
                return Err(Error::Config(format!("duplicate target name `{}`", s.name)));
            }
        }
        Ok(TargetRegistry { specs })
    }

    /// Builtins with entries from a TOML (`[[target]]` tables) or JSON
    /// (array of objects) file replacing same-named builtins or appended.
    pub fn with_overrides(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<TargetOverride> = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str::<OverrideFile>(&text)
                .map_err(|e| Error::Config(e.to_string()))?
                .target
        };
        let mut specs = builtin_registry();
        for e in entries {
            let headline = e.headline.min(e.cutoffs.len().saturating_sub(1));
            let name = e.name.map(|n| normalize_name(&n)).unwrap_or_else(|| {
                let inc = e.inclusive.get(headline).copied().unwrap_or(false);
                target_name(e.analyte, e.direction, inc, e.cutoffs.get(headline).copied().unwrap_or(f64::NAN))
            });
            let spec = TargetSpec {
                name,
                analyte: e.analyte,
                cutoffs: e.cutoffs,
                direction: e.direction,
                inclusive: e.inclusive,
                headline,
                primary: e.primary,
                unit: e.analyte.unit().to_string(),
            };
            match specs.iter_mut().find(|s| s.name == spec.name) {
                Some(slot) => *slot = spec,
                None => specs.push(spec),
            }
        }
        TargetRegistry::new(specs)
    }

    pub fn specs(&self) -> &[TargetSpec] {
        &self.specs
    }

    pub fn get(&self, name: &str) -> Option<&TargetSpec> {
        let n = normalize_name(name);
        self.specs.iter().find(|s| s.name == n)
    }

    pub fn primary(&self) -> Vec<&TargetSpec> {
        self.specs.iter().filter(|s| s.primary).collect()
    }

    pub fn n_primary(&self) -> usize {
        self.specs.iter().filter(|s| s.primary).count()
    }

    /// `primary`, `all`, or a comma-separated list of names.
    pub fn select(&self, selector: &str) -> Result<Vec<&TargetSpec>> {
        match selector.trim() {
            "primary" => Ok(self.primary()),
            "all" => Ok(self.specs.iter().collect()),
            list => list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|n| {
                    self.get(n)
                        .ok_or_else(|| Error::Config(format!("unknown target `{}`", n.trim())))
                })
                .collect(),
        }
    }
}
