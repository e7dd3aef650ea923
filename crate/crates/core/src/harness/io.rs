//! JSON inputs and CSV outputs.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::grasp::{scenario_to_lp, GraspScenario, LpObjective};
use crate::kkt::{LpProblem, Trajectory};
use crate::linalg::{Matrix, SymMatrix, Vec3};
use crate::lmi::Bmi;
use crate::quality::Wrench;

/// On-disk LP: `min costᵀx s.t. a x ≤ b`, with `a` as nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub cost: Vec<f64>,
    #[serde(alias = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Scenario document: a [`GraspScenario`] plus optional bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(flatten)]
    pub scenario: GraspScenario,
    /// Contact forces for the force-closure certificate (defaults to the
    /// unit normal of every contact).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forces: Option<Vec<Vec3>>,
    /// A published solution to check against the constraints.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<Vec<f64>>,
}

/// BMI demo input with the point at which to evaluate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmiFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub f0: Vec<Vec<f64>>,
    pub fi: Vec<Vec<Vec<f64>>>,
    pub fij: Vec<Vec<Vec<Vec<f64>>>>,
    pub x: Vec<f64>,
}

impl BmiFile {
    pub fn to_bmi(&self) -> crate::Result<Bmi> {
        let f0 = SymMatrix::from_rows(&self.f0)?;
        let fi = self
            .fi
            .iter()
            .map(|m| SymMatrix::from_rows(m))
            .collect::<crate::Result<_>>()?;
        let fij = self
            .fij
            .iter()
            .map(|row| {
                row.iter()
                    .map(|m| SymMatrix::from_rows(m))
                    .collect::<crate::Result<_>>()
            })
            .collect::<crate::Result<_>>()?;
        Bmi::new(f0, fi, fij)
    }
}

/// A loaded LP with its identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedLp {
    pub id: String,
    pub lp: LpProblem,
    pub reference_solution: Option<Vec<f64>>,
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, HarnessError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        HarnessError::Parse {
            path: path.to_path_buf(),
            line: inner.line(),
            column: inner.column(),
            message: if field == "." {
                inner.to_string()
            } else {
                format!("{field}: {inner}")
            },
        }
    })
}

fn file_id(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "problem".into(), |s| s.to_string_lossy().into_owned())
}

/// 1-based line of the `index`-th element of the top-level array stored
/// under `key`, found by a bracket-counting scan of the raw text.
fn line_of_array_element(text: &str, key: &str, index: usize) -> Option<usize> {
    let start = text.find(&format!("\"{key}\""))?;
    let mut depth = 0usize;
    let mut seen = 0usize;
    let mut line = 1 + text[..start].matches('\n').count();
    let mut in_outer = false;
    for ch in text[start..].chars() {
        match ch {
            '\n' => line += 1,
            '[' => {
                depth += 1;
                if depth == 1 {
                    in_outer = true;
                } else if depth == 2 {
                    if seen == index {
                        return Some(line);
                    }
                    seen += 1;
                }
            }
            ']' => {
                depth = depth.saturating_sub(1);
                if in_outer && depth == 0 {
                    return None;
                }
            }
            _ => {}
        }
    }
    None
}

fn lp_from_doc(path: &Path, text: &str, doc: LpFile) -> Result<LoadedLp, HarnessError> {
    let n = doc.cost.len();
    let key = if text.contains("\"A\"") { "A" } else { "a" };
    if let Some(i) = doc.a.iter().position(|row| row.len() != n) {
        return Err(HarnessError::Dimension {
            path: path.to_path_buf(),
            line: line_of_array_element(text, key, i),
            message: format!("{key}[{i}] has {} entries but cost has {n}", doc.a[i].len()),
        });
    }
    if doc.a.len() != doc.b.len() {
        return Err(HarnessError::Dimension {
            path: path.to_path_buf(),
            line: text
                .find("\"b\"")
                .map(|p| 1 + text[..p].matches('\n').count()),
            message: format!(
                "{key} has {} rows but b has {} entries",
                doc.a.len(),
                doc.b.len()
            ),
        });
    }
    let a = if doc.a.is_empty() {
        Matrix::zeros(0, n)
    } else {
        Matrix::from_rows(&doc.a)?
    };
    Ok(LoadedLp {
        id: doc.id.unwrap_or_else(|| file_id(path)),
        lp: LpProblem::new(doc.cost, a, doc.b)?,
        reference_solution: None,
    })
}

/// Loads an LP document, or a scenario document converted with a
/// sum-of-variables objective.
pub fn load_lp(path: &Path) -> Result<LoadedLp, HarnessError> {
    let text = read(path)?;
    let value: serde_json::Value = parse(path, &text)?;
    let is_lp = value.get("cost").is_some();
    if is_lp {
        let doc: LpFile = parse(path, &text)?;
        lp_from_doc(path, &text, doc)
    } else {
        let file = scenario_from_text(path, &text)?;
        Ok(LoadedLp {
            id: file.id.clone().unwrap_or_else(|| file_id(path)),
            lp: scenario_to_lp(&file.scenario, &LpObjective::SumOfVariables)?,
            reference_solution: file.reference_solution,
        })
    }
}

fn scenario_from_text(path: &Path, text: &str) -> Result<ScenarioFile, HarnessError> {
    // Flattened fields lose their path in errors, so parse the scenario part
    // on its own first.
    parse::<GraspScenario>(path, text)?;
    let file: ScenarioFile = parse(path, text)?;
    file.scenario
        .validate()
        .map_err(|e| HarnessError::Invalid {
            path: path.to_path_buf(),
            source: e,
        })?;
    if let Some(f) = &file.forces {
        if f.len() != file.scenario.contacts.len() {
            return Err(HarnessError::Invalid {
                path: path.to_path_buf(),
                source: crate::Error::Dimension(format!(
                    "forces has {} entries for {} contacts",
                    f.len(),
                    file.scenario.contacts.len()
                )),
            });
        }
    }
    Ok(file)
}

/// Loads and validates a scenario document.
pub fn load_scenario_file(path: &Path) -> Result<ScenarioFile, HarnessError> {
    scenario_from_text(path, &read(path)?)
}

pub fn load_scenario(path: &Path) -> Result<GraspScenario, HarnessError> {
    Ok(load_scenario_file(path)?.scenario)
}

pub fn load_bmi(path: &Path) -> Result<BmiFile, HarnessError> {
    parse(path, &read(path)?)
}

/// Serializes an LP in the format read by [`load_lp`].
pub fn lp_to_json(id: Option<&str>, lp: &LpProblem) -> String {
    let doc = LpFile {
        id: id.map(str::to_owned),
        cost: lp.cost().to_vec(),
        a: lp.a().to_rows(),
        b: lp.b().to_vec(),
    };
    serde_json::to_string_pretty(&doc).expect("LP documents always serialize")
}

/// `epoch,loss` with epochs counted from 1.
pub fn loss_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, l).unwrap();
    }
    out
}

/// `t,y_1,..,y_d` with `y = (x, u)`.
pub fn trajectory_csv(points: &[(f64, Vec<f64>)]) -> String {
    let dim = points.first().map_or(0, |p| p.1.len());
    let mut out = String::from("t");
    for i in 1..=dim {
        write!(out, ",y_{i}").unwrap();
    }
    out.push('\n');
    for (t, y) in points {
        write!(out, "{t}").unwrap();
        for v in y {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn ode_trajectory_points(tr: &Trajectory) -> Vec<(f64, Vec<f64>)> {
    tr.points.iter().map(|(t, y)| (*t, y.to_concat())).collect()
}

/// `fx,fy,fz,tx,ty,tz` rows of a wrench set.
pub fn wrench_csv(points: &[Wrench]) -> String {
    let mut out = String::from("fx,fy,fz,tx,ty,tz\n");
    for p in points {
        let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
