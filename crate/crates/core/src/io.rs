//! File formats: curves and labels CSV, model JSON, plot-data TSV.
//!
//! Curves CSV: the first line holds the `m` time stamps, every following
//! line one curve of `m` values. Labels CSV: one integer per line, aligned
//! with the curve rows. Numbers are written in Rust's shortest round-trip
//! decimal form, so a write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use csv::{ReaderBuilder, Trim};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classify::{ClassEntry, ClassModel, Classifier, Family};
use crate::curves::{CurveSet, GateWeights, PolyRegime, TimeGrid};
use crate::error::{Error, Result};
use crate::piecewise::{piecewise_approximation, PiecewiseModel};
use crate::rhlp::{rhlp_approximation, RhlpModel};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Non-empty records of a CSV text with their 1-based line numbers.
fn records(text: &str, path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, line, 0, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn parse_row(path: &Path, line: usize, fields: &[String]) -> Result<Vec<f64>> {
    fields
        .iter()
        .enumerate()
        .map(|(c, s)| match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(parse_error(path, line, c + 1, format!("non-finite value `{s}`"))),
            Err(_) => Err(parse_error(path, line, c + 1, format!("not a number: `{s}`"))),
        })
        .collect()
}

/// Parses curves CSV text; `path` is only used in error messages.
pub fn parse_curves(text: &str, path: &Path) -> Result<CurveSet> {
    let rows = records(text, path)?;
    let Some(((header_line, header), body)) = rows.split_first() else {
        return Err(parse_error(path, 1, 0, "empty file: missing the time-stamp line"));
    };
    let times = parse_row(path, *header_line, header)?;
    if times.len() < 2 {
        return Err(parse_error(path, *header_line, 0, "need at least 2 time stamps"));
    }
    if let Some(j) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(parse_error(
            path,
            *header_line,
            j + 2,
            "time stamps must be strictly increasing",
        ));
    }
    if body.is_empty() {
        return Err(parse_error(path, header_line + 1, 0, "no curves"));
    }
    let m = times.len();
    let mut values = Vec::with_capacity(body.len() * m);
    for (line, fields) in body {
        if fields.len() != m {
            return Err(parse_error(
                path,
                *line,
                fields.len().min(m) + 1,
                format!("expected {m} values, found {}", fields.len()),
            ));
        }
        values.extend(parse_row(path, *line, fields)?);
    }
    CurveSet::new(TimeGrid::new(times)?, values)
}

pub fn read_curves(path: impl AsRef<Path>) -> Result<CurveSet> {
    let path = path.as_ref();
    parse_curves(&read_text(path)?, path)
}

fn join(values: &[f64]) -> String {
    let mut s = String::new();
    for (j, v) in values.iter().enumerate() {
        if j > 0 {
            s.push(',');
        }
        write!(s, "{v}").unwrap();
    }
    s
}

pub fn format_curves(curves: &CurveSet) -> String {
    let mut out = join(curves.times());
    out.push('\n');
    for row in curves.rows() {
        out.push_str(&join(row));
        out.push('\n');
    }
    out
}

pub fn write_curves(path: impl AsRef<Path>, curves: &CurveSet) -> Result<()> {
    write_text(path.as_ref(), &format_curves(curves))
}

pub fn parse_labels(text: &str, path: &Path) -> Result<Vec<i64>> {
    records(text, path)?
        .into_iter()
        .map(|(line, fields)| {
            if fields.len() != 1 {
                return Err(parse_error(
                    path,
                    line,
                    2,
                    format!("expected one label per line, found {}", fields.len()),
                ));
            }
            fields[0]
                .parse::<i64>()
                .map_err(|_| parse_error(path, line, 1, format!("not an integer label: `{}`", fields[0])))
        })
        .collect()
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    parse_labels(&read_text(path)?, path)
}

pub fn format_labels<T: std::fmt::Display>(labels: &[T]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

pub fn write_labels<T: std::fmt::Display>(path: impl AsRef<Path>, labels: &[T]) -> Result<()> {
    write_text(path.as_ref(), &format_labels(labels))
}

/// Writes one real vector per line.
pub fn write_vector(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let text: String = values.iter().map(|v| format!("{v}\n")).collect();
    write_text(path.as_ref(), &text)
}

/// Any model that can be stored as JSON.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Rhlp(RhlpModel),
    Piecewise(PiecewiseModel),
    Classifier(Classifier),
}

impl Model {
    pub fn family_tag(&self) -> &'static str {
        match self {
            Model::Rhlp(_) => "rhlp",
            Model::Piecewise(_) => "piecewise",
            Model::Classifier(_) => "classifier",
        }
    }
}

impl From<RhlpModel> for Model {
    fn from(m: RhlpModel) -> Self {
        Model::Rhlp(m)
    }
}

impl From<PiecewiseModel> for Model {
    fn from(m: PiecewiseModel) -> Self {
        Model::Piecewise(m)
    }
}

impl From<Classifier> for Model {
    fn from(c: Classifier) -> Self {
        Model::Classifier(c)
    }
}

impl From<ClassModel> for Model {
    fn from(m: ClassModel) -> Self {
        match m {
            ClassModel::Rhlp(m) => Model::Rhlp(m),
            ClassModel::Piecewise(m) => Model::Piecewise(m),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RhlpDoc {
    family: String,
    #[serde(rename = "K")]
    k: usize,
    p: usize,
    t: Vec<f64>,
    w: Vec<[f64; 2]>,
    beta: Vec<Vec<f64>>,
    sigma2: Vec<f64>,
    loglik: f64,
}

#[derive(Serialize, Deserialize)]
struct PiecewiseDoc {
    family: String,
    #[serde(rename = "K")]
    k: usize,
    p: usize,
    t: Vec<f64>,
    gamma: Vec<usize>,
    beta: Vec<Vec<f64>>,
    sigma2: Vec<f64>,
    cost: f64,
    loglik: f64,
}

#[derive(Serialize, Deserialize)]
struct ClassDoc {
    label: i64,
    prior: f64,
    model: Value,
}

#[derive(Serialize, Deserialize)]
struct ClassifierDoc {
    family: String,
    model_family: Family,
    classes: Vec<ClassDoc>,
}

fn split_regimes(regimes: &[PolyRegime]) -> (Vec<Vec<f64>>, Vec<f64>) {
    regimes.iter().map(|r| (r.beta.clone(), r.sigma2)).unzip()
}

fn rhlp_doc(m: &RhlpModel) -> RhlpDoc {
    let (beta, sigma2) = split_regimes(&m.regimes);
    RhlpDoc {
        family: "rhlp".into(),
        k: m.k(),
        p: m.p,
        t: m.grid.as_slice().to_vec(),
        w: m.gate.w.clone(),
        beta,
        sigma2,
        loglik: m.loglik,
    }
}

fn piecewise_doc(m: &PiecewiseModel) -> PiecewiseDoc {
    let (beta, sigma2) = split_regimes(&m.regimes);
    PiecewiseDoc {
        family: "piecewise".into(),
        k: m.k(),
        p: m.p,
        t: m.grid.as_slice().to_vec(),
        gamma: m.gamma.clone(),
        beta,
        sigma2,
        cost: m.cost,
        loglik: m.loglik,
    }
}

/// The JSON document of a model.
pub fn model_to_value(model: &Model) -> Value {
    let to_value = |v: Result<Value, serde_json::Error>| v.expect("model documents always serialize");
    match model {
        Model::Rhlp(m) => to_value(serde_json::to_value(rhlp_doc(m))),
        Model::Piecewise(m) => to_value(serde_json::to_value(piecewise_doc(m))),
        Model::Classifier(c) => {
            let classes = c
                .classes()
                .iter()
                .map(|e| ClassDoc {
                    label: e.label,
                    prior: e.prior,
                    model: model_to_value(&e.model.clone().into()),
                })
                .collect();
            to_value(serde_json::to_value(ClassifierDoc {
                family: "classifier".into(),
                model_family: c.family(),
                classes,
            }))
        }
    }
}

pub fn format_model(model: &Model) -> String {
    let mut s = serde_json::to_string_pretty(&model_to_value(model)).expect("JSON values always serialize");
    s.push('\n');
    s
}

pub fn write_model(path: impl AsRef<Path>, model: &Model) -> Result<()> {
    write_text(path.as_ref(), &format_model(model))
}

/// Joins a JSON path prefix and a path relative to it.
fn sub_path(prefix: &str, rel: &str) -> String {
    match (prefix, rel) {
        ("", r) => r.to_string(),
        (p, "" | ".") => p.to_string(),
        (p, r) if r.starts_with('[') => format!("{p}{r}"),
        (p, r) => format!("{p}.{r}"),
    }
}

struct Decoder<'a> {
    path: &'a Path,
}

impl Decoder<'_> {
    fn schema(&self, json_path: &str, message: impl Into<String>) -> Error {
        Error::Schema {
            path: self.path.to_path_buf(),
            json_path: if json_path.is_empty() { ".".into() } else { json_path.into() },
            message: message.into(),
        }
    }

    fn typed<T: DeserializeOwned>(&self, value: Value, at: &str) -> Result<T> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let rel = e.path().to_string();
            self.schema(&sub_path(at, &rel), e.into_inner().to_string())
        })
    }

    fn check_counts(&self, at: &str, k: usize, beta: &[Vec<f64>], sigma2: &[f64]) -> Result<()> {
        if beta.len() != k {
            return Err(self.schema(&sub_path(at, "beta"), format!("{} rows, but K = {k}", beta.len())));
        }
        if sigma2.len() != k {
            return Err(self.schema(&sub_path(at, "sigma2"), format!("{} entries, but K = {k}", sigma2.len())));
        }
        Ok(())
    }

    fn regimes(beta: Vec<Vec<f64>>, sigma2: Vec<f64>) -> Vec<PolyRegime> {
        beta.into_iter()
            .zip(sigma2)
            .map(|(beta, sigma2)| PolyRegime { beta, sigma2 })
            .collect()
    }

    fn grid(&self, t: Vec<f64>, at: &str) -> Result<TimeGrid> {
        TimeGrid::new(t).map_err(|e| self.schema(&sub_path(at, "t"), e.to_string()))
    }

    fn rhlp(&self, value: Value, at: &str) -> Result<RhlpModel> {
        let doc: RhlpDoc = self.typed(value, at)?;
        self.check_counts(at, doc.k, &doc.beta, &doc.sigma2)?;
        if doc.w.len() != doc.k {
            return Err(self.schema(&sub_path(at, "w"), format!("{} rows, but K = {}", doc.w.len(), doc.k)));
        }
        let model = RhlpModel {
            grid: self.grid(doc.t, at)?,
            p: doc.p,
            gate: GateWeights { w: doc.w },
            regimes: Self::regimes(doc.beta, doc.sigma2),
            loglik: doc.loglik,
        };
        model.validate().map_err(|e| self.schema(at, e.to_string()))?;
        Ok(model)
    }

    fn piecewise(&self, value: Value, at: &str) -> Result<PiecewiseModel> {
        let doc: PiecewiseDoc = self.typed(value, at)?;
        self.check_counts(at, doc.k, &doc.beta, &doc.sigma2)?;
        let model = PiecewiseModel {
            grid: self.grid(doc.t, at)?,
            p: doc.p,
            gamma: doc.gamma,
            regimes: Self::regimes(doc.beta, doc.sigma2),
            cost: doc.cost,
            loglik: doc.loglik,
        };
        model.validate().map_err(|e| self.schema(at, e.to_string()))?;
        Ok(model)
    }

    fn classifier(&self, value: Value) -> Result<Classifier> {
        let doc: ClassifierDoc = self.typed(value, "")?;
        let mut entries = Vec::with_capacity(doc.classes.len());
        for (i, class) in doc.classes.into_iter().enumerate() {
            let at = format!("classes[{i}].model");
            let model = match self.model(class.model, &at)? {
                Model::Rhlp(m) => ClassModel::Rhlp(m),
                Model::Piecewise(m) => ClassModel::Piecewise(m),
                Model::Classifier(_) => return Err(self.schema(&at, "classifiers cannot be nested")),
            };
            if model.family() != doc.model_family {
                return Err(self.schema(
                    &sub_path(&at, "family"),
                    format!("`{}` model in a `{}` classifier", model.family(), doc.model_family),
                ));
            }
            entries.push(ClassEntry {
                label: class.label,
                prior: class.prior,
                model,
            });
        }
        Classifier::new(entries).map_err(|e| self.schema("classes", e.to_string()))
    }

    fn model(&self, value: Value, at: &str) -> Result<Model> {
        let family = match value.get("family") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(self.schema(&sub_path(at, "family"), "expected a string")),
            None => return Err(self.schema(at, "missing field `family`")),
        };
        match family.as_str() {
            "rhlp" => self.rhlp(value, at).map(Model::Rhlp),
            "piecewise" => self.piecewise(value, at).map(Model::Piecewise),
            "classifier" if at.is_empty() => self.classifier(value).map(Model::Classifier),
            other => Err(self.schema(
                &sub_path(at, "family"),
                format!("unknown family `{other}` (expected rhlp, piecewise or classifier)"),
            )),
        }
    }
}

/// Parses a model JSON document; `path` is only used in error messages.
pub fn parse_model(text: &str, path: &Path) -> Result<Model> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Decoder { path }.model(value, "")
}

pub fn read_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    parse_model(&read_text(path)?, path)
}

fn check_same_grid(grid: &TimeGrid, curves: &CurveSet) -> Result<()> {
    if grid.as_slice() != curves.times() {
        return Err(Error::domain(format!(
            "curves are sampled on a different grid than the model ({} vs {} points)",
            curves.m(),
            grid.len()
        )));
    }
    Ok(())
}

/// Plot-ready TSV of a fitted model against the curves' pointwise mean.
///
/// RHLP columns: `t, mean, fit, pi_1..pi_K`; piecewise columns:
/// `t, mean, fit, segment`.
pub fn plot_table(model: &Model, curves: &CurveSet) -> Result<String> {
    let mean = curves.mean_curve();
    let mut out = String::from("t\tmean\tfit");
    match model {
        Model::Rhlp(m) => {
            check_same_grid(&m.grid, curves)?;
            let fit = rhlp_approximation(m);
            let pi = m.proportions();
            for k in 1..=m.k() {
                write!(out, "\tpi_{k}").unwrap();
            }
            out.push('\n');
            for (j, t) in curves.times().iter().enumerate() {
                write!(out, "{t}\t{}\t{}", mean[j], fit[j]).unwrap();
                for v in pi.row(j) {
                    write!(out, "\t{v}").unwrap();
                }
                out.push('\n');
            }
        }
        Model::Piecewise(m) => {
            check_same_grid(&m.grid, curves)?;
            let fit = piecewise_approximation(m);
            out.push_str("\tsegment\n");
            for ((j, t), label) in curves.times().iter().enumerate().zip(m.labels()) {
                writeln!(out, "{t}\t{}\t{}\t{label}", mean[j], fit[j]).unwrap();
            }
        }
        Model::Classifier(_) => {
            return Err(Error::domain("plot data needs a single fitted model, not a classifier"));
        }
    }
    Ok(out)
}

pub fn emit_plot_data(model: &Model, curves: &CurveSet, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &plot_table(model, curves)?)
}
