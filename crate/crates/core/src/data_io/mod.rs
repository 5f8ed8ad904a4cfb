//! Readers and writers for every wire format.
//!
//! CSV files are UTF-8, comma separated, header required; LF and CRLF line
//! endings parse identically. Floats are written in Rust's shortest
//! round-trip form, so reading a written value gives back the same bits.
//! Every rejected row is reported with its 1-based line number.

pub mod condition_id;
pub mod manifest;
pub mod svg;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lesion_model::{FitDiagnostics, LesionMap, LooReport, RoiAtlas, RoiFit, SymptomToLesionModel};
use crate::lsm_stats::{LsmCell, LsmResult};
use crate::projection::DegeneracyVerdict;
use crate::validation::{DualStreamReport, Match, ValidationRecord};
use crate::perturb::{AssessmentItem, ConditionResult, PerturbationSpec};
use crate::taxonomy::{ErrorProfile, ResponseCategory, Task};
use crate::{Error, Result};

pub use manifest::{write_atomic, RunManifest};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Shortest round-trip decimal form of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// A parsed CSV file with its header.
pub struct Table {
    name: String,
    headers: Vec<String>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Row { path: name.into(), row: 1, message: e.to_string() })?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if headers.iter().all(|h| h.is_empty()) {
            return Err(Error::Schema(format!("{name}: missing header")));
        }
        let mut seen = BTreeSet::new();
        for h in &headers {
            if !seen.insert(h.as_str()) {
                return Err(Error::Schema(format!("{name}: duplicate column {h:?}")));
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
                Error::Row { path: name.into(), row, message: e.to_string() }
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.iter().all(|f| f.trim().is_empty()) {
                continue;
            }
            rows.push((line, rec));
        }
        Ok(Table { name: name.into(), headers, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn col(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("{}: missing column {name:?}", self.name)))
    }

    /// Require exactly these columns in this order.
    pub fn expect_columns(&self, expected: &[&str]) -> Result<()> {
        for e in expected {
            self.col(e)?;
        }
        if self.headers.len() != expected.len() || self.headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Schema(format!(
                "{}: expected columns {}, found {}",
                self.name,
                expected.join(","),
                self.headers.join(",")
            )));
        }
        Ok(())
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().map(move |(line, rec)| Row { table: self, line: *line, rec })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub struct Row<'a> {
    table: &'a Table,
    pub line: usize,
    rec: &'a csv::StringRecord,
}

impl Row<'_> {
    pub fn err(&self, message: impl Into<String>) -> Error {
        Error::Row { path: self.table.name.clone(), row: self.line, message: message.into() }
    }

    pub fn get(&self, col: usize) -> &str {
        self.rec.get(col).unwrap_or("").trim()
    }

    pub fn nonempty(&self, col: usize) -> Result<&str> {
        let v = self.get(col);
        if v.is_empty() {
            return Err(self.err(format!("empty {}", self.table.headers[col])));
        }
        Ok(v)
    }

    pub fn f64(&self, col: usize) -> Result<f64> {
        let v = self.nonempty(col)?;
        let x: f64 = v
            .parse()
            .map_err(|_| self.err(format!("{} is not a number: {v:?}", self.table.headers[col])))?;
        if !x.is_finite() {
            return Err(self.err(format!("{} is not finite", self.table.headers[col])));
        }
        Ok(x)
    }

    pub fn opt_f64(&self, col: usize) -> Result<Option<f64>> {
        if self.get(col).is_empty() {
            Ok(None)
        } else {
            self.f64(col).map(Some)
        }
    }

    pub fn u32(&self, col: usize) -> Result<u32> {
        let v = self.nonempty(col)?;
        v.parse()
            .map_err(|_| self.err(format!("{} is not a non-negative integer: {v:?}", self.table.headers[col])))
    }

    pub fn bool(&self, col: usize) -> Result<bool> {
        match self.nonempty(col)? {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            v => Err(self.err(format!("{} is not a boolean: {v:?}", self.table.headers[col]))),
        }
    }

    pub fn task(&self, col: usize) -> Result<Task> {
        self.nonempty(col)?.parse().map_err(|e: Error| self.err(e.to_string()))
    }
}

/// Minimal CSV writer: quotes fields only when needed, LF endings.
pub struct CsvOut {
    buf: String,
}

impl CsvOut {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut out = CsvOut { buf: String::new() };
        out.row(header);
        out
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            let f = f.as_ref();
            if f.contains([',', '"', '\n', '\r']) || f.starts_with(' ') || f.ends_with(' ') {
                let _ = write!(self.buf, "\"{}\"", f.replace('"', "\"\""));
            } else {
                self.buf.push_str(f);
            }
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

// ---- items.csv -------------------------------------------------------------

pub const ITEM_COLUMNS: [&str; 4] = ["item_id", "task", "prompt", "target"];

pub fn read_items_str(text: &str, name: &str) -> Result<Vec<AssessmentItem>> {
    let t = Table::parse(text, name)?;
    let (ci, ct, cp, cg) = (t.col("item_id")?, t.col("task")?, t.col("prompt")?, t.col("target")?);
    let mut seen = BTreeSet::new();
    let mut items = Vec::with_capacity(t.len());
    for row in t.rows() {
        let item_id = row.nonempty(ci)?.to_string();
        if !seen.insert(item_id.clone()) {
            return Err(row.err(format!("duplicate item_id {item_id:?}")));
        }
        items.push(AssessmentItem {
            item_id,
            task: row.task(ct)?,
            prompt: row.nonempty(cp)?.to_string(),
            target: row.nonempty(cg)?.to_lowercase(),
        });
    }
    if items.is_empty() {
        return Err(Error::Schema(format!("{name}: no items")));
    }
    Ok(items)
}

pub fn read_items(path: &Path) -> Result<Vec<AssessmentItem>> {
    read_items_str(&read_text(path)?, &path.display().to_string())
}

pub fn items_csv(items: &[AssessmentItem]) -> String {
    let mut out = CsvOut::new(&ITEM_COLUMNS);
    for i in items {
        out.row(&[i.item_id.as_str(), i.task.as_str(), &i.prompt, &i.target]);
    }
    out.finish()
}

// ---- responses.csv ---------------------------------------------------------

pub const RESPONSE_COLUMNS: [&str; 5] = ["subject_id", "task", "item_id", "target", "response"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub subject_id: String,
    pub task: Task,
    pub item_id: String,
    pub target: String,
    /// Empty field on disk.
    pub response: Option<String>,
}

pub fn read_responses_str(text: &str, name: &str) -> Result<Vec<ResponseRow>> {
    let t = Table::parse(text, name)?;
    let c: Vec<usize> = RESPONSE_COLUMNS.iter().map(|n| t.col(n)).collect::<Result<_>>()?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in t.rows() {
        let subject_id = row.nonempty(c[0])?.to_string();
        let task = row.task(c[1])?;
        let item_id = row.nonempty(c[2])?.to_string();
        if !seen.insert((subject_id.clone(), task, item_id.clone())) {
            return Err(row.err(format!("duplicate response for subject {subject_id:?} item {item_id:?}")));
        }
        let response = row.get(c[4]);
        out.push(ResponseRow {
            subject_id,
            task,
            item_id,
            target: row.nonempty(c[3])?.to_lowercase(),
            response: (!response.is_empty()).then(|| response.to_string()),
        });
    }
    Ok(out)
}

pub fn read_responses(path: &Path) -> Result<Vec<ResponseRow>> {
    read_responses_str(&read_text(path)?, &path.display().to_string())
}

pub fn responses_csv(rows: &[ResponseRow]) -> String {
    let mut out = CsvOut::new(&RESPONSE_COLUMNS);
    for r in rows {
        out.row(&[
            r.subject_id.as_str(),
            r.task.as_str(),
            &r.item_id,
            &r.target,
            r.response.as_deref().unwrap_or(""),
        ]);
    }
    out.finish()
}

// ---- profiles.csv ----------------------------------------------------------

fn profile_columns() -> Vec<&'static str> {
    let mut cols = vec!["id", "task", "item_count"];
    cols.extend(ResponseCategory::ALL.iter().map(|c| c.label()));
    cols
}

/// Profiles keyed by subject or condition id, as category counts.
pub fn read_profiles_str(text: &str, name: &str) -> Result<Vec<(String, ErrorProfile)>> {
    let t = Table::parse(text, name)?;
    let cols = profile_columns();
    let c: Vec<usize> = cols.iter().map(|n| t.col(n)).collect::<Result<_>>()?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in t.rows() {
        let id = row.nonempty(c[0])?.to_string();
        if !seen.insert(id.clone()) {
            return Err(row.err(format!("duplicate id {id:?}")));
        }
        let task = row.task(c[1])?;
        let n = row.u32(c[2])?;
        let mut counts = [0u32; ResponseCategory::COUNT];
        for (k, slot) in counts.iter_mut().enumerate() {
            *slot = row.u32(c[3 + k])?;
        }
        if counts.iter().map(|&x| x as u64).sum::<u64>() != n as u64 || n == 0 {
            return Err(row.err(format!("category counts do not sum to item_count {n}")));
        }
        out.push((id, ErrorProfile::from_counts(counts, task).map_err(|e| row.err(e.to_string()))?));
    }
    Ok(out)
}

pub fn read_profiles(path: &Path) -> Result<Vec<(String, ErrorProfile)>> {
    read_profiles_str(&read_text(path)?, &path.display().to_string())
}

pub fn profiles_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a ErrorProfile)>) -> String {
    let mut out = CsvOut::new(&profile_columns());
    for (id, p) in rows {
        let mut fields = vec![id.to_string(), p.task.to_string(), p.item_count().to_string()];
        fields.extend(p.counts().iter().map(|c| c.to_string()));
        out.row(&fields);
    }
    out.finish()
}

// ---- lesion-map CSVs -------------------------------------------------------

/// `id_column,<roi_1>,...,<roi_K>` with loads in `[0, 1]`, columns in atlas order.
pub fn read_maps_str(text: &str, name: &str, id_column: &str, atlas: &RoiAtlas) -> Result<Vec<(String, LesionMap)>> {
    let t = Table::parse(text, name)?;
    let mut expected = vec![id_column];
    expected.extend(atlas.names());
    t.expect_columns(&expected)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in t.rows() {
        let id = row.nonempty(0)?.to_string();
        if !seen.insert(id.clone()) {
            return Err(row.err(format!("duplicate {id_column} {id:?}")));
        }
        let mut loads = Vec::with_capacity(atlas.len());
        for k in 0..atlas.len() {
            let v = row.f64(k + 1)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(row.err(format!("load {v} for {} outside [0, 1]", t.headers[k + 1])));
            }
            loads.push(v);
        }
        out.push((id, LesionMap::new(loads)?));
    }
    Ok(out)
}

pub fn read_lesions(path: &Path, atlas: &RoiAtlas) -> Result<Vec<(String, LesionMap)>> {
    read_maps_str(&read_text(path)?, &path.display().to_string(), "subject_id", atlas)
}

pub fn read_predicted(path: &Path, atlas: &RoiAtlas) -> Result<Vec<(String, LesionMap)>> {
    read_maps_str(&read_text(path)?, &path.display().to_string(), "condition_id", atlas)
}

pub fn maps_csv<'a>(id_column: &str, atlas: &RoiAtlas, rows: impl IntoIterator<Item = (&'a str, &'a LesionMap)>) -> String {
    let mut header = vec![id_column.to_string()];
    header.extend(atlas.names().map(String::from));
    let mut out = CsvOut::new(&header);
    for (id, m) in rows {
        let mut fields = vec![id.to_string()];
        fields.extend(m.loads().iter().map(|v| fmt_f64(*v)));
        out.row(&fields);
    }
    out.finish()
}

// ---- atlas.json ------------------------------------------------------------

pub fn read_atlas(path: &Path) -> Result<RoiAtlas> {
    let raw: RoiAtlas = serde_json::from_str(&read_text(path)?)?;
    RoiAtlas::new(raw.name.clone(), raw.rois().to_vec())
}

pub fn atlas_json(atlas: &RoiAtlas) -> Result<String> {
    Ok(serde_json::to_string_pretty(atlas)? + "\n")
}

// ---- model.json ------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    task: Task,
    atlas_hash: String,
    atlas: RoiAtlas,
    rois: Vec<ModelRoi>,
    diagnostics: FitDiagnostics,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelRoi {
    roi: String,
    intercept: f64,
    coefficients: BTreeMap<String, f64>,
}

const MODEL_FORMAT: &str = "blum-symptom-lesion-model";

pub fn model_json(model: &SymptomToLesionModel) -> Result<String> {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: 1,
        task: model.task,
        atlas_hash: model.atlas.hash(),
        atlas: model.atlas.clone(),
        rois: model
            .atlas
            .rois()
            .iter()
            .zip(&model.rois)
            .map(|(roi, fit)| ModelRoi {
                roi: roi.name.clone(),
                intercept: fit.intercept,
                coefficients: ResponseCategory::ALL
                    .iter()
                    .map(|c| (c.label().to_string(), fit.coefficients[c.index()]))
                    .collect(),
            })
            .collect(),
        diagnostics: model.diagnostics.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn read_model_str(text: &str) -> Result<SymptomToLesionModel> {
    let f: ModelFile = serde_json::from_str(text)?;
    if f.format != MODEL_FORMAT || f.version != 1 {
        return Err(Error::Schema(format!("unsupported model format {} v{}", f.format, f.version)));
    }
    let atlas = RoiAtlas::new(f.atlas.name.clone(), f.atlas.rois().to_vec())?;
    if atlas.hash() != f.atlas_hash {
        return Err(Error::Schema("model atlas hash does not match its atlas".into()));
    }
    if f.rois.len() != atlas.len() {
        return Err(Error::Schema(format!("model has {} ROIs, atlas has {}", f.rois.len(), atlas.len())));
    }
    let mut rois = Vec::with_capacity(f.rois.len());
    for (roi, r) in atlas.rois().iter().zip(&f.rois) {
        if roi.name != r.roi {
            return Err(Error::Schema(format!("model ROI {:?} out of atlas order", r.roi)));
        }
        let mut coefficients = [0.0; ResponseCategory::COUNT];
        for c in ResponseCategory::ALL {
            coefficients[c.index()] = *r.coefficients.get(c.label()).ok_or_else(|| {
                Error::Schema(format!("ROI {}: missing coefficient for category {}", r.roi, c.label()))
            })?;
        }
        if let Some(extra) = r.coefficients.keys().find(|k| ResponseCategory::from_label(k).is_none()) {
            return Err(Error::Schema(format!("ROI {}: unknown category {extra:?}", r.roi)));
        }
        rois.push(RoiFit { intercept: r.intercept, coefficients });
    }
    Ok(SymptomToLesionModel { task: f.task, atlas, rois, diagnostics: f.diagnostics })
}

pub fn read_model(path: &Path) -> Result<SymptomToLesionModel> {
    read_model_str(&read_text(path)?)
}

// ---- condition responses ---------------------------------------------------

pub const CONDITION_COLUMNS: [&str; 6] = ["condition_id", "layer", "pct", "sigma", "item_id", "response"];

pub fn conditions_csv(results: &[ConditionResult]) -> String {
    let mut out = CsvOut::new(&CONDITION_COLUMNS);
    for r in results {
        let id = r.spec.condition_id();
        let (layer, pct) = (r.spec.layer.to_string(), r.spec.pct.to_string());
        let sigma = format!("{:.1}", r.spec.sigma());
        for resp in &r.responses {
            out.row(&[
                id.as_str(),
                &layer,
                &pct,
                &sigma,
                &resp.item_id,
                resp.response.as_deref().unwrap_or(""),
            ]);
        }
    }
    out.finish()
}

/// One row of a condition responses file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionRow {
    pub condition_id: String,
    pub spec: PerturbationSpec,
    pub item_id: String,
    pub response: Option<String>,
}

/// Read condition responses. The seed is not stored in the file and is set to `seed`.
pub fn read_conditions_str(text: &str, name: &str, seed: u64) -> Result<Vec<ConditionRow>> {
    let t = Table::parse(text, name)?;
    let c: Vec<usize> = CONDITION_COLUMNS.iter().map(|n| t.col(n)).collect::<Result<_>>()?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in t.rows() {
        let id = row.nonempty(c[0])?.to_string();
        let key = condition_id::parse(&id).map_err(|e| row.err(e.to_string()))?;
        let layer = row.u32(c[1])?;
        let pct = row.u32(c[2])?;
        let sigma = row.f64(c[3])?;
        let spec = PerturbationSpec::new(layer, pct, sigma, seed).map_err(|e| row.err(e.to_string()))?;
        if (spec.layer, spec.pct, spec.sigma_tenths) != (key.layer, key.pct, key.sigma_tenths) {
            return Err(row.err(format!("condition_id {id} disagrees with layer/pct/sigma columns")));
        }
        let item_id = row.nonempty(c[4])?.to_string();
        if !seen.insert((id.clone(), item_id.clone())) {
            return Err(row.err(format!("duplicate item {item_id:?} for {id}")));
        }
        let response = row.get(c[5]);
        out.push(ConditionRow {
            condition_id: id,
            spec,
            item_id,
            response: (!response.is_empty()).then(|| response.to_string()),
        });
    }
    Ok(out)
}

pub fn read_conditions(path: &Path, seed: u64) -> Result<Vec<ConditionRow>> {
    read_conditions_str(&read_text(path)?, &path.display().to_string(), seed)
}

// ---- stage reports ---------------------------------------------------------

pub const FILTER_COLUMNS: [&str; 6] = ["condition_id", "kept", "reasons", "error_mass", "nr_prop", "entropy_bits"];

pub fn filter_report_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a DegeneracyVerdict)>) -> String {
    let mut out = CsvOut::new(&FILTER_COLUMNS);
    for (id, v) in rows {
        out.row(&[
            id.to_string(),
            v.keep.to_string(),
            v.reasons_label(),
            fmt_f64(v.error_mass),
            fmt_f64(v.nr_proportion),
            fmt_f64(v.error_entropy_bits),
        ]);
    }
    out.finish()
}

pub const VALIDATION_COLUMNS: [&str; 7] = ["condition_id", "matched_r", "null_mean", "null_sd", "p_perm", "delta_r", "defined"];

pub fn validation_csv(records: &[ValidationRecord]) -> String {
    let mut out = CsvOut::new(&VALIDATION_COLUMNS);
    for r in records {
        let num = |v: f64| if r.defined { fmt_f64(v) } else { String::new() };
        out.row(&[
            r.condition_id.clone(),
            fmt_opt(r.matched_r),
            num(r.null_mean),
            num(r.null_sd),
            fmt_opt(r.p_perm),
            fmt_opt(r.delta_r),
            r.defined.to_string(),
        ]);
    }
    out.finish()
}

/// Per-condition rows of a validation CSV: id, matched r, null mean, p, delta, defined.
pub type ValidationRow = (String, Option<f64>, Option<f64>, Option<f64>, Option<f64>, bool);

pub fn read_validation_str(text: &str, name: &str) -> Result<Vec<ValidationRow>> {
    let t = Table::parse(text, name)?;
    t.expect_columns(&VALIDATION_COLUMNS)?;
    t.rows()
        .map(|row| {
            Ok((
                row.nonempty(0)?.to_string(),
                row.opt_f64(1)?,
                row.opt_f64(2)?,
                row.opt_f64(4)?,
                row.opt_f64(5)?,
                row.bool(6)?,
            ))
        })
        .collect()
}

pub fn matches_csv(rows: &[(ValidationRecord, Vec<Match>)]) -> String {
    let mut out = CsvOut::new(&["condition_id", "rank", "subject_id", "distance"]);
    for (rec, matches) in rows {
        for (rank, m) in matches.iter().enumerate() {
            out.row(&[rec.condition_id.clone(), (rank + 1).to_string(), m.id.clone(), fmt_f64(m.distance)]);
        }
    }
    out.finish()
}

pub fn stream_index_csv(report: &DualStreamReport) -> String {
    let mut out = CsvOut::new(&["condition_id", "semantic_phonemic_score", "stream_index", "group"]);
    for r in &report.records {
        let group = if report.semantic_ids.contains(&r.condition_id) {
            "semantic"
        } else if report.phonemic_ids.contains(&r.condition_id) {
            "phonemic"
        } else {
            ""
        };
        out.row(&[
            r.condition_id.clone(),
            fmt_f64(r.semantic_phonemic_score),
            fmt_f64(r.stream_index),
            group.to_string(),
        ]);
    }
    out.finish()
}

pub const LSM_COLUMNS: [&str; 5] = ["category", "roi", "slope", "p_perm", "q_fdr"];

pub fn lsm_csv(result: &LsmResult) -> String {
    let mut out = CsvOut::new(&LSM_COLUMNS);
    for c in &result.cells {
        out.row(&[
            c.category.label().to_string(),
            c.roi.clone(),
            fmt_opt(c.slope),
            fmt_opt(c.p_perm),
            fmt_opt(c.q_fdr),
        ]);
    }
    out.finish()
}

/// Read an LSM CSV back. The t statistic is not stored and reads as `None`.
pub fn read_lsm_str(text: &str, name: &str, n_perm: usize) -> Result<LsmResult> {
    let t = Table::parse(text, name)?;
    t.expect_columns(&LSM_COLUMNS)?;
    let cells = t
        .rows()
        .map(|row| {
            let label = row.nonempty(0)?;
            let category = ResponseCategory::from_label(label)
                .ok_or_else(|| row.err(format!("unknown category {label:?}")))?;
            Ok(LsmCell {
                category,
                roi: row.nonempty(1)?.to_string(),
                slope: row.opt_f64(2)?,
                t: None,
                p_perm: row.opt_f64(3)?,
                q_fdr: row.opt_f64(4)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(LsmResult { task: None, n_perm, tail: "negative".into(), cells })
}

pub fn loo_csv(report: &LooReport) -> String {
    let mut out = CsvOut::new(&["roi", "r2", "r"]);
    for r in &report.rois {
        out.row(&[r.roi.clone(), fmt_opt(r.r2), fmt_opt(r.r)]);
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lesion_model::{Roi, Stream};

    fn atlas() -> RoiAtlas {
        RoiAtlas::new(
            "t",
            vec![
                Roi { name: "A".into(), stream: Stream::Dorsal },
                Roi { name: "B".into(), stream: Stream::Ventral },
            ],
        )
        .unwrap()
    }

    #[test]
    fn lesions_round_trip_exactly() {
        let maps = vec![
            ("s1".to_string(), LesionMap::new(vec![0.1, 1.0 / 3.0]).unwrap()),
            ("s2".to_string(), LesionMap::new(vec![0.0, 0.987654321012345]).unwrap()),
        ];
        let text = maps_csv("subject_id", &atlas(), maps.iter().map(|(i, m)| (i.as_str(), m)));
        assert_eq!(read_maps_str(&text, "x", "subject_id", &atlas()).unwrap(), maps);
    }

    #[test]
    fn out_of_range_load_reports_row() {
        let text = "subject_id,A,B\ns1,0.1,0.2\ns2,1.2,0.0\n";
        match read_maps_str(text, "lesions.csv", "subject_id", &atlas()) {
            Err(Error::Row { row, message, .. }) => {
                assert_eq!(row, 3);
                assert!(message.contains("1.2"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_and_missing_columns() {
        let dup = "subject_id,A,B\ns1,0.1,0.2\ns1,0.1,0.2\n";
        assert!(matches!(read_maps_str(dup, "x", "subject_id", &atlas()), Err(Error::Row { row: 3, .. })));
        let missing = "subject_id,A\ns1,0.1\n";
        assert!(matches!(read_maps_str(missing, "x", "subject_id", &atlas()), Err(Error::Schema(_))));
        assert!(matches!(read_responses_str("subject_id,task\n", "r"), Err(Error::Schema(_))));
    }

    #[test]
    fn crlf_and_lf_parse_identically() {
        let lf = "subject_id,task,item_id,target,response\ns1,PNT,i1,cat,dog\ns1,PNT,i2,dog,\n";
        let crlf = lf.replace('\n', "\r\n");
        let a = read_responses_str(lf, "a").unwrap();
        assert_eq!(a, read_responses_str(&crlf, "b").unwrap());
        assert_eq!(a[1].response, None);
        assert_eq!(read_responses_str(&responses_csv(&a), "c").unwrap(), a);
    }

    #[test]
    fn profiles_round_trip_and_validate_sums() {
        let p = ErrorProfile::from_counts([5, 3, 0, 0, 0, 0, 0, 2], Task::Pnt).unwrap();
        let text = profiles_csv([("s1", &p)]);
        assert_eq!(read_profiles_str(&text, "p").unwrap(), vec![("s1".to_string(), p)]);
        let bad = text.replace("s1,PNT,10", "s1,PNT,11");
        assert!(matches!(read_profiles_str(&bad, "p"), Err(Error::Row { row: 2, .. })));
    }

    #[test]
    fn model_round_trip_and_category_check() {
        let m = SymptomToLesionModel {
            task: Task::Wabr,
            atlas: atlas(),
            rois: vec![
                RoiFit { intercept: 0.1, coefficients: [0.0, 0.8, 0.1, 0.2, 0.3, 0.4, 0.5, 1.0 / 3.0] },
                RoiFit { intercept: -0.2, coefficients: [0.0; 8] },
            ],
            diagnostics: FitDiagnostics {
                n_subjects: 10,
                n_parameters: 8,
                rank: 8,
                rank_deficient: false,
                reference_category: ResponseCategory::Correct,
            },
        };
        let text = model_json(&m).unwrap();
        assert_eq!(read_model_str(&text).unwrap(), m);
        let broken = text.replacen("\"semantic\"", "\"semantics\"", 1);
        assert!(matches!(read_model_str(&broken), Err(Error::Schema(_))));
    }

    #[test]
    fn items_bundled_parse() {
        let items = crate::perturb::bundled_items();
        assert_eq!(items.len(), 40);
        assert_eq!(read_items_str(&items_csv(&items), "x").unwrap(), items);
    }

    #[test]
    fn quoted_fields() {
        let mut out = CsvOut::new(&["a", "b"]);
        out.row(&["x,y", "say \"hi\""]);
        let t = Table::parse(&out.finish(), "q").unwrap();
        let row = t.rows().next().unwrap();
        assert_eq!(row.get(0), "x,y");
        assert_eq!(row.get(1), "say \"hi\"");
    }
}
