//! Per-ROI linear symptom-to-lesion regression.
//!
//! Profiles live on the simplex, so an intercept plus all category
//! proportions is collinear. We use reference coding: Correct is dropped
//! from the design and its coefficient is reported as zero, which gives the
//! identifiable parameterisation in which a constant target has zero
//! coefficients and a planted `a + b * semantic` rule is recovered as
//! written. Any remaining rank deficiency (e.g. a category that never
//! occurs) is resolved by minimum-norm least squares and flagged.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::stats;
use crate::taxonomy::{ErrorProfile, ResponseCategory, Task};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stream {
    Dorsal,
    Ventral,
    WhiteMatter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub name: String,
    pub stream: Stream,
}

/// Ordered ROI list shared by every lesion map and model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiAtlas {
    pub name: String,
    rois: Vec<Roi>,
}

const BUNDLED_ATLAS: &str = include_str!("../data/atlas.json");

impl RoiAtlas {
    pub fn new(name: impl Into<String>, rois: Vec<Roi>) -> Result<Self> {
        if rois.is_empty() {
            return Err(Error::Config("atlas has no ROIs".into()));
        }
        let mut seen = BTreeSet::new();
        for roi in &rois {
            if roi.name.is_empty() || roi.name.contains(',') {
                return Err(Error::Config(format!("invalid ROI name {:?}", roi.name)));
            }
            if !seen.insert(roi.name.as_str()) {
                return Err(Error::Config(format!("duplicate ROI name {}", roi.name)));
            }
        }
        Ok(RoiAtlas { name: name.into(), rois })
    }

    /// The bundled 24-region left-hemisphere language atlas. The region
    /// list is a best-effort approximation.
    pub fn default_language() -> Self {
        let raw: RoiAtlas = serde_json::from_str(BUNDLED_ATLAS).expect("bundled atlas parses");
        RoiAtlas::new(raw.name, raw.rois).expect("bundled atlas is valid")
    }

    pub fn rois(&self) -> &[Roi] {
        &self.rois
    }

    pub fn len(&self) -> usize {
        self.rois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rois.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.rois.iter().map(|r| r.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.rois.iter().position(|r| r.name == name)
    }

    pub fn indices_of(&self, stream: Stream) -> Vec<usize> {
        (0..self.rois.len()).filter(|&i| self.rois[i].stream == stream).collect()
    }

    /// SHA-256 over `name<TAB>stream<LF>` lines, hex encoded. The atlas
    /// display name is not part of the hash.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for roi in &self.rois {
            h.update(format!("{}\t{:?}\n", roi.name, roi.stream).as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Lesion load per ROI, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionMap {
    loads: Vec<f64>,
}

impl LesionMap {
    pub fn new(loads: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = loads.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("lesion load {v} at ROI {i} outside [0, 1]")));
        }
        Ok(LesionMap { loads })
    }

    pub fn loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    /// Elementwise mean of several maps of equal length.
    pub fn mean_of<'a>(maps: impl IntoIterator<Item = &'a LesionMap>) -> Result<LesionMap> {
        let mut sum: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for m in maps {
            if n == 0 {
                sum = vec![0.0; m.len()];
            } else if m.len() != sum.len() {
                return Err(Error::Schema("lesion maps of different lengths".into()));
            }
            for (s, v) in sum.iter_mut().zip(&m.loads) {
                *s += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::InvalidInput("mean of zero lesion maps".into()));
        }
        Ok(LesionMap { loads: sum.into_iter().map(|s| (s / n as f64).clamp(0.0, 1.0)).collect() })
    }
}

/// Intercept and per-category coefficients for one ROI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiFit {
    pub intercept: f64,
    /// Indexed like [`ResponseCategory::ALL`]; the reference category is 0.
    pub coefficients: [f64; ResponseCategory::COUNT],
}

impl RoiFit {
    pub fn evaluate(&self, proportions: &[f64; ResponseCategory::COUNT]) -> f64 {
        self.intercept
            + self.coefficients.iter().zip(proportions).map(|(c, p)| c * p).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_subjects: usize,
    /// Number of estimated parameters (intercept plus non-reference categories).
    pub n_parameters: usize,
    pub rank: usize,
    pub rank_deficient: bool,
    pub reference_category: ResponseCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomToLesionModel {
    pub task: Task,
    pub atlas: RoiAtlas,
    pub rois: Vec<RoiFit>,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub map: LesionMap,
    /// ROIs whose affine value fell outside `[0, 1]` and was clamped.
    pub clamped: usize,
}

pub const REFERENCE_CATEGORY: ResponseCategory = ResponseCategory::Correct;
pub const MIN_FIT_SUBJECTS: usize = 9;
pub const MIN_LOO_SUBJECTS: usize = 10;

fn design_row(p: &ErrorProfile) -> Vec<f64> {
    let props = p.proportions();
    let mut row = Vec::with_capacity(ResponseCategory::COUNT);
    row.push(1.0);
    for c in ResponseCategory::ALL {
        if c != REFERENCE_CATEGORY {
            row.push(props[c.index()]);
        }
    }
    row
}

fn check_cohort(cohort: &[(ErrorProfile, LesionMap)], atlas: &RoiAtlas, min: usize) -> Result<Task> {
    if cohort.len() < min {
        return Err(Error::InvalidInput(format!(
            "need at least {min} participants, got {}",
            cohort.len()
        )));
    }
    let task = cohort[0].0.task;
    for (i, (p, m)) in cohort.iter().enumerate() {
        if p.task != task {
            return Err(Error::Schema(format!(
                "participant {i} has task {} but the cohort is {task}",
                p.task
            )));
        }
        if m.len() != atlas.len() {
            return Err(Error::Schema(format!(
                "participant {i} lesion map has {} ROIs, atlas has {}",
                m.len(),
                atlas.len()
            )));
        }
    }
    Ok(task)
}

/// Least-squares fit of every ROI at once.
pub fn fit(cohort: &[(ErrorProfile, LesionMap)], atlas: &RoiAtlas) -> Result<SymptomToLesionModel> {
    let task = check_cohort(cohort, atlas, MIN_FIT_SUBJECTS)?;
    Ok(fit_unchecked(cohort, atlas, task))
}

fn fit_unchecked(cohort: &[(ErrorProfile, LesionMap)], atlas: &RoiAtlas, task: Task) -> SymptomToLesionModel {
    let n = cohort.len();
    let p = ResponseCategory::COUNT;
    let x = DMatrix::from_fn(n, p, |i, j| design_row(&cohort[i].0)[j]);
    let y = DMatrix::from_fn(n, atlas.len(), |i, k| cohort[i].1.loads[k]);

    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (n.max(p) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let beta = svd.solve(&y, tol).expect("U and V were computed");

    let rois = (0..atlas.len())
        .map(|k| {
            let mut coefficients = [0.0; ResponseCategory::COUNT];
            let mut j = 1;
            for c in ResponseCategory::ALL {
                if c != REFERENCE_CATEGORY {
                    coefficients[c.index()] = beta[(j, k)];
                    j += 1;
                }
            }
            RoiFit { intercept: beta[(0, k)], coefficients }
        })
        .collect();

    SymptomToLesionModel {
        task,
        atlas: atlas.clone(),
        rois,
        diagnostics: FitDiagnostics {
            n_subjects: n,
            n_parameters: p,
            rank,
            rank_deficient: rank < p,
            reference_category: REFERENCE_CATEGORY,
        },
    }
}

impl SymptomToLesionModel {
    /// Affine evaluation per ROI, clamped to `[0, 1]`.
    pub fn predict(&self, profile: &ErrorProfile) -> Result<Prediction> {
        if profile.task != self.task {
            return Err(Error::Schema(format!(
                "profile task {} does not match model task {}",
                profile.task, self.task
            )));
        }
        let props = profile.proportions();
        let mut clamped = 0;
        let loads = self
            .rois
            .iter()
            .map(|r| {
                let v = r.evaluate(&props);
                if (0.0..=1.0).contains(&v) {
                    v
                } else {
                    clamped += 1;
                    if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }
                }
            })
            .collect();
        Ok(Prediction { map: LesionMap { loads }, clamped })
    }
}

pub fn predict(model: &SymptomToLesionModel, profile: &ErrorProfile) -> Result<Prediction> {
    model.predict(profile)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiLoo {
    pub roi: String,
    /// `None` when the actual loads have zero variance.
    pub r2: Option<f64>,
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub task: Task,
    pub n_subjects: usize,
    pub rois: Vec<RoiLoo>,
}

impl LooReport {
    /// Mean R² over ROIs where it is defined.
    pub fn mean_r2(&self) -> Option<f64> {
        let v: Vec<f64> = self.rois.iter().filter_map(|r| r.r2).collect();
        (!v.is_empty()).then(|| stats::mean(&v))
    }
}

/// Leave-one-out cross-validation with R² pooled over all held-out predictions.
pub fn evaluate_loo(cohort: &[(ErrorProfile, LesionMap)], atlas: &RoiAtlas) -> Result<LooReport> {
    let task = check_cohort(cohort, atlas, MIN_LOO_SUBJECTS)?;
    let n = cohort.len();
    let k = atlas.len();
    let mut predicted = vec![vec![0.0; n]; k];
    let mut train: Vec<(ErrorProfile, LesionMap)> = cohort[1..].to_vec();
    for held in 0..n {
        if held > 0 {
            // Swap the previously held-out subject back in place of this one.
            train[held - 1] = cohort[held - 1].clone();
        }
        let model = fit_unchecked(&train, atlas, task);
        let pred = model.predict(&cohort[held].0)?;
        for (roi, v) in pred.map.loads.iter().enumerate() {
            predicted[roi][held] = *v;
        }
    }
    let rois = (0..k)
        .map(|roi| {
            let actual: Vec<f64> = cohort.iter().map(|(_, m)| m.loads[roi]).collect();
            let mu = stats::mean(&actual);
            let ss_tot: f64 = actual.iter().map(|a| (a - mu).powi(2)).sum();
            let varies = actual.iter().any(|&a| a != actual[0]);
            let (r2, r) = if varies && ss_tot > 0.0 {
                let ss_res: f64 = actual
                    .iter()
                    .zip(&predicted[roi])
                    .map(|(a, p)| (a - p).powi(2))
                    .sum();
                (Some(1.0 - ss_res / ss_tot), stats::pearson(&predicted[roi], &actual))
            } else {
                (None, None)
            };
            RoiLoo { roi: atlas.rois[roi].name.clone(), r2, r }
        })
        .collect();
    Ok(LooReport { task, n_subjects: n, rois })
}
