//! Lesion-symptom mapping on the cohort: mass-univariate permutation
//! regression, forward-backward stepwise selection, and cross-task rank
//! agreement.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::lesion_model::{LesionMap, RoiAtlas};
use crate::rng::{StreamKey, TAG_LSM};
use crate::stats::{self, SpearmanTest};
use crate::taxonomy::{ErrorProfile, ResponseCategory, Task};
use crate::{Error, Result};

pub const DEFAULT_N_PERM: usize = 400;
pub const DEFAULT_P_ENTER: f64 = 0.05;
pub const DEFAULT_P_REMOVE: f64 = 0.10;
pub const MIN_SUBJECTS: usize = 10;

/// Standardize to mean 0 and sample SD 1. `None` without spread.
pub fn zscore(values: &[f64]) -> Option<Vec<f64>> {
    if values.len() < 2 {
        return None;
    }
    let m = stats::mean(values);
    let sd = stats::std_dev(values);
    (sd > 0.0).then(|| values.iter().map(|v| (v - m) / sd).collect())
}

/// One behavioral measure per category, z-scored across subjects.
pub struct Behaviors {
    pub measures: Vec<(ResponseCategory, Vec<f64>)>,
    /// Categories dropped because every subject had the same count.
    pub skipped: Vec<ResponseCategory>,
}

/// Z-scored category counts. Counts rather than proportions, as collected.
pub fn zscored_counts(profiles: &[ErrorProfile]) -> Behaviors {
    let mut measures = Vec::new();
    let mut skipped = Vec::new();
    for c in ResponseCategory::ALL {
        let raw: Vec<f64> = profiles.iter().map(|p| p.count(c) as f64).collect();
        match zscore(&raw) {
            Some(z) => measures.push((c, z)),
            None => skipped.push(c),
        }
    }
    Behaviors { measures, skipped }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsmCell {
    pub category: ResponseCategory,
    pub roi: String,
    /// OLS slope of behavior on lesion load; `None` for a constant ROI.
    pub slope: Option<f64>,
    pub t: Option<f64>,
    /// One-tailed permutation p for a negative association.
    pub p_perm: Option<f64>,
    /// BH-adjusted within the category over defined ROIs.
    pub q_fdr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsmResult {
    pub task: Option<Task>,
    pub n_perm: usize,
    pub tail: String,
    pub cells: Vec<LsmCell>,
}

impl LsmResult {
    pub fn cells_for(&self, category: ResponseCategory) -> impl Iterator<Item = &LsmCell> {
        self.cells.iter().filter(move |c| c.category == category)
    }
}

fn slope_of(x: &[f64], y: &[f64]) -> f64 {
    let mx = stats::mean(x);
    let my = stats::mean(y);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

fn t_of(x: &[f64], y: &[f64]) -> Option<f64> {
    let r = stats::pearson(x, y)?;
    let df = x.len() as f64 - 2.0;
    if r.abs() >= 1.0 {
        return Some(f64::INFINITY.copysign(r));
    }
    Some(r * (df / (1.0 - r * r)).sqrt())
}

fn cell_stats(category: ResponseCategory, roi: &str, x: &[f64], y: &[f64], n_perm: usize, seed: u64) -> LsmCell {
    if x.iter().all(|&v| v == x[0]) {
        return LsmCell { category, roi: roi.into(), slope: None, t: None, p_perm: None, q_fdr: None };
    }
    let slope = slope_of(x, y);
    // Canonical pair order, so relabeling subjects cannot change the draws.
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut rng = StreamKey::new(TAG_LSM).u64(seed).str(category.label()).str(roi).stream();
    let mut le = 0usize;
    for _ in 0..n_perm {
        rng.shuffle(&mut ys);
        le += (slope_of(&xs, &ys) <= slope) as usize;
    }
    LsmCell {
        category,
        roi: roi.into(),
        slope: Some(slope),
        t: t_of(x, y),
        p_perm: Some((1 + le) as f64 / (1 + n_perm) as f64),
        q_fdr: None,
    }
}

fn roi_columns(lesions: &[LesionMap], atlas: &RoiAtlas) -> Result<Vec<Vec<f64>>> {
    if let Some(m) = lesions.iter().find(|m| m.len() != atlas.len()) {
        return Err(Error::Schema(format!("lesion map has {} ROIs, atlas {}", m.len(), atlas.len())));
    }
    Ok((0..atlas.len()).map(|k| lesions.iter().map(|m| m.loads()[k]).collect()).collect())
}

/// Permutation regression of every measure on every ROI.
pub fn mass_univariate(behaviors: &Behaviors, lesions: &[LesionMap], atlas: &RoiAtlas, n_perm: usize, seed: u64) -> Result<LsmResult> {
    let n = lesions.len();
    if n < MIN_SUBJECTS {
        return Err(Error::InvalidInput(format!("need at least {MIN_SUBJECTS} subjects, got {n}")));
    }
    if let Some((c, _)) = behaviors.measures.iter().find(|(_, v)| v.len() != n) {
        return Err(Error::Schema(format!("{c} has a different number of subjects than the lesion maps")));
    }
    let columns = roi_columns(lesions, atlas)?;
    let jobs: Vec<(usize, usize)> = (0..behaviors.measures.len())
        .flat_map(|b| (0..atlas.len()).map(move |k| (b, k)))
        .collect();
    let mut cells: Vec<LsmCell> = jobs
        .par_iter()
        .map(|&(b, k)| {
            let (c, y) = &behaviors.measures[b];
            cell_stats(*c, &atlas.rois()[k].name, &columns[k], y, n_perm, seed)
        })
        .collect();
    for chunk in cells.chunks_mut(atlas.len()) {
        let defined: Vec<usize> = (0..chunk.len()).filter(|&i| chunk[i].p_perm.is_some()).collect();
        let p: Vec<f64> = defined.iter().map(|&i| chunk[i].p_perm.unwrap()).collect();
        for (&i, q) in defined.iter().zip(stats::benjamini_hochberg(&p)) {
            chunk[i].q_fdr = Some(q);
        }
    }
    Ok(LsmResult { task: None, n_perm, tail: "negative".into(), cells })
}

// ---- stepwise --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPredictor {
    pub roi: String,
    pub coefficient: f64,
    /// Zero-based position in the order predictors entered.
    pub entry_order: usize,
    pub entry_p: f64,
    /// Partial-F p in the final model.
    pub final_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepwiseModel {
    pub category: Option<ResponseCategory>,
    pub p_enter: f64,
    pub p_remove: f64,
    pub intercept: f64,
    pub selected: Vec<SelectedPredictor>,
    pub skipped_collinear: Vec<String>,
    pub iterations: usize,
}

struct Ols {
    rss: f64,
    beta: DVector<f64>,
}

fn ols(y: &[f64], columns: &[&[f64]]) -> Ols {
    let n = y.len();
    let x = DMatrix::from_fn(n, columns.len() + 1, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] });
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let tol = svd.singular_values.max() * (n.max(columns.len() + 1) as f64) * f64::EPSILON;
    let beta = svd.solve(&yv, tol).expect("U and V were computed");
    let resid = &yv - &x * &beta;
    Ols { rss: resid.norm_squared(), beta }
}

fn f_sf(f: f64, df2: f64) -> f64 {
    if f.is_infinite() {
        return 0.0;
    }
    if !(f > 0.0) {
        return 1.0;
    }
    FisherSnedecor::new(1.0, df2).map(|d| d.sf(f)).unwrap_or(1.0)
}

/// Partial-F p of adding one column to a model with `rss_small` and `q` predictors.
fn partial_p(rss_small: f64, rss_big: f64, n: usize, q_big: usize) -> f64 {
    let df2 = n as f64 - q_big as f64 - 1.0;
    if df2 <= 0.0 {
        return 1.0;
    }
    let drop = (rss_small - rss_big).max(0.0);
    if rss_big <= 1e-300 {
        return if drop > 0.0 { 0.0 } else { 1.0 };
    }
    f_sf(drop / (rss_big / df2), df2)
}

/// True when `x` is (numerically) a linear combination of the retained columns.
fn collinear(x: &[f64], retained: &[&[f64]]) -> bool {
    let centered: f64 = {
        let m = stats::mean(x);
        x.iter().map(|v| (v - m) * (v - m)).sum()
    };
    if centered <= 0.0 {
        return true;
    }
    ols(x, retained).rss <= 1e-10 * centered
}

/// Forward-backward stepwise selection of ROI predictors for one measure.
pub fn stepwise(y: &[f64], candidates: &[(String, Vec<f64>)], p_enter: f64, p_remove: f64) -> Result<StepwiseModel> {
    let n = y.len();
    if n < MIN_SUBJECTS {
        return Err(Error::InvalidInput(format!("need at least {MIN_SUBJECTS} subjects, got {n}")));
    }
    if candidates.iter().any(|(_, x)| x.len() != n) {
        return Err(Error::Schema("candidate length differs from the behavior".into()));
    }
    if p_enter > p_remove {
        return Err(Error::Config(format!("p_enter {p_enter} must not exceed p_remove {p_remove}")));
    }
    let mut in_model: Vec<usize> = Vec::new();
    let mut entry: Vec<(usize, usize, f64)> = Vec::new();
    let mut skipped = std::collections::BTreeSet::new();
    let mut entered = 0usize;
    let guard = 10 * candidates.len() + 10;
    let mut iterations = 0;
    let cols = |idx: &[usize]| -> Vec<&[f64]> { idx.iter().map(|&i| candidates[i].1.as_slice()).collect() };

    loop {
        iterations += 1;
        if iterations > guard {
            break;
        }
        let mut changed = false;
        let base = ols(y, &cols(&in_model));
        let mut best: Option<(f64, usize)> = None;
        for j in 0..candidates.len() {
            if in_model.contains(&j) {
                continue;
            }
            if collinear(&candidates[j].1, &cols(&in_model)) {
                skipped.insert(candidates[j].0.clone());
                continue;
            }
            let mut with = in_model.clone();
            with.push(j);
            let p = partial_p(base.rss, ols(y, &cols(&with)).rss, n, with.len());
            if best.is_none_or(|(bp, _)| p < bp) {
                best = Some((p, j));
            }
        }
        if let Some((p, j)) = best.filter(|&(p, _)| p < p_enter) {
            in_model.push(j);
            entry.push((j, entered, p));
            entered += 1;
            changed = true;
        }

        let full = ols(y, &cols(&in_model));
        let mut worst: Option<(f64, usize)> = None;
        for (pos, _) in in_model.iter().enumerate() {
            let mut without = in_model.clone();
            without.remove(pos);
            let p = partial_p(ols(y, &cols(&without)).rss, full.rss, n, in_model.len());
            if worst.is_none_or(|(wp, _)| p > wp) {
                worst = Some((p, pos));
            }
        }
        if let Some((_, pos)) = worst.filter(|&(p, _)| p > p_remove) {
            let j = in_model.remove(pos);
            entry.retain(|e| e.0 != j);
            changed = true;
        }
        if !changed {
            break;
        }
    }

    let full = ols(y, &cols(&in_model));
    let selected = in_model
        .iter()
        .enumerate()
        .map(|(pos, &j)| {
            let mut without = in_model.clone();
            without.remove(pos);
            let e = entry.iter().find(|e| e.0 == j).expect("entered predictors are tracked");
            SelectedPredictor {
                roi: candidates[j].0.clone(),
                coefficient: full.beta[pos + 1],
                entry_order: e.1,
                entry_p: e.2,
                final_p: partial_p(ols(y, &cols(&without)).rss, full.rss, n, in_model.len()),
            }
        })
        .collect();
    Ok(StepwiseModel {
        category: None,
        p_enter,
        p_remove,
        intercept: full.beta[0],
        selected,
        skipped_collinear: skipped.into_iter().collect(),
        iterations,
    })
}

/// Stepwise models for every measure with the atlas ROIs as candidates.
pub fn stepwise_all(behaviors: &Behaviors, lesions: &[LesionMap], atlas: &RoiAtlas, p_enter: f64, p_remove: f64) -> Result<Vec<StepwiseModel>> {
    let columns = roi_columns(lesions, atlas)?;
    let candidates: Vec<(String, Vec<f64>)> =
        atlas.rois().iter().map(|r| r.name.clone()).zip(columns).collect();
    behaviors
        .measures
        .par_iter()
        .map(|(c, y)| {
            let mut m = stepwise(y, &candidates, p_enter, p_remove)?;
            m.category = Some(*c);
            Ok(m)
        })
        .collect()
}

// ---- cross-task correspondence ---------------------------------------------

/// How an ROI's association strength is scored for ranking.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrengthMetric {
    /// `|slope| * -log10(p)`, positive for the tested negative direction and
    /// negative otherwise.
    #[default]
    SignedSlopeLogP,
    /// `|t|`.
    AbsT,
}

pub fn strength(cell: &LsmCell, metric: StrengthMetric) -> Option<f64> {
    match metric {
        StrengthMetric::SignedSlopeLogP => {
            let (s, p) = (cell.slope?, cell.p_perm?);
            Some(-s * -p.log10())
        }
        StrengthMetric::AbsT => cell.t.map(f64::abs),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossTaskRow {
    pub category: ResponseCategory,
    pub n_rois: usize,
    pub test: SpearmanTest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossTaskReport {
    pub metric: StrengthMetric,
    pub rows: Vec<CrossTaskRow>,
    pub skipped: Vec<String>,
}

/// Spearman agreement between two tasks' ROI strength rankings, per category.
pub fn cross_task_rank_correspondence(a: &LsmResult, b: &LsmResult, metric: StrengthMetric) -> CrossTaskReport {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for c in ResponseCategory::ALL {
        let (xa, xb): (Vec<&LsmCell>, Vec<&LsmCell>) = (a.cells_for(c).collect(), b.cells_for(c).collect());
        if xa.is_empty() || xb.is_empty() {
            skipped.push(format!("{c}: absent from one task"));
            continue;
        }
        let mut sa = Vec::new();
        let mut sb = Vec::new();
        for cell in &xa {
            let Some(other) = xb.iter().find(|o| o.roi == cell.roi) else { continue };
            if let (Some(u), Some(v)) = (strength(cell, metric), strength(other, metric)) {
                sa.push(u);
                sb.push(v);
            }
        }
        match stats::spearman_test(&sa, &sb) {
            Some(test) => rows.push(CrossTaskRow { category: c, n_rois: sa.len(), test }),
            None => skipped.push(format!("{c}: fewer than three shared ROIs or no rank spread")),
        }
    }
    CrossTaskReport { metric, rows, skipped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lesion_model::{Roi, Stream};
    use crate::rng::StreamKey;
    use proptest::prelude::*;

    fn atlas(k: usize) -> RoiAtlas {
        RoiAtlas::new(
            "t",
            (0..k).map(|i| Roi { name: format!("r{i}"), stream: Stream::Dorsal }).collect(),
        )
        .unwrap()
    }

    fn random_maps(n: usize, k: usize, seed: u64) -> Vec<LesionMap> {
        let mut rng = StreamKey::new("test/maps").u64(seed).stream();
        (0..n).map(|_| LesionMap::new((0..k).map(|_| rng.uniform_open()).collect()).unwrap()).collect()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = StreamKey::new("test/noise").u64(seed).stream();
        (0..n).map(|_| rng.standard_normal()).collect()
    }

    #[test]
    fn zscore_has_unit_sd() {
        let z = zscore(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(stats::mean(&z).abs() < 1e-15);
        assert!((stats::std_dev(&z) - 1.0).abs() < 1e-15);
        assert!(zscore(&[2.0, 2.0]).is_none());
    }

    #[test]
    fn perfect_negative_association() {
        let maps = random_maps(30, 3, 1);
        let y: Vec<f64> = maps.iter().map(|m| -m.loads()[1]).collect();
        let b = Behaviors { measures: vec![(ResponseCategory::Semantic, y)], skipped: vec![] };
        let r = mass_univariate(&b, &maps, &atlas(3), 400, 7).unwrap();
        let cell = &r.cells[1];
        assert!((cell.slope.unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cell.p_perm.unwrap(), 1.0 / 401.0);
        for c in &r.cells {
            assert!(c.q_fdr.unwrap() >= c.p_perm.unwrap() - 1e-15);
        }
    }

    #[test]
    fn constant_roi_is_excluded_from_fdr() {
        let mut maps = random_maps(12, 3, 2);
        for m in maps.iter_mut() {
            let mut v = m.loads().to_vec();
            v[0] = 0.0;
            *m = LesionMap::new(v).unwrap();
        }
        let b = Behaviors { measures: vec![(ResponseCategory::Formal, noise(12, 3))], skipped: vec![] };
        let r = mass_univariate(&b, &maps, &atlas(3), 50, 1).unwrap();
        assert!(r.cells[0].p_perm.is_none() && r.cells[0].q_fdr.is_none());
        assert!(r.cells[1].q_fdr.is_some());
    }

    #[test]
    fn bh_example_rejects_all_five() {
        assert!(stats::bh_reject(&[0.01, 0.02, 0.03, 0.04, 0.05], 0.05).iter().all(|&r| r));
    }

    #[test]
    fn null_discoveries_are_rare() {
        // 20 independent null cohorts, 10 ROIs each
        let mut discoveries = 0;
        let mut tests = 0;
        for s in 0..20 {
            let maps = random_maps(40, 10, 100 + s);
            let b = Behaviors { measures: vec![(ResponseCategory::Mixed, noise(40, 200 + s))], skipped: vec![] };
            let r = mass_univariate(&b, &maps, &atlas(10), 200, s).unwrap();
            discoveries += r.cells.iter().filter(|c| c.q_fdr.unwrap() < 0.05).count();
            tests += r.cells.len();
        }
        let rate = discoveries as f64 / tests as f64;
        // binomial(200, 0.05) mean 10, 3 SD above is about 19.2
        assert!(rate <= 0.05 + 3.0 * (0.05f64 * 0.95 / tests as f64).sqrt(), "rate {rate}");
    }

    #[test]
    fn planted_single_predictor_is_selected() {
        let maps = random_maps(60, 8, 5);
        let cands: Vec<(String, Vec<f64>)> = (0..8)
            .map(|k| (format!("r{k}"), maps.iter().map(|m| m.loads()[k]).collect()))
            .collect();
        let e = noise(60, 6);
        let y: Vec<f64> = (0..60).map(|i| 2.0 * cands[3].1[i] + 0.01 * e[i]).collect();
        let m = stepwise(&y, &cands, 0.05, 0.10).unwrap();
        assert_eq!(m.selected.len(), 1, "{m:?}");
        assert_eq!(m.selected[0].roi, "r3");
        assert!((m.selected[0].coefficient - 2.0).abs() < 0.05);
    }

    #[test]
    fn duplicated_roi_is_never_selected_twice() {
        let maps = random_maps(40, 4, 8);
        let mut cands: Vec<(String, Vec<f64>)> = (0..4)
            .map(|k| (format!("r{k}"), maps.iter().map(|m| m.loads()[k]).collect()))
            .collect();
        cands.push(("r2_copy".into(), cands[2].1.clone()));
        let e = noise(40, 9);
        let y: Vec<f64> = (0..40).map(|i| cands[2].1[i] + 0.05 * e[i]).collect();
        let m = stepwise(&y, &cands, 0.05, 0.10).unwrap();
        let names: Vec<&str> = m.selected.iter().map(|s| s.roi.as_str()).collect();
        assert_eq!(names.iter().filter(|n| n.starts_with("r2")).count(), 1, "{names:?}");
        assert_eq!(m.skipped_collinear, vec!["r2_copy".to_string()]);
    }

    /// Fraction of empty models on pure noise with `k` candidates.
    fn empty_rate(k: usize, reps: u64) -> f64 {
        let mut empty = 0;
        for s in 0..reps {
            let maps = random_maps(40, k, 1000 + s);
            let cands: Vec<(String, Vec<f64>)> = (0..k)
                .map(|j| (format!("r{j}"), maps.iter().map(|m| m.loads()[j]).collect()))
                .collect();
            let m = stepwise(&noise(40, 5000 + s), &cands, 0.05, 0.10).unwrap();
            empty += m.selected.is_empty() as u32;
        }
        empty as f64 / reps as f64
    }

    #[test]
    fn null_selection_single_candidate() {
        // P(empty) is exactly 0.95 for one candidate; allow three binomial SD
        let rate = empty_rate(1, 1000);
        assert!(rate >= 0.95 - 3.0 * (0.95f64 * 0.05 / 1000.0).sqrt(), "rate {rate}");
    }

    #[test]
    fn null_selection_many_candidates_matches_familywise_rate() {
        // forward entry tests the minimum of k p-values, so P(empty) = 0.95^k
        let rate = empty_rate(6, 400);
        let expected = 0.95f64.powi(6);
        assert!((rate - expected).abs() < 3.0 * (expected * (1.0 - expected) / 400.0).sqrt(), "rate {rate}");
    }

    #[test]
    fn spearman_identity_and_reversal() {
        let cell = |c, roi: &str, slope: f64| LsmCell {
            category: c,
            roi: roi.into(),
            slope: Some(slope),
            t: Some(slope * 3.0),
            p_perm: Some(0.01),
            q_fdr: Some(0.02),
        };
        let cats = ResponseCategory::Semantic;
        let a = LsmResult {
            task: None,
            n_perm: 1,
            tail: "negative".into(),
            cells: (0..6).map(|i| cell(cats, &format!("r{i}"), -(i as f64))).collect(),
        };
        let mut b = a.clone();
        let r = cross_task_rank_correspondence(&a, &b, StrengthMetric::SignedSlopeLogP);
        assert_eq!(r.rows[0].test.rho, 1.0);
        for c in b.cells.iter_mut() {
            c.slope = Some(-5.0 - c.slope.unwrap());
        }
        let r = cross_task_rank_correspondence(&a, &b, StrengthMetric::SignedSlopeLogP);
        assert_eq!(r.rows[0].test.rho, -1.0);
        assert_eq!(r.skipped.len(), ResponseCategory::COUNT - 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn permutation_p_is_relabeling_invariant(seed in 0u64..500, rot in 1usize..19) {
            let maps = random_maps(20, 2, seed);
            let y = noise(20, seed + 1);
            let b = Behaviors { measures: vec![(ResponseCategory::Nonword, y.clone())], skipped: vec![] };
            let r1 = mass_univariate(&b, &maps, &atlas(2), 100, 3).unwrap();
            let mut m2 = maps.clone();
            let mut y2 = y.clone();
            m2.rotate_left(rot);
            y2.rotate_left(rot);
            let b2 = Behaviors { measures: vec![(ResponseCategory::Nonword, y2)], skipped: vec![] };
            let r2 = mass_univariate(&b2, &m2, &atlas(2), 100, 3).unwrap();
            for (c1, c2) in r1.cells.iter().zip(&r2.cells) {
                prop_assert_eq!(c1.p_perm, c2.p_perm);
            }
        }

        #[test]
        fn stepwise_retains_only_significant(seed in 0u64..500) {
            let maps = random_maps(30, 6, seed);
            let cands: Vec<(String, Vec<f64>)> = (0..6)
                .map(|j| (format!("r{j}"), maps.iter().map(|m| m.loads()[j]).collect()))
                .collect();
            let e = noise(30, seed + 7);
            let y: Vec<f64> = (0..30).map(|i| cands[0].1[i] - 0.5 * cands[4].1[i] + 0.3 * e[i]).collect();
            let m = stepwise(&y, &cands, 0.05, 0.10).unwrap();
            for s in &m.selected {
                prop_assert!(s.final_p <= 0.10);
                prop_assert!(s.entry_p < 0.05);
            }
        }

        #[test]
        fn spearman_self_is_one(v in proptest::collection::vec(-5.0f64..5.0, 3..20)) {
            prop_assume!(v.iter().any(|&x| x != v[0]));
            prop_assert!((stats::spearman(&v, &v).unwrap() - 1.0).abs() < 1e-12);
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            prop_assert!((stats::spearman(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        }
    }
}
