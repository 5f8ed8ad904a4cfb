//! Matching conditions to behaviorally similar cohort members and testing
//! whether their lesions agree with the predicted maps.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lesion_model::{LesionMap, RoiAtlas, Stream};
use crate::rng::{StreamKey, TAG_DUAL_STREAM, TAG_VALIDATE};
use crate::stats::{self, MannWhitneyTest, WelchTest, WilcoxonTest};
use crate::taxonomy::{ErrorProfile, ResponseCategory};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_N_PERM: usize = 2000;
pub const DEFAULT_TOP_N: usize = 200;
pub const DEFAULT_DUAL_PERM: usize = 50_000;

/// One cohort participant.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortMember {
    pub id: String,
    pub profile: ErrorProfile,
    pub map: LesionMap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Match {
    pub index: usize,
    pub id: String,
    pub distance: f64,
}

fn euclidean(a: &[f64; ResponseCategory::COUNT], b: &[f64; ResponseCategory::COUNT]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The `k` members nearest in raw proportions; ties go to the smaller id.
pub fn match_top_k(profile: &ErrorProfile, cohort: &[CohortMember], k: usize) -> Result<Vec<Match>> {
    if k == 0 || cohort.len() < k {
        return Err(Error::InvalidInput(format!(
            "cannot match {k} of a cohort of {}",
            cohort.len()
        )));
    }
    let target = profile.proportions();
    let mut all: Vec<Match> = cohort
        .iter()
        .enumerate()
        .map(|(index, m)| Match {
            index,
            id: m.id.clone(),
            distance: euclidean(&target, &m.profile.proportions()),
        })
        .collect();
    all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
    all.truncate(k);
    Ok(all)
}

/// How the random baseline is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NullMode {
    /// `n_perm` uniform k-subsets drawn from a stream keyed by (seed, condition id).
    Random { n_perm: usize, seed: u64 },
    /// Every k-subset of the cohort; p is the exact proportion.
    Exhaustive,
}

/// Statistic that `matched_r` must beat to count as exceeding the baseline.
///
/// The median is the default: under exchangeability `matched_r` lands above
/// the null median with probability one half, which the binomial test
/// assumes. Null correlation distributions are usually skewed, so the mean
/// does not have that property.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    NullMean,
    #[default]
    NullMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRecord {
    pub condition_id: String,
    pub matched_r: Option<f64>,
    pub null_mean: f64,
    pub null_sd: f64,
    pub null_median: f64,
    pub exceed_count: usize,
    pub n_null: usize,
    pub p_perm: Option<f64>,
    pub delta_r: Option<f64>,
    pub defined: bool,
}

impl ValidationRecord {
    fn undefined(condition_id: &str) -> Self {
        ValidationRecord {
            condition_id: condition_id.to_string(),
            matched_r: None,
            null_mean: f64::NAN,
            null_sd: f64::NAN,
            null_median: f64::NAN,
            exceed_count: 0,
            n_null: 0,
            p_perm: None,
            delta_r: None,
            defined: false,
        }
    }

    pub fn exceeds(&self, comparator: Comparator) -> Option<bool> {
        let r = self.matched_r?;
        Some(match comparator {
            Comparator::NullMean => r > self.null_mean,
            Comparator::NullMedian => r > self.null_median,
        })
    }
}

fn subset_mean(maps: &[&[f64]], subset: &[usize], buf: &mut [f64]) {
    buf.iter_mut().for_each(|b| *b = 0.0);
    for &i in subset {
        for (b, v) in buf.iter_mut().zip(maps[i]) {
            *b += v;
        }
    }
    let k = subset.len() as f64;
    buf.iter_mut().for_each(|b| *b /= k);
}

fn subset_r(predicted: &[f64], maps: &[&[f64]], subset: &[usize], buf: &mut [f64]) -> f64 {
    subset_mean(maps, subset, buf);
    // a flat subset mean carries no linear association
    stats::pearson(predicted, buf).unwrap_or(0.0)
}

/// Visit every k-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Correlation of the predicted map with the mean matched map, against
/// random k-subsets of the cohort.
pub fn condition_correspondence(
    condition_id: &str,
    predicted: &LesionMap,
    matched: &[&LesionMap],
    cohort_maps: &[&LesionMap],
    null: NullMode,
) -> Result<ValidationRecord> {
    let k = matched.len();
    if k == 0 || cohort_maps.len() < k {
        return Err(Error::InvalidInput(format!(
            "need 1..={} matched maps, got {k}",
            cohort_maps.len()
        )));
    }
    let len = predicted.len();
    if matched.iter().chain(cohort_maps).any(|m| m.len() != len) {
        return Err(Error::Schema("lesion maps do not share one atlas".into()));
    }
    let pred = predicted.loads();
    let maps: Vec<&[f64]> = cohort_maps.iter().map(|m| m.loads()).collect();
    let mut buf = vec![0.0; len];
    let matched_loads: Vec<&[f64]> = matched.iter().map(|m| m.loads()).collect();
    let all: Vec<usize> = (0..k).collect();
    subset_mean(&matched_loads, &all, &mut buf);
    let Some(matched_r) = stats::pearson(pred, &buf) else {
        return Ok(ValidationRecord::undefined(condition_id));
    };

    let mut null_rs = Vec::new();
    match null {
        NullMode::Random { n_perm, seed } => {
            let mut rng = StreamKey::new(TAG_VALIDATE).u64(seed).str(condition_id).stream();
            null_rs.reserve(n_perm);
            for _ in 0..n_perm {
                let subset = rng.sample_prefix(maps.len(), k);
                null_rs.push(subset_r(pred, &maps, &subset, &mut buf));
            }
        }
        NullMode::Exhaustive => {
            for_each_subset(maps.len(), k, |s| null_rs.push(subset_r(pred, &maps, s, &mut buf)));
        }
    }
    let exceed_count = null_rs.iter().filter(|&&r| r >= matched_r).count();
    let n_null = null_rs.len();
    let p_perm = match null {
        NullMode::Random { .. } => (1 + exceed_count) as f64 / (1 + n_null) as f64,
        NullMode::Exhaustive => exceed_count.max(1) as f64 / n_null as f64,
    };
    let null_mean = stats::mean(&null_rs);
    Ok(ValidationRecord {
        condition_id: condition_id.to_string(),
        matched_r: Some(matched_r),
        null_mean,
        null_sd: if n_null > 1 { stats::std_dev(&null_rs) } else { 0.0 },
        null_median: stats::median(&null_rs),
        exceed_count,
        n_null,
        p_perm: Some(p_perm),
        delta_r: Some(matched_r - null_mean),
        defined: true,
    })
}

/// Match and validate every condition. Results follow the input order and
/// do not depend on the number of workers.
pub fn validate_conditions(
    conditions: &[(String, ErrorProfile, LesionMap)],
    cohort: &[CohortMember],
    k: usize,
    n_perm: usize,
    seed: u64,
) -> Result<Vec<(ValidationRecord, Vec<Match>)>> {
    let cohort_maps: Vec<&LesionMap> = cohort.iter().map(|m| &m.map).collect();
    conditions
        .par_iter()
        .map(|(id, profile, predicted)| {
            let matches = match_top_k(profile, cohort, k)?;
            let matched: Vec<&LesionMap> = matches.iter().map(|m| &cohort[m.index].map).collect();
            let rec = condition_correspondence(id, predicted, &matched, &cohort_maps, NullMode::Random { n_perm, seed })?;
            Ok((rec, matches))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationSummary {
    pub n_conditions: usize,
    pub n_defined: usize,
    pub comparator: Comparator,
    pub n_exceed: usize,
    pub proportion_exceed: f64,
    /// One-sided exact binomial tail against one half.
    pub binomial_p: f64,
    /// Conditions with `p_perm < 0.05`.
    pub n_significant: usize,
    pub wilcoxon: WilcoxonTest,
    pub median_delta_r: f64,
    pub mean_delta_r: f64,
}

pub fn population_tests(records: &[ValidationRecord], comparator: Comparator) -> Result<PopulationSummary> {
    let defined: Vec<&ValidationRecord> = records.iter().filter(|r| r.defined).collect();
    if defined.is_empty() {
        return Err(Error::EmptySummary);
    }
    let n = defined.len();
    let n_exceed = defined.iter().filter(|r| r.exceeds(comparator) == Some(true)).count();
    let deltas: Vec<f64> = defined.iter().filter_map(|r| r.delta_r).collect();
    Ok(PopulationSummary {
        n_conditions: records.len(),
        n_defined: n,
        comparator,
        n_exceed,
        proportion_exceed: n_exceed as f64 / n as f64,
        binomial_p: stats::binomial_upper_tail(n_exceed as u64, n as u64, 0.5),
        n_significant: defined.iter().filter(|r| r.p_perm.is_some_and(|p| p < 0.05)).count(),
        wilcoxon: stats::wilcoxon_signed_rank_greater(&deltas),
        median_delta_r: stats::median(&deltas),
        mean_delta_r: stats::mean(&deltas),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamIndexRecord {
    pub condition_id: String,
    pub semantic_phonemic_score: f64,
    pub stream_index: f64,
}

/// Semantic proportion minus Formal plus Nonword.
pub fn semantic_phonemic_score(profile: &ErrorProfile) -> f64 {
    profile.proportion(ResponseCategory::Semantic) - profile.phonemic_proportion()
}

/// Mean ventral load minus mean dorsal load; other ROIs are ignored.
pub fn stream_index(map: &LesionMap, atlas: &RoiAtlas) -> Result<f64> {
    if map.len() != atlas.len() {
        return Err(Error::Schema(format!("map has {} ROIs, atlas {}", map.len(), atlas.len())));
    }
    let mean_over = |s: Stream| -> Result<f64> {
        let idx = atlas.indices_of(s);
        if idx.is_empty() {
            return Err(Error::Config(format!("atlas {} has no {s:?} ROIs", atlas.name)));
        }
        Ok(idx.iter().map(|&i| map.loads()[i]).sum::<f64>() / idx.len() as f64)
    };
    Ok(mean_over(Stream::Ventral)? - mean_over(Stream::Dorsal)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualStreamReport {
    pub top_n: usize,
    pub n_perm: usize,
    pub semantic_ids: Vec<String>,
    pub phonemic_ids: Vec<String>,
    pub semantic_mean: f64,
    pub phonemic_mean: f64,
    /// Semantic-group mean stream index minus phonemic-group mean.
    pub delta: f64,
    /// Share of label permutations with a difference at least `delta`, add-one smoothed.
    pub p_perm: f64,
    /// Same with absolute differences.
    pub p_perm_two_sided: f64,
    pub mann_whitney: MannWhitneyTest,
    pub welch: Option<WelchTest>,
    pub cohens_d: Option<f64>,
    pub records: Vec<StreamIndexRecord>,
}

fn half_difference(values: &[f64], n: usize) -> f64 {
    let a: f64 = values[..n].iter().sum();
    let b: f64 = values[n..].iter().sum();
    a / n as f64 - b / (values.len() - n) as f64
}

/// Compare the stream index of the most semantic and most phonemic conditions.
pub fn dual_stream_analysis(
    conditions: &[(String, ErrorProfile, LesionMap)],
    atlas: &RoiAtlas,
    top_n: usize,
    n_perm: usize,
    seed: u64,
) -> Result<DualStreamReport> {
    if top_n == 0 || conditions.len() < 2 * top_n {
        return Err(Error::InvalidInput(format!(
            "dual-stream analysis needs at least {} conditions, got {}",
            2 * top_n,
            conditions.len()
        )));
    }
    let records: Vec<StreamIndexRecord> = conditions
        .iter()
        .map(|(id, p, m)| {
            Ok(StreamIndexRecord {
                condition_id: id.clone(),
                semantic_phonemic_score: semantic_phonemic_score(p),
                stream_index: stream_index(m, atlas)?,
            })
        })
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..records.len()).collect();
    let by_score = |a: &usize, b: &usize| -> Ordering {
        records[*b]
            .semantic_phonemic_score
            .total_cmp(&records[*a].semantic_phonemic_score)
            .then_with(|| records[*a].condition_id.cmp(&records[*b].condition_id))
    };
    order.sort_by(by_score);
    let semantic: Vec<usize> = order[..top_n].to_vec();
    order.sort_by(|a, b| {
        records[*a]
            .semantic_phonemic_score
            .total_cmp(&records[*b].semantic_phonemic_score)
            .then_with(|| records[*a].condition_id.cmp(&records[*b].condition_id))
    });
    let phonemic: Vec<usize> = order[..top_n].to_vec();

    let sem: Vec<f64> = semantic.iter().map(|&i| records[i].stream_index).collect();
    let pho: Vec<f64> = phonemic.iter().map(|&i| records[i].stream_index).collect();
    let mut pooled: Vec<f64> = sem.iter().chain(&pho).copied().collect();
    let delta = half_difference(&pooled, top_n);

    let mut rng = StreamKey::new(TAG_DUAL_STREAM).u64(seed).u64(top_n as u64).stream();
    let (mut ge, mut ge_abs) = (0usize, 0usize);
    let total = pooled.len();
    for _ in 0..n_perm {
        for i in 0..top_n {
            let j = i + rng.below((total - i) as u64) as usize;
            pooled.swap(i, j);
        }
        let d = half_difference(&pooled, top_n);
        ge += (d >= delta) as usize;
        ge_abs += (d.abs() >= delta.abs()) as usize;
    }

    Ok(DualStreamReport {
        top_n,
        n_perm,
        semantic_ids: semantic.iter().map(|&i| records[i].condition_id.clone()).collect(),
        phonemic_ids: phonemic.iter().map(|&i| records[i].condition_id.clone()).collect(),
        semantic_mean: stats::mean(&sem),
        phonemic_mean: stats::mean(&pho),
        delta,
        p_perm: (1 + ge) as f64 / (1 + n_perm) as f64,
        p_perm_two_sided: (1 + ge_abs) as f64 / (1 + n_perm) as f64,
        mann_whitney: stats::mann_whitney_greater(&sem, &pho),
        welch: stats::welch_t_greater(&sem, &pho),
        cohens_d: stats::cohens_d(&sem, &pho),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lesion_model::Roi;
    use crate::taxonomy::Task;
    use proptest::prelude::*;

    fn profile(counts: [u32; 8]) -> ErrorProfile {
        ErrorProfile::from_counts(counts, Task::Pnt).unwrap()
    }

    fn map(v: &[f64]) -> LesionMap {
        LesionMap::new(v.to_vec()).unwrap()
    }

    fn member(id: &str, counts: [u32; 8], loads: &[f64]) -> CohortMember {
        CohortMember { id: id.into(), profile: profile(counts), map: map(loads) }
    }

    #[test]
    fn identical_profile_ranks_first() {
        let cohort = vec![
            member("b", [5, 5, 0, 0, 0, 0, 0, 0], &[0.1]),
            member("a", [8, 1, 1, 0, 0, 0, 0, 0], &[0.2]),
            member("c", [2, 0, 0, 0, 0, 0, 0, 8], &[0.3]),
        ];
        let m = match_top_k(&profile([8, 1, 1, 0, 0, 0, 0, 0]), &cohort, 2).unwrap();
        assert_eq!(m[0].id, "a");
        assert_eq!(m[0].distance, 0.0);
        let all = match_top_k(&profile([8, 1, 1, 0, 0, 0, 0, 0]), &cohort, 3).unwrap();
        assert_eq!(all.len(), 3);
        assert!(match_top_k(&profile([1, 0, 0, 0, 0, 0, 0, 0]), &cohort, 4).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let cohort = vec![
            member("z", [1, 1, 0, 0, 0, 0, 0, 0], &[0.1]),
            member("m", [1, 0, 1, 0, 0, 0, 0, 0], &[0.1]),
            member("a", [1, 0, 0, 1, 0, 0, 0, 0], &[0.1]),
        ];
        let m = match_top_k(&profile([1, 0, 0, 0, 0, 0, 0, 0]), &cohort, 2).unwrap();
        assert_eq!(m.iter().map(|x| x.id.as_str()).collect::<Vec<_>>(), ["a", "m"]);
    }

    fn brute_force(profile: &ErrorProfile, cohort: &[CohortMember], k: usize) -> Vec<String> {
        let p = profile.proportions();
        let mut d: Vec<(f64, String)> = cohort
            .iter()
            .map(|m| {
                let q = m.profile.proportions();
                let s: f64 = (0..8).map(|i| (p[i] - q[i]).powi(2)).sum();
                (s.sqrt(), m.id.clone())
            })
            .collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        d.into_iter().take(k).map(|x| x.1).collect()
    }

    #[test]
    fn six_member_cohort_matches_full_sort() {
        let cohort: Vec<CohortMember> = (0..6u32)
            .map(|i| member(&format!("s{i}"), [4 + i, i % 3, (5 - i) % 4, 1, 0, i % 2, 0, 2], &[0.1]))
            .collect();
        let target = profile([5, 1, 1, 1, 0, 0, 0, 2]);
        for k in 1..=6 {
            let got: Vec<String> = match_top_k(&target, &cohort, k).unwrap().into_iter().map(|m| m.id).collect();
            assert_eq!(got, brute_force(&target, &cohort, k));
        }
    }

    #[test]
    fn predicted_equal_to_matched_mean_gives_r_one() {
        let a = map(&[0.1, 0.5, 0.9, 0.3]);
        let cohort = [map(&[0.1, 0.5, 0.9, 0.3]), map(&[0.9, 0.1, 0.2, 0.3]), map(&[0.4, 0.4, 0.5, 0.0])];
        let refs: Vec<&LesionMap> = cohort.iter().collect();
        let rec = condition_correspondence("c", &a, &[&cohort[0]], &refs, NullMode::Random { n_perm: 100, seed: 1 }).unwrap();
        assert!((rec.matched_r.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_cohort_gives_p_one() {
        let m = map(&[0.1, 0.5, 0.9, 0.3, 0.2]);
        let cohort = vec![m.clone(); 12];
        let refs: Vec<&LesionMap> = cohort.iter().collect();
        let predicted = map(&[0.2, 0.4, 0.8, 0.1, 0.2]);
        let matched: Vec<&LesionMap> = refs[..5].to_vec();
        let rec = condition_correspondence("c", &predicted, &matched, &refs, NullMode::Random { n_perm: 500, seed: 3 }).unwrap();
        assert_eq!(rec.exceed_count, 500);
        assert_eq!(rec.p_perm, Some(1.0));
    }

    #[test]
    fn flat_prediction_is_undefined() {
        let cohort = [map(&[0.1, 0.2]), map(&[0.3, 0.1])];
        let refs: Vec<&LesionMap> = cohort.iter().collect();
        let rec = condition_correspondence("c", &map(&[0.5, 0.5]), &[&cohort[0]], &refs, NullMode::Exhaustive).unwrap();
        assert!(!rec.defined);
        assert!(matches!(population_tests(&[rec], Comparator::NullMean), Err(Error::EmptySummary)));
    }

    fn eight_member_fixture() -> (LesionMap, Vec<LesionMap>) {
        let predicted = map(&[0.9, 0.1, 0.4, 0.7, 0.2, 0.6]);
        let cohort: Vec<LesionMap> = (0..8)
            .map(|i| {
                let v: Vec<f64> = (0..6).map(|k| ((i * 7 + k * 3 + i * k) % 10) as f64 / 10.0).collect();
                map(&v)
            })
            .collect();
        (predicted, cohort)
    }

    #[test]
    fn exhaustive_subsets_match_bitmask_enumeration() {
        let (predicted, cohort) = eight_member_fixture();
        let refs: Vec<&LesionMap> = cohort.iter().collect();
        for first in 0..4 {
            let matched: Vec<&LesionMap> = refs[first..first + 5].to_vec();
            let rec = condition_correspondence("c", &predicted, &matched, &refs, NullMode::Exhaustive).unwrap();
            assert_eq!(rec.n_null, 56);

            // independent oracle: bitmasks with five set bits, straightforward arithmetic
            let corr = |mask: u32| -> f64 {
                let members: Vec<usize> = (0..8).filter(|b| mask >> b & 1 == 1).collect();
                let mean: Vec<f64> = (0..6)
                    .map(|k| members.iter().map(|&i| cohort[i].loads()[k]).sum::<f64>() / 5.0)
                    .collect();
                let x = predicted.loads();
                let mx = x.iter().sum::<f64>() / 6.0;
                let my = mean.iter().sum::<f64>() / 6.0;
                let sxy: f64 = (0..6).map(|k| (x[k] - mx) * (mean[k] - my)).sum();
                let sxx: f64 = (0..6).map(|k| (x[k] - mx).powi(2)).sum();
                let syy: f64 = (0..6).map(|k| (mean[k] - my).powi(2)).sum();
                sxy / (sxx * syy).sqrt()
            };
            let observed_mask: u32 = (first..first + 5).map(|b| 1u32 << b).sum();
            let observed = corr(observed_mask);
            let all: Vec<f64> = (0u32..256).filter(|m| m.count_ones() == 5).map(corr).collect();
            assert_eq!(all.len(), 56);
            let ge = all.iter().filter(|&&r| r >= observed - 1e-12).count();
            assert!((rec.matched_r.unwrap() - observed).abs() <= 1e-12);
            assert_eq!(rec.exceed_count, ge);
            assert_eq!(rec.p_perm.unwrap(), ge as f64 / 56.0);
        }
    }

    #[test]
    fn random_null_approaches_exhaustive() {
        let (predicted, cohort) = eight_member_fixture();
        let refs: Vec<&LesionMap> = cohort.iter().collect();
        let matched: Vec<&LesionMap> = refs[2..7].to_vec();
        let exact = condition_correspondence("c", &predicted, &matched, &refs, NullMode::Exhaustive).unwrap();
        let approx = condition_correspondence("c", &predicted, &matched, &refs, NullMode::Random { n_perm: 20_000, seed: 9 }).unwrap();
        // binomial SD at 20k draws is below 0.004
        assert!((exact.p_perm.unwrap() - approx.p_perm.unwrap()).abs() < 0.02);
    }

    #[test]
    fn subsets_enumerate_in_order() {
        let mut seen = Vec::new();
        for_each_subset(5, 3, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 10);
        assert_eq!(seen[0], [0, 1, 2]);
        assert_eq!(seen[9], [2, 3, 4]);
        let mut one = 0;
        for_each_subset(4, 4, |_| one += 1);
        assert_eq!(one, 1);
    }

    fn rec(delta: f64, null_mean: f64, p: f64) -> ValidationRecord {
        ValidationRecord {
            condition_id: "c".into(),
            matched_r: Some(null_mean + delta),
            null_mean,
            null_sd: 0.1,
            null_median: null_mean,
            exceed_count: 0,
            n_null: 10,
            p_perm: Some(p),
            delta_r: Some(delta),
            defined: true,
        }
    }

    #[test]
    fn nine_of_ten_binomial() {
        let mut records: Vec<ValidationRecord> = (0..9).map(|i| rec(0.1 + i as f64 * 0.01, 0.2, 0.04)).collect();
        records.push(rec(-0.05, 0.2, 0.5));
        let s = population_tests(&records, Comparator::NullMean).unwrap();
        assert_eq!(s.n_exceed, 9);
        assert!((s.binomial_p - 11.0 / 1024.0).abs() < 1e-15);
        assert_eq!(s.n_significant, 9);
    }

    #[test]
    fn zero_deltas_have_unit_wilcoxon_p() {
        let records: Vec<ValidationRecord> = (0..6).map(|_| rec(0.0, 0.2, 1.0)).collect();
        let s = population_tests(&records, Comparator::NullMean).unwrap();
        assert_eq!(s.wilcoxon.p_greater, 1.0);
        assert_eq!(s.n_exceed, 0);
    }

    fn two_roi_atlas() -> RoiAtlas {
        RoiAtlas::new(
            "t",
            vec![
                Roi { name: "v".into(), stream: Stream::Ventral },
                Roi { name: "d".into(), stream: Stream::Dorsal },
                Roi { name: "w".into(), stream: Stream::WhiteMatter },
            ],
        )
        .unwrap()
    }

    #[test]
    fn stream_index_ignores_white_matter() {
        let atlas = two_roi_atlas();
        assert_eq!(stream_index(&map(&[0.7, 0.2, 1.0]), &atlas).unwrap(), 0.7 - 0.2);
    }

    fn dual_conditions(planted: bool) -> Vec<(String, ErrorProfile, LesionMap)> {
        (0..60u32)
            .map(|i| {
                let sem = i % 10;
                let pho = 9 - sem;
                let p = profile([10, sem, pho, 0, 0, 0, 1, 0]);
                let m = if planted {
                    map(&[0.2 + 0.05 * sem as f64, 0.2 + 0.05 * pho as f64, 0.1])
                } else {
                    map(&[0.3, 0.3, 0.3])
                };
                (format!("c{i:02}"), p, m)
            })
            .collect()
    }

    #[test]
    fn identical_maps_give_zero_delta() {
        let r = dual_stream_analysis(&dual_conditions(false), &two_roi_atlas(), 20, 2000, 1).unwrap();
        assert_eq!(r.delta, 0.0);
        assert_eq!(r.p_perm, 1.0);
    }

    #[test]
    fn planted_dissociation_is_detected() {
        let r = dual_stream_analysis(&dual_conditions(true), &two_roi_atlas(), 20, 5000, 1).unwrap();
        assert!(r.delta > 0.0);
        assert!(r.p_perm < 0.05);
        assert!(r.cohens_d.unwrap() > 0.0);
        assert_eq!(r.semantic_ids.len(), 20);
        assert!(r.semantic_ids.iter().all(|id| !r.phonemic_ids.contains(id)));
    }

    #[test]
    fn too_few_conditions() {
        assert!(dual_stream_analysis(&dual_conditions(true), &two_roi_atlas(), 31, 10, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn match_equals_full_sort(
            rows in proptest::collection::vec(proptest::array::uniform8(0u32..5), 3..15),
            target in proptest::array::uniform8(0u32..5),
            k in 1usize..4,
        ) {
            prop_assume!(target.iter().any(|&c| c > 0));
            let cohort: Vec<CohortMember> = rows
                .iter()
                .filter(|c| c.iter().any(|&x| x > 0))
                .enumerate()
                .map(|(i, &c)| member(&format!("s{i:02}"), c, &[0.5]))
                .collect();
            prop_assume!(cohort.len() >= k);
            let t = profile(target);
            let got: Vec<String> = match_top_k(&t, &cohort, k).unwrap().into_iter().map(|m| m.id).collect();
            prop_assert_eq!(got, brute_force(&t, &cohort, k));
        }

        #[test]
        fn p_perm_bounds(seed in 0u64..1000, n_perm in 1usize..200) {
            let (predicted, cohort) = eight_member_fixture();
            let refs: Vec<&LesionMap> = cohort.iter().collect();
            let rec = condition_correspondence("x", &predicted, &refs[..5], &refs, NullMode::Random { n_perm, seed }).unwrap();
            let p = rec.p_perm.unwrap();
            prop_assert!(p >= 1.0 / (n_perm as f64 + 1.0) && p <= 1.0);
            prop_assert_eq!(p, (1 + rec.exceed_count) as f64 / (1 + n_perm) as f64);
        }

        #[test]
        fn d_sign_agrees_with_delta(loads in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 40)) {
            let conds: Vec<(String, ErrorProfile, LesionMap)> = loads
                .iter()
                .enumerate()
                .map(|(i, &(v, d))| {
                    let sem = (i % 7) as u32;
                    (format!("c{i:02}"), profile([5, sem, 6 - sem, 0, 0, 0, 1, 0]), map(&[v, d, 0.0]))
                })
                .collect();
            let r = dual_stream_analysis(&conds, &two_roi_atlas(), 10, 50, 4).unwrap();
            if let Some(d) = r.cohens_d {
                prop_assert!(d == 0.0 || d.signum() == r.delta.signum());
            }
        }
    }
}
