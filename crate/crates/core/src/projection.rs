//! Degeneracy filtering and projection of condition profiles into lesion space.

use serde::{Deserialize, Serialize};

use crate::lesion_model::{Prediction, SymptomToLesionModel};
use crate::taxonomy::{ErrorProfile, ResponseCategory};
use crate::{Error, Result};

pub const MIN_ERROR_MASS: f64 = 0.02;
pub const MAX_NO_RESPONSE: f64 = 0.95;
pub const MIN_ENTROPY_BITS: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Degeneracy {
    ErrorFree,
    Collapse,
    LowEntropy,
}

impl Degeneracy {
    pub fn label(self) -> &'static str {
        match self {
            Degeneracy::ErrorFree => "ErrorFree",
            Degeneracy::Collapse => "Collapse",
            Degeneracy::LowEntropy => "LowEntropy",
        }
    }
}

/// Which distribution the entropy rule is computed over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntropyBasis {
    /// Non-Correct categories, renormalized to sum to one.
    #[default]
    Errors,
    /// All categories including Correct.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyVerdict {
    pub keep: bool,
    pub reasons: Vec<Degeneracy>,
    pub error_mass: f64,
    pub nr_proportion: f64,
    pub error_entropy_bits: f64,
}

impl DegeneracyVerdict {
    pub fn reasons_label(&self) -> String {
        self.reasons.iter().map(|r| r.label()).collect::<Vec<_>>().join(";")
    }
}

/// Shannon entropy in bits of `weights` after normalizing; 0 for zero total.
pub fn entropy_bits(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / total;
            -p * p.log2()
        })
        .sum();
    // -0.0 on a single category
    h.max(0.0)
}

/// Apply the three rules to already computed statistics. Equality keeps.
pub fn verdict_from_values(error_mass: f64, nr_proportion: f64, entropy: f64) -> DegeneracyVerdict {
    let mut reasons = Vec::new();
    if error_mass < MIN_ERROR_MASS {
        reasons.push(Degeneracy::ErrorFree);
    }
    if nr_proportion > MAX_NO_RESPONSE {
        reasons.push(Degeneracy::Collapse);
    }
    if entropy < MIN_ENTROPY_BITS {
        reasons.push(Degeneracy::LowEntropy);
    }
    DegeneracyVerdict {
        keep: reasons.is_empty(),
        reasons,
        error_mass,
        nr_proportion,
        error_entropy_bits: entropy,
    }
}

pub fn degeneracy_filter(profile: &ErrorProfile) -> DegeneracyVerdict {
    degeneracy_filter_with(profile, EntropyBasis::Errors)
}

pub fn degeneracy_filter_with(profile: &ErrorProfile, basis: EntropyBasis) -> DegeneracyVerdict {
    let counts: Vec<f64> = profile.counts().iter().map(|&c| c as f64).collect();
    let entropy = match basis {
        EntropyBasis::Errors => {
            let errors: Vec<f64> = ResponseCategory::ALL
                .iter()
                .filter(|c| c.is_error())
                .map(|c| counts[c.index()])
                .collect();
            entropy_bits(&errors)
        }
        EntropyBasis::Full => entropy_bits(&counts),
    };
    verdict_from_values(
        profile.error_mass(),
        profile.proportion(ResponseCategory::NoResponse),
        entropy,
    )
}

/// Predicted lesion maps for filtered profiles, ids preserved in input order.
pub fn project(profiles: &[(String, ErrorProfile)], model: &SymptomToLesionModel) -> Result<Vec<(String, Prediction)>> {
    profiles
        .iter()
        .map(|(id, p)| {
            if p.task != model.task {
                return Err(Error::Schema(format!(
                    "condition {id} has task {} but the model was fit on {}",
                    p.task, model.task
                )));
            }
            Ok((id.clone(), model.predict(p)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lesion_model::{fit, LesionMap, RoiAtlas};
    use crate::taxonomy::Task;
    use proptest::prelude::*;

    fn profile(counts: [u32; 8]) -> ErrorProfile {
        ErrorProfile::from_counts(counts, Task::Pnt).unwrap()
    }

    #[test]
    fn all_correct_is_error_free() {
        let v = degeneracy_filter(&profile([10, 0, 0, 0, 0, 0, 0, 0]));
        assert!(!v.keep);
        assert_eq!(v.error_mass, 0.0);
        assert_eq!(v.error_entropy_bits, 0.0);
        assert!(v.reasons.contains(&Degeneracy::ErrorFree));
    }

    #[test]
    fn single_error_category_is_low_entropy() {
        let v = degeneracy_filter(&profile([5, 5, 0, 0, 0, 0, 0, 0]));
        assert_eq!(v.reasons, vec![Degeneracy::LowEntropy]);
        assert_eq!(v.error_entropy_bits, 0.0);
    }

    #[test]
    fn even_split_is_one_bit_and_kept() {
        let v = degeneracy_filter(&profile([2, 4, 4, 0, 0, 0, 0, 0]));
        assert!(v.keep, "{v:?}");
        assert!((v.error_entropy_bits - 1.0).abs() < 1e-15);
    }

    #[test]
    fn heavy_no_response_collapses() {
        let v = degeneracy_filter(&profile([0, 2, 2, 0, 0, 0, 0, 96]));
        assert!(v.reasons.contains(&Degeneracy::Collapse));
        assert_eq!(v.nr_proportion, 0.96);
    }

    #[test]
    fn boundaries_are_kept() {
        assert!(verdict_from_values(0.02, 0.5, 1.0).keep);
        assert!(verdict_from_values(0.5, 0.95, 1.0).keep);
        assert!(verdict_from_values(0.5, 0.5, 0.4).keep);
        assert_eq!(verdict_from_values(0.019, 0.5, 1.0).reasons, vec![Degeneracy::ErrorFree]);
        assert_eq!(verdict_from_values(0.5, 0.951, 1.0).reasons, vec![Degeneracy::Collapse]);
        assert_eq!(verdict_from_values(0.5, 0.5, 0.399).reasons, vec![Degeneracy::LowEntropy]);
    }

    #[test]
    fn count_based_boundaries() {
        // one error in fifty is exactly the mass threshold
        let v = degeneracy_filter(&profile([49, 0, 0, 0, 0, 0, 0, 1]));
        assert_eq!(v.error_mass, 0.02);
        assert!(!v.reasons.contains(&Degeneracy::ErrorFree));
        let v = degeneracy_filter(&profile([0, 1, 0, 0, 0, 0, 0, 19]));
        assert_eq!(v.nr_proportion, 0.95);
        assert!(!v.reasons.contains(&Degeneracy::Collapse));
    }

    #[test]
    fn full_basis_counts_correct() {
        let p = profile([5, 5, 0, 0, 0, 0, 0, 0]);
        let v = degeneracy_filter_with(&p, EntropyBasis::Full);
        assert!((v.error_entropy_bits - 1.0).abs() < 1e-15);
        assert!(v.keep);
    }

    fn planted_model() -> SymptomToLesionModel {
        let atlas = RoiAtlas::default_language();
        let mut cohort = Vec::new();
        for i in 0..30u32 {
            let counts = [10 + i % 7, i % 5, (i * 3) % 4, i % 3, (i / 3) % 2, (i / 2) % 3, i % 4, (i * 7) % 5];
            let p = profile(counts);
            let props = p.proportions();
            let loads = (0..atlas.len())
                .map(|k| 0.1 + 0.5 * props[1 + k % 7] * (k % 3) as f64 / 2.0)
                .collect();
            cohort.push((p, LesionMap::new(loads).unwrap()));
        }
        fit(&cohort, &atlas).unwrap()
    }

    #[test]
    fn projection_preserves_ids_and_matches_affine_map() {
        let model = planted_model();
        assert!(project(&[], &model).unwrap().is_empty());
        let p = profile([4, 3, 1, 1, 0, 0, 1, 0]);
        let props = p.proportions();
        let out = project(&[("c1".into(), p)], &model).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, "c1");
        for (k, v) in out[0].1.map.loads().iter().enumerate() {
            let expected = 0.1 + 0.5 * props[1 + k % 7] * (k % 3) as f64 / 2.0;
            assert!((v - expected).abs() < 1e-9, "roi {k}: {v} vs {expected}");
        }
    }

    #[test]
    fn task_mismatch_is_schema_error() {
        let model = planted_model();
        let p = ErrorProfile::from_counts([1, 1, 0, 0, 0, 0, 0, 0], Task::Wabr).unwrap();
        assert!(matches!(project(&[("x".into(), p)], &model), Err(Error::Schema(_))));
    }

    proptest! {
        #[test]
        fn keep_iff_no_reasons(counts in proptest::array::uniform8(0u32..20)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let v = degeneracy_filter(&profile(counts));
            prop_assert_eq!(v.keep, v.reasons.is_empty());
            prop_assert!(v.error_entropy_bits >= 0.0 && v.error_entropy_bits <= 7f64.log2() + 1e-12);
        }

        #[test]
        fn filter_is_order_independent(seq in proptest::collection::vec(proptest::array::uniform8(0u32..6), 1..12)) {
            let ps: Vec<ErrorProfile> = seq.iter().filter(|c| c.iter().any(|&x| x > 0)).map(|&c| profile(c)).collect();
            let forward: Vec<_> = ps.iter().map(degeneracy_filter).collect();
            let mut backward: Vec<_> = ps.iter().rev().map(degeneracy_filter).collect();
            backward.reverse();
            prop_assert_eq!(forward, backward);
        }

        #[test]
        fn projection_count_matches(n in 0usize..8) {
            let model = planted_model();
            let ps: Vec<(String, ErrorProfile)> = (0..n)
                .map(|i| (format!("c{i}"), profile([3, i as u32, 1, 0, 0, 0, 0, 1])))
                .collect();
            prop_assert_eq!(project(&ps, &model).unwrap().len(), n);
        }
    }
}
