//! Synthetic cohorts with planted profile-to-lesion relationships.
//!
//! Each subject draws latent category probabilities from one of several
//! Dirichlet archetypes, answers every assessment item with a response that
//! the classifier assigns to a sampled category, and receives lesion loads
//! from a planted affine map of the realized proportions plus Gaussian noise.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data_io::ResponseRow;
use crate::lesion_model::{LesionMap, RoiAtlas, Stream};
use crate::perturb::AssessmentItem;
use crate::rng::StreamKey;
use crate::taxonomy::{classify, ErrorProfile, LexicalResources, ResponseCategory, Task};
use crate::validation::CohortMember;
use crate::{Error, Result};

const TAG_SYNTH: &str = "blum/synth/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub name: String,
    /// Dirichlet concentration per category, in [`ResponseCategory::ALL`] order.
    pub alpha: [f64; ResponseCategory::COUNT],
    /// Relative mixture weight.
    pub weight: f64,
}

impl Archetype {
    fn new(name: &str, alpha: [f64; ResponseCategory::COUNT], weight: f64) -> Self {
        Archetype { name: name.into(), alpha, weight }
    }

    /// Fluent-semantic, nonfluent-phonemic, severe no-response and mild.
    pub fn standard() -> Vec<Archetype> {
        vec![
            Archetype::new("fluent-semantic", [10.0, 7.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0], 1.0),
            Archetype::new("nonfluent-phonemic", [10.0, 1.0, 4.0, 4.0, 1.0, 2.0, 1.0, 1.0], 1.0),
            Archetype::new("severe-nr", [3.0, 1.0, 1.0, 1.0, 0.5, 2.0, 2.0, 8.0], 0.6),
            Archetype::new("mild", [30.0, 2.0, 1.5, 1.5, 0.5, 0.5, 1.0, 1.0], 0.8),
        ]
    }
}

/// Per-ROI affine map from proportions to lesion load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedMap {
    pub intercept: Vec<f64>,
    /// One row per ROI, indexed like [`ResponseCategory::ALL`].
    pub coefficients: Vec<[f64; ResponseCategory::COUNT]>,
}

impl PlantedMap {
    pub fn evaluate(&self, roi: usize, props: &[f64; ResponseCategory::COUNT]) -> f64 {
        self.intercept[roi] + self.coefficients[roi].iter().zip(props).map(|(c, p)| c * p).sum::<f64>()
    }

    /// Semantic errors load ventral ROIs, Formal and Nonword load dorsal ROIs,
    /// no-response adds a little everywhere.
    pub fn dual_stream(atlas: &RoiAtlas) -> Self {
        use ResponseCategory as C;
        let mut intercept = Vec::new();
        let mut coefficients = Vec::new();
        for (k, roi) in atlas.rois().iter().enumerate() {
            let mut c = [0.0; ResponseCategory::COUNT];
            c[C::NoResponse.index()] = 0.2;
            match roi.stream {
                Stream::Ventral => {
                    c[C::Semantic.index()] = 1.2;
                    c[C::Mixed.index()] = 0.4;
                }
                Stream::Dorsal => {
                    c[C::Formal.index()] = 1.2;
                    c[C::Nonword.index()] = 1.2;
                    c[C::Neologism.index()] = 0.4;
                }
                Stream::WhiteMatter => {
                    c[C::Neologism.index()] = 0.5;
                    c[C::Unrelated.index()] = 0.3;
                }
            }
            intercept.push(0.08 + 0.01 * (k % 5) as f64);
            coefficients.push(c);
        }
        PlantedMap { intercept, coefficients }
    }

    /// Loads that ignore the profile entirely.
    pub fn null(atlas: &RoiAtlas) -> Self {
        PlantedMap {
            intercept: (0..atlas.len()).map(|k| 0.15 + 0.2 * ((k * 7) % 11) as f64 / 10.0).collect(),
            coefficients: vec![[0.0; ResponseCategory::COUNT]; atlas.len()],
        }
    }

    /// Every ROI depends on every non-Correct category, with loads inside
    /// `[0, 1]` for any profile, so noiseless cohorts are fit exactly.
    pub fn dense(atlas: &RoiAtlas) -> Self {
        let coefficients = (0..atlas.len())
            .map(|k| {
                let mut c = [0.0; ResponseCategory::COUNT];
                for (j, slot) in c.iter_mut().enumerate().skip(1) {
                    *slot = 0.1 + 0.7 * (((k + 1) * (j + 2) * 37) % 19) as f64 / 18.0;
                }
                c
            })
            .collect();
        PlantedMap { intercept: vec![0.1; atlas.len()], coefficients }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub task: Task,
    pub archetypes: Vec<Archetype>,
    pub planted: PlantedMap,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(n_subjects: usize, atlas: &RoiAtlas, planted: PlantedMap, noise_sd: f64, seed: u64) -> Self {
        debug_assert_eq!(planted.intercept.len(), atlas.len());
        SynthSpec {
            n_subjects,
            task: Task::Pnt,
            archetypes: Archetype::standard(),
            planted,
            noise_sd,
            seed,
        }
    }

    fn validate(&self, atlas: &RoiAtlas) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::InvalidSpec("n_subjects must be at least 1".into()));
        }
        if self.archetypes.is_empty() {
            return Err(Error::InvalidSpec("at least one archetype is required".into()));
        }
        for a in &self.archetypes {
            if let Some(v) = a.alpha.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::InvalidSpec(format!(
                    "archetype {:?} has non-positive Dirichlet concentration {v}",
                    a.name
                )));
            }
            if !(a.weight.is_finite() && a.weight > 0.0) {
                return Err(Error::InvalidSpec(format!("archetype {:?} has weight {}", a.name, a.weight)));
            }
        }
        if self.planted.intercept.len() != atlas.len() || self.planted.coefficients.len() != atlas.len() {
            return Err(Error::InvalidSpec(format!("planted map does not cover the {} atlas ROIs", atlas.len())));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::InvalidSpec(format!("noise_sd {} must be non-negative", self.noise_sd)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub id: String,
    pub archetype: String,
    /// Latent Dirichlet draw before item sampling.
    pub latent: [f64; ResponseCategory::COUNT],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub atlas_hash: String,
    pub subjects: Vec<SubjectTruth>,
    /// ROI values that fell outside `[0, 1]` and were clamped.
    pub clamp_events: usize,
}

pub struct SynthCohort {
    pub members: Vec<CohortMember>,
    pub responses: Vec<ResponseRow>,
    pub truth: GroundTruth,
}

/// Responses that the classifier assigns to each category, per target.
pub struct ExemplarBank {
    by_target: BTreeMap<String, [Vec<Option<String>>; ResponseCategory::COUNT]>,
}

const NEOLOGISM_STEMS: [&str; 8] = ["frandle", "skeb", "mipto", "glorn", "zavrik", "plenth", "quoby", "drusk"];

impl ExemplarBank {
    pub fn build(items: &[AssessmentItem], res: &LexicalResources) -> Result<Self> {
        let mut by_target = BTreeMap::new();
        for item in items {
            let target = item.target.to_lowercase();
            if by_target.contains_key(&target) {
                continue;
            }
            let mut slots: [Vec<Option<String>>; ResponseCategory::COUNT] = Default::default();
            let mut candidates: Vec<String> = res.wordlist.iter().cloned().collect();
            candidates.extend(res.pronunciations.keys().cloned());
            candidates.extend(res.synonyms.get(&target).into_iter().flatten().cloned());
            candidates.extend(NEOLOGISM_STEMS.iter().map(|s| s.to_string()));
            for (i, _) in target.char_indices() {
                for c in ['a', 'e', 'o', 'u', 'z', 'p', 'b'] {
                    let mut s = target.clone();
                    s.replace_range(i..i + 1, &c.to_string());
                    candidates.push(s);
                }
            }
            candidates.sort();
            candidates.dedup();
            for cand in candidates {
                let cat = classify(&target, Some(&cand), res)?;
                slots[cat.index()].push(Some(cand));
            }
            slots[ResponseCategory::NoResponse.index()] = vec![None];
            if let Some(r) = res.refusals.iter().next() {
                slots[ResponseCategory::NoResponse.index()].push(Some(r.clone()));
            }
            by_target.insert(target, slots);
        }
        Ok(ExemplarBank { by_target })
    }

    pub fn options(&self, target: &str, category: ResponseCategory) -> &[Option<String>] {
        self.by_target.get(&target.to_lowercase()).map(|s| s[category.index()].as_slice()).unwrap_or(&[])
    }
}

fn dirichlet(alpha: &[f64; ResponseCategory::COUNT], rng: &mut crate::rng::Stream) -> [f64; ResponseCategory::COUNT] {
    let mut out = [0.0; ResponseCategory::COUNT];
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = Gamma::new(a, 1.0).expect("validated alpha").sample(rng.as_rng());
    }
    let total: f64 = out.iter().sum();
    out.map(|g| g / total)
}

fn categorical(weights: &[f64], rng: &mut crate::rng::Stream) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.uniform_open() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Generate a cohort. Identical specs give identical cohorts.
pub fn generate(spec: &SynthSpec, atlas: &RoiAtlas, items: &[AssessmentItem], res: &LexicalResources) -> Result<SynthCohort> {
    spec.validate(atlas)?;
    if items.is_empty() {
        return Err(Error::InvalidInput("synthesis needs at least one item".into()));
    }
    let bank = ExemplarBank::build(items, res)?;
    let weights: Vec<f64> = spec.archetypes.iter().map(|a| a.weight).collect();
    let width = spec.n_subjects.to_string().len().max(3);

    let mut members = Vec::with_capacity(spec.n_subjects);
    let mut responses = Vec::new();
    let mut subjects = Vec::new();
    let mut clamp_events = 0;
    for s in 0..spec.n_subjects {
        let id = format!("S{:0width$}", s + 1);
        let mut rng = StreamKey::new(TAG_SYNTH).u64(spec.seed).u64(s as u64).stream();
        let arch = &spec.archetypes[categorical(&weights, &mut rng)];
        let latent = dirichlet(&arch.alpha, &mut rng);

        let mut counts = [0u32; ResponseCategory::COUNT];
        for item in items {
            // categories without an exemplar for this target are excluded
            let avail: Vec<f64> = ResponseCategory::ALL
                .iter()
                .map(|&c| if bank.options(&item.target, c).is_empty() { 0.0 } else { latent[c.index()] })
                .collect();
            let c = ResponseCategory::ALL[categorical(&avail, &mut rng)];
            let opts = bank.options(&item.target, c);
            let response = opts[rng.below(opts.len() as u64) as usize].clone();
            counts[c.index()] += 1;
            responses.push(ResponseRow {
                subject_id: id.clone(),
                task: spec.task,
                item_id: item.item_id.clone(),
                target: item.target.clone(),
                response,
            });
        }
        let profile = ErrorProfile::from_counts(counts, spec.task)?;
        let props = profile.proportions();
        let loads = (0..atlas.len())
            .map(|k| {
                let v = spec.planted.evaluate(k, &props) + spec.noise_sd * rng.standard_normal();
                if !(0.0..=1.0).contains(&v) {
                    clamp_events += 1;
                }
                v.clamp(0.0, 1.0)
            })
            .collect();
        subjects.push(SubjectTruth { id: id.clone(), archetype: arch.name.clone(), latent });
        members.push(CohortMember { id, profile, map: LesionMap::new(loads)? });
    }
    Ok(SynthCohort {
        members,
        responses,
        truth: GroundTruth { spec: spec.clone(), atlas_hash: atlas.hash(), subjects, clamp_events },
    })
}

/// Profiles with the requested archetype mixture, without lesions or
/// responses. Used to stand in for condition profiles at desk scale.
pub fn sample_profiles(
    n: usize,
    archetypes: &[Archetype],
    item_count: u32,
    task: Task,
    seed: u64,
    tag: &str,
) -> Result<Vec<ErrorProfile>> {
    if archetypes.is_empty() || item_count == 0 {
        return Err(Error::InvalidSpec("need archetypes and a positive item count".into()));
    }
    let weights: Vec<f64> = archetypes.iter().map(|a| a.weight).collect();
    (0..n)
        .map(|i| {
            let mut rng = StreamKey::new(TAG_SYNTH).str(tag).u64(seed).u64(i as u64).stream();
            let arch = &archetypes[categorical(&weights, &mut rng)];
            let latent = dirichlet(&arch.alpha, &mut rng);
            let mut counts = [0u32; ResponseCategory::COUNT];
            for _ in 0..item_count {
                counts[categorical(&latent, &mut rng)] += 1;
            }
            ErrorProfile::from_counts(counts, task)
        })
        .collect()
}
