//! Multiplicative-noise lesioning of the toy transformer and the sweep grid.
//!
//! A lesion picks `floor(pct * H / 100)` hidden units of one layer and
//! multiplies every weight in those rows of the query, key, value and output
//! projections by `1 + eps`, `eps ~ N(0, sigma^2)`. Row selection is keyed by
//! `(seed, layer, pct)` and the noise by `(seed, layer, pct, sigma * 10)`, so
//! conditions sharing a layer and percentage lesion the same units.
//! Noise is drawn matrix by matrix (Q, K, V, O, then the MLP input and output
//! matrices when included), rows ascending, columns ascending.

mod toy;

pub use toy::{
    cue_token, prompt_tokens, Generation, Layer, Matrix, Mlp, ToyConfig, ToyTransformer, ASK, BOS, EOS, UNK,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::condition_id;
use crate::rng::{StreamKey, TAG_LESION_NOISE, TAG_LESION_SELECT};
use crate::taxonomy::{self, ErrorProfile, LexicalResources, ResponseCategory, Task};
use crate::{Error, Result};

pub const PCT_MIN: u32 = 10;
pub const PCT_MAX: u32 = 90;
pub const SIGMA_MAX_TENTHS: u32 = 19;

/// One artificial lesion. Sigma is held in tenths so grid values are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub layer: u32,
    pub pct: u32,
    pub sigma_tenths: u32,
    pub seed: u64,
}

/// Convert a sigma value to tenths if it sits on the 0.1 grid.
pub fn sigma_to_tenths(sigma: f64) -> Result<u32> {
    let t = (sigma * 10.0).round();
    if !sigma.is_finite() || (sigma * 10.0 - t).abs() > 1e-9 || t < 0.0 {
        return Err(Error::InvalidSpec(format!("sigma {sigma} is not a non-negative multiple of 0.1")));
    }
    if t as u32 > SIGMA_MAX_TENTHS {
        return Err(Error::InvalidSpec(format!("sigma {sigma} above {}", SIGMA_MAX_TENTHS as f64 / 10.0)));
    }
    Ok(t as u32)
}

impl PerturbationSpec {
    pub fn new(layer: u32, pct: u32, sigma: f64, seed: u64) -> Result<Self> {
        let spec = PerturbationSpec { layer, pct, sigma_tenths: sigma_to_tenths(sigma)?, seed };
        spec.check_ranges()?;
        Ok(spec)
    }

    fn check_ranges(&self) -> Result<()> {
        if self.layer == 0 {
            return Err(Error::InvalidSpec("layers are numbered from 1".into()));
        }
        if !(PCT_MIN..=PCT_MAX).contains(&self.pct) {
            return Err(Error::InvalidSpec(format!("pct {} outside {PCT_MIN}..={PCT_MAX}", self.pct)));
        }
        if self.sigma_tenths > SIGMA_MAX_TENTHS {
            return Err(Error::InvalidSpec(format!("sigma tenths {} above {SIGMA_MAX_TENTHS}", self.sigma_tenths)));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_tenths as f64 / 10.0
    }

    pub fn condition_id(&self) -> String {
        condition_id::format(self.layer, self.pct, self.sigma_tenths)
    }

    pub fn validate_for(&self, model: &ToyTransformer) -> Result<()> {
        self.check_ranges()?;
        if self.layer as usize > model.num_layers() {
            return Err(Error::InvalidSpec(format!(
                "layer {} out of range for a {}-layer model",
                self.layer,
                model.num_layers()
            )));
        }
        Ok(())
    }

    /// Number of hidden units lesioned in a model of width `hidden`.
    pub fn rows_selected(&self, hidden: usize) -> usize {
        self.pct as usize * hidden / 100
    }
}

/// Hidden-unit rows chosen for `(seed, layer, pct)`, ascending.
pub fn selected_rows(seed: u64, layer: u32, pct: u32, hidden: usize) -> Vec<usize> {
    let m = pct as usize * hidden / 100;
    StreamKey::new(TAG_LESION_SELECT)
        .u64(seed)
        .u64(layer as u64)
        .u64(pct as u64)
        .stream()
        .select(hidden, m)
}

/// Which weights a lesion touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LesionScope {
    /// The four attention projections.
    #[default]
    Attention,
    /// Attention projections plus the MLP block of the layer.
    AttentionAndMlp,
}

pub fn apply_lesion(model: &ToyTransformer, spec: &PerturbationSpec) -> Result<ToyTransformer> {
    apply_lesion_scoped(model, spec, LesionScope::Attention)
}

/// Return a lesioned copy. Untouched layers are shared with `model`.
pub fn apply_lesion_scoped(model: &ToyTransformer, spec: &PerturbationSpec, scope: LesionScope) -> Result<ToyTransformer> {
    spec.validate_for(model)?;
    let layer_idx = spec.layer as usize;
    let original = model.layer_arc(layer_idx);
    if scope == LesionScope::AttentionAndMlp && original.mlp.is_none() {
        return Err(Error::InvalidSpec(format!("layer {} has no MLP block to lesion", spec.layer)));
    }
    let mut out = model.clone();
    if spec.sigma_tenths == 0 {
        return Ok(out);
    }
    let rows = selected_rows(spec.seed, spec.layer, spec.pct, model.hidden());
    let sigma = spec.sigma();
    let mut noise = StreamKey::new(TAG_LESION_NOISE)
        .u64(spec.seed)
        .u64(spec.layer as u64)
        .u64(spec.pct as u64)
        .u64(spec.sigma_tenths as u64)
        .stream();
    let mut layer: Layer = (**original).clone();
    let mut perturb = |m: &mut Matrix| {
        for &r in &rows {
            for w in m.row_mut(r) {
                *w *= 1.0 + sigma * noise.standard_normal();
            }
        }
    };
    perturb(&mut layer.q);
    perturb(&mut layer.k);
    perturb(&mut layer.v);
    perturb(&mut layer.o);
    if scope == LesionScope::AttentionAndMlp {
        let mlp = layer.mlp.as_mut().expect("checked above");
        perturb(&mut mlp.w_in);
        perturb(&mut mlp.w_out);
    }
    out.replace_layer(layer_idx, layer);
    Ok(out)
}

/// Cartesian product in `(layer, pct, sigma)` order.
pub fn enumerate_sweep(layers: u32, pcts: &[u32], sigmas: &[f64], seed: u64) -> Result<Vec<PerturbationSpec>> {
    let tenths = sigmas.iter().map(|&s| sigma_to_tenths(s)).collect::<Result<Vec<_>>>()?;
    let mut specs = Vec::with_capacity(layers as usize * pcts.len() * tenths.len());
    for layer in 1..=layers {
        for &pct in pcts {
            for &sigma_tenths in &tenths {
                let spec = PerturbationSpec { layer, pct, sigma_tenths, seed };
                spec.check_ranges()?;
                specs.push(spec);
            }
        }
    }
    Ok(specs)
}

/// One assessment prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentItem {
    pub item_id: String,
    pub task: Task,
    pub prompt: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemResponse {
    pub item_id: String,
    pub response: Option<String>,
    /// Decoding hit a non-finite value and the response was recorded as absent.
    pub non_finite: bool,
}

/// First word of a generation after removing prompt echo.
///
/// If the generation repeats the prompt verbatim that prefix is removed;
/// then leading tokens that copy prompt words are skipped. The remaining
/// first whitespace token is lowercased and stripped of surrounding
/// punctuation. Returns `None` when nothing is left.
pub fn first_word(generated: &str, prompt: &str) -> Option<String> {
    let mut text = generated.trim();
    let p = prompt.trim();
    if !p.is_empty() {
        if let Some(rest) = text.strip_prefix(p) {
            text = rest;
        }
    }
    let prompt_words = prompt_tokens(prompt);
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
                .trim_matches('\'')
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .find(|w| !prompt_words.contains(w))
}

/// Greedy decoding of every item.
pub fn run_assessment(model: &ToyTransformer, items: &[AssessmentItem]) -> Result<Vec<ItemResponse>> {
    if items.is_empty() {
        return Err(Error::InvalidInput("no assessment items".into()));
    }
    Ok(items
        .iter()
        .map(|item| {
            let g = model.generate(&item.prompt);
            let response = if g.non_finite { None } else { first_word(&g.text(), &item.prompt) };
            ItemResponse { item_id: item.item_id.clone(), response, non_finite: g.non_finite }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub spec: PerturbationSpec,
    pub responses: Vec<ItemResponse>,
    pub profile: ErrorProfile,
}

/// Score responses against their items' targets.
pub fn score_responses(items: &[AssessmentItem], responses: &[ItemResponse], res: &LexicalResources) -> Result<ErrorProfile> {
    let task = single_task(items)?;
    let labels = items
        .iter()
        .zip(responses)
        .map(|(item, r)| taxonomy::classify(&item.target, r.response.as_deref(), res))
        .collect::<Result<Vec<ResponseCategory>>>()?;
    taxonomy::build_profile(&labels, task)
}

fn single_task(items: &[AssessmentItem]) -> Result<Task> {
    let task = items.first().ok_or_else(|| Error::InvalidInput("no assessment items".into()))?.task;
    if items.iter().any(|i| i.task != task) {
        return Err(Error::InvalidInput("assessment items mix tasks".into()));
    }
    Ok(task)
}

pub fn run_condition(
    model: &ToyTransformer,
    spec: &PerturbationSpec,
    items: &[AssessmentItem],
    res: &LexicalResources,
    scope: LesionScope,
) -> Result<ConditionResult> {
    let lesioned = apply_lesion_scoped(model, spec, scope)?;
    let responses = run_assessment(&lesioned, items)?;
    let profile = score_responses(items, &responses, res)?;
    Ok(ConditionResult { spec: *spec, responses, profile })
}

/// Run every condition in parallel; output order follows `specs`.
pub fn run_sweep(
    model: &ToyTransformer,
    specs: &[PerturbationSpec],
    items: &[AssessmentItem],
    res: &LexicalResources,
    scope: LesionScope,
) -> Result<Vec<ConditionResult>> {
    single_task(items)?;
    res.check_targets(items.iter().map(|i| i.target.as_str()))?;
    specs.par_iter().map(|s| run_condition(model, s, items, res, scope)).collect()
}

/// The bundled picture-naming items.
pub fn bundled_items() -> Vec<AssessmentItem> {
    crate::data_io::read_items_str(include_str!("../../data/toy_items.csv"), "toy_items.csv").expect("bundled items parse")
}

/// Build the fixture model for a set of items: their targets get cue
/// tokens and their prompt words join the vocabulary.
pub fn fixture_for_items(cfg: &ToyConfig, items: &[AssessmentItem], res: &LexicalResources) -> Result<ToyTransformer> {
    let targets: Vec<String> = items.iter().map(|i| i.target.trim().to_lowercase()).collect();
    let mut framing: Vec<String> = Vec::new();
    for item in items {
        for t in prompt_tokens(&item.prompt) {
            if !t.starts_with('<') && !framing.contains(&t) {
                framing.push(t);
            }
        }
    }
    ToyTransformer::fixture(cfg, &targets, &framing, res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> (ToyTransformer, Vec<AssessmentItem>, LexicalResources) {
        let res = LexicalResources::bundled();
        let items = bundled_items();
        let model = fixture_for_items(&ToyConfig::default(), &items, &res).unwrap();
        (model, items, res)
    }

    fn differing_rows(a: &Matrix, b: &Matrix) -> usize {
        (0..a.rows()).filter(|&r| a.row(r) != b.row(r)).count()
    }

    #[test]
    fn unperturbed_fixture_names_every_item() {
        let (model, items, res) = fixture();
        let responses = run_assessment(&model, &items).unwrap();
        for (item, r) in items.iter().zip(&responses) {
            assert_eq!(r.response.as_deref(), Some(item.target.as_str()), "{}", item.item_id);
        }
        let p = score_responses(&items, &responses, &res).unwrap();
        assert_eq!(p.proportion(ResponseCategory::Correct), 1.0);
    }

    #[test]
    fn zero_sigma_is_bit_identical() {
        let (model, _, _) = fixture();
        for layer in [1, 4, 8] {
            for pct in [10, 50, 90] {
                let spec = PerturbationSpec::new(layer, pct, 0.0, 7).unwrap();
                assert_eq!(apply_lesion(&model, &spec).unwrap(), model);
            }
        }
    }

    #[test]
    fn half_the_rows_change_and_only_in_the_target_layer() {
        let (model, _, _) = fixture();
        let spec = PerturbationSpec::new(3, 50, 0.7, 11).unwrap();
        let lesioned = apply_lesion(&model, &spec).unwrap();
        let (a, b) = (model.layer(3), lesioned.layer(3));
        for (x, y) in a.attention().iter().zip(b.attention()) {
            assert_eq!(differing_rows(x, y), 32);
        }
        assert_eq!(a.mlp, b.mlp);
        for l in (1..=8).filter(|&l| l != 3) {
            assert_eq!(model.layer(l), lesioned.layer(l));
        }
        assert_eq!(model.embedding(), lesioned.embedding());
        assert_eq!(apply_lesion(&model, &spec).unwrap(), lesioned);
    }

    #[test]
    fn mlp_scope_touches_mlp() {
        let (model, _, _) = fixture();
        let spec = PerturbationSpec::new(2, 30, 0.5, 1).unwrap();
        let a = apply_lesion_scoped(&model, &spec, LesionScope::AttentionAndMlp).unwrap();
        let b = apply_lesion(&model, &spec).unwrap();
        assert_eq!(a.layer(2).q, b.layer(2).q);
        let (m0, m1) = (model.layer(2).mlp.as_ref().unwrap(), a.layer(2).mlp.as_ref().unwrap());
        assert_eq!(differing_rows(&m0.w_in, &m1.w_in), 19);
        assert_eq!(differing_rows(&m0.w_out, &m1.w_out), 19);
    }

    #[test]
    fn out_of_range_layer_rejected() {
        let (model, _, _) = fixture();
        let spec = PerturbationSpec::new(9, 50, 0.5, 1).unwrap();
        assert!(matches!(apply_lesion(&model, &spec), Err(Error::InvalidSpec(_))));
        assert!(PerturbationSpec::new(0, 50, 0.5, 1).is_err());
        assert!(PerturbationSpec::new(1, 95, 0.5, 1).is_err());
        assert!(PerturbationSpec::new(1, 50, 2.0, 1).is_err());
        assert!(PerturbationSpec::new(1, 50, 0.55, 1).is_err());
    }

    #[test]
    fn row_sets_do_not_depend_on_sigma() {
        let (model, _, _) = fixture();
        let a = apply_lesion(&model, &PerturbationSpec::new(5, 40, 0.3, 2).unwrap()).unwrap();
        let b = apply_lesion(&model, &PerturbationSpec::new(5, 40, 1.7, 2).unwrap()).unwrap();
        let rows = |m: &ToyTransformer| -> Vec<usize> {
            (0..64).filter(|&r| m.layer(5).q.row(r) != model.layer(5).q.row(r)).collect()
        };
        assert_eq!(rows(&a), rows(&b));
        assert_eq!(rows(&a), selected_rows(2, 5, 40, 64));
    }

    #[test]
    fn sweep_sizes() {
        let pcts: Vec<u32> = (1..=9).map(|i| i * 10).collect();
        let sigmas: Vec<f64> = (0..20).map(|i| i as f64 / 10.0).collect();
        assert_eq!(enumerate_sweep(40, &pcts, &sigmas, 0).unwrap().len(), 7200);
        assert_eq!(enumerate_sweep(8, &pcts, &sigmas, 0).unwrap().len(), 1440);
        assert_eq!(enumerate_sweep(1, &[10], &[0.0], 0).unwrap().len(), 1);
        let s = enumerate_sweep(2, &[10, 20], &[0.0, 0.1], 0).unwrap();
        let order: Vec<(u32, u32, u32)> = s.iter().map(|x| (x.layer, x.pct, x.sigma_tenths)).collect();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(order, sorted);
    }

    #[test]
    fn heavy_lesion_degrades_and_is_deterministic() {
        let (model, items, res) = fixture();
        let spec = PerturbationSpec::new(4, 90, 1.9, 0).unwrap();
        let a = run_condition(&model, &spec, &items, &res, LesionScope::Attention).unwrap();
        let b = run_condition(&model, &spec, &items, &res, LesionScope::Attention).unwrap();
        assert_eq!(a, b);
        assert!(a.profile.proportion(ResponseCategory::Correct) < 1.0);
    }

    #[test]
    fn first_word_strips_echo() {
        let prompt = "Name this picture: <pic:cat>";
        assert_eq!(first_word("picture cat", prompt).as_deref(), Some("cat"));
        assert_eq!(first_word("Name this picture: <pic:cat> Dog.", prompt).as_deref(), Some("dog"));
        assert_eq!(first_word("", prompt), None);
        assert_eq!(first_word("name this", prompt), None);
    }

    #[test]
    fn weights_round_trip() {
        let (model, _, _) = fixture();
        let text = model.to_json().unwrap();
        assert_eq!(ToyTransformer::from_json(&text).unwrap(), model);
        let broken = text.replacen("\"hidden\":64", "\"hidden\":65", 1);
        assert!(ToyTransformer::from_json(&broken).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn row_fraction_is_floor(pct in 10u32..=90, layer in 1u32..=8, seed in any::<u64>()) {
            let rows = selected_rows(seed, layer, pct, 64);
            prop_assert_eq!(rows.len(), (pct as usize * 64) / 100);
            prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
