//! Response scoring into the unified error taxonomy.
//!
//! A (target, response) pair is routed through a fixed decision tree:
//! absent or refusal responses are `NoResponse`; the target or an accepted
//! synonym is `Correct`; other real words split into `Mixed`, `Semantic`,
//! `Formal` and `Unrelated` by semantic relatedness and phoneme similarity;
//! non-words split into `Nonword` and `Neologism` by phoneme or letter
//! overlap. The overlap threshold is a max-length-normalized similarity of
//! at least 0.5.

mod lexicon;
mod similarity;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use lexicon::{normalize_phrase, LexicalResources};
pub use similarity::{letter_similarity, levenshtein, normalized_similarity, phoneme_similarity};

/// Similarity at or above which two forms count as overlapping.
pub const OVERLAP_THRESHOLD: f64 = 0.5;

/// Assessment battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "PNT")]
    Pnt,
    #[serde(rename = "WABR")]
    Wabr,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Pnt => "PNT",
            Task::Wabr => "WABR",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PNT" => Ok(Task::Pnt),
            "WABR" | "WAB-R" | "WAB_R" => Ok(Task::Wabr),
            other => Err(Error::InvalidInput(format!("unknown task {other:?}"))),
        }
    }
}

/// Primary response label. `Phonemic` (Formal or Nonword) is only a
/// reporting alias, see [`ResponseCategory::is_phonemic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResponseCategory {
    Correct,
    Semantic,
    Formal,
    Nonword,
    Mixed,
    Neologism,
    Unrelated,
    NoResponse,
}

impl ResponseCategory {
    pub const COUNT: usize = 8;

    /// Canonical order shared by profiles, models and files.
    pub const ALL: [ResponseCategory; Self::COUNT] = [
        ResponseCategory::Correct,
        ResponseCategory::Semantic,
        ResponseCategory::Formal,
        ResponseCategory::Nonword,
        ResponseCategory::Mixed,
        ResponseCategory::Neologism,
        ResponseCategory::Unrelated,
        ResponseCategory::NoResponse,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column name used in files.
    pub fn label(self) -> &'static str {
        match self {
            ResponseCategory::Correct => "correct",
            ResponseCategory::Semantic => "semantic",
            ResponseCategory::Formal => "formal",
            ResponseCategory::Nonword => "nonword",
            ResponseCategory::Mixed => "mixed",
            ResponseCategory::Neologism => "neologism",
            ResponseCategory::Unrelated => "unrelated",
            ResponseCategory::NoResponse => "no_response",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == label)
    }

    pub fn is_phonemic(self) -> bool {
        matches!(self, ResponseCategory::Formal | ResponseCategory::Nonword)
    }

    pub fn is_error(self) -> bool {
        self != ResponseCategory::Correct
    }
}

impl fmt::Display for ResponseCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Category counts for one subject or one perturbation condition.
///
/// Proportions are derived from integer counts, so they always sum to one
/// and are multiples of `1 / item_count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorProfile {
    pub task: Task,
    counts: [u32; ResponseCategory::COUNT],
}

impl ErrorProfile {
    pub fn from_counts(counts: [u32; ResponseCategory::COUNT], task: Task) -> Result<Self> {
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::InvalidInput("profile has no items".into()));
        }
        Ok(ErrorProfile { task, counts })
    }

    pub fn counts(&self) -> &[u32; ResponseCategory::COUNT] {
        &self.counts
    }

    pub fn count(&self, category: ResponseCategory) -> u32 {
        self.counts[category.index()]
    }

    pub fn item_count(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn proportion(&self, category: ResponseCategory) -> f64 {
        self.count(category) as f64 / self.item_count() as f64
    }

    pub fn proportions(&self) -> [f64; ResponseCategory::COUNT] {
        let n = self.item_count() as f64;
        self.counts.map(|c| c as f64 / n)
    }

    /// Share of items that were not correct.
    pub fn error_mass(&self) -> f64 {
        let n = self.item_count();
        (n - self.count(ResponseCategory::Correct)) as f64 / n as f64
    }

    /// Formal plus Nonword.
    pub fn phonemic_proportion(&self) -> f64 {
        self.proportion(ResponseCategory::Formal) + self.proportion(ResponseCategory::Nonword)
    }
}

/// Aggregate item-level labels into a profile.
pub fn build_profile(items: &[ResponseCategory], task: Task) -> Result<ErrorProfile> {
    if items.is_empty() {
        return Err(Error::InvalidInput("cannot build a profile from zero items".into()));
    }
    let mut counts = [0u32; ResponseCategory::COUNT];
    for c in items {
        counts[c.index()] += 1;
    }
    ErrorProfile::from_counts(counts, task)
}

/// Which leaf of the decision tree fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionBranch {
    Absent,
    Refusal,
    TargetMatch,
    SynonymMatch,
    RealWordMixed,
    RealWordSemantic,
    RealWordFormal,
    RealWordUnrelated,
    NonwordOverlap,
    NonwordNoOverlap,
}

impl DecisionBranch {
    pub fn category(self) -> ResponseCategory {
        use DecisionBranch::*;
        match self {
            Absent | Refusal => ResponseCategory::NoResponse,
            TargetMatch | SynonymMatch => ResponseCategory::Correct,
            RealWordMixed => ResponseCategory::Mixed,
            RealWordSemantic => ResponseCategory::Semantic,
            RealWordFormal => ResponseCategory::Formal,
            RealWordUnrelated => ResponseCategory::Unrelated,
            NonwordOverlap => ResponseCategory::Nonword,
            NonwordNoOverlap => ResponseCategory::Neologism,
        }
    }
}

/// Classification with the evidence that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub category: ResponseCategory,
    pub branch: DecisionBranch,
    /// Scored token after normalization and truncation to the first word.
    pub token: Option<String>,
    /// Form similarity to the target, when it was consulted.
    pub similarity: Option<f64>,
}

/// Classify a response; see [`classify_traced`].
pub fn classify(target: &str, response: Option<&str>, res: &LexicalResources) -> Result<ResponseCategory> {
    classify_traced(target, response, res).map(|c| c.category)
}

/// Classify a response and report the decision branch taken.
pub fn classify_traced(
    target: &str,
    response: Option<&str>,
    res: &LexicalResources,
) -> Result<Classification> {
    let target = target.trim().to_lowercase();
    let target_phones = res
        .pronunciation(&target)
        .ok_or_else(|| Error::Config(format!("target {target:?} has no pronunciation entry")))?;

    let leaf = |branch: DecisionBranch, token: Option<String>, similarity: Option<f64>| Classification {
        category: branch.category(),
        branch,
        token,
        similarity,
    };

    let phrase = response.map(normalize_phrase).unwrap_or_default();
    if phrase.is_empty() {
        return Ok(leaf(DecisionBranch::Absent, None, None));
    }
    if res.is_refusal(&phrase) {
        return Ok(leaf(DecisionBranch::Refusal, None, None));
    }
    let token = match first_token(&phrase) {
        Some(t) => t,
        None => return Ok(leaf(DecisionBranch::Absent, None, None)),
    };

    if token == target {
        return Ok(leaf(DecisionBranch::TargetMatch, Some(token), None));
    }
    if res.is_synonym(&target, &token) {
        return Ok(leaf(DecisionBranch::SynonymMatch, Some(token), None));
    }

    if res.is_word(&token) {
        let similarity = match res.pronunciation(&token) {
            Some(phones) => phoneme_similarity(target_phones, phones)?,
            None => letter_similarity(&target, &token)?,
        };
        let overlaps = similarity >= OVERLAP_THRESHOLD;
        let branch = match (res.is_semantically_related(&target, &token), overlaps) {
            (true, true) => DecisionBranch::RealWordMixed,
            (true, false) => DecisionBranch::RealWordSemantic,
            (false, true) => DecisionBranch::RealWordFormal,
            (false, false) => DecisionBranch::RealWordUnrelated,
        };
        return Ok(leaf(branch, Some(token), Some(similarity)));
    }

    let letters = letter_similarity(&target, &token)?;
    let similarity = match res.pronunciation(&token) {
        Some(phones) => phoneme_similarity(target_phones, phones)?.max(letters),
        None => letters,
    };
    let branch = if similarity >= OVERLAP_THRESHOLD {
        DecisionBranch::NonwordOverlap
    } else {
        DecisionBranch::NonwordNoOverlap
    };
    Ok(leaf(branch, Some(token), Some(similarity)))
}

/// First whitespace-delimited token with surrounding punctuation removed.
pub fn first_token(phrase: &str) -> Option<String> {
    phrase
        .split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
                .trim_matches('\'')
                .to_lowercase()
        })
        .find(|w| !w.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use ResponseCategory::*;

    fn lex() -> LexicalResources {
        LexicalResources::bundled()
    }

    fn cat_of(target: &str, response: Option<&str>) -> ResponseCategory {
        classify(target, response, &lex()).unwrap()
    }

    #[test]
    fn published_examples() {
        assert_eq!(cat_of("sheep", Some("goat")), Semantic);
        assert_eq!(cat_of("sheep", Some("sheeb")), Nonword);
        assert_eq!(cat_of("sheet", Some("sheep")), Formal);
        assert_eq!(cat_of("cat", Some("rat")), Mixed);
        assert_eq!(cat_of("sheep", None), NoResponse);
    }

    #[test]
    fn refusals_and_blanks() {
        assert_eq!(cat_of("sheep", Some("I don't know")), NoResponse);
        assert_eq!(cat_of("sheep", Some("   ")), NoResponse);
        assert_eq!(cat_of("sheep", Some("no")), NoResponse);
        assert_eq!(cat_of("sheep", Some("...")), NoResponse);
    }

    #[test]
    fn correct_and_synonyms() {
        assert_eq!(cat_of("sheep", Some("Sheep")), Correct);
        assert_eq!(cat_of("cat", Some("kitty")), Correct);
        assert_eq!(cat_of("sheep", Some("sheep, I think")), Correct);
    }

    #[test]
    fn multiword_is_truncated() {
        assert_eq!(cat_of("sheep", Some("goat maybe sheep")), Semantic);
    }

    #[test]
    fn unrelated_and_neologism() {
        assert_eq!(cat_of("sheep", Some("piano")), Unrelated);
        assert_eq!(cat_of("sheep", Some("florp")), Neologism);
    }

    #[test]
    fn nonword_without_pronunciation_uses_letters() {
        let c = classify_traced("sheep", Some("shee"), &lex()).unwrap();
        assert_eq!(c.category, Nonword);
        assert!((c.similarity.unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn target_without_pronunciation_is_config_error() {
        assert!(matches!(classify("zebra", Some("horse"), &lex()), Err(Error::Config(_))));
    }

    #[test]
    fn build_profile_counts() {
        let p = build_profile(&[Correct; 10], Task::Pnt).unwrap();
        assert_eq!(p.proportion(Correct), 1.0);

        let mut items = vec![Correct; 5];
        items.extend([Semantic; 3]);
        items.extend([NoResponse; 2]);
        let p = build_profile(&items, Task::Pnt).unwrap();
        assert_eq!(p.proportion(Correct), 0.5);
        assert_eq!(p.proportion(Semantic), 0.3);
        assert_eq!(p.proportion(NoResponse), 0.2);

        let mut items = vec![Correct; 30];
        items.extend([Semantic; 15]);
        items.extend([Formal; 9]);
        items.extend([Neologism; 6]);
        let p = build_profile(&items, Task::Pnt).unwrap();
        assert_eq!(p.item_count(), 60);
        assert_eq!(
            [p.proportion(Correct), p.proportion(Semantic), p.proportion(Formal), p.proportion(Neologism)],
            [0.5, 0.25, 0.15, 0.1]
        );
        assert!(matches!(build_profile(&[], Task::Pnt), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn task_parsing() {
        assert_eq!("WAB-R".parse::<Task>().unwrap(), Task::Wabr);
        assert_eq!("pnt".parse::<Task>().unwrap(), Task::Pnt);
        assert!("xyz".parse::<Task>().is_err());
    }

    fn any_category() -> impl Strategy<Value = ResponseCategory> {
        (0..ResponseCategory::COUNT).prop_map(|i| ResponseCategory::ALL[i])
    }

    fn any_response() -> impl Strategy<Value = Option<String>> {
        let lex = lex();
        let words: Vec<String> = lex.pronunciations.keys().cloned().collect();
        prop_oneof![
            Just(None),
            prop::sample::select(words).prop_map(Some),
            "[a-z]{1,7}( [a-z]{1,4})?".prop_map(Some),
        ]
    }

    proptest! {
        #[test]
        fn profile_invariants(items in prop::collection::vec(any_category(), 1..200)) {
            let p = build_profile(&items, Task::Wabr).unwrap();
            let props = p.proportions();
            prop_assert!((props.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let n = p.item_count() as f64;
            for v in props {
                prop_assert!((v * n - (v * n).round()).abs() < 1e-9);
            }
        }

        #[test]
        fn exactly_one_branch_and_deterministic(
            target in prop::sample::select(vec!["sheep", "cat", "lemon", "car", "shirt"]),
            response in any_response(),
        ) {
            let lex = lex();
            let a = classify_traced(target, response.as_deref(), &lex).unwrap();
            let b = classify_traced(target, response.as_deref(), &lex).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.category, a.branch.category());
        }
    }
}
