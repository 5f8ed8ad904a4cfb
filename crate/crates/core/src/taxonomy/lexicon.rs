use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::{Error, Result};

const BUNDLED_PRONUNCIATIONS: &str = include_str!("../../data/pronunciations.tsv");
const BUNDLED_WORDLIST: &str = include_str!("../../data/wordlist.txt");
const BUNDLED_NORMS: &str = include_str!("../../data/norms.tsv");
const BUNDLED_SYNONYMS: &str = include_str!("../../data/synonyms.tsv");
const BUNDLED_REFUSALS: &str = include_str!("../../data/refusals.txt");

/// Word lists, pronunciations and relation tables used by the classifier.
#[derive(Debug, Clone, Default)]
pub struct LexicalResources {
    pub wordlist: BTreeSet<String>,
    pub pronunciations: BTreeMap<String, Vec<String>>,
    pub synonyms: BTreeMap<String, BTreeSet<String>>,
    pub semantic_norms: BTreeMap<String, BTreeSet<String>>,
    pub refusals: BTreeSet<String>,
}

impl LexicalResources {
    /// The small lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_texts(
            BUNDLED_WORDLIST,
            BUNDLED_PRONUNCIATIONS,
            BUNDLED_NORMS,
            BUNDLED_SYNONYMS,
            BUNDLED_REFUSALS,
        )
        .expect("bundled lexicon is valid")
    }

    pub fn from_texts(
        wordlist: &str,
        pronunciations: &str,
        norms: &str,
        synonyms: &str,
        refusals: &str,
    ) -> Result<Self> {
        let res = LexicalResources {
            wordlist: parse_lines(wordlist).map(|w| w.to_lowercase()).collect(),
            pronunciations: parse_pronunciations(pronunciations)?,
            synonyms: parse_relation_table(synonyms, "synonyms.tsv")?,
            semantic_norms: parse_relation_table(norms, "norms.tsv")?,
            refusals: parse_lines(refusals).map(normalize_phrase).collect(),
        };
        res.check_disjoint()?;
        Ok(res)
    }

    /// Load `wordlist.txt`, `pronunciations.tsv`, `norms.tsv`, `synonyms.tsv`
    /// and `refusals.txt` from a directory. Missing synonym or refusal files
    /// are treated as empty.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str, required: bool| -> Result<String> {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(s) => Ok(s),
                Err(e) if !required && e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
                Err(e) => Err(Error::io(path, e)),
            }
        };
        Self::from_texts(
            &read("wordlist.txt", true)?,
            &read("pronunciations.tsv", true)?,
            &read("norms.tsv", true)?,
            &read("synonyms.tsv", false)?,
            &read("refusals.txt", false)?,
        )
    }

    pub fn pronunciation(&self, word: &str) -> Option<&[String]> {
        self.pronunciations.get(word).map(Vec::as_slice)
    }

    pub fn is_word(&self, word: &str) -> bool {
        self.wordlist.contains(word)
    }

    pub fn is_synonym(&self, target: &str, response: &str) -> bool {
        self.synonyms
            .get(target)
            .is_some_and(|set| set.contains(response))
    }

    pub fn is_semantically_related(&self, target: &str, response: &str) -> bool {
        self.semantic_norms
            .get(target)
            .is_some_and(|set| set.contains(response))
    }

    pub fn is_refusal(&self, phrase: &str) -> bool {
        self.refusals.contains(phrase)
    }

    /// Every target must have a pronunciation entry.
    pub fn check_targets<'a>(&self, targets: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for target in targets {
            let t = target.trim().to_lowercase();
            if self.pronunciation(&t).is_none() {
                return Err(Error::Config(format!(
                    "target {target:?} has no pronunciation entry"
                )));
            }
        }
        Ok(())
    }

    fn check_disjoint(&self) -> Result<()> {
        for (target, accepted) in &self.synonyms {
            if let Some(related) = self.semantic_norms.get(target) {
                if let Some(word) = accepted.intersection(related).next() {
                    return Err(Error::Config(format!(
                        "{word:?} is listed both as a synonym and as a semantic relative of {target:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn parse_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

/// Lowercase, trim, collapse inner whitespace. Used for refusal matching.
pub fn normalize_phrase(text: &str) -> String {
    text.split_whitespace()
        .map(|w| w.to_lowercase().replace('\u{2019}', "'"))
        .collect::<Vec<_>>()
        .join(" ")
        .trim_matches(|c: char| c.is_ascii_punctuation() && c != '\'')
        .to_string()
}

fn parse_pronunciations(text: &str) -> Result<BTreeMap<String, Vec<String>>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (word, phones) = line.split_once('\t').ok_or_else(|| Error::Row {
            path: "pronunciations.tsv".into(),
            row: lineno + 1,
            message: "expected word<TAB>phonemes".into(),
        })?;
        let phones: Vec<String> = phones
            .split_whitespace()
            .map(|p| p.trim_end_matches(|c: char| c.is_ascii_digit()).to_uppercase())
            .collect();
        if phones.is_empty() {
            return Err(Error::Row {
                path: "pronunciations.tsv".into(),
                row: lineno + 1,
                message: format!("{word:?} has an empty pronunciation"),
            });
        }
        // CMU-style variants such as "word(2)" fall back to the first entry.
        let word = word.trim().to_lowercase();
        let base = match word.find('(') {
            Some(i) if word.ends_with(')') => word[..i].to_string(),
            _ => word,
        };
        out.entry(base).or_insert(phones);
    }
    Ok(out)
}

fn parse_relation_table(text: &str, name: &str) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (target, related) = line.split_once('\t').ok_or_else(|| Error::Row {
            path: name.into(),
            row: lineno + 1,
            message: "expected target<TAB>word,word,...".into(),
        })?;
        out.entry(target.trim().to_lowercase()).or_default().extend(
            related
                .split(',')
                .map(|w| w.trim().to_lowercase())
                .filter(|w| !w.is_empty()),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lexicon_loads() {
        let lex = LexicalResources::bundled();
        assert!(lex.is_word("sheep"));
        assert_eq!(lex.pronunciation("sheep").unwrap(), ["SH", "IY", "P"]);
        assert!(lex.is_semantically_related("sheep", "goat"));
        assert!(lex.is_synonym("cat", "kitty"));
        assert!(lex.is_refusal("i don't know"));
    }

    #[test]
    fn stress_digits_are_stripped() {
        let p = parse_pronunciations("sheep\tSH IY1 P\nsheep(2)\tSH IH1 P\n").unwrap();
        assert_eq!(p["sheep"], ["SH", "IY", "P"]);
    }

    #[test]
    fn synonym_and_norm_overlap_is_rejected() {
        let err = LexicalResources::from_texts("cat\n", "cat\tK AE T\n", "cat\tkitty\n", "cat\tkitty\n", "")
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn missing_target_pronunciation() {
        let lex = LexicalResources::bundled();
        assert!(lex.check_targets(["sheep", "cat"]).is_ok());
        assert!(matches!(lex.check_targets(["zebra"]), Err(Error::Config(_))));
    }

    #[test]
    fn phrase_normalization() {
        assert_eq!(normalize_phrase("  I   Don\u{2019}t know. "), "i don't know");
    }
}
