use crate::{Error, Result};

/// Edit distance with unit insert, delete and substitute costs.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(x != y);
            curr[j + 1] = substitution.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// `1 - levenshtein(a, b) / max(|a|, |b|)`, in [0, 1].
pub fn normalized_similarity<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput(
            "similarity of an empty sequence is undefined".into(),
        ));
    }
    let longest = a.len().max(b.len());
    Ok(1.0 - levenshtein(a, b) as f64 / longest as f64)
}

/// Similarity of two phoneme sequences.
pub fn phoneme_similarity<S: AsRef<str>>(a: &[S], b: &[S]) -> Result<f64> {
    let a: Vec<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: Vec<&str> = b.iter().map(AsRef::as_ref).collect();
    normalized_similarity(&a, &b)
}

/// Similarity of two spellings, letters standing in for phonemes.
pub fn letter_similarity(a: &str, b: &str) -> Result<f64> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    normalized_similarity(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ph(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_sequences() {
        assert_eq!(phoneme_similarity(&ph("SH IY P"), &ph("SH IY P")).unwrap(), 1.0);
    }

    #[test]
    fn one_substitution_of_three() {
        let s = phoneme_similarity(&ph("SH IY B"), &ph("SH IY P")).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-12);
        assert!((s - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn fully_different() {
        assert_eq!(phoneme_similarity(&ph("K AE T"), &ph("D AO G")).unwrap(), 0.0);
    }

    #[test]
    fn empty_is_an_error() {
        let empty: Vec<&str> = vec![];
        assert!(matches!(
            phoneme_similarity(&empty, &ph("K")),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn known_distances() {
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
        assert_eq!(levenshtein(b"", b"abc"), 3);
        assert_eq!(levenshtein(b"flaw", b"lawn"), 2);
    }

    fn seq() -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..5, 1..8)
    }

    proptest! {
        #[test]
        fn symmetric(a in seq(), b in seq()) {
            prop_assert_eq!(normalized_similarity(&a, &b).unwrap(), normalized_similarity(&b, &a).unwrap());
        }

        #[test]
        fn triangle_inequality(a in seq(), b in seq(), c in seq()) {
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
        }

        #[test]
        fn one_iff_identical(a in seq(), b in seq()) {
            let s = normalized_similarity(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s == 1.0, a == b);
        }
    }
}
