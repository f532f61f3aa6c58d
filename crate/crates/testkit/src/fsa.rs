//! Word enumeration and a regular-expression oracle for automata.

use rand::Rng;
use regex::Regex;

/// Anchored regex for the car/cdr-chain language `c(a|d)*r`.
pub fn cadr_regex() -> Regex {
    Regex::new("^c[ad]*r$").expect("valid regex")
}

/// Every word over `alphabet` of length at most `max_len`, shortest
/// first, including the empty word.
pub fn all_words(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut layer = vec![String::new()];
    for _ in 0..max_len {
        layer = layer.iter().flat_map(|w| alphabet.iter().map(move |c| format!("{w}{c}"))).collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// A random word with length in `lens`.
pub fn random_word(rng: &mut impl Rng, alphabet: &[char], lens: std::ops::RangeInclusive<usize>) -> String {
    let n = rng.gen_range(lens);
    (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

/// Membership in `(a|d)^(len-1) r`.
pub fn more_chain_accepts(len: usize, w: &str) -> bool {
    let b = w.as_bytes();
    len > 0 && b.len() == len && b[..len - 1].iter().all(|c| matches!(c, b'a' | b'd')) && b[len - 1] == b'r'
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_count() {
        // 1 + 4 + 16 + 64 + 256 + 1024 + 4096
        assert_eq!(all_words(&['c', 'a', 'd', 'r'], 6).len(), 5461);
    }

    #[test]
    fn regex_examples() {
        let re = cadr_regex();
        for w in ["car", "cdr", "cadr", "cr"] {
            assert!(re.is_match(w), "{w}");
        }
        for w in ["", "c", "ca", "rac", "carr"] {
            assert!(!re.is_match(w), "{w}");
        }
    }

    #[test]
    fn more_chain_examples() {
        assert!(more_chain_accepts(3, "adr"));
        assert!(!more_chain_accepts(3, "ad"));
        assert!(!more_chain_accepts(3, "arr"));
        assert!(more_chain_accepts(1, "r"));
    }
}
