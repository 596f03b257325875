//! Words over the alphabet {0, 1, #}.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One letter of the alphabet. Declaration order is the shortlex symbol order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Zero,
    One,
    Hash,
}

impl Symbol {
    pub fn from_char(c: char) -> Option<Symbol> {
        match c {
            '0' => Some(Symbol::Zero),
            '1' => Some(Symbol::One),
            '#' => Some(Symbol::Hash),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Symbol::Zero => '0',
            Symbol::One => '1',
            Symbol::Hash => '#',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid symbol {found:?} at offset {offset}; words range over 0, 1 and #")]
pub struct WordError {
    pub found: char,
    pub offset: usize,
}

/// An immutable word. `Ord` is the shortlex order.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Word(Vec<Symbol>);

impl Word {
    pub const EMPTY: Word = Word(Vec::new());

    pub fn empty() -> Word {
        Word(Vec::new())
    }

    pub fn from_symbols(symbols: Vec<Symbol>) -> Word {
        Word(symbols)
    }

    /// `"1"` repeated `n` times.
    pub fn ones(n: usize) -> Word {
        Word(vec![Symbol::One; n])
    }

    pub fn zeros(n: usize) -> Word {
        Word(vec![Symbol::Zero; n])
    }

    pub fn one() -> Word {
        Word::ones(1)
    }

    pub fn zero() -> Word {
        Word::zeros(1)
    }

    pub fn from_bool(b: bool) -> Word {
        if b {
            Word::one()
        } else {
            Word::zero()
        }
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True iff the word is exactly `"1"`.
    pub fn truthy(&self) -> bool {
        self.0.as_slice() == [Symbol::One]
    }

    pub fn is_unary(&self) -> bool {
        self.0.iter().all(|&s| s == Symbol::One)
    }

    pub fn contains_hash(&self) -> bool {
        self.0.contains(&Symbol::Hash)
    }

    pub fn position_of_hash(&self) -> Option<usize> {
        self.0.iter().position(|&s| s == Symbol::Hash)
    }

    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n.min(self.len())].to_vec())
    }

    pub fn suffix_from(&self, start: usize) -> Word {
        Word(self.0[start.min(self.len())..].to_vec())
    }

    pub fn push(&self, s: Symbol) -> Word {
        let mut v = self.0.clone();
        v.push(s);
        Word(v)
    }

    /// `v^n`.
    pub fn repeat(&self, n: usize) -> Word {
        Word(self.0.repeat(n))
    }
}

pub fn concat(a: &Word, b: &Word) -> Word {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(&a.0);
    v.extend_from_slice(&b.0);
    Word(v)
}

/// Whether `v` is a contiguous factor of `w`.
pub fn is_subword(v: &Word, w: &Word) -> bool {
    if v.len() > w.len() {
        return false;
    }
    v.is_empty() || w.0.windows(v.len()).any(|win| win == v.0.as_slice())
}

pub fn shortlex_compare(v: &Word, w: &Word) -> Ordering {
    v.len().cmp(&w.len()).then_with(|| v.0.cmp(&w.0))
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        shortlex_compare(self, other)
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FromStr for Word {
    type Err = WordError;

    fn from_str(s: &str) -> Result<Word, WordError> {
        s.chars()
            .enumerate()
            .map(|(offset, c)| Symbol::from_char(c).ok_or(WordError { found: c, offset }))
            .collect::<Result<Vec<_>, _>>()
            .map(Word)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Word, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn concat_examples() {
        assert_eq!(concat(&w("10"), &w("1")), w("101"));
        assert_eq!(concat(&Word::empty(), &w("0#1")), w("0#1"));
        assert_eq!(concat(&w("1").repeat(3), &Word::empty()), w("111"));
    }

    #[test]
    fn subword_examples() {
        assert!(is_subword(&w("01"), &w("101")));
        assert!(is_subword(&Word::empty(), &w("0#")));
        assert!(!is_subword(&w("11"), &w("101")));
    }

    #[test]
    fn shortlex_examples() {
        assert_eq!(shortlex_compare(&w("11"), &w("000")), Ordering::Less);
        assert_eq!(shortlex_compare(&w("01"), &w("01")), Ordering::Equal);
        assert_eq!(shortlex_compare(&w("10"), &w("01")), Ordering::Greater);
        assert_eq!(shortlex_compare(&w("1"), &w("#")), Ordering::Less);
    }

    #[test]
    fn truthiness_is_exactly_one() {
        assert!(w("1").truthy());
        for s in ["", "0", "11", "#", "10"] {
            assert!(!w(s).truthy(), "{s}");
        }
    }

    #[test]
    fn rejects_foreign_symbols() {
        assert_eq!("01a".parse::<Word>(), Err(WordError { found: 'a', offset: 2 }));
    }
}
