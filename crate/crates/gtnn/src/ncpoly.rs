//! Non-commutative polynomials over a finite alphabet of variables.
//!
//! A [`Word`] is a finite sequence of variable indices `1..=k`; the empty
//! word is the multiplicative unit. An [`NCPoly`] is a finite real linear
//! combination of words, multiplied by concatenation. Words are ordered by
//! length first and lexicographically within a length, which fixes the
//! canonical coefficient order used for parameter vectors and files.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A monomial word `X_{j1} X_{j2} ... X_{jd}` stored as its letters.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(Vec<u16>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    /// Builds a word, checking every letter lies in `1..=arity`.
    pub fn new(letters: Vec<u16>, arity: usize) -> Result<Self> {
        let w = Word(letters);
        w.check_arity(arity)?;
        Ok(w)
    }

    /// Builds a word without an alphabet check. Letters must still be >= 1.
    pub fn from_letters(letters: impl Into<Vec<u16>>) -> Self {
        let letters = letters.into();
        assert!(letters.iter().all(|&l| l >= 1), "word letters start at 1");
        Word(letters)
    }

    pub fn letters(&self) -> &[u16] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Largest letter, 0 for the empty word.
    pub fn max_letter(&self) -> u16 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn check_arity(&self, arity: usize) -> Result<()> {
        match self.0.iter().find(|&&l| l == 0 || l as usize > arity) {
            Some(&letter) => Err(Error::LetterOutOfRange { letter, arity }),
            None => Ok(()),
        }
    }

    /// Number of occurrences of variable `j` (1-based).
    pub fn occurrences(&self, j: u16) -> usize {
        self.0.iter().filter(|&&l| l == j).count()
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = Vec::with_capacity(self.len() + other.len());
        letters.extend_from_slice(&self.0);
        letters.extend_from_slice(&other.0);
        Word(letters)
    }

    pub fn reversed(&self) -> Word {
        Word(self.0.iter().rev().copied().collect())
    }

    /// The word with its first letter removed; `None` for the empty word.
    pub fn tail(&self) -> Option<Word> {
        if self.0.is_empty() {
            None
        } else {
            Some(Word(self.0[1..].to_vec()))
        }
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for l in &self.0 {
            write!(f, "X{l}")?;
        }
        Ok(())
    }
}

/// Returns `(k^d, number of words of length <= d)`.
pub fn word_count(k: usize, d: usize) -> Result<(u64, u64)> {
    if k == 0 {
        return Err(Error::InvalidArgument("alphabet size must be >= 1".into()));
    }
    let k = k as u64;
    let mut exact: u64 = 1;
    let mut total: u64 = 1;
    for _ in 0..d {
        exact = exact.checked_mul(k).ok_or(Error::Overflow("word count"))?;
        total = total.checked_add(exact).ok_or(Error::Overflow("word count"))?;
    }
    Ok((exact, total))
}

/// All words of length <= `d` over `1..=k`, in canonical order.
pub fn enumerate_basis(k: usize, d: usize) -> Vec<Word> {
    let mut out = vec![Word::empty()];
    let mut level = vec![Word::empty()];
    for _ in 0..d {
        let mut next = Vec::with_capacity(level.len() * k);
        for w in &level {
            for j in 1..=k as u16 {
                let mut letters = w.0.clone();
                letters.push(j);
                next.push(Word(letters));
            }
        }
        out.extend(next.iter().cloned());
        level = next;
    }
    out
}

/// The expansion constants of a polynomial: the l1 norm of its
/// coefficients, and per variable the occurrence-weighted l1 norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConstants {
    pub c_total: f64,
    pub c_per_var: Vec<f64>,
}

impl ExpansionConstants {
    pub fn zero(arity: usize) -> Self {
        ExpansionConstants {
            c_total: 0.0,
            c_per_var: vec![0.0; arity],
        }
    }
}

/// A non-commutative polynomial with real coefficients.
///
/// The term map never stores an exact zero.
#[derive(Clone, PartialEq)]
pub struct NCPoly {
    arity: usize,
    terms: BTreeMap<Word, f64>,
}

impl NCPoly {
    pub fn zero(arity: usize) -> Self {
        assert!(arity >= 1, "arity must be >= 1");
        NCPoly {
            arity,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(arity: usize) -> Self {
        Self::monomial(arity, Word::empty(), 1.0).expect("empty word is valid")
    }

    /// The single variable `X_j` (1-based).
    pub fn var(arity: usize, j: u16) -> Result<Self> {
        Self::monomial(arity, Word::new(vec![j], arity)?, 1.0)
    }

    pub fn monomial(arity: usize, word: Word, coeff: f64) -> Result<Self> {
        Self::from_terms(arity, [(word, coeff)])
    }

    /// Sums the given terms; repeated words accumulate, exact zeros are dropped.
    pub fn from_terms(arity: usize, terms: impl IntoIterator<Item = (Word, f64)>) -> Result<Self> {
        let mut p = Self::zero(arity);
        for (w, c) in terms {
            w.check_arity(arity)?;
            p.add_term(w, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, w: Word, c: f64) {
        let entry = self.terms.entry(w);
        match entry {
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let v = *o.get() + c;
                if v == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = v;
                }
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                if c != 0.0 {
                    v.insert(c);
                }
            }
        }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in canonical word order.
    pub fn terms(&self) -> impl Iterator<Item = (&Word, f64)> + '_ {
        self.terms.iter().map(|(w, &c)| (w, c))
    }

    pub fn coefficient(&self, w: &Word) -> f64 {
        self.terms.get(w).copied().unwrap_or(0.0)
    }

    /// Length of the longest word, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.terms.keys().map(Word::len).max()
    }

    pub fn has_constant_term(&self) -> bool {
        self.terms.contains_key(&Word::empty())
    }

    fn check_same_arity(&self, other: &NCPoly) -> Result<()> {
        if self.arity != other.arity {
            return Err(Error::ArityMismatch {
                expected: self.arity,
                found: other.arity,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &NCPoly) -> Result<NCPoly> {
        self.check_same_arity(other)?;
        let mut out = self.clone();
        for (w, &c) in &other.terms {
            out.add_term(w.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &NCPoly) -> Result<NCPoly> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, r: f64) -> NCPoly {
        let terms = self
            .terms
            .iter()
            .filter_map(|(w, &c)| {
                let v = c * r;
                (v != 0.0).then(|| (w.clone(), v))
            })
            .collect();
        NCPoly {
            arity: self.arity,
            terms,
        }
    }

    /// Product extending word concatenation bilinearly.
    pub fn multiply(&self, other: &NCPoly) -> Result<NCPoly> {
        self.check_same_arity(other)?;
        let mut out = NCPoly::zero(self.arity);
        for (u, &a) in &self.terms {
            for (v, &b) in &other.terms {
                out.add_term(u.concat(v), a * b);
            }
        }
        Ok(out)
    }

    /// Drops every term whose word is longer than `max_degree`.
    pub fn truncate(&self, max_degree: usize) -> NCPoly {
        NCPoly {
            arity: self.arity,
            terms: self
                .terms
                .iter()
                .filter(|(w, _)| w.len() <= max_degree)
                .map(|(w, &c)| (w.clone(), c))
                .collect(),
        }
    }

    /// Re-indexes the polynomial into a larger alphabet.
    pub fn with_arity(&self, arity: usize) -> Result<NCPoly> {
        NCPoly::from_terms(arity, self.terms.iter().map(|(w, &c)| (w.clone(), c)))
    }

    pub fn expansion_constants(&self) -> ExpansionConstants {
        let mut k = ExpansionConstants::zero(self.arity);
        for (w, &c) in &self.terms {
            let a = c.abs();
            k.c_total += a;
            for &l in w.letters() {
                k.c_per_var[l as usize - 1] += a;
            }
        }
        k
    }
}

impl fmt::Debug for NCPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for NCPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (w, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}*{w}")?;
        }
        Ok(())
    }
}

/// On-disk form: `[[letters], coefficient]` pairs in canonical order.
#[derive(Serialize, Deserialize)]
struct TermRecord(Vec<u16>, f64);

impl Serialize for NCPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.terms.iter().map(|(w, &c)| TermRecord(w.0.clone(), c)))
    }
}

/// Parses the serialized term list of a polynomial of the given arity.
pub fn poly_from_records(arity: usize, records: Vec<(Vec<u16>, f64)>) -> Result<NCPoly> {
    NCPoly::from_terms(arity, records.into_iter().map(|(l, c)| (Word(l), c)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(l: &[u16]) -> Word {
        Word::from_letters(l.to_vec())
    }

    fn x(arity: usize, j: u16) -> NCPoly {
        NCPoly::var(arity, j).unwrap()
    }

    fn example_h() -> NCPoly {
        NCPoly::from_terms(2, [(w(&[1, 2, 1]), -5.0), (w(&[1, 1, 2]), 3.0)]).unwrap()
    }

    #[test]
    fn word_counts() {
        assert_eq!(word_count(2, 3).unwrap(), (8, 15));
        assert_eq!(word_count(1, 5).unwrap(), (1, 6));
        assert_eq!(word_count(3, 2).unwrap(), (9, 13));
        assert_eq!(word_count(4, 0).unwrap(), (1, 1));
        assert!(matches!(word_count(2, 64), Err(Error::Overflow(_))));
        assert!(word_count(0, 1).is_err());
    }

    #[test]
    fn word_count_matches_enumeration() {
        for k in 1..=3 {
            for d in 0..=4 {
                let basis = enumerate_basis(k, d);
                let (exact, total) = word_count(k, d).unwrap();
                assert_eq!(basis.len() as u64, total);
                assert_eq!(basis.iter().filter(|b| b.len() == d).count() as u64, exact);
            }
        }
    }

    #[test]
    fn basis_order() {
        assert_eq!(enumerate_basis(2, 1), vec![w(&[]), w(&[1]), w(&[2])]);
        assert_eq!(
            enumerate_basis(2, 2),
            vec![w(&[]), w(&[1]), w(&[2]), w(&[1, 1]), w(&[1, 2]), w(&[2, 1]), w(&[2, 2])]
        );
        assert_eq!(enumerate_basis(1, 2), vec![w(&[]), w(&[1]), w(&[1, 1])]);
        let b = enumerate_basis(3, 3);
        assert!(b.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn degree_three_words_over_two_letters() {
        let cubic: Vec<_> = enumerate_basis(2, 3).into_iter().filter(|w| w.len() == 3).collect();
        assert_eq!(cubic.len(), 8);
    }

    #[test]
    fn add_and_scale() {
        let p = x(2, 1).add(&x(2, 2)).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.coefficient(&w(&[1])), 1.0);
        let q = NCPoly::monomial(2, w(&[1, 2]), 1.0).unwrap().scale(0.0);
        assert!(q.is_zero());
        let two = x(2, 1).scale(2.0);
        assert!(two.add(&x(2, 1).scale(-2.0)).unwrap().is_zero());
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        assert!(matches!(
            x(2, 1).add(&x(3, 1)),
            Err(Error::ArityMismatch { expected: 2, found: 3 })
        ));
        assert!(x(2, 1).multiply(&x(1, 1)).is_err());
        assert!(NCPoly::var(2, 3).is_err());
    }

    #[test]
    fn square_of_sum_expands_by_concatenation() {
        let s = x(2, 1).add(&x(2, 2)).unwrap();
        let sq = s.multiply(&s).unwrap();
        let expected = NCPoly::from_terms(
            2,
            [(w(&[1, 1]), 1.0), (w(&[1, 2]), 1.0), (w(&[2, 1]), 1.0), (w(&[2, 2]), 1.0)],
        )
        .unwrap();
        assert_eq!(sq, expected);
    }

    #[test]
    fn unit_and_noncommutativity() {
        let h = example_h();
        assert_eq!(NCPoly::one(2).multiply(&h).unwrap(), h);
        assert_eq!(h.multiply(&NCPoly::one(2)).unwrap(), h);
        let a = x(2, 1).multiply(&x(2, 2)).unwrap();
        let b = x(2, 2).multiply(&x(2, 1)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn expansion_constants_of_example() {
        let k = example_h().expansion_constants();
        assert_eq!(k.c_total, 8.0);
        assert_eq!(k.c_per_var, vec![16.0, 8.0]);
        assert_eq!(NCPoly::zero(3).expansion_constants(), ExpansionConstants::zero(3));
        let k = x(3, 1).expansion_constants();
        assert_eq!(k.c_total, 1.0);
        assert_eq!(k.c_per_var, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn truncate_and_constant_term() {
        let p = NCPoly::from_terms(2, [(w(&[]), 1.0), (w(&[1, 2, 2]), 2.0), (w(&[2]), 3.0)]).unwrap();
        assert!(p.has_constant_term());
        assert_eq!(p.degree(), Some(3));
        let t = p.truncate(1);
        assert_eq!(t.len(), 2);
        assert_eq!(t.degree(), Some(1));
    }

    #[test]
    fn serialization_is_canonical() {
        let p = NCPoly::from_terms(2, [(w(&[2, 1]), 0.5), (w(&[]), -1.0), (w(&[2]), 2.0)]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[[[],-1.0],[[2],2.0],[[2,1],0.5]]");
        let back: Vec<(Vec<u16>, f64)> = serde_json::from_str(&s).unwrap();
        assert_eq!(poly_from_records(2, back).unwrap(), p);
    }
}
