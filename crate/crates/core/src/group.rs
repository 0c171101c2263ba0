//! Canonical forms and arithmetic for the supported groups.
//!
//! Four families are supported: free groups `F_k`, lattices `Z^d`, lamplighter
//! groups `Z_q wr Z` and direct products of those. Every element has a unique
//! canonical representation, so structural equality is group equality.
//!
//! Text forms:
//!
//! | group     | example          | meaning                                     |
//! |-----------|------------------|---------------------------------------------|
//! | `free:k`  | `aB`, `e`        | lower case generator, upper case inverse    |
//! | `lattice:d` | `(1,-2)`       | integer vector                              |
//! | `wreath:q`| `[0:1,3:1]@5`    | lamp map `position:value`, then position    |
//! | `product` | `<x|y>`          | pair of component elements                  |

use std::collections::{HashMap, VecDeque};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of elements in an enumerated ball.
pub const DEFAULT_BALL_CAP: usize = 5_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroupKind {
    Free { rank: usize },
    Lattice { dim: usize },
    Wreath { base: u32 },
    Product(Box<GroupKind>, Box<GroupKind>),
}

/// A group element in canonical form.
///
/// Free letters are encoded as `2i` for the generator `i` and `2i + 1` for
/// its inverse. Wreath lamps are sorted by position and never store zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupElement {
    Free(Vec<u8>),
    Lattice(Vec<i64>),
    Wreath { lamps: Vec<(i64, u32)>, pos: i64 },
    Product(Box<GroupElement>, Box<GroupElement>),
}

#[inline]
pub fn inverse_letter(l: u8) -> u8 {
    l ^ 1
}

fn letter_char(l: u8) -> char {
    let base = b'a' + l / 2;
    if l.is_multiple_of(2) {
        base as char
    } else {
        (base as char).to_ascii_uppercase()
    }
}

/// Reduce a free word in place by cancelling adjacent letter–inverse pairs.
pub fn reduce_word(word: &[u8]) -> Vec<u8> {
    let mut out: Vec<u8> = Vec::with_capacity(word.len());
    for &l in word {
        if out.last() == Some(&inverse_letter(l)) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

/// Free-word text form, `e` for the empty word.
pub fn format_word(word: &[u8]) -> String {
    if word.is_empty() {
        "e".to_string()
    } else {
        word.iter().map(|&l| letter_char(l)).collect()
    }
}

pub fn parse_word(s: &str, rank: usize) -> Result<Vec<u8>> {
    let s = s.trim();
    if s == "e" || s.is_empty() {
        return Ok(Vec::new());
    }
    let mut word = Vec::with_capacity(s.len());
    for c in s.chars() {
        if !c.is_ascii_alphabetic() {
            return Err(Error::Parse(format!("bad letter {c:?} in free word {s:?}")));
        }
        let idx = (c.to_ascii_lowercase() as u8 - b'a') as usize;
        if idx >= rank {
            return Err(Error::Parse(format!("letter {c:?} out of range for free group of rank {rank}")));
        }
        let l = (2 * idx) as u8 + u8::from(c.is_ascii_uppercase());
        word.push(l);
    }
    Ok(reduce_word(&word))
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupElement::Free(w) => f.write_str(&format_word(w)),
            GroupElement::Lattice(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", parts.join(","))
            }
            GroupElement::Wreath { lamps, pos } => {
                let parts: Vec<String> = lamps.iter().map(|(p, v)| format!("{p}:{v}")).collect();
                write!(f, "[{}]@{}", parts.join(","), pos)
            }
            GroupElement::Product(a, b) => write!(f, "<{a}|{b}>"),
        }
    }
}

impl GroupElement {
    pub fn as_word(&self) -> Option<&[u8]> {
        match self {
            GroupElement::Free(w) => Some(w),
            _ => None,
        }
    }

    pub fn pair(a: GroupElement, b: GroupElement) -> GroupElement {
        GroupElement::Product(Box::new(a), Box::new(b))
    }
}

impl GroupKind {
    pub fn identity(&self) -> GroupElement {
        match self {
            GroupKind::Free { .. } => GroupElement::Free(Vec::new()),
            GroupKind::Lattice { dim } => GroupElement::Lattice(vec![0; *dim]),
            GroupKind::Wreath { .. } => GroupElement::Wreath { lamps: Vec::new(), pos: 0 },
            GroupKind::Product(a, b) => GroupElement::pair(a.identity(), b.identity()),
        }
    }

    /// Default symmetric generating set.
    ///
    /// Wreath products use translations `t^{±1}` together with the lamp
    /// increments `a^{±1}` at the current position.
    pub fn default_generators(&self) -> Vec<GroupElement> {
        let mut gens = match self {
            GroupKind::Free { rank } => (0..2 * *rank as u8).map(|l| GroupElement::Free(vec![l])).collect(),
            GroupKind::Lattice { dim } => {
                let mut v = Vec::new();
                for i in 0..*dim {
                    for s in [1i64, -1] {
                        let mut x = vec![0; *dim];
                        x[i] = s;
                        v.push(GroupElement::Lattice(x));
                    }
                }
                v
            }
            GroupKind::Wreath { base } => {
                let q = *base;
                let mut v = vec![
                    GroupElement::Wreath { lamps: Vec::new(), pos: 1 },
                    GroupElement::Wreath { lamps: Vec::new(), pos: -1 },
                    GroupElement::Wreath { lamps: vec![(0, 1)], pos: 0 },
                ];
                if q > 2 {
                    v.push(GroupElement::Wreath { lamps: vec![(0, q - 1)], pos: 0 });
                }
                v
            }
            GroupKind::Product(a, b) => {
                let (ea, eb) = (a.identity(), b.identity());
                let mut v: Vec<GroupElement> =
                    a.default_generators().into_iter().map(|g| GroupElement::pair(g, eb.clone())).collect();
                v.extend(b.default_generators().into_iter().map(|h| GroupElement::pair(ea.clone(), h)));
                v
            }
        };
        gens.sort_by_cached_key(|g| g.to_string());
        gens.dedup();
        gens
    }

    fn check(&self, a: &GroupElement) -> Result<()> {
        let ok = match (self, a) {
            (GroupKind::Free { rank }, GroupElement::Free(w)) => w.iter().all(|&l| (l as usize) < 2 * rank),
            (GroupKind::Lattice { dim }, GroupElement::Lattice(v)) => v.len() == *dim,
            (GroupKind::Wreath { base }, GroupElement::Wreath { lamps, .. }) => {
                lamps.iter().all(|&(_, v)| v > 0 && v < *base)
            }
            (GroupKind::Product(ka, kb), GroupElement::Product(a, b)) => {
                ka.check(a)?;
                kb.check(b)?;
                true
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Representation(format!("element {a} does not belong to {self}")))
        }
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mul_unchecked(a, b))
    }

    pub fn inv(&self, a: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        Ok(self.inv_unchecked(a))
    }

    /// Product without validating the kinds; panics on a kind mismatch.
    pub fn mul_unchecked(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        match (self, a, b) {
            (GroupKind::Free { .. }, GroupElement::Free(x), GroupElement::Free(y)) => {
                let mut out = Vec::with_capacity(x.len() + y.len());
                out.extend_from_slice(x);
                for &l in y {
                    if out.last() == Some(&inverse_letter(l)) {
                        out.pop();
                    } else {
                        out.push(l);
                    }
                }
                GroupElement::Free(out)
            }
            (GroupKind::Lattice { .. }, GroupElement::Lattice(x), GroupElement::Lattice(y)) => {
                GroupElement::Lattice(x.iter().zip(y).map(|(p, q)| p + q).collect())
            }
            (
                GroupKind::Wreath { base },
                GroupElement::Wreath { lamps: f, pos: p },
                GroupElement::Wreath { lamps: g, pos: r },
            ) => {
                // (f, p)(g, r) = (f + g(. - p), p + r)
                let q = *base;
                let mut out = Vec::with_capacity(f.len() + g.len());
                let (mut i, mut j) = (0, 0);
                while i < f.len() || j < g.len() {
                    let gp = g.get(j).map(|&(x, v)| (x + p, v));
                    match (f.get(i), gp) {
                        (Some(&(x, v)), Some((y, w))) if x == y => {
                            let s = (v + w) % q;
                            if s != 0 {
                                out.push((x, s));
                            }
                            i += 1;
                            j += 1;
                        }
                        (Some(&(x, v)), Some((y, _))) if x < y => {
                            out.push((x, v));
                            i += 1;
                        }
                        (Some(&(x, v)), None) => {
                            out.push((x, v));
                            i += 1;
                        }
                        (_, Some((y, w))) => {
                            out.push((y, w));
                            j += 1;
                        }
                        (None, None) => unreachable!(),
                    }
                }
                GroupElement::Wreath { lamps: out, pos: p + r }
            }
            (GroupKind::Product(ka, kb), GroupElement::Product(a1, b1), GroupElement::Product(a2, b2)) => {
                GroupElement::pair(ka.mul_unchecked(a1, a2), kb.mul_unchecked(b1, b2))
            }
            _ => panic!("element kind mismatch in group multiplication"),
        }
    }

    pub fn inv_unchecked(&self, a: &GroupElement) -> GroupElement {
        match (self, a) {
            (GroupKind::Free { .. }, GroupElement::Free(w)) => {
                GroupElement::Free(w.iter().rev().map(|&l| inverse_letter(l)).collect())
            }
            (GroupKind::Lattice { .. }, GroupElement::Lattice(v)) => {
                GroupElement::Lattice(v.iter().map(|x| -x).collect())
            }
            (GroupKind::Wreath { base }, GroupElement::Wreath { lamps, pos }) => {
                GroupElement::Wreath { lamps: lamps.iter().map(|&(x, v)| (x - pos, base - v)).collect(), pos: -pos }
            }
            (GroupKind::Product(ka, kb), GroupElement::Product(x, y)) => {
                GroupElement::pair(ka.inv_unchecked(x), kb.inv_unchecked(y))
            }
            _ => panic!("element kind mismatch in group inversion"),
        }
    }

    /// Word length with respect to the default generating set.
    pub fn word_length(&self, a: &GroupElement) -> usize {
        match (self, a) {
            (GroupKind::Free { .. }, GroupElement::Free(w)) => w.len(),
            (GroupKind::Lattice { .. }, GroupElement::Lattice(v)) => v.iter().map(|x| x.unsigned_abs() as usize).sum(),
            (GroupKind::Wreath { base }, GroupElement::Wreath { lamps, pos }) => {
                let switches: u64 = lamps.iter().map(|&(_, v)| v.min(base - v) as u64).sum();
                let lo = lamps.first().map_or(0, |l| l.0).min(0).min(*pos);
                let hi = lamps.last().map_or(0, |l| l.0).max(0).max(*pos);
                let left_first = -lo + (hi - lo) + (hi - pos);
                let right_first = hi + (hi - lo) + (pos - lo);
                switches as usize + left_first.min(right_first) as usize
            }
            (GroupKind::Product(ka, kb), GroupElement::Product(x, y)) => ka.word_length(x) + kb.word_length(y),
            _ => panic!("element kind mismatch in word length"),
        }
    }

    pub fn distance(&self, a: &GroupElement, b: &GroupElement) -> usize {
        self.word_length(&self.mul_unchecked(&self.inv_unchecked(a), b))
    }

    /// Number of distinct ends of growth: `usize::MAX` for exponential growth,
    /// otherwise the polynomial growth degree.
    pub fn growth_degree(&self) -> usize {
        match self {
            GroupKind::Free { .. } | GroupKind::Wreath { .. } => usize::MAX,
            GroupKind::Lattice { dim } => *dim,
            GroupKind::Product(a, b) => a.growth_degree().saturating_add(b.growth_degree()),
        }
    }

    pub fn parse_element(&self, s: &str) -> Result<GroupElement> {
        let s = s.trim();
        let el = match self {
            GroupKind::Free { rank } => GroupElement::Free(parse_word(s, *rank)?),
            GroupKind::Lattice { dim } => {
                let inner = s
                    .strip_prefix('(')
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Parse(format!("lattice element must look like (x,y,..): {s:?}")))?;
                let v: Vec<i64> = inner
                    .split(',')
                    .map(|p| p.trim().parse::<i64>().map_err(|e| Error::Parse(format!("{p:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if v.len() != *dim {
                    return Err(Error::Parse(format!("expected {dim} coordinates in {s:?}")));
                }
                GroupElement::Lattice(v)
            }
            GroupKind::Wreath { base } => {
                let (lamp_part, pos_part) = s
                    .split_once('@')
                    .ok_or_else(|| Error::Parse(format!("wreath element must look like [..]@pos: {s:?}")))?;
                let inner = lamp_part
                    .trim()
                    .strip_prefix('[')
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(|| Error::Parse(format!("missing lamp brackets in {s:?}")))?;
                let mut lamps: Vec<(i64, u32)> = Vec::new();
                for item in inner.split(',').map(str::trim).filter(|x| !x.is_empty()) {
                    let (p, v) = item
                        .split_once(':')
                        .ok_or_else(|| Error::Parse(format!("lamp entry {item:?} must be pos:value")))?;
                    let p: i64 = p.trim().parse().map_err(|e| Error::Parse(format!("{p:?}: {e}")))?;
                    let v: i64 = v.trim().parse().map_err(|e| Error::Parse(format!("{v:?}: {e}")))?;
                    let v = v.rem_euclid(*base as i64) as u32;
                    if v != 0 {
                        lamps.push((p, v));
                    }
                }
                lamps.sort_unstable();
                if lamps.windows(2).any(|w| w[0].0 == w[1].0) {
                    return Err(Error::Parse(format!("duplicate lamp position in {s:?}")));
                }
                let pos = pos_part.trim().parse().map_err(|e| Error::Parse(format!("{pos_part:?}: {e}")))?;
                GroupElement::Wreath { lamps, pos }
            }
            GroupKind::Product(ka, kb) => {
                let inner = s
                    .strip_prefix('<')
                    .and_then(|r| r.strip_suffix('>'))
                    .ok_or_else(|| Error::Parse(format!("product element must look like <x|y>: {s:?}")))?;
                let split = top_level_split(inner, '|')
                    .ok_or_else(|| Error::Parse(format!("missing '|' in product element {s:?}")))?;
                GroupElement::pair(ka.parse_element(&inner[..split])?, kb.parse_element(&inner[split + 1..])?)
            }
        };
        Ok(el)
    }

    /// Enumerate the ball of the given radius around `e` in the word metric
    /// of the default generators, ordered lexicographically by text form.
    pub fn ball(&self, radius: usize, cap: usize) -> Result<Ball> {
        let gens = self.default_generators();
        let e = self.identity();
        let mut index: HashMap<GroupElement, usize> = HashMap::new();
        let mut elements = vec![e.clone()];
        let mut lengths = vec![0u32];
        index.insert(e, 0);
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            if lengths[i] as usize >= radius {
                continue;
            }
            let x = elements[i].clone();
            for s in &gens {
                let y = self.mul_unchecked(&x, s);
                if !index.contains_key(&y) {
                    if elements.len() >= cap {
                        return Err(Error::BallCap { radius, cap });
                    }
                    index.insert(y.clone(), elements.len());
                    elements.push(y);
                    lengths.push(lengths[i] + 1);
                    queue.push_back(elements.len() - 1);
                }
            }
        }
        let mut order: Vec<usize> = (0..elements.len()).collect();
        let keys: Vec<String> = elements.iter().map(|g| g.to_string()).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
        let elements: Vec<GroupElement> = order.iter().map(|&i| elements[i].clone()).collect();
        let lengths: Vec<u32> = order.iter().map(|&i| lengths[i]).collect();
        let index = elements.iter().cloned().enumerate().map(|(i, g)| (g, i)).collect();
        Ok(Ball { radius, elements, lengths, index })
    }

    /// A uniformly chosen product of `len` default generators.
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> GroupElement {
        let gens = self.default_generators();
        let mut g = self.identity();
        for _ in 0..len {
            let s = &gens[rng.gen_range(0..gens.len())];
            g = self.mul_unchecked(&g, s);
        }
        g
    }
}

/// A uniformly chosen reduced word of exactly `len` letters in `F_rank`.
pub fn random_reduced_word<R: Rng + ?Sized>(rng: &mut R, rank: usize, len: usize) -> Vec<u8> {
    let mut w: Vec<u8> = Vec::with_capacity(len);
    while w.len() < len {
        let l = rng.gen_range(0..2 * rank as u8);
        if w.last() != Some(&inverse_letter(l)) {
            w.push(l);
        }
    }
    w
}

/// Position of the first `sep` outside any bracket pair.
pub(crate) fn top_level_split(s: &str, sep: char) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '<' | '(' | '[' => depth += 1,
            '>' | ')' | ']' => depth -= 1,
            c if c == sep && depth == 0 => return Some(i),
            _ => {}
        }
    }
    None
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKind::Free { rank } => write!(f, "free:{rank}"),
            GroupKind::Lattice { dim } => write!(f, "lattice:{dim}"),
            GroupKind::Wreath { base } => write!(f, "wreath:{base}"),
            GroupKind::Product(a, b) => write!(f, "product({a},{b})"),
        }
    }
}

impl std::str::FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("product(").and_then(|r| r.strip_suffix(')')) {
            let split = top_level_split(inner, ',')
                .ok_or_else(|| Error::Parse(format!("product needs two components: {s:?}")))?;
            let a: GroupKind = inner[..split].parse()?;
            let b: GroupKind = inner[split + 1..].parse()?;
            return Ok(GroupKind::Product(Box::new(a), Box::new(b)));
        }
        let (name, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("group spec {s:?} must be name:arg or product(..,..)")))?;
        let n: usize = arg.trim().parse().map_err(|e| Error::Parse(format!("group parameter {arg:?}: {e}")))?;
        match name.trim() {
            "free" if (2..=13).contains(&n) => Ok(GroupKind::Free { rank: n }),
            "free" => Err(Error::Parse(format!("free group rank must lie in 2..=13, got {n}"))),
            "lattice" if n >= 1 => Ok(GroupKind::Lattice { dim: n }),
            "lattice" => Err(Error::Parse("lattice dimension must be at least 1".into())),
            "wreath" if n >= 2 => Ok(GroupKind::Wreath { base: n as u32 }),
            "wreath" => Err(Error::Parse("wreath base must be at least 2".into())),
            other => Err(Error::Parse(format!("unknown group family {other:?}"))),
        }
    }
}

/// A group together with the finite symmetric set defining its word metric.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupModel {
    pub kind: GroupKind,
    pub generators: Vec<GroupElement>,
}

impl GroupModel {
    pub fn new(kind: GroupKind) -> Self {
        let generators = kind.default_generators();
        GroupModel { kind, generators }
    }

    pub fn free(rank: usize) -> Self {
        Self::new(GroupKind::Free { rank })
    }

    pub fn lattice(dim: usize) -> Self {
        Self::new(GroupKind::Lattice { dim })
    }

    pub fn wreath(base: u32) -> Self {
        Self::new(GroupKind::Wreath { base })
    }

    pub fn product(a: GroupModel, b: GroupModel) -> Self {
        Self::new(GroupKind::Product(Box::new(a.kind), Box::new(b.kind)))
    }

    pub fn identity(&self) -> GroupElement {
        self.kind.identity()
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.kind.mul(a, b)
    }

    pub fn inv(&self, a: &GroupElement) -> Result<GroupElement> {
        self.kind.inv(a)
    }

    pub fn word_length(&self, a: &GroupElement) -> usize {
        self.kind.word_length(a)
    }

    pub fn ball(&self, radius: usize) -> Result<Ball> {
        self.kind.ball(radius, DEFAULT_BALL_CAP)
    }

    pub fn parse_element(&self, s: &str) -> Result<GroupElement> {
        self.kind.parse_element(s)
    }
}

impl std::str::FromStr for GroupModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(GroupModel::new(s.parse()?))
    }
}

impl fmt::Display for GroupModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

/// The ball `B(e, radius)` with word lengths and a reverse index.
#[derive(Clone, Debug)]
pub struct Ball {
    pub radius: usize,
    pub elements: Vec<GroupElement>,
    pub lengths: Vec<u32>,
    pub index: HashMap<GroupElement, usize>,
}

impl Ball {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn position(&self, g: &GroupElement) -> Option<usize> {
        self.index.get(g).copied()
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.index.contains_key(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w(s: &str) -> GroupElement {
        GroupElement::Free(parse_word(s, 2).unwrap())
    }

    #[test]
    fn free_inverse_cancels() {
        let g = GroupKind::Free { rank: 2 };
        assert_eq!(g.mul(&w("a"), &w("A")).unwrap(), g.identity());
        assert_eq!(g.inv(&w("ab")).unwrap(), w("BA"));
    }

    #[test]
    fn lattice_law() {
        let g = GroupKind::Lattice { dim: 2 };
        let p = g.mul(&GroupElement::Lattice(vec![1, 0]), &GroupElement::Lattice(vec![0, 1])).unwrap();
        assert_eq!(p, GroupElement::Lattice(vec![1, 1]));
        let g1 = GroupKind::Lattice { dim: 1 };
        assert_eq!(g1.inv(&GroupElement::Lattice(vec![5])).unwrap(), GroupElement::Lattice(vec![-5]));
    }

    #[test]
    fn wreath_semidirect_law() {
        let g = GroupKind::Wreath { base: 2 };
        let flip = GroupElement::Wreath { lamps: vec![(0, 1)], pos: 0 };
        let t = GroupElement::Wreath { lamps: vec![], pos: 1 };
        let x = g.mul(&flip, &t).unwrap();
        assert_eq!(x, GroupElement::Wreath { lamps: vec![(0, 1)], pos: 1 });
        let xi = g.inv(&x).unwrap();
        assert_eq!(xi, GroupElement::Wreath { lamps: vec![(-1, 1)], pos: -1 });
        assert_eq!(g.mul(&x, &xi).unwrap(), g.identity());
        // lamp at the new position is shifted by the first factor's position
        let y = g.mul(&t, &flip).unwrap();
        assert_eq!(y, GroupElement::Wreath { lamps: vec![(1, 1)], pos: 1 });
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let g = GroupKind::Free { rank: 2 };
        let r = g.mul(&w("a"), &GroupElement::Lattice(vec![1]));
        assert!(matches!(r, Err(Error::Representation(_))));
        let r = GroupKind::Free { rank: 2 }.inv(&GroupElement::Free(vec![7]));
        assert!(r.is_err());
    }

    #[test]
    fn ball_sizes() {
        let f2 = GroupModel::free(2);
        assert_eq!(f2.ball(0).unwrap().len(), 1);
        assert_eq!(f2.ball(1).unwrap().len(), 5);
        assert_eq!(f2.ball(2).unwrap().len(), 17);
        let z = GroupModel::lattice(1);
        let b = z.ball(3).unwrap();
        assert_eq!(b.len(), 7);
        let mut xs: Vec<i64> = b
            .elements
            .iter()
            .map(|g| match g {
                GroupElement::Lattice(v) => v[0],
                _ => unreachable!(),
            })
            .collect();
        xs.sort();
        assert_eq!(xs, (-3..=3).collect::<Vec<_>>());
    }

    #[test]
    fn ball_cap_reports_cap() {
        let err = GroupModel::free(3).kind.ball(6, 100).unwrap_err();
        assert_eq!(err, Error::BallCap { radius: 6, cap: 100 });
    }

    #[test]
    fn ball_is_sorted_by_text_form() {
        let b = GroupModel::wreath(2).ball(3).unwrap();
        let keys: Vec<String> = b.elements.iter().map(|g| g.to_string()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn closed_form_lengths_match_bfs() {
        for spec in ["free:2", "lattice:2", "wreath:2", "wreath:3", "product(wreath:2,free:2)"] {
            let g: GroupModel = spec.parse().unwrap();
            let b = g.ball(5).unwrap();
            for (x, &l) in b.elements.iter().zip(&b.lengths) {
                assert_eq!(g.word_length(x), l as usize, "{spec}: {x}");
            }
        }
    }

    #[test]
    fn text_round_trip_and_generators() {
        for spec in ["free:3", "lattice:3", "wreath:3", "product(free:2,product(lattice:1,wreath:2))"] {
            let g: GroupModel = spec.parse().unwrap();
            assert_eq!(g.to_string(), spec);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..50 {
                let x = g.kind.random_element(&mut rng, 7);
                assert_eq!(g.parse_element(&x.to_string()).unwrap(), x);
            }
            let gens = &g.generators;
            for s in gens {
                assert!(gens.contains(&g.inv(s).unwrap()), "{spec}: generators not symmetric");
                assert_ne!(*s, g.identity());
            }
            let mut d = gens.clone();
            d.dedup();
            assert_eq!(d.len(), gens.len());
        }
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!("free:1".parse::<GroupModel>().is_err());
        assert!("torus:2".parse::<GroupModel>().is_err());
        assert!("product(free:2)".parse::<GroupModel>().is_err());
        assert!(GroupModel::wreath(2).parse_element("[0:1,0:1]@0").is_err());
        assert_eq!(
            GroupModel::wreath(2).parse_element("[3:1,0:2]@1").unwrap(),
            GroupElement::Wreath { lamps: vec![(3, 1)], pos: 1 }
        );
    }
}
