//! Exact arithmetic in free groups `F_k` (reduced words) and free abelian
//! groups `Z^d` (exponent vectors).

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A generator or its formal inverse, stored as `±(index + 1)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Letter(i8);

impl Letter {
    pub fn new(generator: usize, inverse: bool) -> Self {
        assert!(generator < 127, "generator index out of range");
        let v = generator as i8 + 1;
        Letter(if inverse { -v } else { v })
    }

    pub fn generator(self) -> usize {
        (self.0.unsigned_abs() - 1) as usize
    }

    pub fn is_inverse(self) -> bool {
        self.0 < 0
    }

    pub fn inverse(self) -> Self {
        Letter(-self.0)
    }

    /// `+1` for a generator, `-1` for an inverse.
    pub fn sign(self) -> i64 {
        self.0.signum() as i64
    }

    /// Position in the order `a < a^-1 < b < b^-1 < ...`.
    pub fn rank(self) -> usize {
        2 * self.generator() + usize::from(self.is_inverse())
    }

    pub fn from_rank(rank: usize) -> Self {
        Letter::new(rank / 2, rank % 2 == 1)
    }
}

impl fmt::Debug for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}{}", self.generator(), if self.is_inverse() { "'" } else { "" })
    }
}

/// A group element in canonical form.
///
/// Free-group elements are freely reduced words; abelian elements are
/// exponent vectors. Equal elements are equal as values, so elements can be
/// used directly as hash keys.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum GroupElement {
    Word(Vec<Letter>),
    Vector(Vec<i64>),
}

impl GroupElement {
    /// Word length with respect to the standard generators.
    pub fn len(&self) -> usize {
        match self {
            GroupElement::Word(w) => w.len(),
            GroupElement::Vector(v) => v.iter().map(|x| x.unsigned_abs() as usize).sum(),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            GroupElement::Word(w) => w.is_empty(),
            GroupElement::Vector(v) => v.iter().all(|&x| x == 0),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.is_identity()
    }

    pub fn letters(&self) -> Option<&[Letter]> {
        match self {
            GroupElement::Word(w) => Some(w),
            GroupElement::Vector(_) => None,
        }
    }

    /// Right multiplication by a single letter, in place.
    pub fn push_letter(&mut self, letter: Letter) {
        match self {
            GroupElement::Word(w) => {
                if w.last() == Some(&letter.inverse()) {
                    w.pop();
                } else {
                    w.push(letter);
                }
            }
            GroupElement::Vector(v) => v[letter.generator()] += letter.sign(),
        }
    }

    /// Product `self * other`. Both operands must come from the same
    /// alphabet; use [`Alphabet::multiply`] for a checked version.
    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        match (self, other) {
            (GroupElement::Word(a), GroupElement::Word(b)) => {
                let mut cancel = 0;
                while cancel < a.len()
                    && cancel < b.len()
                    && a[a.len() - 1 - cancel] == b[cancel].inverse()
                {
                    cancel += 1;
                }
                let mut out = Vec::with_capacity(a.len() + b.len() - 2 * cancel);
                out.extend_from_slice(&a[..a.len() - cancel]);
                out.extend_from_slice(&b[cancel..]);
                GroupElement::Word(out)
            }
            (GroupElement::Vector(a), GroupElement::Vector(b)) => {
                assert_eq!(a.len(), b.len(), "rank mismatch");
                GroupElement::Vector(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            _ => panic!("cannot multiply elements of different group kinds"),
        }
    }

    pub fn inverse(&self) -> GroupElement {
        match self {
            GroupElement::Word(w) => GroupElement::Word(w.iter().rev().map(|l| l.inverse()).collect()),
            GroupElement::Vector(v) => GroupElement::Vector(v.iter().map(|x| -x).collect()),
        }
    }

    /// `self^n` by repeated squaring.
    pub fn pow(&self, n: i64) -> GroupElement {
        let mut base = if n < 0 { self.inverse() } else { self.clone() };
        let mut exp = n.unsigned_abs();
        let mut acc = self.identity_like();
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc.mul(&base);
            }
            exp >>= 1;
            if exp > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Identity of the same group kind (and rank, for vectors).
    pub fn identity_like(&self) -> GroupElement {
        match self {
            GroupElement::Word(_) => GroupElement::Word(Vec::new()),
            GroupElement::Vector(v) => GroupElement::Vector(vec![0; v.len()]),
        }
    }

    /// Net exponent of each generator (abelianisation), `rank` entries.
    pub fn exponent_sums(&self, rank: usize) -> Vec<i64> {
        match self {
            GroupElement::Word(w) => {
                let mut sums = vec![0; rank];
                for l in w {
                    sums[l.generator()] += l.sign();
                }
                sums
            }
            GroupElement::Vector(v) => v.clone(),
        }
    }
}

impl Ord for GroupElement {
    /// Shortlex order: word length first, then letters in the order
    /// `a < a^-1 < b < b^-1 < ...` (vectors: lexicographic exponents).
    fn cmp(&self, other: &Self) -> Ordering {
        self.len().cmp(&other.len()).then_with(|| match (self, other) {
            (GroupElement::Word(a), GroupElement::Word(b)) => a
                .iter()
                .map(|l| l.rank())
                .cmp(b.iter().map(|l| l.rank())),
            (GroupElement::Vector(a), GroupElement::Vector(b)) => a.cmp(b),
            (GroupElement::Word(_), GroupElement::Vector(_)) => Ordering::Less,
            (GroupElement::Vector(_), GroupElement::Word(_)) => Ordering::Greater,
        })
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupKind {
    Free,
    FreeAbelian,
}

/// Generator alphabet of `F_k` or `Z^d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    kind: GroupKind,
    names: Vec<String>,
}

const DEFAULT_NAMES: &[&str] = &["a", "b", "c", "d", "f", "g", "h", "i", "j", "k"];

impl Alphabet {
    pub fn new(kind: GroupKind, names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("alphabet rank must be at least 1".into()));
        }
        if names.len() > 120 {
            return Err(Error::Config("alphabet rank above 120 is not supported".into()));
        }
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() || name == "e" || name.contains(char::is_whitespace) || name.contains('^') {
                return Err(Error::Config(format!("invalid generator name {name:?}")));
            }
            if names[..i].contains(name) {
                return Err(Error::Config(format!("duplicate generator name {name:?}")));
            }
        }
        Ok(Alphabet { kind, names })
    }

    /// Free group of the given rank with generators `a, b, c, d, f, ...`.
    pub fn free(rank: usize) -> Self {
        Self::with_default_names(GroupKind::Free, rank)
    }

    /// Free abelian group `Z^rank`; rank 1 uses the single generator `t`.
    pub fn free_abelian(rank: usize) -> Self {
        if rank == 1 {
            return Alphabet::new(GroupKind::FreeAbelian, vec!["t".into()]).unwrap();
        }
        Self::with_default_names(GroupKind::FreeAbelian, rank)
    }

    fn with_default_names(kind: GroupKind, rank: usize) -> Self {
        let names = (0..rank)
            .map(|i| DEFAULT_NAMES.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("x{i}")))
            .collect();
        Alphabet::new(kind, names).expect("default names are valid")
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn rank(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_free(&self) -> bool {
        self.kind == GroupKind::Free
    }

    pub fn identity(&self) -> GroupElement {
        match self.kind {
            GroupKind::Free => GroupElement::Word(Vec::new()),
            GroupKind::FreeAbelian => GroupElement::Vector(vec![0; self.rank()]),
        }
    }

    pub fn letter_element(&self, letter: Letter) -> GroupElement {
        let mut g = self.identity();
        g.push_letter(letter);
        g
    }

    pub fn generator(&self, index: usize) -> GroupElement {
        self.letter_element(Letter::new(index, false))
    }

    /// All `2 * rank` letters in rank order.
    pub fn letters(&self) -> Vec<Letter> {
        (0..2 * self.rank()).map(Letter::from_rank).collect()
    }

    /// Whether `g` is a canonical element of this alphabet's group.
    pub fn contains(&self, g: &GroupElement) -> bool {
        match (self.kind, g) {
            (GroupKind::Free, GroupElement::Word(w)) => {
                w.iter().all(|l| l.generator() < self.rank())
                    && w.windows(2).all(|p| p[0] != p[1].inverse())
            }
            (GroupKind::FreeAbelian, GroupElement::Vector(v)) => v.len() == self.rank(),
            _ => false,
        }
    }

    pub fn check(&self, g: &GroupElement) -> Result<()> {
        if self.contains(g) {
            Ok(())
        } else {
            Err(Error::AlphabetMismatch(format!(
                "{g:?} is not an element of the {:?} group on {:?}",
                self.kind, self.names
            )))
        }
    }

    /// Canonical form of an arbitrary letter sequence.
    pub fn reduce(&self, raw: &[Letter]) -> Result<GroupElement> {
        let mut g = self.identity();
        for &l in raw {
            if l.generator() >= self.rank() {
                return Err(Error::UnknownSymbol(format!("{l:?}")));
            }
            g.push_letter(l);
        }
        Ok(g)
    }

    pub fn multiply(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        self.check(h)?;
        Ok(g.mul(h))
    }

    pub fn invert(&self, g: &GroupElement) -> GroupElement {
        g.inverse()
    }

    pub fn power(&self, g: &GroupElement, n: i64) -> GroupElement {
        g.pow(n)
    }

    fn lookup(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownSymbol(name.to_string()))
    }

    /// Parses whitespace-separated tokens such as `a b^-1 a`; `e` is the
    /// identity and `x^n` is accepted for any integer `n`.
    pub fn parse(&self, text: &str) -> Result<GroupElement> {
        let mut raw = Vec::new();
        for token in text.split_whitespace() {
            if token == "e" {
                continue;
            }
            let (name, exp) = match token.split_once('^') {
                Some((name, exp)) => {
                    let exp: i64 = exp
                        .parse()
                        .map_err(|_| Error::UnknownSymbol(token.to_string()))?;
                    (name, exp)
                }
                None => (token, 1),
            };
            let index = self.lookup(name)?;
            let letter = Letter::new(index, exp < 0);
            raw.extend(std::iter::repeat_n(letter, exp.unsigned_abs() as usize));
        }
        self.reduce(&raw)
    }

    /// Text form accepted by [`Alphabet::parse`]; inverses are written `x^-1`.
    pub fn format(&self, g: &GroupElement) -> String {
        if g.is_identity() {
            return "e".to_string();
        }
        match g {
            GroupElement::Word(w) => w
                .iter()
                .map(|l| {
                    let name = &self.names[l.generator()];
                    if l.is_inverse() {
                        format!("{name}^-1")
                    } else {
                        name.clone()
                    }
                })
                .collect::<Vec<_>>()
                .join(" "),
            GroupElement::Vector(v) => v
                .iter()
                .enumerate()
                .filter(|(_, &x)| x != 0)
                .map(|(i, &x)| {
                    if x == 1 {
                        self.names[i].clone()
                    } else {
                        format!("{}^{}", self.names[i], x)
                    }
                })
                .collect::<Vec<_>>()
                .join(" "),
        }
    }

    /// Number of elements of word length at most `radius`.
    pub fn ball_size(&self, radius: usize) -> u128 {
        let k = self.rank() as u128;
        match self.kind {
            GroupKind::Free => {
                let mut total: u128 = 1;
                let mut sphere: u128 = 2 * k;
                for _ in 0..radius {
                    total = total.saturating_add(sphere);
                    sphere = sphere.saturating_mul(2 * k - 1);
                }
                total
            }
            GroupKind::FreeAbelian => {
                // counts[j] = vectors over the first i coordinates with l1 norm j
                let mut counts = vec![0u128; radius + 1];
                counts[0] = 1;
                for _ in 0..self.rank() {
                    let mut next = vec![0u128; radius + 1];
                    for (j, &c) in counts.iter().enumerate() {
                        if c == 0 {
                            continue;
                        }
                        next[j] = next[j].saturating_add(c);
                        for step in 1..=radius - j {
                            next[j + step] = next[j + step].saturating_add(2 * c);
                        }
                    }
                    counts = next;
                }
                counts.iter().fold(0u128, |a, &c| a.saturating_add(c))
            }
        }
    }

    /// All elements of word length `<= radius`, each once, in shortlex order.
    pub fn enumerate_ball(&self, radius: usize, cap: usize) -> Result<Vec<GroupElement>> {
        let size = self.ball_size(radius);
        if size > cap as u128 {
            return Err(Error::Capacity(format!(
                "ball of radius {radius} has {size} elements, above the cap of {cap}"
            )));
        }
        let mut out = Vec::with_capacity(size as usize);
        match self.kind {
            GroupKind::Free => {
                out.push(self.identity());
                let mut frontier = vec![Vec::<Letter>::new()];
                for _ in 0..radius {
                    let mut next = Vec::with_capacity(frontier.len() * (2 * self.rank() - 1).max(1));
                    for word in &frontier {
                        for l in self.letters() {
                            if word.last() == Some(&l.inverse()) {
                                continue;
                            }
                            let mut w = word.clone();
                            w.push(l);
                            next.push(w);
                        }
                    }
                    out.extend(next.iter().cloned().map(GroupElement::Word));
                    frontier = next;
                }
            }
            GroupKind::FreeAbelian => {
                let mut current = vec![0i64; self.rank()];
                abelian_ball(&mut current, 0, radius as i64, &mut out);
                out.sort();
            }
        }
        Ok(out)
    }
}

fn abelian_ball(current: &mut Vec<i64>, index: usize, budget: i64, out: &mut Vec<GroupElement>) {
    if index == current.len() {
        out.push(GroupElement::Vector(current.clone()));
        return;
    }
    for x in -budget..=budget {
        current[index] = x;
        abelian_ball(current, index + 1, budget - x.abs(), out);
    }
    current[index] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> Alphabet {
        Alphabet::free(2)
    }

    #[test]
    fn reduce_cancels_adjacent_pairs() {
        let g = f2();
        assert_eq!(g.format(&g.parse("a b b^-1 a").unwrap()), "a a");
        assert!(g.parse("a a^-1").unwrap().is_identity());
        assert_eq!(g.format(&g.parse("a a^-1").unwrap()), "e");
    }

    #[test]
    fn unknown_symbol_is_rejected() {
        let g = f2();
        assert!(matches!(g.parse("a z"), Err(Error::UnknownSymbol(_))));
        assert!(matches!(g.reduce(&[Letter::new(5, false)]), Err(Error::UnknownSymbol(_))));
    }

    #[test]
    fn multiplication_examples() {
        let g = f2();
        let ab = g.parse("a b").unwrap();
        let bia = g.parse("b^-1 a").unwrap();
        assert_eq!(g.format(&g.multiply(&ab, &bia).unwrap()), "a a");
        let x = g.parse("a b^-1 a a b").unwrap();
        assert!(g.multiply(&x, &g.invert(&x)).unwrap().is_identity());

        let z = Alphabet::free_abelian(1);
        let three = z.parse("t^3").unwrap();
        let five = z.parse("t^5").unwrap();
        assert_eq!(z.multiply(&three, &five).unwrap(), GroupElement::Vector(vec![8]));
    }

    #[test]
    fn alphabet_mismatch_on_multiply() {
        let g = f2();
        let z = Alphabet::free_abelian(1);
        let a = g.parse("a").unwrap();
        let t = z.parse("t").unwrap();
        assert!(matches!(g.multiply(&a, &t), Err(Error::AlphabetMismatch(_))));
        let f3 = Alphabet::free(3);
        let c = f3.parse("c").unwrap();
        assert!(matches!(g.multiply(&a, &c), Err(Error::AlphabetMismatch(_))));
    }

    #[test]
    fn powers() {
        let g = f2();
        let ab = g.parse("a b").unwrap();
        assert_eq!(g.format(&g.power(&ab, 2)), "a b a b");
        let conj = g.parse("a b a^-1").unwrap();
        assert_eq!(g.format(&g.power(&conj, 3)), "a b b b a^-1");
        assert!(g.power(&ab, 0).is_identity());
        assert_eq!(g.power(&ab, -3), g.invert(&g.power(&ab, 3)));
    }

    #[test]
    fn power_matches_repeated_multiplication() {
        let g = f2();
        let x = g.parse("a b a^-1").unwrap();
        let mut acc = g.identity();
        for _ in 0..3 {
            acc = acc.mul(&x);
        }
        assert_eq!(g.power(&x, 3), acc);
    }

    #[test]
    fn ball_sizes() {
        let g = f2();
        assert_eq!(g.enumerate_ball(1, 1000).unwrap().len(), 5);
        assert_eq!(g.enumerate_ball(2, 1000).unwrap().len(), 17);
        assert_eq!(g.ball_size(3), 53);
        let z = Alphabet::free_abelian(1);
        let ball = z.enumerate_ball(2, 100).unwrap();
        let values: Vec<i64> = ball
            .iter()
            .map(|g| match g {
                GroupElement::Vector(v) => v[0],
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(values.len(), 5);
        for x in -2..=2 {
            assert!(values.contains(&x));
        }
        let z2 = Alphabet::free_abelian(2);
        assert_eq!(z2.enumerate_ball(2, 100).unwrap().len(), 13);
        assert_eq!(z2.ball_size(2), 13);
    }

    #[test]
    fn ball_is_duplicate_free_and_sorted() {
        let ball = f2().enumerate_ball(3, 1000).unwrap();
        let mut sorted = ball.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), ball.len());
        assert_eq!(sorted, ball);
    }

    #[test]
    fn ball_capacity_error() {
        assert!(matches!(f2().enumerate_ball(12, 1000), Err(Error::Capacity(_))));
    }

    #[test]
    fn invalid_alphabets() {
        assert!(Alphabet::new(GroupKind::Free, vec![]).is_err());
        assert!(Alphabet::new(GroupKind::Free, vec!["a".into(), "a".into()]).is_err());
        assert!(Alphabet::new(GroupKind::Free, vec!["e".into()]).is_err());
    }

    #[test]
    fn shortlex_order() {
        let g = f2();
        let a = g.parse("a").unwrap();
        let ai = g.parse("a^-1").unwrap();
        let b = g.parse("b").unwrap();
        let aa = g.parse("a a").unwrap();
        assert!(g.identity() < a && a < ai && ai < b && b < aa);
    }
}
