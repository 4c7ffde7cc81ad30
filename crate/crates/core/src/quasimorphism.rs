//! Quasimorphisms: homomorphisms, Brooks counting functions, bounded noise,
//! linear combinations and their homogenizations.
//!
//! A quasimorphism is stored as a flat linear combination of leaf functions,
//! each with its own homogenization depth. Homogenization is linear, so
//! `homogenize(sum c_i phi_i) = sum c_i homogenize(phi_i)` and nested
//! homogenizations add their depths.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::group::{Alphabet, GroupElement, Letter};
use crate::rng;

/// How far a leaf is homogenized: `g -> phi(g^(2^d)) / 2^d`, or the limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Depth {
    Raw,
    Doubling(u32),
    Limit,
}

impl Depth {
    fn then(self, other: Depth) -> Depth {
        match (self, other) {
            (Depth::Limit, _) | (_, Depth::Limit) => Depth::Limit,
            (Depth::Raw, d) | (d, Depth::Raw) => d,
            (Depth::Doubling(a), Depth::Doubling(b)) => Depth::Doubling(a + b),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Leaf {
    /// `g -> sum_i coefficients[i] * (exponent sum of generator i)`.
    Hom(Vec<f64>),
    /// `C_w - C_{w^-1}` for a reduced word `w`.
    Brooks { word: Vec<Letter>, inverse: Vec<Letter> },
    /// Deterministic pseudo-random function with values in `[-amplitude, amplitude]`
    /// and value 0 at the identity.
    Noise { amplitude: f64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coefficient: f64,
    pub leaf: Leaf,
    pub depth: Depth,
}

#[derive(Debug)]
struct Floor(AtomicU64);

impl Floor {
    fn get(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Relaxed))
    }

    fn raise(&self, value: f64) {
        let _ = self.0.fetch_update(Ordering::Relaxed, Ordering::Relaxed, |bits| {
            (value > f64::from_bits(bits)).then_some(value.to_bits())
        });
    }
}

/// An evaluable quasimorphism with its defect metadata.
#[derive(Clone, Debug)]
pub struct Quasimorphism {
    alphabet: Alphabet,
    terms: Vec<Term>,
    defect_bound: Option<f64>,
    defect_floor: Arc<Floor>,
    homogeneous: bool,
    homogeneity_tolerance: Option<f64>,
    description: String,
}

/// Certificate attached to a finite-depth homogenization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomogenizationCertificate {
    /// `N = 2^depth`.
    pub power: f64,
    /// Bound on `|phi_hat(g) - phi(g^N)/N|`, i.e. `D / N`.
    pub tolerance: f64,
    /// Defect bound of the result: `2D + 3D/N`.
    pub defect_bound: f64,
}

/// Default declared defect for `phi_w` when the configuration gives none.
pub fn brooks_default_defect(word_len: usize) -> f64 {
    6.0 * (word_len.saturating_sub(1)) as f64 + 2.0
}

impl Quasimorphism {
    fn from_terms(alphabet: Alphabet, terms: Vec<Term>, defect_bound: Option<f64>, description: String) -> Self {
        let homogeneous = terms.iter().all(|t| matches!(t.leaf, Leaf::Hom(_)) || t.depth == Depth::Limit);
        Quasimorphism {
            alphabet,
            terms,
            defect_bound,
            defect_floor: Arc::new(Floor(AtomicU64::new(0f64.to_bits()))),
            homogeneous,
            homogeneity_tolerance: homogeneous.then_some(0.0),
            description,
        }
    }

    pub fn hom(alphabet: Alphabet, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != alphabet.rank() {
            return Err(Error::Config(format!(
                "homomorphism needs {} coefficients, got {}",
                alphabet.rank(),
                coefficients.len()
            )));
        }
        let description = format!("hom{coefficients:?}");
        let term = Term { coefficient: 1.0, leaf: Leaf::Hom(coefficients), depth: Depth::Raw };
        Ok(Self::from_terms(alphabet, vec![term], Some(0.0), description))
    }

    /// Brooks counting quasimorphism of the reduced word `word`.
    pub fn brooks(alphabet: Alphabet, word: &GroupElement, defect_bound: Option<f64>) -> Result<Self> {
        if !alphabet.is_free() {
            return Err(Error::Config("Brooks quasimorphisms need a free group".into()));
        }
        alphabet.check(word)?;
        let letters = word.letters().unwrap_or_default().to_vec();
        if letters.is_empty() {
            return Err(Error::Config("Brooks word must be nonempty".into()));
        }
        let inverse = word.inverse().letters().unwrap_or_default().to_vec();
        let bound = defect_bound.unwrap_or_else(|| brooks_default_defect(letters.len()));
        let description = format!("brooks({})", alphabet.format(word));
        let term = Term { coefficient: 1.0, leaf: Leaf::Brooks { word: letters, inverse }, depth: Depth::Raw };
        Ok(Self::from_terms(alphabet, vec![term], Some(bound), description))
    }

    /// Bounded pseudo-random function; `|d phi| <= 3 * amplitude`.
    pub fn bounded_noise(alphabet: Alphabet, amplitude: f64, seed: u64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::Config(format!("invalid noise amplitude {amplitude}")));
        }
        let description = format!("bounded-noise(amplitude={amplitude}, seed={seed})");
        let term = Term { coefficient: 1.0, leaf: Leaf::Noise { amplitude, seed }, depth: Depth::Raw };
        Ok(Self::from_terms(alphabet, vec![term], Some(3.0 * amplitude), description))
    }

    /// Pointwise `sum c_i phi_i`, with defect bound `sum |c_i| D_i`.
    pub fn combine(parts: &[(f64, Quasimorphism)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Config("combination needs at least one term".into()))?;
        let alphabet = first.1.alphabet.clone();
        let mut terms = Vec::new();
        let mut bound = Some(0.0);
        let mut names = Vec::new();
        for (c, q) in parts {
            if q.alphabet != alphabet {
                return Err(Error::AlphabetMismatch("combined quasimorphisms live on different groups".into()));
            }
            for t in &q.terms {
                terms.push(Term { coefficient: c * t.coefficient, ..t.clone() });
            }
            bound = match (bound, q.defect_bound) {
                (Some(b), Some(d)) => Some(b + c.abs() * d),
                _ => None,
            };
            names.push(format!("{c}*{}", q.description));
        }
        let mut out = Self::from_terms(alphabet, terms, bound, names.join(" + "));
        let tol: Option<f64> = parts
            .iter()
            .map(|(c, q)| q.homogeneity_tolerance.map(|t| c.abs() * t))
            .sum();
        out.homogeneity_tolerance = tol;
        out.homogeneous = tol == Some(0.0) && parts.iter().all(|(_, q)| q.homogeneous);
        Ok(out)
    }

    /// `g -> phi(g^N)/N` with `N = 2^depth`. Needs a defect bound.
    pub fn homogenize(&self, depth: u32) -> Result<(Quasimorphism, HomogenizationCertificate)> {
        let d = self.require_defect_bound()?;
        let power = 2f64.powi(depth as i32);
        let cert = HomogenizationCertificate {
            power,
            tolerance: d / power,
            defect_bound: 2.0 * d + 3.0 * d / power,
        };
        let mut out = self.with_depth(Depth::Doubling(depth), Some(cert.defect_bound));
        out.description = format!("homogenize({}, depth={depth})", self.description);
        if !out.homogeneous {
            out.homogeneity_tolerance = Some(cert.tolerance);
        }
        Ok((out, cert))
    }

    /// The exact homogenization `lim phi(g^n)/n`, defect bound `2D`.
    pub fn homogenize_limit(&self) -> Result<Quasimorphism> {
        let d = self.require_defect_bound()?;
        let mut out = self.with_depth(Depth::Limit, Some(2.0 * d));
        out.description = format!("homogenize({})", self.description);
        Ok(out)
    }

    fn with_depth(&self, depth: Depth, bound: Option<f64>) -> Quasimorphism {
        let terms = self
            .terms
            .iter()
            .map(|t| Term { depth: t.depth.then(depth), ..t.clone() })
            .collect();
        Self::from_terms(self.alphabet.clone(), terms, bound, self.description.clone())
    }

    fn require_defect_bound(&self) -> Result<f64> {
        self.defect_bound.ok_or_else(|| {
            Error::Config(format!("homogenization of {} needs a defect bound", self.description))
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn defect_bound(&self) -> Option<f64> {
        self.defect_bound
    }

    /// Replaces the declared defect bound (e.g. from configuration).
    pub fn with_defect_bound(mut self, bound: f64) -> Self {
        self.defect_bound = Some(bound);
        self
    }

    /// Largest `|d phi|` observed by [`Quasimorphism::defect_lower_bound`] so far.
    pub fn defect_floor(&self) -> f64 {
        self.defect_floor.get()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    /// `Some(0)` when exactly homogeneous, `Some(D/N)` after a finite-depth
    /// homogenization, `None` otherwise.
    pub fn homogeneity_tolerance(&self) -> Option<f64> {
        self.homogeneity_tolerance
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// True when every leaf is a homomorphism.
    pub fn is_hom(&self) -> bool {
        self.terms.iter().all(|t| matches!(t.leaf, Leaf::Hom(_)))
    }

    /// True when `phi(g^-1) = -phi(g)` holds by construction: homomorphisms
    /// and Brooks counts at any depth are odd, noise is not.
    pub fn is_odd(&self) -> bool {
        self.terms.iter().all(|t| !matches!(t.leaf, Leaf::Noise { .. }) || t.coefficient == 0.0)
    }

    /// Checked evaluation.
    pub fn try_eval(&self, g: &GroupElement) -> Result<f64> {
        self.alphabet.check(g)?;
        Ok(self.eval(g))
    }

    /// Evaluation without the alphabet check.
    pub fn eval(&self, g: &GroupElement) -> f64 {
        let split = CyclicSplit::of(g);
        self.terms.iter().map(|t| t.coefficient * leaf_value(&t.leaf, t.depth, g, &split, None)).sum()
    }

    /// `d phi(g, h) = phi(gh) - phi(g) - phi(h)`.
    pub fn differential(&self, g: &GroupElement, h: &GroupElement) -> f64 {
        self.eval(&g.mul(h)) - self.eval(g) - self.eval(h)
    }

    /// Max of `|d phi|` over all pairs from the ball of radius `radius` and
    /// `random_pairs` random pairs of reduced words of length up to
    /// `2 * radius + 8`. Raises the stored defect floor.
    pub fn defect_lower_bound(&self, radius: usize, random_pairs: usize, seed: u64, cap: usize) -> Result<f64> {
        let ball = self.alphabet.enumerate_ball(radius, cap)?;
        let values: Vec<f64> = ball.iter().map(|g| self.eval(g)).collect();
        let mut best: f64 = 0.0;
        for (g, vg) in ball.iter().zip(&values) {
            for (h, vh) in ball.iter().zip(&values) {
                best = best.max((self.eval(&g.mul(h)) - vg - vh).abs());
            }
        }
        let max_len = 2 * radius + 8;
        let mut r = rng::stream(seed, rng::domain::DEFECT, 0);
        for _ in 0..random_pairs {
            let g = random_element(&self.alphabet, max_len, &mut r);
            let h = random_element(&self.alphabet, max_len, &mut r);
            best = best.max(self.differential(&g, &h).abs());
        }
        self.defect_floor.raise(best);
        Ok(best)
    }

    /// Incremental evaluator positioned at `start`.
    pub fn cursor(&self, start: &GroupElement) -> Cursor<'_> {
        Cursor::new(self, start)
    }
}

/// Random reduced word (or vector) with uniform length in `0..=max_len`.
pub fn random_element<R: Rng + ?Sized>(alphabet: &Alphabet, max_len: usize, rng: &mut R) -> GroupElement {
    let len = rng.random_range(0..=max_len);
    let letters = alphabet.letters();
    let mut g = alphabet.identity();
    let mut last: Option<Letter> = None;
    for _ in 0..len {
        let l = loop {
            let l = letters[rng.random_range(0..letters.len())];
            if !alphabet.is_free() || last != Some(l.inverse()) {
                break l;
            }
        };
        g.push_letter(l);
        last = Some(l);
    }
    g
}

/// `y = u c u^-1` with `c` cyclically reduced; stores `|u|`.
#[derive(Clone, Copy, Debug)]
struct CyclicSplit {
    t: usize,
}

impl CyclicSplit {
    fn of(g: &GroupElement) -> Self {
        match g.letters() {
            Some(w) => CyclicSplit { t: cyclic_depth(w) },
            None => CyclicSplit { t: 0 },
        }
    }
}

fn cyclic_depth(w: &[Letter]) -> usize {
    let n = w.len();
    let mut t = 0;
    while 2 * t + 1 < n && w[t] == w[n - 1 - t].inverse() {
        t += 1;
    }
    t
}

fn matches_at(text: &[Letter], pos: usize, pat: &[Letter]) -> bool {
    text.len() >= pos + pat.len() && text[pos..pos + pat.len()] == *pat
}

/// Occurrences of `pat` as a contiguous subword of `text`, overlaps allowed.
pub fn count_occurrences(text: &[Letter], pat: &[Letter]) -> i64 {
    if pat.len() > text.len() {
        return 0;
    }
    (0..=text.len() - pat.len()).filter(|&p| matches_at(text, p, pat)).count() as i64
}

fn matches_cyclic(c: &[Letter], start: usize, pat: &[Letter]) -> bool {
    pat.iter().enumerate().all(|(j, l)| c[(start + j) % c.len()] == *l)
}

/// Occurrences of `pat` in the cyclic word `c`.
fn count_cyclic(c: &[Letter], pat: &[Letter]) -> i64 {
    (0..c.len()).filter(|&i| matches_cyclic(c, i, pat)).count() as i64
}

/// `C_pat(y^K)` using the running linear count of `pat` in `y`.
fn count_in_power(y: &[Letter], t: usize, linear: i64, pat: &[Letter], k: u64) -> i64 {
    if y.is_empty() {
        return 0;
    }
    let n = y.len();
    let c = &y[t..n - t];
    let m = pat.len();
    if c.len() + 1 >= m {
        // count(y^K) = count(y) + (K - 1) * cyc(c) once |c| >= |w| - 1;
        // cyc(c) is count(y) minus windows touching the u-parts plus the
        // windows of c that wrap around.
        let mut touching = 0;
        if n >= m {
            let last = n - m;
            let right = (n - t + 1).saturating_sub(m).max(t);
            for p in (0..t.min(last + 1)).chain(right..=last) {
                if matches_at(y, p, pat) {
                    touching += 1;
                }
            }
        }
        let wrap = (c.len().saturating_sub(m - 1)..c.len())
            .filter(|&i| i + m > c.len() && matches_cyclic(c, i, pat))
            .count() as i64;
        let cyc = linear - touching + wrap;
        linear + (k as i64 - 1) * cyc
    } else {
        let k0 = (m - 1).div_ceil(c.len()) as u64;
        if k <= k0 {
            let g = GroupElement::Word(y.to_vec()).pow(k as i64);
            return count_occurrences(g.letters().unwrap(), pat);
        }
        let mut word = y[..t].to_vec();
        for _ in 0..k0 {
            word.extend_from_slice(c);
        }
        word.extend_from_slice(&y[n - t..]);
        count_occurrences(&word, pat) + (k - k0) as i64 * count_cyclic(c, pat)
    }
}

fn noise_value(amplitude: f64, seed: u64, g: &GroupElement) -> f64 {
    if g.is_identity() {
        return 0.0;
    }
    let mut h = splitmix(seed ^ 0x9e37_79b9_7f4a_7c15);
    match g {
        GroupElement::Word(w) => {
            for l in w {
                h = splitmix(h ^ (l.rank() as u64 + 1));
            }
        }
        GroupElement::Vector(v) => {
            for &x in v {
                h = splitmix(h ^ (x as u64));
            }
        }
    }
    let u = (h >> 11) as f64 / (1u64 << 53) as f64;
    amplitude * (2.0 * u - 1.0)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Value of one leaf. `counts` carries running linear Brooks counts
/// `(C_w(g), C_{w^-1}(g))` when the caller maintains them.
fn leaf_value(leaf: &Leaf, depth: Depth, g: &GroupElement, split: &CyclicSplit, counts: Option<(i64, i64)>) -> f64 {
    match leaf {
        Leaf::Hom(coef) => {
            let sums = g.exponent_sums(coef.len());
            coef.iter().zip(sums).map(|(c, s)| c * s as f64).sum()
        }
        Leaf::Brooks { word, inverse } => {
            let y = g.letters().expect("Brooks leaves live on free groups");
            let (cw, ci) = counts.unwrap_or_else(|| (count_occurrences(y, word), count_occurrences(y, inverse)));
            match depth {
                Depth::Raw => (cw - ci) as f64,
                Depth::Doubling(d) => {
                    let k = 1u64 << d;
                    let fw = count_in_power(y, split.t, cw, word, k);
                    let fi = count_in_power(y, split.t, ci, inverse, k);
                    (fw - fi) as f64 / k as f64
                }
                Depth::Limit => {
                    if y.is_empty() {
                        return 0.0;
                    }
                    let c = &y[split.t..y.len() - split.t];
                    (count_cyclic(c, word) - count_cyclic(c, inverse)) as f64
                }
            }
        }
        Leaf::Noise { amplitude, seed } => match depth {
            Depth::Raw => noise_value(*amplitude, *seed, g),
            Depth::Doubling(d) => {
                let k = 1i64 << d;
                noise_value(*amplitude, *seed, &g.pow(k)) / k as f64
            }
            Depth::Limit => 0.0,
        },
    }
}

/// Incremental evaluator for walks: right multiplication by letters in
/// O(|w|) per Brooks leaf, undoable back to any mark.
#[derive(Clone, Debug)]
pub struct Cursor<'a> {
    phi: &'a Quasimorphism,
    current: GroupElement,
    /// `(letter pushed, whether it cancelled the previous last letter)`
    log: Vec<(Letter, bool)>,
    counts: Vec<(i64, i64)>,
}

impl<'a> Cursor<'a> {
    pub fn new(phi: &'a Quasimorphism, start: &GroupElement) -> Self {
        let counts = phi
            .terms
            .iter()
            .map(|t| match (&t.leaf, start.letters()) {
                (Leaf::Brooks { word, inverse }, Some(y)) => (count_occurrences(y, word), count_occurrences(y, inverse)),
                _ => (0, 0),
            })
            .collect();
        Cursor { phi, current: start.clone(), log: Vec::new(), counts }
    }

    pub fn element(&self) -> &GroupElement {
        &self.current
    }

    /// Change in counts from the window ending at the last letter.
    fn tail_delta(&mut self, sign: i64) {
        if let GroupElement::Word(y) = &self.current {
            for (t, c) in self.phi.terms.iter().zip(self.counts.iter_mut()) {
                if let Leaf::Brooks { word, inverse } = &t.leaf {
                    if y.len() >= word.len() && y.ends_with(word) {
                        c.0 += sign;
                    }
                    if y.len() >= inverse.len() && y.ends_with(inverse) {
                        c.1 += sign;
                    }
                }
            }
        }
    }

    pub fn push(&mut self, letter: Letter) {
        let cancels = matches!(&self.current, GroupElement::Word(y) if y.last() == Some(&letter.inverse()));
        if cancels {
            self.tail_delta(-1);
        }
        self.current.push_letter(letter);
        if !cancels {
            self.tail_delta(1);
        }
        self.log.push((letter, cancels));
    }

    /// Right multiplication by a group element.
    pub fn multiply(&mut self, g: &GroupElement) {
        match g {
            GroupElement::Word(w) => {
                for &l in w {
                    self.push(l);
                }
            }
            GroupElement::Vector(v) => {
                for (i, &x) in v.iter().enumerate() {
                    let l = Letter::new(i, x < 0);
                    for _ in 0..x.unsigned_abs() {
                        self.push(l);
                    }
                }
            }
        }
    }

    pub fn mark(&self) -> usize {
        self.log.len()
    }

    /// Reverts every push made after `mark`.
    pub fn undo_to(&mut self, mark: usize) {
        while self.log.len() > mark {
            let (letter, cancelled) = self.log.pop().unwrap();
            if cancelled {
                // restore the cancelled letter `letter^-1`
                self.current.push_letter(letter.inverse());
                self.tail_delta(1);
            } else {
                self.tail_delta(-1);
                self.current.push_letter(letter.inverse());
            }
        }
    }

    /// Drops the undo history (keeps the current position).
    pub fn forget(&mut self) {
        self.log.clear();
    }

    pub fn value(&self) -> f64 {
        let split = CyclicSplit::of(&self.current);
        self.phi
            .terms
            .iter()
            .zip(&self.counts)
            .map(|(t, &c)| {
                let counts = matches!(t.leaf, Leaf::Brooks { .. }).then_some(c);
                t.coefficient * leaf_value(&t.leaf, t.depth, &self.current, &split, counts)
            })
            .sum()
    }
}
