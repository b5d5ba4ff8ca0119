//! Words over the free group generated by irreducible templates.
//!
//! Conjunctions of equalities between template compositions boil down to
//! equations `A·u·A⁻¹ == B·u'·B⁻¹` where `A`, `B` range over the free monoid
//! of templates and `u`, `u'` are fixed group words. This module decides
//! systems of two such equations and normalizes single ones, following a
//! Euclid-style reduction on word balances.

use std::fmt;
use std::sync::RwLock;

use crate::term::Template;

/// Interns irreducible templates as letters. Ids are handed out in first
/// encounter order, so a fixed pipeline order yields fixed ids. The table is
/// append-only: reads may run concurrently, writes are serialized.
#[derive(Debug, Default)]
pub struct LetterTable {
    inner: RwLock<Vec<Template>>,
}

impl LetterTable {
    pub fn new() -> LetterTable {
        LetterTable::default()
    }

    pub fn intern(&self, t: &Template) -> Letter {
        {
            let v = self.inner.read().unwrap();
            if let Some(i) = v.iter().position(|x| x == t) {
                return Letter(i as u32);
            }
        }
        let mut v = self.inner.write().unwrap();
        if let Some(i) = v.iter().position(|x| x == t) {
            return Letter(i as u32);
        }
        v.push(t.clone());
        Letter((v.len() - 1) as u32)
    }

    pub fn resolve(&self, l: Letter) -> Template {
        self.inner.read().unwrap()[l.0 as usize].clone()
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An interned irreducible template.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter(pub u32);

/// A letter together with a sign; `positive == false` denotes the inverse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignedLetter {
    pub letter: Letter,
    pub positive: bool,
}

impl SignedLetter {
    pub fn pos(letter: Letter) -> SignedLetter {
        SignedLetter { letter, positive: true }
    }

    pub fn neg(letter: Letter) -> SignedLetter {
        SignedLetter { letter, positive: false }
    }

    pub fn inverse(self) -> SignedLetter {
        SignedLetter {
            letter: self.letter,
            positive: !self.positive,
        }
    }
}

/// A freely reduced group word. The representation never contains a letter
/// adjacent to its own inverse.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(Vec<SignedLetter>);

impl Word {
    pub fn empty() -> Word {
        Word(Vec::new())
    }

    /// Builds a word, reducing as needed.
    pub fn new(letters: impl IntoIterator<Item = SignedLetter>) -> Word {
        let mut w = Word::empty();
        for l in letters {
            w.push(l);
        }
        w
    }

    /// A positive word from a sequence of letters.
    pub fn positive(letters: impl IntoIterator<Item = Letter>) -> Word {
        Word(letters.into_iter().map(SignedLetter::pos).collect())
    }

    fn push(&mut self, l: SignedLetter) {
        match self.0.last() {
            Some(&last) if last == l.inverse() => {
                self.0.pop();
            }
            _ => self.0.push(l),
        }
    }

    pub fn letters(&self) -> &[SignedLetter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Concatenation followed by free reduction at the seam.
    pub fn concat(&self, other: &Word) -> Word {
        let mut w = self.clone();
        for &l in &other.0 {
            w.push(l);
        }
        w
    }

    /// The group inverse: reversed word with all signs flipped.
    pub fn invert(&self) -> Word {
        Word(self.0.iter().rev().map(|l| l.inverse()).collect())
    }

    /// The balance homomorphism: positive letters count +1, inverses -1.
    pub fn balance(&self) -> i64 {
        self.0
            .iter()
            .map(|l| if l.positive { 1 } else { -1 })
            .sum()
    }

    /// Whether every prefix has non-negative balance.
    pub fn non_negative(&self) -> bool {
        let mut bal = 0i64;
        for l in &self.0 {
            bal += if l.positive { 1 } else { -1 };
            if bal < 0 {
                return false;
            }
        }
        true
    }

    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|l| l.positive)
    }

    /// `self · other^{-k}`, reduced.
    fn div_pow(&self, other: &Word, k: u32) -> Word {
        let inv = other.invert();
        let mut w = self.clone();
        for _ in 0..k {
            w = w.concat(&inv);
        }
        w
    }

    /// Splits a non-negative, balance-zero, non-empty word as `x · y · z⁻¹`
    /// with `x`, `z` the maximal positive prefix and maximal positive
    /// inverse-suffix. Both are non-empty for such words; `y` is empty or
    /// starts with an inverse and ends with a positive letter.
    fn split_xyz(&self) -> (Word, Word, Word) {
        let letters = &self.0;
        let x_end = letters.iter().take_while(|l| l.positive).count();
        let z_start = letters.len()
            - letters.iter().rev().take_while(|l| !l.positive).count();
        let x = Word(letters[..x_end].to_vec());
        let y = Word(letters[x_end..z_start].to_vec());
        let z = Word(letters[z_start..].to_vec()).invert();
        (x, y, z)
    }
}

/// Renders a word with `id` / `id^-1` letter spelling via a resolver.
pub fn render_word(w: &Word, resolve: impl Fn(Letter) -> String) -> String {
    if w.is_empty() {
        return "eps".to_string();
    }
    w.letters()
        .iter()
        .map(|l| {
            let name = resolve(l.letter);
            if l.positive {
                name
            } else {
                format!("{name}^-1")
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_word(self, |l| format!("l{}", l.0)))
    }
}

/// Which of `A`, `B` carries the extra positive factor in a solved relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Orient {
    /// `A · w == B`
    LeftTimes,
    /// `A == B · w`
    RightTimes,
}

/// The normalized meaning of a conjunction of conjugation equations over the
/// monoid variables `A` and `B`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    /// Satisfied by every pair `(A, B)`.
    Trivial,
    /// Satisfied by no pair.
    Contradiction,
    /// `A·w == B` or `A == B·w` for a fixed positive word `w`; `w` empty
    /// means `A == B` and is normalized to `LeftTimes`.
    Solved { orient: Orient, w: Word },
    /// The residual single equation `A·u·A⁻¹ == B·u'·B⁻¹`, already in the
    /// terminal form of the reduction.
    Conjugation { u: Word, u_prime: Word },
}

impl Relation {
    pub fn solved(orient: Orient, w: Word) -> Relation {
        debug_assert!(w.is_positive());
        if w.is_empty() {
            Relation::Solved {
                orient: Orient::LeftTimes,
                w,
            }
        } else {
            Relation::Solved { orient, w }
        }
    }

    pub fn is_contradiction(&self) -> bool {
        matches!(self, Relation::Contradiction)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Trivial => write!(f, "true"),
            Relation::Contradiction => write!(f, "false"),
            Relation::Solved { orient, w } if w.is_empty() => {
                let _ = orient;
                write!(f, "A == B")
            }
            Relation::Solved {
                orient: Orient::LeftTimes,
                w,
            } => write!(f, "A {w} == B"),
            Relation::Solved {
                orient: Orient::RightTimes,
                w,
            } => write!(f, "A == B {w}"),
            Relation::Conjugation { u, u_prime } => {
                write!(f, "A ({u}) A^-1 == B ({u_prime}) B^-1")
            }
        }
    }
}

/// Solves the monoid equation `A·u == B·v` for positive words `u`, `v`.
/// One of `A`, `B` must be a prefix of the other, so the equation is either
/// contradictory or resolves to a single solved relation.
pub fn solve_monoid(u: &Word, v: &Word) -> Relation {
    debug_assert!(u.is_positive() && v.is_positive());
    let d = u.concat(&v.invert());
    if d.is_positive() {
        // u == d·v, hence A·d == B.
        Relation::solved(Orient::LeftTimes, d)
    } else if d.invert().is_positive() {
        Relation::solved(Orient::RightTimes, d.invert())
    } else {
        Relation::Contradiction
    }
}

/// Resolves a single equation `A·u·A⁻¹ == B·u'·B⁻¹` with `|u| == |u'| == 0`,
/// both non-negative and reduced.
///
/// Such words split as `x·y·z⁻¹` with maximal positive `x`, `z`; the
/// equation then decomposes into `A·x == B·x'`, `y == y'` and `A·z == B·z'`,
/// and the two monoid equations must agree.
pub fn lemma_base(u: &Word, u_prime: &Word) -> Relation {
    assert_eq!(u.balance(), 0, "lemma_base: left balance must be zero");
    assert_eq!(u_prime.balance(), 0, "lemma_base: right balance must be zero");
    assert!(u.non_negative() && u_prime.non_negative());

    match (u.is_empty(), u_prime.is_empty()) {
        (true, true) => return Relation::Trivial,
        (true, false) | (false, true) => return Relation::Contradiction,
        (false, false) => {}
    }

    let (x, y, z) = u.split_xyz();
    let (x2, y2, z2) = u_prime.split_xyz();
    if y != y2 {
        return Relation::Contradiction;
    }
    let first = solve_monoid(&x, &x2);
    let second = solve_monoid(&z, &z2);
    if first == second {
        first
    } else {
        Relation::Contradiction
    }
}

/// Brings a single conjugation equation into canonical form: balance
/// mismatches are contradictory, balance zero resolves through
/// [`lemma_base`], anything else stays a residual conjugation.
pub fn canonicalize_single(u: &Word, u_prime: &Word) -> Relation {
    if u.balance() != u_prime.balance() {
        return Relation::Contradiction;
    }
    debug_assert!(u.non_negative() && u_prime.non_negative());
    if u.balance() == 0 {
        lemma_base(u, u_prime)
    } else {
        Relation::Conjugation {
            u: u.clone(),
            u_prime: u_prime.clone(),
        }
    }
}

/// Whether the pair `(A, B) = (A, A·w)` oriented by `orient` satisfies
/// `A·u·A⁻¹ == B·u'·B⁻¹`.
fn solved_satisfies(orient: Orient, w: &Word, u: &Word, u_prime: &Word) -> bool {
    match orient {
        // B == A·w: the equation holds iff u == w·u'·w⁻¹.
        Orient::LeftTimes => *u == w.concat(u_prime).concat(&w.invert()),
        // A == B·w: the equation holds iff u' == w·u·w⁻¹.
        Orient::RightTimes => *u_prime == w.concat(u).concat(&w.invert()),
    }
}

/// Solves the system of two conjugation equations
/// `A·u·A⁻¹ == B·u'·B⁻¹  and  A·v·A⁻¹ == B·v'·B⁻¹`
/// over monoid values for `A` and `B`.
///
/// Preconditions: all words reduced and non-negative, balances matching
/// within each pair and non-negative. The reduction recurses on the measure
/// `|u| + |v|`: with `r` maximal such that `r·|v| <= |u|`, the pair is
/// equivalent to the pair of the `v`-equation and the equation of
/// `w = u·v⁻ʳ`, whose balance is strictly below `|v|`.
pub fn solve_conjugation_pair(p: (&Word, &Word), q: (&Word, &Word)) -> Relation {
    let (u, u2) = p;
    let (v, v2) = q;
    assert_eq!(u.balance(), u2.balance(), "pair balances must match");
    assert_eq!(v.balance(), v2.balance(), "pair balances must match");
    assert!(u.balance() >= 0 && v.balance() >= 0);
    debug_assert!(
        u.non_negative() && u2.non_negative() && v.non_negative() && v2.non_negative()
    );

    // Orient so the first equation has the larger balance.
    if u.balance() < v.balance() {
        return solve_conjugation_pair(q, p);
    }

    if v.balance() == 0 {
        let rel = lemma_base(v, v2);
        return match rel {
            Relation::Contradiction => Relation::Contradiction,
            Relation::Trivial => canonicalize_single(u, u2),
            Relation::Solved { orient, ref w } => {
                if solved_satisfies(orient, w, u, u2) {
                    rel
                } else {
                    Relation::Contradiction
                }
            }
            Relation::Conjugation { .. } => unreachable!("lemma_base result"),
        };
    }

    let r = (u.balance() / v.balance()) as u32;
    debug_assert!(r >= 1);
    let w = u.div_pow(v, r);
    let w2 = u2.div_pow(v2, r);
    debug_assert!(w.balance() < v.balance(), "maximality of r");

    match (w.is_empty(), w2.is_empty()) {
        // u == v^r and u' == v'^r: unique roots make the first equation
        // equivalent to the second.
        (true, true) => canonicalize_single(v, v2),
        (true, false) | (false, true) => Relation::Contradiction,
        (false, false) => solve_conjugation_pair((v, v2), (&w, &w2)),
    }
}

/// Combines an already established relation with one further conjugation
/// equation, yielding the canonical relation of the conjunction.
pub fn relation_and_pair(rel: &Relation, u: &Word, u_prime: &Word) -> Relation {
    if u.balance() != u_prime.balance() || u.balance() < 0 {
        return Relation::Contradiction;
    }
    match rel {
        Relation::Contradiction => Relation::Contradiction,
        Relation::Trivial => canonicalize_single(u, u_prime),
        Relation::Solved { orient, w } => {
            if solved_satisfies(*orient, w, u, u_prime) {
                rel.clone()
            } else {
                Relation::Contradiction
            }
        }
        Relation::Conjugation { u: c, u_prime: c2 } => {
            solve_conjugation_pair((c, c2), (u, u_prime))
        }
    }
}

/// Whether `rel` implies the equation `A·u·A⁻¹ == B·u'·B⁻¹`. Decided by
/// conjoining: the implication holds iff the conjunction has the same
/// canonical form as `rel` itself.
pub fn relation_implies(rel: &Relation, u: &Word, u_prime: &Word) -> bool {
    assert!(
        !rel.is_contradiction(),
        "relation_implies: left side must be satisfiable"
    );
    relation_and_pair(rel, u, u_prime) == *rel
}

/// Whether concrete positive values `a` for `A` and `b` for `B` satisfy the
/// relation, evaluated directly from the relation's meaning.
pub fn satisfies(rel: &Relation, a: &Word, b: &Word) -> bool {
    debug_assert!(a.is_positive() && b.is_positive());
    match rel {
        Relation::Trivial => true,
        Relation::Contradiction => false,
        Relation::Solved {
            orient: Orient::LeftTimes,
            w,
        } => a.concat(w) == *b,
        Relation::Solved {
            orient: Orient::RightTimes,
            w,
        } => *a == b.concat(w),
        Relation::Conjugation { u, u_prime } => {
            a.concat(u).concat(&a.invert()) == b.concat(u_prime).concat(&b.invert())
        }
    }
}
