//! Unique factorization of ground terms relative to a term universe.
//!
//! Arbitrary ground terms do not factor uniquely over the template monoid.
//! They do once factorization is taken relative to a subterm-closed set `G`
//! of protected ground terms: every ground term `t` outside a subterm-closed
//! superset `S` of `G` splits uniquely as `t = m · x` where all ground
//! subterms of `m` lie in `G`, `x` is not in `S`, and `x` is minimal with
//! that property. Templates whose ground subterms lie in `G` in turn form a
//! free monoid, so they decompose uniquely into irreducible factors.

use std::collections::BTreeSet;
use std::fmt;

use crate::term::{Path, Template, Term};

/// The ground-term context a program induces: `G` is subterm-closed and
/// `S ⊇ G` is the set of small terms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TermUniverse {
    g: BTreeSet<Term>,
    s: BTreeSet<Term>,
}

impl TermUniverse {
    /// Builds a universe, closing `g` under subterms and forcing `s ⊇ g`.
    pub fn new(g: impl IntoIterator<Item = Term>, s: impl IntoIterator<Item = Term>) -> TermUniverse {
        let mut closed = BTreeSet::new();
        for t in g {
            assert!(t.is_ground(), "TermUniverse: G must contain ground terms");
            for sub in t.subterms() {
                closed.insert(sub);
            }
        }
        let mut small: BTreeSet<Term> = closed.clone();
        for t in s {
            assert!(t.is_ground(), "TermUniverse: S must contain ground terms");
            small.insert(t);
        }
        TermUniverse { g: closed, s: small }
    }

    pub fn empty() -> TermUniverse {
        TermUniverse::default()
    }

    pub fn g(&self) -> &BTreeSet<Term> {
        &self.g
    }

    pub fn s(&self) -> &BTreeSet<Term> {
        &self.s
    }

    pub fn in_g(&self, t: &Term) -> bool {
        self.g.contains(t)
    }

    pub fn in_s(&self, t: &Term) -> bool {
        self.s.contains(t)
    }

    /// Whether every ground subterm of the template lies in `G`.
    pub fn in_mg(&self, u: &Template) -> bool {
        self.term_in_mg(u.as_term())
    }

    fn term_in_mg(&self, t: &Term) -> bool {
        match t {
            Term::Hole => true,
            Term::Var(_) => false,
            Term::App(_, args) => {
                if t.is_ground() {
                    self.g.contains(t)
                } else {
                    args.iter().all(|a| self.term_in_mg(a))
                }
            }
        }
    }

    pub fn classify(&self, t: &Term) -> Smallness {
        assert!(t.is_ground(), "classify: term must be ground");
        if self.in_s(t) {
            Smallness::Small
        } else {
            Smallness::Large
        }
    }
}

/// Whether a ground term belongs to the small set `S`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smallness {
    Small,
    Large,
}

/// The unique split `t = prefix · tail` of a large ground term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factorization {
    pub prefix: Template,
    pub tail: Term,
}

impl fmt::Display for Factorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.prefix, self.tail)
    }
}

/// Error raised when a small term is handed to [`factorize`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmallTermError(pub Term);

impl fmt::Display for SmallTermError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "term {} is small and has no factorization", self.0)
    }
}

impl std::error::Error for SmallTermError {}

/// Factors a large ground term as `prefix · tail`.
///
/// The construction: collect the minimal subterms of `t` outside `G`; the
/// tail is the least subterm of `t` outside `S` whose occurrences cover all
/// occurrences of those; the prefix punches out the tail's occurrences.
pub fn factorize(t: &Term, universe: &TermUniverse) -> Result<Factorization, SmallTermError> {
    assert!(t.is_ground(), "factorize: term must be ground");
    if universe.in_s(t) {
        return Err(SmallTermError(t.clone()));
    }

    let subterms = t.subterms();
    let minimal_outside_g: Vec<&Term> = subterms
        .iter()
        .filter(|u| !universe.in_g(u) && proper_subterms_in_g(u, universe))
        .collect();
    let covered: Vec<Path> = minimal_outside_g
        .iter()
        .flat_map(|u| t.occurrences(u))
        .collect();

    let mut candidates: Vec<&Term> = subterms.iter().filter(|u| !universe.in_s(u)).collect();
    candidates.sort_by(|a, b| a.cmp_by_size(b));

    for cand in candidates {
        let occ = t.occurrences(cand);
        if covered
            .iter()
            .all(|p| occ.iter().any(|q| p.starts_with(q)))
        {
            let prefix = Template::new(t.punch(&occ))
                .expect("punching occurrences of a subterm yields a template");
            debug_assert!(
                universe.in_mg(&prefix),
                "factorize: prefix {prefix} has a ground subterm outside G"
            );
            return Ok(Factorization {
                prefix,
                tail: cand.clone(),
            });
        }
    }
    unreachable!("factorize: t itself always covers all occurrences");
}

fn proper_subterms_in_g(u: &Term, universe: &TermUniverse) -> bool {
    match u {
        Term::App(_, args) => args
            .iter()
            .all(|a| a.subterms().iter().all(|s| universe.in_g(s))),
        _ => true,
    }
}

/// The maximal right divisor `v != m` of the template `m`, together with the
/// complementary left factor `u` such that `m = u · v`. Right divisors of an
/// element of a free monoid form a chain, so "maximal" is well defined; the
/// result is the bare marker exactly when `m` is irreducible or the marker.
fn max_proper_right_divisor(m: &Template) -> (Template, Template) {
    let term = m.as_term();
    let holes = term.hole_paths();
    let first = &holes[0];
    // Nontrivial right divisors occur at a strict ancestor of the first
    // marker below the root; try the shallowest (largest) first.
    for depth in 1..first.len() + 1 {
        let p = &first[..depth];
        let cand = term.subterm_at(p).unwrap().clone();
        let occ = term.occurrences(&cand);
        if holes
            .iter()
            .all(|h| occ.iter().any(|q| h.starts_with(q)))
        {
            let v = Template::new(cand).expect("subterm containing a marker is a template");
            let u = Template::new(term.punch(&occ)).expect("left factor is a template");
            debug_assert_eq!(u.compose(&v), *m);
            return (u, v);
        }
    }
    // Only the marker itself divides m on the right: m = m · hole.
    (m.clone(), Template::hole())
}

/// Decomposes a template into its unique sequence of irreducible factors.
/// The marker decomposes into the empty sequence.
pub fn decompose(m: &Template) -> Vec<Template> {
    let mut out = Vec::new();
    let mut rest = m.clone();
    while !rest.is_hole() {
        let (head, tail) = max_proper_right_divisor(&rest);
        out.push(head);
        rest = tail;
    }
    out
}

/// Whether a template is irreducible in the template monoid. The marker is
/// neither reducible nor irreducible and is rejected.
pub fn is_irreducible(u: &Template) -> bool {
    assert!(!u.is_hole(), "is_irreducible: the marker is the unit");
    max_proper_right_divisor(u).1.is_hole()
}
