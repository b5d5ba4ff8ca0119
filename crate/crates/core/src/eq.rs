//! Equalities `A[s] == B[t]` between template applications, conjunctions of
//! such equalities, and solvers for the ground systems they reduce to.
//!
//! The two generic equality shapes are `A[x] == B[y]` with both sides headed
//! by a template variable, and `A[x] == C` against a ground-valued variable.
//! Weakest preconditions substitute terms into the bodies; universal
//! quantification either drops an equality, refutes the whole conjunction or
//! turns variable occurrences into markers.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use crate::term::{replacements, Sym, Template, Term};

/// A template-valued context variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CtxVar {
    A,
    B,
}

impl fmt::Display for CtxVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CtxVar::A => f.write_str("A"),
            CtxVar::B => f.write_str("B"),
        }
    }
}

/// One side of an equality.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    /// A context variable applied to a body term.
    App(CtxVar, Term),
    /// The ground-valued variable `C`.
    ConstVar,
    /// A plain term without a context variable.
    Bare(Term),
}

impl Side {
    pub fn body(&self) -> Option<&Term> {
        match self {
            Side::App(_, t) | Side::Bare(t) => Some(t),
            Side::ConstVar => None,
        }
    }

    pub fn mentions_var(&self, x: &Sym) -> bool {
        self.body().is_some_and(|t| t.mentions_var(x))
    }

    fn map_body(&self, f: impl FnOnce(&Term) -> Term) -> Side {
        match self {
            Side::App(cv, t) => Side::App(*cv, f(t)),
            Side::Bare(t) => Side::Bare(f(t)),
            Side::ConstVar => Side::ConstVar,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::App(cv, t) => write!(f, "{cv}[{t}]"),
            Side::ConstVar => f.write_str("C"),
            Side::Bare(t) => write!(f, "{t}"),
        }
    }
}

/// A single equality between two sides.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Equality {
    pub lhs: Side,
    pub rhs: Side,
}

impl Equality {
    pub fn new(lhs: Side, rhs: Side) -> Equality {
        Equality { lhs, rhs }
    }

    /// `A[s] == B[t]`.
    pub fn pair(a_body: Term, b_body: Term) -> Equality {
        Equality {
            lhs: Side::App(CtxVar::A, a_body),
            rhs: Side::App(CtxVar::B, b_body),
        }
    }

    /// `A[s] == C`.
    pub fn constant(a_body: Term) -> Equality {
        Equality {
            lhs: Side::App(CtxVar::A, a_body),
            rhs: Side::ConstVar,
        }
    }

    /// Both sides identical, hence satisfied by every valuation.
    pub fn is_trivial(&self) -> bool {
        self.lhs == self.rhs
    }

    pub fn mentions_var(&self, x: &Sym) -> bool {
        self.lhs.mentions_var(x) || self.rhs.mentions_var(x)
    }

    pub fn subst_var(&self, x: &Sym, t: &Term) -> Equality {
        Equality {
            lhs: self.lhs.map_body(|b| b.subst_var(x, t)),
            rhs: self.rhs.map_body(|b| b.subst_var(x, t)),
        }
    }

    fn collect_vars(&self, out: &mut BTreeSet<Sym>) {
        for side in [&self.lhs, &self.rhs] {
            if let Some(t) = side.body() {
                out.extend(t.vars());
            }
        }
    }
}

impl fmt::Display for Equality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} == {}", self.lhs, self.rhs)
    }
}

/// A conjunction of equalities. The empty conjunction is `true`; `Bottom` is
/// the unsatisfiable conjunction.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Conjunction {
    Bottom,
    Set(BTreeSet<Equality>),
}

impl Conjunction {
    pub fn top() -> Conjunction {
        Conjunction::Set(BTreeSet::new())
    }

    pub fn bottom() -> Conjunction {
        Conjunction::Bottom
    }

    pub fn is_top(&self) -> bool {
        matches!(self, Conjunction::Set(s) if s.is_empty())
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, Conjunction::Bottom)
    }

    /// Adds one equality; trivial equalities are dropped.
    pub fn insert(&mut self, eq: Equality) {
        if let Conjunction::Set(s) = self {
            if !eq.is_trivial() {
                s.insert(eq);
            }
        }
    }

    pub fn and(&self, other: &Conjunction) -> Conjunction {
        match (self, other) {
            (Conjunction::Bottom, _) | (_, Conjunction::Bottom) => Conjunction::Bottom,
            (Conjunction::Set(a), Conjunction::Set(b)) => {
                Conjunction::Set(a.union(b).cloned().collect())
            }
        }
    }

    /// The equalities, if satisfiable.
    pub fn equalities(&self) -> Option<&BTreeSet<Equality>> {
        match self {
            Conjunction::Bottom => None,
            Conjunction::Set(s) => Some(s),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Conjunction::Bottom => 0,
            Conjunction::Set(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All program variables mentioned in any body.
    pub fn vars(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        if let Conjunction::Set(s) = self {
            s.iter().for_each(|eq| eq.collect_vars(&mut out));
        }
        out
    }
}

impl FromIterator<Equality> for Conjunction {
    fn from_iter<I: IntoIterator<Item = Equality>>(iter: I) -> Conjunction {
        let mut c = Conjunction::top();
        for eq in iter {
            c.insert(eq);
        }
        c
    }
}

impl fmt::Display for Conjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conjunction::Bottom => f.write_str("false"),
            Conjunction::Set(s) if s.is_empty() => f.write_str("true"),
            Conjunction::Set(s) => {
                for (i, eq) in s.iter().enumerate() {
                    if i > 0 {
                        f.write_str("  /\\  ")?;
                    }
                    write!(f, "{eq}")?;
                }
                Ok(())
            }
        }
    }
}

/// The weakest precondition of `x := t`: substitutes `t` for `x` in every
/// body. Substitution may render an equality trivial, in which case it is
/// dropped.
pub fn wp_subst(c: &Conjunction, x: &Sym, t: &Term) -> Conjunction {
    match c {
        Conjunction::Bottom => Conjunction::Bottom,
        Conjunction::Set(s) => s.iter().map(|eq| eq.subst_var(x, t)).collect(),
    }
}

/// Universal quantification over `x`, distributed over the conjunction.
///
/// Per equality: if `x` does not occur the equality is kept; if it occurs on
/// one side only no valuation works for all `x`; if both sides mention `x`
/// under context variables, validity for all `x` is equivalent to the
/// equality with every `x` turned into a marker. Two bare sides hold for all
/// `x` exactly if they are syntactically equal. Shapes outside these cases
/// do not arise in the pipeline and map to `Bottom`, which is sound.
pub fn forall(c: &Conjunction, x: &Sym) -> Conjunction {
    let Conjunction::Set(s) = c else {
        return Conjunction::Bottom;
    };
    let mut out = Conjunction::top();
    for eq in s {
        match (eq.lhs.mentions_var(x), eq.rhs.mentions_var(x)) {
            (false, false) => out.insert(eq.clone()),
            (true, false) | (false, true) => return Conjunction::Bottom,
            (true, true) => match (&eq.lhs, &eq.rhs) {
                (Side::Bare(s), Side::Bare(t)) => {
                    if s != t {
                        return Conjunction::Bottom;
                    }
                }
                (Side::App(cv1, s), Side::App(cv2, t)) => {
                    out.insert(Equality::new(
                        Side::App(*cv1, s.var_to_hole(x)),
                        Side::App(*cv2, t.var_to_hole(x)),
                    ));
                }
                _ => return Conjunction::Bottom,
            },
        }
    }
    out
}

/// Replaces markers left behind by quantification with the rigid marker
/// atom. Fixpoint iteration stores only variable-or-ground bodies; sealing
/// lets template equations ride along as plain ground equalities, and the
/// encoding agrees with the one `solve_system` applies to template bodies.
pub fn seal_markers(c: &Conjunction) -> Conjunction {
    match c {
        Conjunction::Bottom => Conjunction::Bottom,
        Conjunction::Set(s) => s
            .iter()
            .map(|eq| Equality {
                lhs: eq.lhs.map_body(encode_holes),
                rhs: eq.rhs.map_body(encode_holes),
            })
            .collect(),
    }
}

/// Quantifies over every variable occurring in the conjunction. The order
/// does not matter; variables are processed in sorted order.
pub fn universal_closure(c: &Conjunction) -> Conjunction {
    let mut cur = c.clone();
    for x in c.vars() {
        cur = forall(&cur, &x);
    }
    cur
}

/// One candidate valuation of `(A, B)`.
pub type SolutionPair = (Template, Template);

/// The base solutions of a system `A[s_i] == B[t_i]` of ground equalities.
/// Every solution of a pinned-down system is a common left composition of
/// one of the base pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SystemSolutions {
    Unsat,
    Pairs(BTreeSet<SolutionPair>),
}

impl SystemSolutions {
    pub fn pairs(&self) -> Option<&BTreeSet<SolutionPair>> {
        match self {
            SystemSolutions::Unsat => None,
            SystemSolutions::Pairs(p) => Some(p),
        }
    }
}

/// Base solutions of the single equation `A[s] == B[t]` for ground `s`, `t`.
///
/// Equal sides are solved by `A == B`. Otherwise the smaller side's variable
/// must be plugged directly, and the other variable is a replacement
/// quotient of the two terms. Distinct terms of equal size admit no base
/// pair: any solution would need proper contexts on both sides, and such
/// pairs are never forced by a pinned-down system.
pub fn solve_single(s: &Term, t: &Term) -> BTreeSet<SolutionPair> {
    assert!(s.is_ground() && t.is_ground(), "solve_single: ground terms only");
    if s == t {
        return BTreeSet::from([(Template::hole(), Template::hole())]);
    }
    match s.size().cmp(&t.size()) {
        Ordering::Greater => replacements(s, t)
            .into_iter()
            .map(|m| (Template::hole(), m))
            .collect(),
        Ordering::Less => replacements(t, s)
            .into_iter()
            .map(|m| (m, Template::hole()))
            .collect(),
        Ordering::Equal => BTreeSet::new(),
    }
}

const HOLE_MARKER: &str = "◇";

/// Markers in equality bodies are encoded as a rank-0 operator that the term
/// syntax cannot spell, so it never collides with program operators.
fn encode_holes(t: &Term) -> Term {
    t.subst_hole(&Term::atom(HOLE_MARKER))
}

fn mentions_hole_marker(t: &Term) -> bool {
    match t {
        Term::App(f, args) => {
            (args.is_empty() && f.as_str() == HOLE_MARKER)
                || args.iter().any(mentions_hole_marker)
        }
        _ => false,
    }
}

/// Solves a system of equalities `A[s_i] == B[t_i]` whose sides are ground
/// except possibly for markers. Markers stand for a universally quantified
/// value, so solutions whose templates capture the marker are rejected.
///
/// A deduplicated system of two or more equalities either differs in both
/// components somewhere, pinning the solution down to at most one base pair,
/// or repeats one side with distinct other sides, which is unsatisfiable
/// because a template application is injective in its argument. The empty
/// system is satisfied by everything; callers treat it as having no
/// reportable base pairs.
pub fn solve_system(eqs: &[(Term, Term)]) -> SystemSolutions {
    let sys: Vec<(Term, Term)> = {
        let dedup: BTreeSet<(Term, Term)> = eqs
            .iter()
            .map(|(s, t)| (encode_holes(s), encode_holes(t)))
            .collect();
        dedup.into_iter().collect()
    };

    let keep = |pairs: BTreeSet<SolutionPair>| {
        SystemSolutions::Pairs(
            pairs
                .into_iter()
                .filter(|(a, b)| {
                    !mentions_hole_marker(a.as_term()) && !mentions_hole_marker(b.as_term())
                })
                .collect(),
        )
    };

    match sys.len() {
        0 => SystemSolutions::Pairs(BTreeSet::new()),
        1 => keep(solve_single(&sys[0].0, &sys[0].1)),
        _ => {
            let mut pinned = None;
            'outer: for (i, (si, ti)) in sys.iter().enumerate() {
                for (sj, tj) in sys.iter().skip(i + 1) {
                    if si != sj && ti != tj {
                        pinned = Some(((si, ti), (sj, tj)));
                        break 'outer;
                    }
                }
            }
            let Some(((si, ti), (sj, tj))) = pinned else {
                // Any two distinct equalities share exactly one side here,
                // and the shared side forces two distinct values onto one
                // template application.
                return SystemSolutions::Unsat;
            };
            let cand: BTreeSet<SolutionPair> = solve_single(si, ti)
                .intersection(&solve_single(sj, tj))
                .cloned()
                .collect();
            debug_assert!(cand.len() <= 1, "two doubly distinct equalities pin the pair");
            let validated: BTreeSet<SolutionPair> = cand
                .into_iter()
                .filter(|(a, b)| sys.iter().all(|(s, t)| a.apply(s) == b.apply(t)))
                .collect();
            if validated.is_empty() {
                SystemSolutions::Unsat
            } else {
                keep(validated)
            }
        }
    }
}

/// Extracts the constant value of a system `A[s_i] == C`: the bodies must
/// agree on a single ground term, which is then the value both of `C` and of
/// the variable the equality speaks about.
pub fn solve_const_system<'a, I>(bodies: I) -> Option<Term>
where
    I: IntoIterator<Item = &'a Term>,
{
    let distinct: BTreeSet<&Term> = bodies.into_iter().collect();
    match distinct.len() {
        1 => {
            let t = distinct.into_iter().next().unwrap();
            t.is_ground().then(|| t.clone())
        }
        _ => None,
    }
}
