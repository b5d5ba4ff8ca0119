//! Per-format subsumption buckets, approximate subsumption of conjunctions
//! and conjunction compaction.
//!
//! Subsumption is checked per small substitution and per equality format. A
//! small substitution maps every variable either to itself or to a small
//! ground term; under each one, equalities fall into formats whose
//! satisfying valuations admit compact normal forms: pinned ground systems,
//! constant systems, monoid relations and conjugation relations over
//! factorization words. A conjunction subsumes an equality of some format
//! exactly if adding the equality to the format's bucket leaves the bucket's
//! canonical content unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::eq::{solve_single, Conjunction, CtxVar, Equality, Side, SolutionPair};
use crate::factor::{decompose, factorize, Smallness, TermUniverse};
use crate::term::{solve_for_marker, MarkerSolution, Sym, Template, Term};
use crate::words::{relation_and_pair, solve_monoid, LetterTable, Relation, Word};

/// Shared context for subsumption checks: the term universe fixing small
/// terms and prefix letters, the program variables, and the letter interner
/// for factorization words.
#[derive(Debug)]
pub struct ApproxCtx {
    pub universe: TermUniverse,
    pub vars: BTreeSet<Sym>,
    /// Initialization-restricted program: no ground right-hand side re-occurs
    /// inside another right-hand side, so variables never take small values
    /// and the substitution enumeration can be skipped.
    pub ir: bool,
    letters: LetterTable,
}

impl ApproxCtx {
    pub fn new(universe: TermUniverse, vars: BTreeSet<Sym>, ir: bool) -> ApproxCtx {
        ApproxCtx {
            universe,
            vars,
            ir,
            letters: LetterTable::new(),
        }
    }
}

/// The format of an equality, refining the two generic shapes by where
/// variables occur and whether ground sides are small or large.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum FormatKey {
    /// `A[s] == C`; the payload is the variable in `s`, if any.
    Ac(Option<Sym>),
    /// `A[s] == B[t]` with both bodies ground.
    GroundAb,
    /// `A[s·x] == B[t·x]`.
    SameVar(Sym),
    /// `A[s·x] == B[t·y]` with distinct variables.
    TwoVar(Sym, Sym),
    /// `A[s] == B[t·x]` with `s` ground and large.
    LargeLeft(Sym),
    /// `A[t·x] == B[s]` with `s` ground and large.
    LargeRight(Sym),
    /// `A[s] == B[t·x]` with `s` small; the key carries `s`.
    SmallLeft(Term, Sym),
    /// `A[t·x] == B[s]` with `s` small.
    SmallRight(Term, Sym),
}

impl fmt::Display for FormatKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatKey::Ac(None) => write!(f, "constant/ground"),
            FormatKey::Ac(Some(x)) => write!(f, "constant/{x}"),
            FormatKey::GroundAb => write!(f, "ground"),
            FormatKey::SameVar(x) => write!(f, "same-var/{x}"),
            FormatKey::TwoVar(x, y) => write!(f, "two-var/{x},{y}"),
            FormatKey::LargeLeft(x) => write!(f, "large-left/{x}"),
            FormatKey::LargeRight(x) => write!(f, "large-right/{x}"),
            FormatKey::SmallLeft(s, x) => write!(f, "small-left/{s},{x}"),
            FormatKey::SmallRight(s, x) => write!(f, "small-right/{s},{x}"),
        }
    }
}

fn single_var(t: &Term) -> Option<Sym> {
    let vars = t.vars();
    assert!(
        vars.len() <= 1,
        "pipeline invariant: body {t} mentions several variables"
    );
    vars.into_iter().next()
}

/// Classifies an analysis-produced equality. Panics on shapes the pipeline
/// never produces, which signals an internal invariant violation.
pub fn classify_format(e: &Equality, ctx: &ApproxCtx) -> FormatKey {
    let var_prefix_checked = |body: &Term, x: &Sym| {
        let prefix = Template::new(body.var_to_hole(x))
            .expect("pipeline invariant: variable side is not prefix-times-variable");
        assert!(
            ctx.universe.in_mg(&prefix),
            "pipeline invariant: variable prefix {} outside the ground-subterm monoid",
            prefix.as_term()
        );
    };
    match (&e.lhs, &e.rhs) {
        (Side::App(CtxVar::A, s), Side::ConstVar) => {
            assert_eq!(s.hole_count(), 0, "pipeline invariant: marker in a bucket body");
            match single_var(s) {
                None => FormatKey::Ac(None),
                Some(x) => {
                    var_prefix_checked(s, &x);
                    FormatKey::Ac(Some(x))
                }
            }
        }
        (Side::App(CtxVar::A, s), Side::App(CtxVar::B, t)) => {
            assert_eq!(
                s.hole_count() + t.hole_count(),
                0,
                "pipeline invariant: marker in a bucket body"
            );
            match (single_var(s), single_var(t)) {
                (None, None) => FormatKey::GroundAb,
                (Some(x), Some(y)) if x == y => {
                    var_prefix_checked(s, &x);
                    var_prefix_checked(t, &x);
                    FormatKey::SameVar(x)
                }
                (Some(x), Some(y)) => {
                    var_prefix_checked(s, &x);
                    var_prefix_checked(t, &y);
                    FormatKey::TwoVar(x, y)
                }
                (None, Some(y)) => {
                    var_prefix_checked(t, &y);
                    match ctx.universe.classify(s) {
                        Smallness::Small => FormatKey::SmallLeft(s.clone(), y),
                        Smallness::Large => FormatKey::LargeLeft(y),
                    }
                }
                (Some(x), None) => {
                    var_prefix_checked(s, &x);
                    match ctx.universe.classify(t) {
                        Smallness::Small => FormatKey::SmallRight(t.clone(), x),
                        Smallness::Large => FormatKey::LargeRight(x),
                    }
                }
            }
        }
        _ => panic!("pipeline invariant: equality {e} has an unsupported shape"),
    }
}

/// Canonical content of a bucket: a pure function of the member set, so
/// insertion order never matters.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Content {
    Empty,
    Bottom,
    /// One ground equality, not yet pinning the template pair.
    GroundOne(Term, Term),
    /// Ground system pinned to its unique base pair.
    GroundPivot(SolutionPair),
    /// Constant normal form: one representative body per variable plus at
    /// most one ground representative.
    AcState {
        reps: BTreeMap<Sym, Term>,
        ground: Option<Term>,
    },
    /// Small-term buckets hold a single equality.
    Single(Equality),
    /// Same-variable members cancel to a single monoid relation.
    Monoid(Relation),
    /// Conjugation family: canonical base word pair, the folded relation of
    /// the remaining members, and the shared anchor for large formats.
    Words {
        base: (Word, Word),
        rel: Relation,
        anchor: Option<Term>,
    },
}

fn side_body(s: &Side) -> &Term {
    s.body().expect("bucket members carry bodies")
}

fn template_word(t: &Template, ctx: &ApproxCtx) -> Word {
    Word::positive(decompose(t).iter().map(|f| ctx.letters.intern(f)))
}

fn var_word(body: &Term, x: &Sym, ctx: &ApproxCtx) -> Word {
    let prefix = Template::new(body.var_to_hole(x)).expect("variable body yields a template");
    template_word(&prefix, ctx)
}

fn ground_content(members: &BTreeSet<Equality>) -> Content {
    let pairs: BTreeSet<(Term, Term)> = members
        .iter()
        .map(|e| (side_body(&e.lhs).clone(), side_body(&e.rhs).clone()))
        .collect();
    if pairs.len() == 1 {
        let (s, t) = pairs.into_iter().next().unwrap();
        return Content::GroundOne(s, t);
    }
    let mut pinned = None;
    'outer: for (i, (si, ti)) in pairs.iter().enumerate() {
        for (sj, tj) in pairs.iter().skip(i + 1) {
            if si != sj && ti != tj {
                pinned = Some(((si, ti), (sj, tj)));
                break 'outer;
            }
        }
    }
    let Some(((si, ti), (sj, tj))) = pinned else {
        // Two equalities sharing one side force two values onto a single
        // template application.
        return Content::Bottom;
    };
    let cand: BTreeSet<SolutionPair> = solve_single(si, ti)
        .intersection(&solve_single(sj, tj))
        .cloned()
        .collect();
    match cand
        .into_iter()
        .find(|(a, b)| pairs.iter().all(|(s, t)| a.apply(s) == b.apply(t)))
    {
        Some(p) => Content::GroundPivot(p),
        None => Content::Bottom,
    }
}

fn ac_content(bodies: &BTreeSet<Term>) -> Content {
    let mut ground: Option<Term> = None;
    let merge_ground = |g: Term, ground: &mut Option<Term>| -> bool {
        match ground {
            None => {
                *ground = Some(g);
                true
            }
            Some(prev) => *prev == g,
        }
    };
    let mut by_var: BTreeMap<Sym, Vec<&Term>> = BTreeMap::new();
    for b in bodies {
        match single_var(b) {
            None => {
                if !merge_ground(b.clone(), &mut ground) {
                    return Content::Bottom;
                }
            }
            Some(x) => by_var.entry(x).or_default().push(b),
        }
    }
    let mut reps = BTreeMap::new();
    for (x, bs) in by_var {
        let marker = Term::var(x.clone());
        let rep = (*bs.first().unwrap()).clone();
        for b in &bs[1..] {
            // Two bodies over the same variable pin its value; the common
            // instance joins the ground slot.
            match solve_for_marker(&rep, b, &marker) {
                MarkerSolution::NoSolution => return Content::Bottom,
                MarkerSolution::Exactly(g) => {
                    if !merge_ground(rep.subst_var(&x, &g), &mut ground) {
                        return Content::Bottom;
                    }
                }
                MarkerSolution::AllValues => unreachable!("distinct bodies"),
            }
        }
        reps.insert(x, rep);
    }
    if let Some(g) = &ground {
        for (x, rep) in &reps {
            if solve_for_marker(rep, g, &Term::var(x.clone())) == MarkerSolution::NoSolution {
                return Content::Bottom;
            }
        }
    }
    if reps.is_empty() && ground.is_none() {
        Content::Empty
    } else {
        Content::AcState { reps, ground }
    }
}

fn monoid_content(members: &BTreeSet<Equality>, x: &Sym, ctx: &ApproxCtx) -> Content {
    let mut rel: Option<Relation> = None;
    for e in members {
        let wa = var_word(side_body(&e.lhs), x, ctx);
        let wb = var_word(side_body(&e.rhs), x, ctx);
        let r = solve_monoid(&wa, &wb);
        if r.is_contradiction() {
            return Content::Bottom;
        }
        match &rel {
            None => rel = Some(r),
            Some(prev) if *prev == r => {}
            Some(_) => return Content::Bottom,
        }
    }
    match rel {
        None => Content::Empty,
        Some(r) => Content::Monoid(r),
    }
}

fn words_content(pairs: &BTreeSet<(Word, Word)>, anchor: Option<Term>) -> Content {
    let Some(base) = pairs
        .iter()
        .min_by_key(|(wa, wb)| (wa.balance(), wa.clone(), wb.clone()))
    else {
        return Content::Empty;
    };
    let mut rel = Relation::Trivial;
    for m in pairs {
        if m == base {
            continue;
        }
        let du = m.0.concat(&base.0.invert());
        let dv = m.1.concat(&base.1.invert());
        if du.balance() != dv.balance() {
            return Content::Bottom;
        }
        debug_assert!(du.non_negative() && dv.non_negative(), "base has minimal balance");
        rel = relation_and_pair(&rel, &du, &dv);
        if rel.is_contradiction() {
            return Content::Bottom;
        }
    }
    Content::Words {
        base: base.clone(),
        rel,
        anchor,
    }
}

/// Word pairs of large-format members, with the shared anchor. `None` when
/// two members disagree on the anchor, which is unsatisfiable.
fn large_pairs(
    members: &BTreeSet<Equality>,
    ground_on_left: bool,
    x: &Sym,
    ctx: &ApproxCtx,
) -> Option<(BTreeSet<(Word, Word)>, Term)> {
    let mut anchor: Option<Term> = None;
    let mut pairs = BTreeSet::new();
    for e in members {
        let (gbody, vbody) = if ground_on_left {
            (side_body(&e.lhs), side_body(&e.rhs))
        } else {
            (side_body(&e.rhs), side_body(&e.lhs))
        };
        let f = factorize(gbody, &ctx.universe).expect("member classified as large");
        match &anchor {
            None => anchor = Some(f.tail.clone()),
            Some(a) if *a == f.tail => {}
            Some(_) => return None,
        }
        let wg = template_word(&f.prefix, ctx);
        let wv = var_word(vbody, x, ctx);
        let pair = if ground_on_left { (wg, wv) } else { (wv, wg) };
        pairs.insert(pair);
    }
    Some((pairs, anchor.expect("members are non-empty")))
}

fn bucket_content(key: &FormatKey, members: &BTreeSet<Equality>, ctx: &ApproxCtx) -> Content {
    if members.is_empty() {
        return Content::Empty;
    }
    match key {
        FormatKey::Ac(_) => unreachable!("constant equalities use the shared bucket"),
        FormatKey::GroundAb => ground_content(members),
        FormatKey::SmallLeft(..) | FormatKey::SmallRight(..) => {
            // A second distinct member would force the variable onto the
            // unifier of two prefix templates, a value expressible over the
            // ground subterms and hence never large.
            if members.len() == 1 {
                Content::Single(members.first().unwrap().clone())
            } else {
                Content::Bottom
            }
        }
        FormatKey::SameVar(x) => monoid_content(members, x, ctx),
        FormatKey::TwoVar(x, y) => {
            let pairs: BTreeSet<(Word, Word)> = members
                .iter()
                .map(|e| {
                    (
                        var_word(side_body(&e.lhs), x, ctx),
                        var_word(side_body(&e.rhs), y, ctx),
                    )
                })
                .collect();
            words_content(&pairs, None)
        }
        FormatKey::LargeLeft(x) => match large_pairs(members, true, x, ctx) {
            None => Content::Bottom,
            Some((pairs, anchor)) => words_content(&pairs, Some(anchor)),
        },
        FormatKey::LargeRight(x) => match large_pairs(members, false, x, ctx) {
            None => Content::Bottom,
            Some((pairs, anchor)) => words_content(&pairs, Some(anchor)),
        },
    }
}

/// Format buckets for one conjunction under one small substitution. All
/// constant equalities share a single bucket because merging two bodies of
/// one variable spills a ground representative.
struct Buckets<'a> {
    ctx: &'a ApproxCtx,
    ac: BTreeSet<Term>,
    map: BTreeMap<FormatKey, BTreeSet<Equality>>,
}

impl<'a> Buckets<'a> {
    /// Builds the buckets; `None` when some bucket is unsatisfiable, in
    /// which case the conjunction subsumes everything.
    fn build(c: &Conjunction, ctx: &'a ApproxCtx) -> Option<Buckets<'a>> {
        let Conjunction::Set(set) = c else {
            return None;
        };
        let mut b = Buckets {
            ctx,
            ac: BTreeSet::new(),
            map: BTreeMap::new(),
        };
        for e in set {
            match classify_format(e, ctx) {
                FormatKey::Ac(_) => {
                    b.ac.insert(side_body(&e.lhs).clone());
                }
                key => {
                    b.map.entry(key).or_default().insert(e.clone());
                }
            }
        }
        if b.any_bottom() {
            None
        } else {
            Some(b)
        }
    }

    fn any_bottom(&self) -> bool {
        if ac_content(&self.ac) == Content::Bottom {
            return true;
        }
        self.map
            .iter()
            .any(|(key, members)| bucket_content(key, members, self.ctx) == Content::Bottom)
    }

    /// Whether the buckets subsume `e`: adding it to its format's bucket
    /// must leave the canonical content unchanged. An empty bucket subsumes
    /// nothing.
    fn subsumes(&self, e: &Equality) -> bool {
        if e.is_trivial() {
            return true;
        }
        match classify_format(e, self.ctx) {
            FormatKey::Ac(_) => {
                let mut with = self.ac.clone();
                with.insert(side_body(&e.lhs).clone());
                ac_content(&with) == ac_content(&self.ac)
            }
            key => {
                let empty = BTreeSet::new();
                let members = self.map.get(&key).unwrap_or(&empty);
                let mut with = members.clone();
                with.insert(e.clone());
                bucket_content(&key, &with, self.ctx) == bucket_content(&key, members, self.ctx)
            }
        }
    }
}

/// All small substitutions over `vars`: each variable maps to itself (absent
/// from the map) or to one of the small terms. For initialization-restricted
/// programs variables cannot hold small values, so only the identity applies.
fn small_substitutions(vars: &BTreeSet<Sym>, ctx: &ApproxCtx) -> Vec<BTreeMap<Sym, Term>> {
    if ctx.ir {
        return vec![BTreeMap::new()];
    }
    let smalls: Vec<&Term> = ctx.universe.s().iter().collect();
    let mut out = vec![BTreeMap::new()];
    for x in vars {
        let mut next = Vec::with_capacity(out.len() * (smalls.len() + 1));
        for m in &out {
            next.push(m.clone());
            for s in &smalls {
                let mut m2 = m.clone();
                m2.insert(x.clone(), (*s).clone());
                next.push(m2);
            }
        }
        out = next;
    }
    out
}

fn apply_sigma(c: &Conjunction, sigma: &BTreeMap<Sym, Term>) -> Conjunction {
    match c {
        Conjunction::Bottom => Conjunction::Bottom,
        Conjunction::Set(set) => set
            .iter()
            .map(|e| {
                sigma
                    .iter()
                    .fold(e.clone(), |acc, (x, s)| acc.subst_var(x, s))
            })
            .collect(),
    }
}

/// Approximate subsumption: for every small substitution over the occurring
/// variables, every member of the right conjunction must be subsumed by the
/// left conjunction's format buckets. A Bottom left side subsumes anything;
/// a Bottom right side requires the left to be unsatisfiable everywhere.
pub fn approx_subsumes(e: &Conjunction, e2: &Conjunction, ctx: &ApproxCtx) -> bool {
    if e.is_bottom() {
        return true;
    }
    let mut vars = e.vars();
    vars.extend(e2.vars());
    for sigma in small_substitutions(&vars, ctx) {
        let se = apply_sigma(e, &sigma);
        let Some(buckets) = Buckets::build(&se, ctx) else {
            continue;
        };
        match apply_sigma(e2, &sigma) {
            Conjunction::Bottom => return false,
            Conjunction::Set(members) => {
                if !members.iter().all(|m| buckets.subsumes(m)) {
                    return false;
                }
            }
        }
    }
    true
}

/// Reduces a conjunction to an irredundant subset that still approximately
/// subsumes the whole, turning it into `Bottom` when no substitution class
/// admits a valuation.
pub fn compact(c: &Conjunction, ctx: &ApproxCtx) -> Conjunction {
    let Conjunction::Set(set) = c else {
        return Conjunction::Bottom;
    };
    if set.is_empty() {
        return c.clone();
    }
    let unsat = small_substitutions(&c.vars(), ctx)
        .iter()
        .all(|sigma| Buckets::build(&apply_sigma(c, sigma), ctx).is_none());
    if unsat {
        return Conjunction::Bottom;
    }
    let mut kept: Vec<Equality> = Vec::new();
    for e in set {
        let so_far: Conjunction = kept.iter().cloned().collect();
        let single: Conjunction = [e.clone()].into_iter().collect();
        if !approx_subsumes(&so_far, &single, ctx) {
            kept.push(e.clone());
        }
    }
    // Early keeps can become redundant once later members are in; prune to a
    // fixpoint.
    loop {
        let mut changed = false;
        let mut i = kept.len();
        while i > 0 {
            i -= 1;
            let without: Conjunction = kept
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, e)| e.clone())
                .collect();
            let single: Conjunction = [kept[i].clone()].into_iter().collect();
            if approx_subsumes(&without, &single, ctx) {
                kept.remove(i);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    kept.into_iter().collect()
}

/// Renders the identity-substitution buckets of a conjunction, one line per
/// format, for diagnostic output.
pub fn bucket_report(c: &Conjunction, ctx: &ApproxCtx) -> Vec<String> {
    let mut out = Vec::new();
    match Buckets::build(c, ctx) {
        None => out.push("unsatisfiable".to_string()),
        Some(b) => {
            if !b.ac.is_empty() {
                out.push(format!("constant: {:?}", ac_content(&b.ac)));
            }
            for (key, members) in &b.map {
                out.push(format!(
                    "{key}: {:?}",
                    bucket_content(key, members, ctx)
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::parse_term;

    fn t(src: &str) -> Term {
        let vars: BTreeSet<Sym> = ["x", "y", "z"].iter().map(|v| Sym::new(v)).collect();
        parse_term(src, &vars).unwrap()
    }

    fn ctx_with(g: &[&str], s: &[&str]) -> ApproxCtx {
        let g: BTreeSet<Term> = g.iter().map(|x| t(x)).collect();
        let s: BTreeSet<Term> = s.iter().map(|x| t(x)).collect();
        let universe = TermUniverse::new(g, s);
        let vars = ["x", "y", "z"].iter().map(|v| Sym::new(v)).collect();
        ApproxCtx::new(universe, vars, false)
    }

    fn conj(eqs: &[Equality]) -> Conjunction {
        eqs.iter().cloned().collect()
    }

    fn pair(a: &str, b: &str) -> Equality {
        Equality::pair(t(a), t(b))
    }

    #[test]
    fn classification_examples() {
        let ctx = ctx_with(&[], &[]);
        assert_eq!(
            classify_format(&pair("x", "f(y,y)"), &ctx),
            FormatKey::TwoVar(Sym::new("x"), Sym::new("y"))
        );
        assert_eq!(classify_format(&pair("a", "a"), &ctx), FormatKey::GroundAb);
        let ctx = ctx_with(&["a"], &["a"]);
        assert_eq!(
            classify_format(&pair("a", "f(y,a,y)"), &ctx),
            FormatKey::SmallLeft(t("a"), Sym::new("y"))
        );
        assert_eq!(
            classify_format(&pair("f(a,a)", "f(y,y)"), &ctx),
            FormatKey::LargeLeft(Sym::new("y"))
        );
        assert_eq!(
            classify_format(&Equality::constant(t("g(x)")), &ctx),
            FormatKey::Ac(Some(Sym::new("x")))
        );
    }

    #[test]
    #[should_panic(expected = "pipeline invariant")]
    fn classification_rejects_foreign_ground_subterms_in_prefixes() {
        let ctx = ctx_with(&[], &[]);
        // The prefix f(•,b) has the ground subterm b outside G.
        classify_format(&pair("f(x,b)", "y"), &ctx);
    }

    #[test]
    fn iterate_bucket_subsumes_third_power() {
        // Members A x == B y and A f(x,x) == B f(y,y); with no small terms
        // the identity substitution is the only one, and the third iterate
        // follows from the conjugation relation.
        let ctx = ctx_with(&[], &[]);
        let e = conj(&[pair("x", "y"), pair("f(x,x)", "f(y,y)")]);
        let e3 = conj(&[pair("f(f(x,x),f(x,x))", "f(f(y,y),f(y,y))")]);
        assert!(approx_subsumes(&e, &e3, &ctx));
    }

    #[test]
    fn small_substitution_blocks_early_subsumption() {
        // With S = {a}, the substitution x := a sends the second member to a
        // large-left bucket whose single member cannot imply the third
        // iterate; only the full three-member set subsumes the fourth.
        let ctx = ctx_with(&[], &["a"]);
        let e12 = conj(&[pair("x", "y"), pair("f(x,x)", "f(y,y)")]);
        let e3 = conj(&[pair("f(f(x,x),f(x,x))", "f(f(y,y),f(y,y))")]);
        assert!(!approx_subsumes(&e12, &e3, &ctx));
        let e123 = e12.and(&e3);
        let e4 = conj(&[pair(
            "f(f(f(x,x),f(x,x)),f(f(x,x),f(x,x)))",
            "f(f(f(y,y),f(y,y)),f(f(y,y),f(y,y)))",
        )]);
        assert!(approx_subsumes(&e123, &e4, &ctx));
    }

    #[test]
    fn subsumption_is_reflexive() {
        let ctx = ctx_with(&[], &["a"]);
        for e in [
            Conjunction::top(),
            conj(&[pair("x", "y")]),
            conj(&[pair("f(x,x)", "y"), Equality::constant(t("x"))]),
            Conjunction::Bottom,
        ] {
            assert!(approx_subsumes(&e, &e, &ctx), "not reflexive on {e}");
        }
    }

    #[test]
    fn deeper_prefix_is_not_implied() {
        let ctx = ctx_with(&[], &[]);
        let e = conj(&[pair("x", "y")]);
        let e2 = conj(&[pair("g(x)", "g(y)")]);
        assert!(!approx_subsumes(&e, &e2, &ctx));
    }

    #[test]
    fn small_bucket_second_member_is_unsatisfiable() {
        let ctx = ctx_with(&[], &["a"]);
        let e = conj(&[pair("a", "g(y)"), pair("a", "h(y)")]);
        assert_eq!(compact(&e, &ctx), Conjunction::Bottom);
    }

    #[test]
    fn ground_bucket_pins_and_validates() {
        let ctx = ctx_with(&[], &[]);
        let e = conj(&[pair("f(a,g(b),g(b))", "g(b)"), pair("f(a,g(c),g(b))", "g(c)")]);
        // (A,B) = (•, f(a,•,g(b))) maps b to f(a,b,g(b)).
        let consistent = conj(&[pair("f(a,b,g(b))", "b")]);
        assert!(approx_subsumes(&e, &consistent, &ctx));
        let inconsistent = conj(&[pair("f(b,b,b)", "b")]);
        assert!(!approx_subsumes(&e, &inconsistent, &ctx));
    }

    #[test]
    fn constant_loop_body_is_unsatisfiable() {
        let ctx = ctx_with(&[], &["a"]);
        let e = conj(&[Equality::constant(t("x")), Equality::constant(t("f(x,x)"))]);
        assert_eq!(compact(&e, &ctx), Conjunction::Bottom);
    }

    #[test]
    fn constant_bodies_pin_the_variable() {
        let ctx = ctx_with(&["a"], &["a"]);
        let e = conj(&[
            Equality::constant(t("f(x,a)")),
            Equality::constant(t("f(a,x)")),
        ]);
        // Both bodies agree only at x = a, so A f(a,a) == C follows.
        let implied = conj(&[Equality::constant(t("f(a,a)"))]);
        assert!(approx_subsumes(&e, &implied, &ctx));
        let not_implied = conj(&[Equality::constant(t("g(x)"))]);
        assert!(!approx_subsumes(&e, &not_implied, &ctx));
    }

    #[test]
    fn same_var_members_cancel_to_one_relation() {
        let ctx = ctx_with(&[], &[]);
        let e = conj(&[pair("f(x,x)", "x")]);
        let implied = conj(&[pair("f(f(x,x),f(x,x))", "f(x,x)")]);
        assert!(approx_subsumes(&e, &implied, &ctx));
        let flipped = conj(&[pair("x", "f(x,x)")]);
        assert!(!approx_subsumes(&e, &flipped, &ctx));
    }

    #[test]
    fn compact_keeps_an_irredundant_core() {
        let ctx = ctx_with(&[], &[]);
        // With no small terms the third member follows from the first two.
        let e = conj(&[
            pair("x", "y"),
            pair("f(x,x)", "f(y,y)"),
            pair("f(f(x,x),f(x,x))", "f(f(y,y),f(y,y))"),
        ]);
        let out = compact(&e, &ctx);
        assert_eq!(out.len(), 2);
        assert!(approx_subsumes(&out, &e, &ctx));
    }

    #[test]
    fn compact_respects_small_substitutions() {
        // Same members, but with S = {a} the large-left bucket under x := a
        // needs the third member, so nothing may be dropped.
        let ctx = ctx_with(&[], &["a"]);
        let e = conj(&[
            pair("x", "y"),
            pair("f(x,x)", "f(y,y)"),
            pair("f(f(x,x),f(x,x))", "f(f(y,y),f(y,y))"),
        ]);
        let out = compact(&e, &ctx);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn initialization_restricted_mode_skips_substitutions() {
        // An IR program also has small terms (its initializers), but its
        // variables never evaluate to them, so the enumeration is skipped and
        // the iterate chain compacts as under the identity alone.
        let g: BTreeSet<Term> = BTreeSet::new();
        let s: BTreeSet<Term> = [t("a")].into_iter().collect();
        let vars: BTreeSet<Sym> = ["x", "y", "z"].iter().map(|v| Sym::new(v)).collect();
        let ctx = ApproxCtx::new(TermUniverse::new(g, s), vars, true);
        let e = conj(&[
            pair("x", "y"),
            pair("f(x,x)", "f(y,y)"),
            pair("f(f(x,x),f(x,x))", "f(f(y,y),f(y,y))"),
        ]);
        let out = compact(&e, &ctx);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn compact_singleton_is_identity() {
        let ctx = ctx_with(&[], &["a"]);
        let e = conj(&[pair("x", "y")]);
        assert_eq!(compact(&e, &ctx), e);
        assert_eq!(compact(&Conjunction::top(), &ctx), Conjunction::top());
        assert_eq!(compact(&Conjunction::Bottom, &ctx), Conjunction::Bottom);
    }

    #[test]
    fn bucket_content_ignores_insertion_order() {
        let ctx = ctx_with(&[], &["a"]);
        let members = [
            pair("x", "y"),
            pair("f(x,x)", "f(y,y)"),
            pair("g(x)", "g(y)"),
        ];
        let forward: Conjunction = members.iter().cloned().collect();
        let backward: Conjunction = members.iter().rev().cloned().collect();
        assert_eq!(compact(&forward, &ctx), compact(&backward, &ctx));
        let probe = conj(&[pair("f(g(x),g(x))", "f(g(y),g(y))")]);
        assert_eq!(
            approx_subsumes(&forward, &probe, &ctx),
            approx_subsumes(&backward, &probe, &ctx)
        );
    }
}
