//! Ground terms, templates and the basic operations on them.
//!
//! A [`Term`] is built from ranked operators, program variables and the
//! distinguished marker `•` (written `_` in the textual syntax and rendered
//! as `_` throughout). A [`Template`] is a term that contains at least one
//! marker and no program variables; templates form a monoid under
//! substitution into the marker, with the bare marker as neutral element.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

/// An interned operator or variable name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sym(Arc<str>);

impl Sym {
    pub fn new(name: &str) -> Sym {
        Sym(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for Sym {
    fn from(s: &str) -> Sym {
        Sym::new(s)
    }
}

/// Maps every operator to its rank. Ranks are fixed at first use.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Signature {
    symbols: BTreeMap<Sym, usize>,
}

impl Signature {
    pub fn new() -> Signature {
        Signature::default()
    }

    /// Records `sym` with the given rank. Returns the previously known rank
    /// on a conflict.
    pub fn declare(&mut self, sym: Sym, rank: usize) -> Result<(), usize> {
        match self.symbols.get(&sym) {
            Some(&r) if r != rank => Err(r),
            Some(_) => Ok(()),
            None => {
                self.symbols.insert(sym, rank);
                Ok(())
            }
        }
    }

    pub fn rank(&self, sym: &Sym) -> Option<usize> {
        self.symbols.get(sym).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sym, usize)> {
        self.symbols.iter().map(|(s, &r)| (s, r))
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// A position in a term: the sequence of child indices from the root.
pub type Path = Vec<usize>;

/// A term over ranked operators, program variables and the marker.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    /// Operator application; rank-0 operators have an empty argument list.
    App(Sym, Vec<Term>),
    /// A program variable.
    Var(Sym),
    /// The marker `•`.
    Hole,
}

impl Term {
    pub fn app(sym: impl Into<Sym>, args: Vec<Term>) -> Term {
        Term::App(sym.into(), args)
    }

    pub fn atom(sym: impl Into<Sym>) -> Term {
        Term::App(sym.into(), Vec::new())
    }

    pub fn var(name: impl Into<Sym>) -> Term {
        Term::Var(name.into())
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self {
            Term::App(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
            Term::Var(_) | Term::Hole => 1,
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::App(_, args) => args.iter().all(Term::is_ground),
            Term::Var(_) | Term::Hole => false,
        }
    }

    pub fn hole_count(&self) -> usize {
        match self {
            Term::App(_, args) => args.iter().map(Term::hole_count).sum(),
            Term::Var(_) => 0,
            Term::Hole => 1,
        }
    }

    /// The set of variable names occurring in the term.
    pub fn vars(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Sym>) {
        match self {
            Term::App(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Hole => {}
        }
    }

    pub fn mentions_var(&self, x: &Sym) -> bool {
        match self {
            Term::App(_, args) => args.iter().any(|a| a.mentions_var(x)),
            Term::Var(v) => v == x,
            Term::Hole => false,
        }
    }

    /// Orders first by size, then structurally. This is the order used when
    /// a "least" subterm has to be selected.
    pub fn cmp_by_size(&self, other: &Term) -> Ordering {
        self.size()
            .cmp(&other.size())
            .then_with(|| self.cmp(other))
    }

    /// All subterms, each reported once.
    pub fn subterms(&self) -> BTreeSet<Term> {
        let mut out = BTreeSet::new();
        self.collect_subterms(&mut out);
        out
    }

    fn collect_subterms(&self, out: &mut BTreeSet<Term>) {
        out.insert(self.clone());
        if let Term::App(_, args) = self {
            args.iter().for_each(|a| a.collect_subterms(out));
        }
    }

    pub fn subterm_at(&self, path: &[usize]) -> Option<&Term> {
        let mut cur = self;
        for &i in path {
            match cur {
                Term::App(_, args) => cur = args.get(i)?,
                _ => return None,
            }
        }
        Some(cur)
    }

    /// All positions at which `sub` occurs, in pre-order. Occurrences of one
    /// and the same term are pairwise disjoint because a term cannot be a
    /// proper subterm of itself.
    pub fn occurrences(&self, sub: &Term) -> Vec<Path> {
        let mut out = Vec::new();
        self.collect_occurrences(sub, &mut Vec::new(), &mut out);
        out
    }

    fn collect_occurrences(&self, sub: &Term, here: &mut Path, out: &mut Vec<Path>) {
        if self == sub {
            out.push(here.clone());
            return;
        }
        if let Term::App(_, args) = self {
            for (i, a) in args.iter().enumerate() {
                here.push(i);
                a.collect_occurrences(sub, here, out);
                here.pop();
            }
        }
    }

    /// Positions of all markers, in pre-order.
    pub fn hole_paths(&self) -> Vec<Path> {
        let mut out = Vec::new();
        self.collect_hole_paths(&mut Vec::new(), &mut out);
        out
    }

    fn collect_hole_paths(&self, here: &mut Path, out: &mut Vec<Path>) {
        match self {
            Term::Hole => out.push(here.clone()),
            Term::App(_, args) => {
                for (i, a) in args.iter().enumerate() {
                    here.push(i);
                    a.collect_hole_paths(here, out);
                    here.pop();
                }
            }
            Term::Var(_) => {}
        }
    }

    /// Replaces the subterms at the given pairwise disjoint positions by the
    /// marker.
    pub fn punch(&self, paths: &[Path]) -> Term {
        let mut t = self.clone();
        for p in paths {
            t = t.replace_at(p, &Term::Hole);
        }
        t
    }

    fn replace_at(&self, path: &[usize], with: &Term) -> Term {
        match path.split_first() {
            None => with.clone(),
            Some((&i, rest)) => match self {
                Term::App(f, args) => {
                    let mut args = args.clone();
                    args[i] = args[i].replace_at(rest, with);
                    Term::App(f.clone(), args)
                }
                _ => panic!("replace_at: path leads through a leaf"),
            },
        }
    }

    /// Substitutes `t` for every marker.
    pub fn subst_hole(&self, t: &Term) -> Term {
        match self {
            Term::Hole => t.clone(),
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|a| a.subst_hole(t)).collect())
            }
            Term::Var(v) => Term::Var(v.clone()),
        }
    }

    /// Substitutes `s` for every occurrence of the variable `x`.
    pub fn subst_var(&self, x: &Sym, s: &Term) -> Term {
        match self {
            Term::Var(v) if v == x => s.clone(),
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|a| a.subst_var(x, s)).collect())
            }
            _ => self.clone(),
        }
    }

    /// Replaces every occurrence of the variable `x` by the marker.
    pub fn var_to_hole(&self, x: &Sym) -> Term {
        match self {
            Term::Var(v) if v == x => Term::Hole,
            Term::App(f, args) => Term::App(
                f.clone(),
                args.iter().map(|a| a.var_to_hole(x)).collect(),
            ),
            _ => self.clone(),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::App(g, args) if args.is_empty() => write!(f, "{g}"),
            Term::App(g, args) => {
                write!(f, "{g}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Term::Var(v) => write!(f, "{v}"),
            Term::Hole => write!(f, "_"),
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// A term with at least one marker and no program variables.
///
/// Templates compose by plugging the right factor into every marker of the
/// left one; `u.compose(v).apply(t) == u.apply(v.apply(t))`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Template(Term);

impl Template {
    /// Wraps `t`, checking the template invariant.
    pub fn new(t: Term) -> Option<Template> {
        if t.hole_count() >= 1 && t.vars().is_empty() {
            Some(Template(t))
        } else {
            None
        }
    }

    /// The neutral element `•`.
    pub fn hole() -> Template {
        Template(Term::Hole)
    }

    pub fn is_hole(&self) -> bool {
        self.0 == Term::Hole
    }

    pub fn as_term(&self) -> &Term {
        &self.0
    }

    pub fn into_term(self) -> Term {
        self.0
    }

    /// Substitutes `t` into every marker.
    pub fn apply(&self, t: &Term) -> Term {
        self.0.subst_hole(t)
    }

    /// Monoid composition: `self` · `other`.
    pub fn compose(&self, other: &Template) -> Template {
        Template(self.0.subst_hole(&other.0))
    }

    pub fn size(&self) -> usize {
        self.0.size()
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Result of dividing one ground term by another: the quotient template `r`
/// with `r · t == s`, if any.
///
/// Divisibility of ground terms is decided by occurrence replacement, see
/// [`replacements`].
pub fn divide(s: &Term, t: &Term) -> Option<Template> {
    let occ = s.occurrences(t);
    if occ.is_empty() {
        return None;
    }
    // Any non-empty occurrence subset yields a divisor; the canonical
    // quotient replaces all occurrences.
    let r = s.punch(&occ);
    debug_assert_eq!(r.subst_hole(t), *s);
    Template::new(r)
}

/// All templates `r` with `r · t == s`: one for every non-empty subset of
/// the occurrences of `t` in `s`. For `k` occurrences there are `2^k - 1`.
pub fn replacements(s: &Term, t: &Term) -> BTreeSet<Template> {
    let occ = s.occurrences(t);
    let mut out = BTreeSet::new();
    if occ.is_empty() || occ.len() > 20 {
        assert!(
            occ.len() <= 20,
            "replacements: too many occurrences ({})",
            occ.len()
        );
        return out;
    }
    for mask in 1u32..(1 << occ.len()) {
        let chosen: Vec<Path> = occ
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, p)| p.clone())
            .collect();
        let r = s.punch(&chosen);
        out.insert(Template::new(r).expect("punching occurrences yields a template"));
    }
    out
}

/// Outcome of solving `u == v` for the single marker kind the two patterns
/// share.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MarkerSolution {
    /// The patterns agree for every ground value.
    AllValues,
    /// Exactly one ground value makes them equal.
    Exactly(Term),
    /// No ground value makes them equal.
    NoSolution,
}

/// Solves `u == v` where each side contains at most one distinct marker
/// (a shared variable or the hole), by simultaneous descent.
pub fn solve_for_marker(u: &Term, v: &Term, marker: &Term) -> MarkerSolution {
    let mut binding: Option<Term> = None;
    if descend(u, v, marker, &mut binding) {
        match binding {
            None => MarkerSolution::AllValues,
            Some(g) => MarkerSolution::Exactly(g),
        }
    } else {
        MarkerSolution::NoSolution
    }
}

fn mentions_marker(t: &Term, marker: &Term) -> bool {
    if t == marker {
        return true;
    }
    match t {
        Term::App(_, args) => args.iter().any(|a| mentions_marker(a, marker)),
        _ => false,
    }
}

fn descend(u: &Term, v: &Term, marker: &Term, binding: &mut Option<Term>) -> bool {
    match (u == marker, v == marker) {
        (true, true) => true,
        (true, false) => bind(v, marker, binding),
        (false, true) => bind(u, marker, binding),
        (false, false) => match (u, v) {
            (Term::App(f, us), Term::App(g, vs)) if f == g && us.len() == vs.len() => us
                .iter()
                .zip(vs)
                .all(|(a, b)| descend(a, b, marker, binding)),
            _ => u == v,
        },
    }
}

fn bind(t: &Term, marker: &Term, binding: &mut Option<Term>) -> bool {
    if mentions_marker(t, marker) {
        // The marker would have to solve x == t[x] with t larger than x.
        return false;
    }
    match binding {
        Some(prev) => prev == t,
        None => {
            *binding = Some(t.clone());
            true
        }
    }
}

/// Errors raised by [`parse_term`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermParseError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for TermParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at offset {})", self.message, self.offset)
    }
}

impl std::error::Error for TermParseError {}

/// Parses the textual term syntax: `ident`, `ident(t1,...,tk)` and `_` for
/// the marker. Identifiers contained in `vars` parse as program variables,
/// all others as operators.
pub fn parse_term(src: &str, vars: &BTreeSet<Sym>) -> Result<Term, TermParseError> {
    let mut p = TermParser {
        src: src.as_bytes(),
        pos: 0,
        vars,
    };
    p.skip_ws();
    let t = p.term()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("trailing input after term"));
    }
    Ok(t)
}

struct TermParser<'a> {
    src: &'a [u8],
    pos: usize,
    vars: &'a BTreeSet<Sym>,
}

impl<'a> TermParser<'a> {
    fn error(&self, message: &str) -> TermParseError {
        TermParseError {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn ident(&mut self) -> Result<String, TermParseError> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_' || c == b'\'')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.error("expected an identifier"));
        }
        Ok(String::from_utf8(self.src[start..self.pos].to_vec()).unwrap())
    }

    fn term(&mut self) -> Result<Term, TermParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("expected a term")),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let name = self.ident()?;
                if name == "_" {
                    return Ok(Term::Hole);
                }
                let sym = Sym::new(&name);
                self.skip_ws();
                if self.peek() == Some(b'(') {
                    if self.vars.contains(&sym) {
                        return Err(self.error("variable applied as an operator"));
                    }
                    self.pos += 1;
                    let mut args = Vec::new();
                    loop {
                        args.push(self.term()?);
                        self.skip_ws();
                        match self.peek() {
                            Some(b',') => self.pos += 1,
                            Some(b')') => {
                                self.pos += 1;
                                break;
                            }
                            _ => return Err(self.error("expected ',' or ')'")),
                        }
                    }
                    Ok(Term::App(sym, args))
                } else if self.vars.contains(&sym) {
                    Ok(Term::Var(sym))
                } else {
                    Ok(Term::App(sym, Vec::new()))
                }
            }
            Some(_) => Err(self.error("expected a term")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(src: &str) -> Term {
        let vars: BTreeSet<Sym> = ["x", "y", "z"].iter().map(|v| Sym::new(v)).collect();
        parse_term(src, &vars).unwrap()
    }

    fn tpl(src: &str) -> Template {
        Template::new(t(src)).unwrap()
    }

    #[test]
    fn parse_and_display_round_trip() {
        for src in ["a", "f(a,b)", "f(g(x),_)", "h(h(h(a)))", "x"] {
            assert_eq!(t(src).to_string(), src);
        }
    }

    #[test]
    fn parse_rejects_malformed_input() {
        let vars = BTreeSet::new();
        assert!(parse_term("f(", &vars).is_err());
        assert!(parse_term("f(a,,b)", &vars).is_err());
        assert!(parse_term("f(a) b", &vars).is_err());
        assert!(parse_term("", &vars).is_err());
    }

    #[test]
    fn parse_rejects_applied_variable() {
        let vars: BTreeSet<Sym> = [Sym::new("x")].into_iter().collect();
        assert!(parse_term("x(a)", &vars).is_err());
    }

    #[test]
    fn template_invariant() {
        assert!(Template::new(t("f(_,a)")).is_some());
        assert!(Template::new(t("f(a,a)")).is_none());
        assert!(Template::new(t("f(_,x)")).is_none());
    }

    #[test]
    fn compose_is_substitution_into_markers() {
        let u = tpl("f(_,g(_))");
        let v = tpl("h(_)");
        assert_eq!(u.compose(&v).to_string(), "f(h(_),g(h(_)))");
        assert_eq!(
            u.compose(&v).apply(&t("a")),
            u.apply(&v.apply(&t("a")))
        );
    }

    #[test]
    fn hole_is_neutral() {
        let u = tpl("f(_,a)");
        assert_eq!(Template::hole().compose(&u), u);
        assert_eq!(u.compose(&Template::hole()), u);
    }

    #[test]
    fn divide_finds_quotient() {
        let s = t("f(g(a),g(a))");
        let q = divide(&s, &t("g(a)")).unwrap();
        assert_eq!(q.to_string(), "f(_,_)");
        assert_eq!(q.apply(&t("g(a)")), s);
        assert!(divide(&s, &t("b")).is_none());
    }

    #[test]
    fn replacements_counts_occurrence_subsets() {
        // g(b) occurs twice: 2^2 - 1 = 3 replacements.
        let s = t("f(a,g(b),g(b))");
        let rs = replacements(&s, &t("g(b)"));
        assert_eq!(rs.len(), 3);
        let shown: BTreeSet<String> = rs.iter().map(|r| r.to_string()).collect();
        assert!(shown.contains("f(a,_,_)"));
        assert!(shown.contains("f(a,_,g(b))"));
        assert!(shown.contains("f(a,g(b),_)"));
    }

    #[test]
    fn replacements_empty_when_no_occurrence() {
        assert!(replacements(&t("f(a,b)"), &t("c")).is_empty());
    }

    #[test]
    fn solve_for_marker_cases() {
        let x = Term::var("x");
        // f(x,a) == f(a,x) forces x = a.
        assert_eq!(
            solve_for_marker(&t("f(x,a)"), &t("f(a,x)"), &x),
            MarkerSolution::Exactly(t("a"))
        );
        // f(x,a) == f(b,x) needs x = b and x = a at once.
        assert_eq!(
            solve_for_marker(&t("f(x,a)"), &t("f(b,x)"), &x),
            MarkerSolution::NoSolution
        );
        // Identical patterns hold everywhere.
        assert_eq!(
            solve_for_marker(&t("f(x,x)"), &t("f(x,x)"), &x),
            MarkerSolution::AllValues
        );
        // x == f(x,x) has no finite solution.
        assert_eq!(
            solve_for_marker(&x, &t("f(x,x)"), &x),
            MarkerSolution::NoSolution
        );
        // Mismatching operators never agree.
        assert_eq!(
            solve_for_marker(&t("g(x)"), &t("f(x,x)"), &x),
            MarkerSolution::NoSolution
        );
    }

    #[test]
    fn occurrences_are_disjoint_preorder() {
        let s = t("f(g(a),f(g(a),g(a)))");
        let occ = s.occurrences(&t("g(a)"));
        assert_eq!(occ, vec![vec![0], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn size_order_breaks_ties_structurally() {
        let a = t("f(a,b)");
        let b = t("f(b,a)");
        assert_eq!(a.size(), b.size());
        assert_ne!(a.cmp_by_size(&b), Ordering::Equal);
    }
}
