//! Desk-scale ground truth: bounded concrete execution of programs,
//! invariant checking against the collected states, and brute-force solvers
//! that the algebraic solvers are tested against.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::eq::{SolutionPair, SystemSolutions};
use crate::program::{Program, Stmt};
use crate::term::{replacements, Sym, Template, Term};
use crate::words::{Letter, Word};

/// A variable assignment; absent variables are still uninitialized and hold
/// an arbitrary value fixed at the start of the run.
pub type State = BTreeMap<Sym, Term>;

/// Execution bounds and the value pool for arbitrary choices.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Maximum number of pending returns.
    pub max_call_depth: usize,
    /// Total budget of transitions across the whole enumeration.
    pub max_steps: usize,
    /// Values non-deterministic choices range over.
    pub havoc_pool: BTreeSet<Term>,
}

impl RunConfig {
    /// Bounds with the default pool: the program's small terms plus one
    /// fresh atom, so arbitrary values can both collide with and escape
    /// program terms.
    pub fn for_program(prog: &Program, max_call_depth: usize, max_steps: usize) -> RunConfig {
        let sets = prog.derive_sets();
        let mut pool: BTreeSet<Term> = sets.r.union(&sets.g).cloned().collect();
        let fresh = (0..)
            .map(|i| Sym::new(&format!("c{i}")))
            .find(|s| prog.signature.rank(s).is_none() && !prog.vars.contains(s))
            .unwrap();
        pool.insert(Term::atom(fresh));
        RunConfig {
            max_call_depth,
            max_steps,
            havoc_pool: pool,
        }
    }
}

/// The states observed at each point, with a flag for runs cut short by the
/// depth or step bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateMap {
    pub at: BTreeMap<Sym, BTreeSet<State>>,
    pub truncated: bool,
}

/// All ways to fix the still-uninitialized variables of `needed` from the
/// pool. Variables the state already binds are left alone.
fn materializations(needed: &BTreeSet<Sym>, state: &State, pool: &BTreeSet<Term>) -> Vec<State> {
    let mut out = vec![state.clone()];
    for v in needed {
        if state.contains_key(v) {
            continue;
        }
        assert!(!pool.is_empty(), "empty pool with uninitialized variable {v}");
        out = out
            .into_iter()
            .flat_map(|st| {
                pool.iter().map(move |t| {
                    let mut next = st.clone();
                    next.insert(v.clone(), t.clone());
                    next
                })
            })
            .collect();
    }
    out
}

fn eval(t: &Term, state: &State) -> Term {
    let mut cur = t.clone();
    for v in t.vars() {
        cur = cur.subst_var(&v, &state[&v]);
    }
    debug_assert!(cur.is_ground());
    cur
}

type Config = (Sym, Vec<Sym>, State);

/// States binding a term larger than this are dropped as a truncation.
/// A growing assignment on a cycle doubles its term every pass, which the
/// step budget alone would let reach astronomical sizes.
const MAX_STATE_TERM: usize = 1 << 12;

/// Exhaustively enumerates execution prefixes of a validated program within
/// the configured bounds and records every state observed at every point.
/// Reads of uninitialized variables branch over the pool, fixing the chosen
/// value in the state for the rest of the run.
pub fn enumerate_states(prog: &Program, cfg: &RunConfig) -> StateMap {
    debug_assert!(prog.validate().is_empty());
    let mut edges: BTreeMap<&Sym, Vec<(&Stmt, &Sym)>> = BTreeMap::new();
    let mut exits = BTreeSet::new();
    let mut at: BTreeMap<Sym, BTreeSet<State>> = BTreeMap::new();
    for p in &prog.procs {
        exits.insert(&p.exit);
        for n in &p.nodes {
            at.insert(n.clone(), BTreeSet::new());
        }
        for (u, stmt, v) in &p.edges {
            edges.entry(u).or_default().push((stmt, v));
        }
    }

    let start: Config = (prog.main().entry.clone(), Vec::new(), State::new());
    at.get_mut(&start.0).unwrap().insert(start.2.clone());
    let mut visited = BTreeSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    let mut budget = cfg.max_steps;
    let mut truncated = false;

    while let Some((point, stack, state)) = queue.pop_front() {
        let mut succs: Vec<Config> = Vec::new();
        if exits.contains(&point) {
            if let Some((ret, rest)) = stack.split_last() {
                succs.push((ret.clone(), rest.to_vec(), state.clone()));
            }
        }
        for (stmt, dst) in edges.get(&point).map_or(&[][..], |v| v) {
            match stmt {
                Stmt::Skip => succs.push(((*dst).clone(), stack.clone(), state.clone())),
                Stmt::Assign(x, t) => {
                    for st in materializations(&t.vars(), &state, &cfg.havoc_pool) {
                        let val = eval(t, &st);
                        let mut next = st;
                        next.insert(x.clone(), val);
                        succs.push(((*dst).clone(), stack.clone(), next));
                    }
                }
                Stmt::Havoc(x) => {
                    assert!(!cfg.havoc_pool.is_empty(), "empty pool with a havoc statement");
                    for t in &cfg.havoc_pool {
                        let mut next = state.clone();
                        next.insert(x.clone(), t.clone());
                        succs.push(((*dst).clone(), stack.clone(), next));
                    }
                }
                Stmt::Call(q) => {
                    if stack.len() >= cfg.max_call_depth {
                        truncated = true;
                        continue;
                    }
                    let entry = prog.proc(q).expect("validated program").entry.clone();
                    let mut pushed = stack.clone();
                    pushed.push((*dst).clone());
                    succs.push((entry, pushed, state.clone()));
                }
            }
        }
        for s in succs {
            if visited.contains(&s) {
                continue;
            }
            if s.2.values().any(|t| t.size() > MAX_STATE_TERM) {
                truncated = true;
                continue;
            }
            if budget == 0 {
                truncated = true;
                continue;
            }
            budget -= 1;
            at.get_mut(&s.0).unwrap().insert(s.2.clone());
            visited.insert(s.clone());
            queue.push_back(s);
        }
    }
    StateMap { at, truncated }
}

/// A checkable claim about the variables at one point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Invariant {
    Pair {
        r1: Template,
        x: Sym,
        r2: Template,
        y: Sym,
    },
    Constant { x: Sym, s: Term },
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |f: &mut fmt::Formatter<'_>, r: &Template, v: &Sym| {
            if r.is_hole() {
                write!(f, "{v}")
            } else {
                write!(f, "{r} {v}")
            }
        };
        match self {
            Invariant::Pair { r1, x, r2, y } => {
                side(f, r1, x)?;
                write!(f, " == ")?;
                side(f, r2, y)
            }
            Invariant::Constant { x, s } => write!(f, "{x} == {s}"),
        }
    }
}

/// Evaluates the invariant on every state, materializing uninitialized
/// variables over the pool. Returns the first refuting state, if any.
pub fn check_invariant(
    inv: &Invariant,
    states: &BTreeSet<State>,
    pool: &BTreeSet<Term>,
) -> Result<(), State> {
    let needed: BTreeSet<Sym> = match inv {
        Invariant::Pair { x, y, .. } => [x.clone(), y.clone()].into_iter().collect(),
        Invariant::Constant { x, .. } => [x.clone()].into_iter().collect(),
    };
    for st in states {
        for m in materializations(&needed, st, pool) {
            let holds = match inv {
                Invariant::Pair { r1, x, r2, y } => r1.apply(&m[x]) == r2.apply(&m[y]),
                Invariant::Constant { x, s } => m[x] == *s,
            };
            if !holds {
                return Err(m);
            }
        }
    }
    Ok(())
}

/// One reported invariant a concrete run falsified.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Refutation {
    pub point: Sym,
    pub invariant: Invariant,
    pub state: State,
}

impl fmt::Display for Refutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} refuted by", self.point, self.invariant)?;
        for (v, t) in &self.state {
            write!(f, " {v}={t}")?;
        }
        Ok(())
    }
}

/// The outcome of checking a whole analysis report against execution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SoundnessReport {
    pub refutations: Vec<Refutation>,
    pub truncated: bool,
    pub checked: usize,
}

impl SoundnessReport {
    pub fn pass(&self) -> bool {
        self.refutations.is_empty()
    }
}

/// Checks every invariant of the report at its point against all states the
/// bounded enumeration reaches. Any refutation is an implementation error of
/// the analysis, never of the program under analysis.
pub fn soundness_report(
    prog: &Program,
    report: &crate::wp::Report,
    cfg: &RunConfig,
) -> SoundnessReport {
    let run = enumerate_states(prog, cfg);
    let vars = prog.var_set();
    let parse = |src: &str| {
        crate::term::parse_term(src, &vars).expect("report terms parse back")
    };
    let template = |src: &str| Template::new(parse(src)).expect("report templates parse back");
    let empty = BTreeSet::new();
    let mut refutations = Vec::new();
    let mut checked = 0;
    for pt in &report.points {
        let point = Sym::new(&pt.point);
        let states = run.at.get(&point).unwrap_or(&empty);
        let mut invs = Vec::new();
        for c in &pt.constants {
            invs.push(Invariant::Constant {
                x: Sym::new(&c.var),
                s: parse(&c.term),
            });
        }
        for p in &pt.pairs {
            invs.push(Invariant::Pair {
                r1: template(&p.lhs_template),
                x: Sym::new(&p.lhs_var),
                r2: template(&p.rhs_template),
                y: Sym::new(&p.rhs_var),
            });
        }
        for inv in invs {
            checked += 1;
            if let Err(state) = check_invariant(&inv, states, &cfg.havoc_pool) {
                refutations.push(Refutation {
                    point: point.clone(),
                    invariant: inv,
                    state,
                });
            }
        }
    }
    SoundnessReport {
        refutations,
        truncated: run.truncated,
        checked,
    }
}

/// Brute-force ground system solver: candidates are all occurrence
/// replacements on both sides of each equality, and a candidate survives by
/// satisfying every conjunct under direct substitution.
pub fn brute_solve(eqs: &[(Term, Term)], size_bound: usize) -> SystemSolutions {
    for (s, t) in eqs {
        assert!(s.is_ground() && t.is_ground(), "brute_solve: ground systems only");
        assert!(
            s.size() <= size_bound && t.size() <= size_bound,
            "brute_solve: input exceeds the size bound"
        );
    }
    let sys: BTreeSet<(Term, Term)> = eqs.iter().cloned().collect();
    let mut candidates: BTreeSet<SolutionPair> = BTreeSet::new();
    for (s, t) in &sys {
        candidates.extend(replacements(s, t).into_iter().map(|m| (Template::hole(), m)));
        candidates.extend(replacements(t, s).into_iter().map(|m| (m, Template::hole())));
    }
    let good: BTreeSet<SolutionPair> = candidates
        .into_iter()
        .filter(|(a, b)| sys.iter().all(|(s, t)| a.apply(s) == b.apply(t)))
        .collect();
    if sys.len() >= 2 && good.is_empty() {
        SystemSolutions::Unsat
    } else {
        SystemSolutions::Pairs(good)
    }
}

/// All positive words over the alphabet up to the length bound.
pub fn positive_words(alphabet: &[Letter], len_bound: usize) -> Vec<Word> {
    let mut out = vec![Word::empty()];
    let mut frontier = vec![Word::empty()];
    for _ in 0..len_bound {
        let mut next = Vec::new();
        for w in &frontier {
            for &l in alphabet {
                let grown = w.concat(&Word::positive([l]));
                next.push(grown.clone());
                out.push(grown);
            }
        }
        frontier = next;
    }
    out
}

/// Brute-force word equation solver: all positive pairs `(A, B)` up to the
/// length bound satisfying both conjugation equations, by direct evaluation
/// in the free group.
pub fn brute_words(
    p: (&Word, &Word),
    q: (&Word, &Word),
    alphabet: &[Letter],
    len_bound: usize,
) -> BTreeSet<(Word, Word)> {
    let words = positive_words(alphabet, len_bound);
    let conjugates = |u: &Word| -> Vec<Word> {
        words
            .iter()
            .map(|a| a.concat(u).concat(&a.invert()))
            .collect()
    };
    let (lp, rp) = (conjugates(p.0), conjugates(p.1));
    let (lq, rq) = (conjugates(q.0), conjugates(q.1));
    let mut out = BTreeSet::new();
    for (i, a) in words.iter().enumerate() {
        for (j, b) in words.iter().enumerate() {
            if lp[i] == rp[j] && lq[i] == rq[j] {
                out.insert((a.clone(), b.clone()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eq::solve_system;
    use crate::program::parse_program;
    use crate::term::parse_term;
    use crate::words::{satisfies, solve_conjugation_pair, SignedLetter};
    use crate::wp::{analyze, DEFAULT_MAX_ROUNDS};

    const FIG1: &str = "\
vars x y ;
proc main entry n0 exit n3 ;
edge n0 n1 : x = a ;
edge n1 n2 : y = a ;
edge n2 n3 : call p ;
proc p entry n4 exit n7 ;
edge n4 n5 : x = f(x,x) ;
edge n5 n6 : call p ;
edge n6 n7 : y = f(y,y) ;
edge n4 n7 : skip ;
";

    fn program(src: &str) -> Program {
        let (prog, diags) = parse_program(src);
        let prog = prog.expect("parses");
        assert!(diags.iter().all(|d| !d.is_error()), "{diags:?}");
        assert!(prog.validate().is_empty());
        prog
    }

    fn t(src: &str) -> Term {
        let vars: BTreeSet<Sym> = ["x", "y"].iter().map(|v| Sym::new(v)).collect();
        parse_term(src, &vars).unwrap()
    }

    fn sym(name: &str) -> Sym {
        Sym::new(name)
    }

    fn state(bindings: &[(&str, &str)]) -> State {
        bindings
            .iter()
            .map(|(v, val)| (sym(v), t(val)))
            .collect()
    }

    fn cfg(prog: &Program, depth: usize) -> RunConfig {
        RunConfig::for_program(prog, depth, 10_000)
    }

    #[test]
    fn enumeration_reaches_both_short_runs() {
        let prog = program(FIG1);
        let run = enumerate_states(&prog, &cfg(&prog, 2));
        let n3 = &run.at[&sym("n3")];
        assert!(n3.contains(&state(&[("x", "a"), ("y", "a")])));
        assert!(n3.contains(&state(&[("x", "f(a,a)"), ("y", "f(a,a)")])));
        // Recursion continues past any depth bound.
        assert!(run.truncated);
    }

    #[test]
    fn enumeration_of_an_edgeless_program_visits_only_the_entry() {
        let prog = program("vars x ;\nproc main entry n0 exit n0 ;\n");
        let run = enumerate_states(&prog, &cfg(&prog, 2));
        assert_eq!(run.at[&sym("n0")].len(), 1);
        assert!(!run.truncated);
    }

    #[test]
    fn enumeration_interleaves_havoc_over_the_pool() {
        let prog = program(
            "vars x y ;\nproc main entry n0 exit n2 ;\nedge n0 n1 : x = a ;\nedge n1 n2 : x = ? ;\n",
        );
        let run = enumerate_states(&prog, &cfg(&prog, 2));
        let values: BTreeSet<Term> = run.at[&sym("n2")]
            .iter()
            .map(|st| st[&sym("x")].clone())
            .collect();
        assert_eq!(values, cfg(&prog, 2).havoc_pool);
    }

    #[test]
    fn deeper_enumeration_sees_more_states() {
        let prog = program(FIG1);
        let shallow = enumerate_states(&prog, &cfg(&prog, 2));
        let deep = enumerate_states(&prog, &cfg(&prog, 3));
        for (point, states) in &shallow.at {
            assert!(states.is_subset(&deep.at[point]), "at {point}");
        }
        assert!(deep.at[&sym("n3")].contains(&state(&[
            ("x", "f(f(a,a),f(a,a))"),
            ("y", "f(f(a,a),f(a,a))"),
        ])));
    }

    #[test]
    fn invariants_hold_or_fall_on_concrete_states() {
        let prog = program(FIG1);
        let run = enumerate_states(&prog, &cfg(&prog, 2));
        let pool = &cfg(&prog, 2).havoc_pool;
        let same = Invariant::Pair {
            r1: Template::hole(),
            x: sym("x"),
            r2: Template::hole(),
            y: sym("y"),
        };
        assert_eq!(check_invariant(&same, &run.at[&sym("n3")], pool), Ok(()));
        let constant = Invariant::Constant { x: sym("x"), s: t("a") };
        assert_eq!(check_invariant(&constant, &run.at[&sym("n2")], pool), Ok(()));

        let bad: BTreeSet<State> = [state(&[("x", "a"), ("y", "b")])].into_iter().collect();
        assert_eq!(
            check_invariant(&same, &bad, pool),
            Err(state(&[("x", "a"), ("y", "b")]))
        );
        // Uninitialized variables are materialized, so nothing ties them.
        let fresh: BTreeSet<State> = [State::new()].into_iter().collect();
        assert!(check_invariant(&same, &fresh, pool).is_err());
    }

    #[test]
    fn soundness_report_accepts_the_analysis_and_catches_corruption() {
        let prog = program(FIG1);
        let analysis = analyze(&prog, DEFAULT_MAX_ROUNDS).unwrap();
        let mut report = analysis.report();
        let ok = soundness_report(&prog, &report, &cfg(&prog, 3));
        assert!(ok.pass(), "{:?}", ok.refutations);
        assert!(ok.checked >= 3);

        let n3 = report
            .points
            .iter_mut()
            .find(|p| p.point == "n3")
            .unwrap();
        n3.pairs.push(crate::wp::PairReport {
            lhs_template: "_".into(),
            lhs_var: "x".into(),
            rhs_template: "f(_,_)".into(),
            rhs_var: "y".into(),
        });
        let bad = soundness_report(&prog, &report, &cfg(&prog, 3));
        assert_eq!(bad.refutations.len(), 1);
        assert_eq!(bad.refutations[0].point, sym("n3"));
        assert_eq!(bad.refutations[0].state, state(&[("x", "a"), ("y", "a")]));
    }

    #[test]
    fn brute_solver_pins_the_two_equation_system() {
        let sys = [
            (t("f(a,g(b),g(b))"), t("g(b)")),
            (t("f(a,g(c),g(b))"), t("g(c)")),
        ];
        let expect: BTreeSet<SolutionPair> = [(
            Template::hole(),
            Template::new(t("f(a,_,g(b))")).unwrap(),
        )]
        .into_iter()
        .collect();
        assert_eq!(brute_solve(&sys, 9), SystemSolutions::Pairs(expect));
        assert_eq!(brute_solve(&sys, 9), solve_system(&sys));
    }

    #[test]
    fn brute_solver_handles_degenerate_systems() {
        assert_eq!(
            brute_solve(&[(t("a"), t("a"))], 9),
            SystemSolutions::Pairs(
                [(Template::hole(), Template::hole())].into_iter().collect()
            )
        );
        let unsat = [(t("a"), t("a")), (t("f(a,a)"), t("a"))];
        assert_eq!(brute_solve(&unsat, 9), SystemSolutions::Unsat);
        assert_eq!(brute_solve(&unsat, 9), solve_system(&unsat));
        assert_eq!(brute_solve(&[], 9), SystemSolutions::Pairs(BTreeSet::new()));
    }

    #[test]
    fn brute_words_matches_the_solved_relation() {
        let f = Letter(0);
        let g = Letter(1);
        let w = |spec: &[(Letter, bool)]| {
            Word::new(spec.iter().map(|&(l, pos)| SignedLetter {
                letter: l,
                positive: pos,
            }))
        };
        // A f f g^-1 f^-1 A^-1 == B f g^-1 B^-1, second equation trivial.
        let u = w(&[(f, true), (f, true), (g, false), (f, false)]);
        let u2 = w(&[(f, true), (g, false)]);
        let empty = Word::empty();
        let rel = solve_conjugation_pair((&u, &u2), (&empty, &empty));
        let alphabet = [f, g];
        let brute = brute_words((&u, &u2), (&empty, &empty), &alphabet, 4);
        let from_relation: BTreeSet<(Word, Word)> = {
            let words = positive_words(&alphabet, 4);
            words
                .iter()
                .flat_map(|a| {
                    words
                        .iter()
                        .filter(|b| satisfies(&rel, a, b))
                        .map(|b| (a.clone(), b.clone()))
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        assert_eq!(brute, from_relation);
        // Spot check: B == A f.
        assert!(brute.contains(&(Word::positive([f]), Word::positive([f, f]))));
    }
}
