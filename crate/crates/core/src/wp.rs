//! Inter-procedural analysis core: transformers over generic
//! post-conditions, the two constraint systems for procedure summaries and
//! reaching transformers, Round-Robin greatest-fixpoint descent, and
//! invariant extraction into a report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::eq::{
    forall, seal_markers, solve_const_system, solve_system, universal_closure, wp_subst,
    Conjunction, CtxVar, Equality, Side, SolutionPair, SystemSolutions,
};
use crate::factor::decompose;
use crate::program::{DerivedSets, Procedure, Program, Stmt};
use crate::subsume::{approx_subsumes, compact, ApproxCtx};
use crate::term::{Sym, Template, Term};

/// Default bound on Round-Robin rounds. Hitting it means the descent failed
/// to stabilize, which is an implementation bug, never a result.
pub const DEFAULT_MAX_ROUNDS: usize = 1000;

/// A generic post-condition tracked per program point: `A x == B y` for an
/// ordered pair of variables (the same variable twice is allowed, since
/// substitution can merge the two sides), or `A x == C` for a constant.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum PostKey {
    Pair(Sym, Sym),
    Const(Sym),
}

impl fmt::Display for PostKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PostKey::Pair(x, y) => write!(f, "A {x} == B {y}"),
            PostKey::Const(x) => write!(f, "A {x} == C"),
        }
    }
}

/// All keys for a variable set: every ordered pair plus every constant.
pub fn post_keys(vars: &BTreeSet<Sym>) -> Vec<PostKey> {
    let mut keys = Vec::new();
    for x in vars {
        for y in vars {
            keys.push(PostKey::Pair(x.clone(), y.clone()));
        }
    }
    for x in vars {
        keys.push(PostKey::Const(x.clone()));
    }
    keys
}

/// One value of either constraint system: a conjunction per post key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transformer {
    table: BTreeMap<PostKey, Conjunction>,
}

impl Transformer {
    /// The empty pre-condition for every key, the starting value of the
    /// descending iteration.
    pub fn top(vars: &BTreeSet<Sym>) -> Transformer {
        Transformer {
            table: post_keys(vars)
                .into_iter()
                .map(|k| (k, Conjunction::top()))
                .collect(),
        }
    }

    /// Maps each key to its own generic equality.
    pub fn id(vars: &BTreeSet<Sym>) -> Transformer {
        Transformer {
            table: post_keys(vars)
                .into_iter()
                .map(|k| {
                    let cell = match &k {
                        PostKey::Pair(x, y) => {
                            Equality::pair(Term::var(x.clone()), Term::var(y.clone()))
                        }
                        PostKey::Const(x) => Equality::constant(Term::var(x.clone())),
                    };
                    (k, [cell].into_iter().collect())
                })
                .collect(),
        }
    }

    pub fn get(&self, key: &PostKey) -> &Conjunction {
        self.table
            .get(key)
            .unwrap_or_else(|| panic!("pipeline invariant: transformer lacks key {key}"))
    }

    pub fn set(&mut self, key: PostKey, value: Conjunction) {
        self.table.insert(key, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PostKey, &Conjunction)> {
        self.table.iter()
    }
}

/// Weakest pre-condition of a single non-call statement.
///
/// Markers that quantification introduces are sealed into the rigid marker
/// atom, so iterated cells keep the variable-or-ground body shape the
/// subsumption machinery expects.
pub fn wp_stmt(stmt: &Stmt, post: &Conjunction) -> Conjunction {
    match stmt {
        Stmt::Assign(x, t) => wp_subst(post, x, t),
        Stmt::Havoc(x) => seal_markers(&forall(post, x)),
        Stmt::Skip => post.clone(),
        Stmt::Call(_) => panic!("pipeline invariant: call edges go through apply_transformer"),
    }
}

fn side_var(s: &Side) -> Option<Sym> {
    let body = s.body()?;
    let vars = body.vars();
    assert!(
        vars.len() <= 1,
        "pipeline invariant: body {body} mentions several variables"
    );
    vars.into_iter().next()
}

/// Rebuilds a side around a fetched cell body: the side's own prefix (its
/// body with the variable as marker) is composed onto `w`.
fn plug(side: &Side, x: &Sym, w: &Term) -> Side {
    match side {
        Side::App(cv, body) => Side::App(*cv, body.var_to_hole(x).subst_hole(w)),
        _ => panic!("pipeline invariant: variable side {side} lacks a context"),
    }
}

/// Extends a transformer from generic post-conditions to arbitrary ones.
///
/// Per equality: if both sides carry a variable, the `Pair` cell is fetched
/// and both prefixes are composed onto its bodies; if only one side does,
/// the `Const` cell is fetched, the prefix is composed on the variable side
/// and the other side stands in for the ground constant (any rigid side
/// works, since the cell never inspects `C`); an equality without variables
/// is unaffected by the call and passes through.
pub fn apply_transformer(f: &Transformer, phi: &Conjunction) -> Conjunction {
    let Conjunction::Set(eqs) = phi else {
        return Conjunction::Bottom;
    };
    let mut out = Conjunction::top();
    for e in eqs {
        let (lv, rv) = (side_var(&e.lhs), side_var(&e.rhs));
        let key = match (&lv, &rv) {
            (None, None) => {
                out.insert(e.clone());
                continue;
            }
            (Some(x), Some(y)) => PostKey::Pair(x.clone(), y.clone()),
            (Some(x), None) | (None, Some(x)) => PostKey::Const(x.clone()),
        };
        let Conjunction::Set(cell) = f.get(&key) else {
            return Conjunction::Bottom;
        };
        for c in cell {
            let composed = match (&lv, &rv) {
                (Some(x), Some(y)) => {
                    let (Side::App(_, u), Side::App(_, v)) = (&c.lhs, &c.rhs) else {
                        panic!("pipeline invariant: pair cell member {c} lacks context bodies");
                    };
                    Equality::new(plug(&e.lhs, x, u), plug(&e.rhs, y, v))
                }
                (Some(x), None) => {
                    let (Side::App(_, w), Side::ConstVar) = (&c.lhs, &c.rhs) else {
                        panic!("pipeline invariant: constant cell member {c} is misshapen");
                    };
                    Equality::new(plug(&e.lhs, x, w), e.rhs.clone())
                }
                (None, Some(y)) => {
                    let (Side::App(_, w), Side::ConstVar) = (&c.lhs, &c.rhs) else {
                        panic!("pipeline invariant: constant cell member {c} is misshapen");
                    };
                    Equality::new(e.lhs.clone(), plug(&e.rhs, y, w))
                }
                (None, None) => unreachable!(),
            };
            out.insert(composed);
        }
    }
    out
}

/// Composition of transformers: `compose(f, g)` first transforms the post
/// through `g`, then through `f`, compacting per key.
pub fn compose(f: &Transformer, g: &Transformer, ctx: &ApproxCtx) -> Transformer {
    Transformer {
        table: g
            .table
            .iter()
            .map(|(k, cell)| (k.clone(), compact(&apply_transformer(f, cell), ctx)))
            .collect(),
    }
}

/// The solver failed to stabilize within the round cap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveError {
    IterationCap(usize),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::IterationCap(n) => {
                write!(f, "internal error: no fixpoint within {n} rounds")
            }
        }
    }
}

impl std::error::Error for SolveError {}

/// What one round computed: per point and key, the equalities produced by
/// the round's constraints that had never been computed before, plus
/// whether any cell strictly strengthened.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoundLog {
    pub arrivals: BTreeMap<(Sym, PostKey), BTreeSet<Equality>>,
    pub changed: bool,
}

/// Round history of one solver run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SolveLog {
    pub rounds: Vec<RoundLog>,
}

impl SolveLog {
    /// The last round (1-based) that still strengthened some cell. The
    /// final round is always quiet and confirms the fixpoint.
    pub fn stabilization(&self) -> usize {
        self.rounds
            .iter()
            .rposition(|r| r.changed)
            .map_or(0, |i| i + 1)
    }

    /// Arrivals of a 1-based round at a point and key.
    pub fn arrivals(&self, round: usize, point: &Sym, key: &PostKey) -> BTreeSet<Equality> {
        self.rounds
            .get(round - 1)
            .and_then(|r| r.arrivals.get(&(point.clone(), key.clone())))
            .cloned()
            .unwrap_or_default()
    }
}

struct Solver<'a> {
    ctx: &'a ApproxCtx,
    keys: Vec<PostKey>,
    id: Transformer,
    values: BTreeMap<Sym, Transformer>,
    seen: BTreeSet<(Sym, PostKey, Equality)>,
    rounds: Vec<RoundLog>,
    round: RoundLog,
}

impl<'a> Solver<'a> {
    fn new(prog: &Program, ctx: &'a ApproxCtx) -> Solver<'a> {
        let vars = prog.var_set();
        let values = prog
            .procs
            .iter()
            .flat_map(|p| p.nodes.iter())
            .map(|n| (n.clone(), Transformer::top(&vars)))
            .collect();
        Solver {
            ctx,
            keys: post_keys(&vars),
            id: Transformer::id(&vars),
            values,
            seen: BTreeSet::new(),
            rounds: Vec::new(),
            round: RoundLog::default(),
        }
    }

    /// Conjoins a candidate onto a cell: the meet is the set union, the
    /// stored value its compaction. New equalities are logged before
    /// compaction, once per point and key over the whole run, so the log
    /// shows what a round computed even when compaction discards it.
    fn impose(&mut self, point: &Sym, key: &PostKey, cand: Conjunction) {
        let old = self.values[point].get(key).clone();
        let meet = old.and(&cand);
        if meet == old {
            return;
        }
        if let (Conjunction::Set(m), Conjunction::Set(o)) = (&meet, &old) {
            for e in m.difference(o) {
                let stamp = (point.clone(), key.clone(), e.clone());
                if self.seen.insert(stamp) {
                    self.round
                        .arrivals
                        .entry((point.clone(), key.clone()))
                        .or_default()
                        .insert(e.clone());
                }
            }
        }
        let new = compact(&meet, self.ctx);
        if new == old {
            return;
        }
        debug_assert!(
            approx_subsumes(&new, &old, self.ctx),
            "solver descent violated at {point} / {key}"
        );
        if !approx_subsumes(&old, &new, self.ctx) {
            self.round.changed = true;
        }
        self.values.get_mut(point).unwrap().set(key.clone(), new);
    }

    fn impose_id(&mut self, point: &Sym) {
        for key in self.id.table.keys().cloned().collect::<Vec<_>>() {
            let cand = self.id.get(&key).clone();
            self.impose(point, &key, cand);
        }
    }

    /// Closes the round; true when it left every cell where it was.
    fn finish_round(&mut self) -> bool {
        let round = std::mem::take(&mut self.round);
        let quiet = !round.changed;
        self.rounds.push(round);
        quiet
    }

    fn into_result(self) -> (BTreeMap<Sym, Transformer>, SolveLog) {
        (self.values, SolveLog { rounds: self.rounds })
    }
}

/// Reverse postorder over a procedure's points from its entry; points the
/// entry cannot reach are appended in name order.
fn forward_order(p: &Procedure) -> Vec<Sym> {
    let succs = |u: &Sym| -> Vec<Sym> {
        p.edges
            .iter()
            .filter(|(s, _, _)| s == u)
            .map(|(_, _, d)| d.clone())
            .collect()
    };
    let mut seen = BTreeSet::from([p.entry.clone()]);
    let mut post = Vec::new();
    let mut stack = vec![(p.entry.clone(), 0usize)];
    while let Some((u, i)) = stack.pop() {
        let next = succs(&u);
        if i < next.len() {
            stack.push((u, i + 1));
            let v = next[i].clone();
            if seen.insert(v.clone()) {
                stack.push((v, 0));
            }
        } else {
            post.push(u);
        }
    }
    let mut order: Vec<Sym> = post.into_iter().rev().collect();
    for n in &p.nodes {
        if !seen.contains(n) {
            order.push(n.clone());
        }
    }
    order
}

/// Procedure summaries: the greatest solution of
///
/// ```text
/// [exit p]  =>  Id                     for each procedure p
/// [u]       =>  [entry q] . [v]        for each call edge (u, q(), v)
/// [u]       =>  [s] . [v]              for each statement edge (u, s, v)
/// ```
///
/// by Round-Robin descent from the all-Top assignment, conjoining each
/// constraint's right-hand side per key and compacting. A round that
/// strengthens no cell under the approximate subsumption confirms the
/// fixpoint.
pub fn solve_summaries(
    prog: &Program,
    ctx: &ApproxCtx,
    max_rounds: usize,
) -> Result<(BTreeMap<Sym, Transformer>, SolveLog), SolveError> {
    let mut solver = Solver::new(prog, ctx);
    let orders: Vec<Vec<Sym>> = prog
        .procs
        .iter()
        .map(|p| {
            let mut o = forward_order(p);
            o.reverse();
            o
        })
        .collect();
    for _ in 0..max_rounds {
        for (p, order) in prog.procs.iter().zip(&orders) {
            solver.impose_id(&p.exit);
            for u in order {
                for (src, stmt, dst) in &p.edges {
                    if src != u {
                        continue;
                    }
                    let cands: Vec<(PostKey, Conjunction)> = match stmt {
                        Stmt::Call(q) => {
                            let entry = &prog.proc(q).expect("validated program").entry;
                            let f = &solver.values[entry];
                            let post = &solver.values[dst];
                            solver
                                .keys
                                .iter()
                                .map(|k| (k.clone(), apply_transformer(f, post.get(k))))
                                .collect()
                        }
                        s => {
                            let post = &solver.values[dst];
                            solver
                                .keys
                                .iter()
                                .map(|k| (k.clone(), wp_stmt(s, post.get(k))))
                                .collect()
                        }
                    };
                    for (key, cand) in cands {
                        solver.impose(u, &key, cand);
                    }
                }
            }
        }
        if solver.finish_round() {
            return Ok(solver.into_result());
        }
    }
    Err(SolveError::IterationCap(max_rounds))
}

/// Reaching transformers: the greatest solution of
///
/// ```text
/// [entry main]  =>  Id
/// [entry q]     =>  [u]                    for each call edge (u, q(), _)
/// [v]           =>  [u] . [entry q]_S      for each call edge (u, q(), v)
/// [v]           =>  [u] . [s]              for each statement edge (u, s, v)
/// ```
///
/// A reaching transformer turns an assertion at its point into the
/// pre-condition at program start; extraction closes that pre-condition
/// universally, since start values are arbitrary.
pub fn solve_reaching(
    prog: &Program,
    summaries: &BTreeMap<Sym, Transformer>,
    ctx: &ApproxCtx,
    max_rounds: usize,
) -> Result<(BTreeMap<Sym, Transformer>, SolveLog), SolveError> {
    let mut solver = Solver::new(prog, ctx);
    let main_entry = prog.main().entry.clone();
    let call_sites: BTreeMap<&Sym, Vec<&Sym>> = {
        let mut m: BTreeMap<&Sym, Vec<&Sym>> = BTreeMap::new();
        for p in &prog.procs {
            for (u, stmt, _) in &p.edges {
                if let Stmt::Call(q) = stmt {
                    m.entry(q).or_default().push(u);
                }
            }
        }
        m
    };
    let orders: Vec<Vec<Sym>> = prog.procs.iter().map(forward_order).collect();
    for _ in 0..max_rounds {
        solver.impose_id(&main_entry);
        for (p, order) in prog.procs.iter().zip(&orders) {
            for site in call_sites.get(&p.name).into_iter().flatten() {
                for key in solver.keys.clone() {
                    let cand = solver.values[*site].get(&key).clone();
                    solver.impose(&p.entry, &key, cand);
                }
            }
            for v in order {
                for (u, stmt, dst) in &p.edges {
                    if dst != v {
                        continue;
                    }
                    let cands: Vec<(PostKey, Conjunction)> = match stmt {
                        Stmt::Call(q) => {
                            let entry = &prog.proc(q).expect("validated program").entry;
                            let f = &solver.values[u];
                            let callee = &summaries[entry];
                            solver
                                .keys
                                .iter()
                                .map(|k| (k.clone(), apply_transformer(f, callee.get(k))))
                                .collect()
                        }
                        s => {
                            let f = &solver.values[u];
                            let id = &solver.id;
                            solver
                                .keys
                                .iter()
                                .map(|k| {
                                    (k.clone(), apply_transformer(f, &wp_stmt(s, id.get(k))))
                                })
                                .collect()
                        }
                    };
                    for (key, cand) in cands {
                        solver.impose(v, &key, cand);
                    }
                }
            }
        }
        if solver.finish_round() {
            return Ok(solver.into_result());
        }
    }
    Err(SolveError::IterationCap(max_rounds))
}

/// The constant a variable provably holds at a point, if any: the closed
/// `Const` cell must pin all bodies to one ground term.
pub fn constant_at(reaching: &Transformer, x: &Sym) -> Option<Term> {
    let psi = universal_closure(reaching.get(&PostKey::Const(x.clone())));
    let eqs = psi.equalities()?;
    if eqs.is_empty() {
        return None;
    }
    let bodies: Vec<&Term> = eqs
        .iter()
        .map(|e| match (&e.lhs, &e.rhs) {
            (Side::App(CtxVar::A, b), Side::ConstVar) => b,
            _ => panic!("pipeline invariant: constant cell member {e} is misshapen"),
        })
        .collect();
    solve_const_system(bodies)
}

/// The template pairs `(r1, r2)` with `r1 x == r2 y` invariant at a point:
/// the base solutions of the ground system read off the closed pair cell.
/// Degenerate cells admit further pairs beyond left compositions of these;
/// only the base pairs are reported. The trivial pair on `x == x` is
/// suppressed.
pub fn pairs_at(reaching: &Transformer, x: &Sym, y: &Sym) -> BTreeSet<SolutionPair> {
    let psi = universal_closure(reaching.get(&PostKey::Pair(x.clone(), y.clone())));
    let Some(eqs) = psi.equalities() else {
        return BTreeSet::new();
    };
    if eqs.is_empty() {
        return BTreeSet::new();
    }
    let sys: Vec<(Term, Term)> = eqs
        .iter()
        .map(|e| match (&e.lhs, &e.rhs) {
            (Side::App(CtxVar::A, s), Side::App(CtxVar::B, t)) => (s.clone(), t.clone()),
            _ => panic!("pipeline invariant: pair cell member {e} is misshapen"),
        })
        .collect();
    match solve_system(&sys) {
        SystemSolutions::Unsat => BTreeSet::new(),
        SystemSolutions::Pairs(mut pairs) => {
            if x == y {
                pairs.remove(&(Template::hole(), Template::hole()));
            }
            pairs
        }
    }
}

/// Everything one analysis run produced.
pub struct Analysis {
    pub program: Program,
    pub sets: DerivedSets,
    pub ctx: ApproxCtx,
    pub summaries: BTreeMap<Sym, Transformer>,
    pub summary_log: SolveLog,
    pub reaching: BTreeMap<Sym, Transformer>,
    pub reaching_log: SolveLog,
}

/// Runs both constraint systems on a validated program.
pub fn analyze(prog: &Program, max_rounds: usize) -> Result<Analysis, SolveError> {
    let sets = prog.derive_sets();
    let ctx = ApproxCtx::new(sets.universe.clone(), prog.var_set(), sets.ir);
    let (summaries, summary_log) = solve_summaries(prog, &ctx, max_rounds)?;
    let (reaching, reaching_log) = solve_reaching(prog, &summaries, &ctx, max_rounds)?;
    Ok(Analysis {
        program: prog.clone(),
        sets,
        ctx,
        summaries,
        summary_log,
        reaching,
        reaching_log,
    })
}

/// A constant invariant `var == term`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConstantReport {
    pub var: String,
    pub term: String,
}

/// A pair invariant `lhs_template lhs_var == rhs_template rhs_var`, with
/// `_` as the hole marker in templates.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairReport {
    pub lhs_template: String,
    pub lhs_var: String,
    pub rhs_template: String,
    pub rhs_var: String,
}

/// The invariants found at one program point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PointReport {
    pub point: String,
    pub constants: Vec<ConstantReport>,
    pub pairs: Vec<PairReport>,
}

/// The full analysis report.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Report {
    pub ir: bool,
    pub iterations: usize,
    pub reaching_iterations: usize,
    pub exit_point: String,
    pub max_conjunction: BTreeMap<String, usize>,
    pub points: Vec<PointReport>,
}

impl Analysis {
    /// Extracts per-point invariants. Pair keys are read with the variables
    /// in name order only; the system is symmetric in the two sides, so the
    /// mirrored keys carry the mirrored content.
    pub fn report(&self) -> Report {
        let vars: Vec<Sym> = self.program.vars.to_vec();
        let mut sorted_vars = vars.clone();
        sorted_vars.sort();
        let mut points = Vec::new();
        let mut max_conjunction = BTreeMap::new();
        for p in &self.program.procs {
            for n in &p.nodes {
                let tf = &self.reaching[n];
                let mut constants = Vec::new();
                let mut pairs = Vec::new();
                for x in &sorted_vars {
                    if let Some(t) = constant_at(tf, x) {
                        constants.push(ConstantReport {
                            var: x.to_string(),
                            term: t.to_string(),
                        });
                    }
                }
                for (i, x) in sorted_vars.iter().enumerate() {
                    for y in &sorted_vars[i..] {
                        for (r1, r2) in pairs_at(tf, x, y) {
                            pairs.push(PairReport {
                                lhs_template: r1.to_string(),
                                lhs_var: x.to_string(),
                                rhs_template: r2.to_string(),
                                rhs_var: y.to_string(),
                            });
                        }
                    }
                }
                let size = tf
                    .iter()
                    .chain(self.summaries[n].iter())
                    .map(|(_, c)| c.len())
                    .max()
                    .unwrap_or(0);
                max_conjunction.insert(n.to_string(), size);
                points.push(PointReport {
                    point: n.to_string(),
                    constants,
                    pairs,
                });
            }
        }
        Report {
            ir: self.sets.ir,
            iterations: self.summary_log.stabilization(),
            reaching_iterations: self.reaching_log.stabilization(),
            exit_point: self.program.main().exit.to_string(),
            max_conjunction,
            points,
        }
    }
}

fn pair_line(p: &PairReport) -> String {
    let side = |tpl: &str, var: &str| {
        if tpl == "_" {
            var.to_string()
        } else {
            format!("{tpl} {var}")
        }
    };
    format!(
        "{} == {}",
        side(&p.lhs_template, &p.lhs_var),
        side(&p.rhs_template, &p.rhs_var)
    )
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for pt in &self.points {
            for c in &pt.constants {
                out.push_str(&format!("{}: {} == {}\n", pt.point, c.var, c.term));
            }
            for p in &pt.pairs {
                out.push_str(&format!("{}: {}\n", pt.point, pair_line(p)));
            }
        }
        if let Some(exit) = self.points.iter().find(|p| p.point == self.exit_point) {
            for c in &exit.constants {
                out.push_str(&format!("exit: {} == {}\n", c.var, c.term));
            }
            for p in &exit.pairs {
                out.push_str(&format!("exit: {}\n", pair_line(p)));
            }
        }
        out.push_str("stats:\n");
        out.push_str(&format!("ir: {}\n", self.ir));
        out.push_str(&format!("iterations: {}\n", self.iterations));
        out.push_str(&format!(
            "reaching iterations: {}\n",
            self.reaching_iterations
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Renders a side for iteration tables: the variable prefix is split into
/// its irreducible factors, ground bodies print as terms, and the constant
/// variable prints as `C`.
fn factored_side(s: &Side) -> String {
    match s {
        Side::ConstVar => "C".to_string(),
        Side::Bare(t) => t.to_string(),
        Side::App(cv, body) => match side_var(&Side::App(*cv, body.clone())) {
            None => format!("{cv} {body}"),
            Some(x) => {
                let prefix = Template::new(body.var_to_hole(&x))
                    .expect("variable body yields a template");
                let mut parts = vec![cv.to_string()];
                parts.extend(decompose(&prefix).iter().map(|f| f.to_string()));
                parts.push(x.to_string());
                parts.join(" ")
            }
        },
    }
}

/// Canonical factored rendering of one equality.
pub fn render_factored(e: &Equality) -> String {
    format!("{} == {}", factored_side(&e.lhs), factored_side(&e.rhs))
}

/// Canonical factored rendering of a cell.
pub fn render_cell(c: &Conjunction) -> String {
    match c.equalities() {
        None => "false".to_string(),
        Some(s) if s.is_empty() => "true".to_string(),
        Some(s) => s
            .iter()
            .map(render_factored)
            .collect::<Vec<_>>()
            .join("  /\\  "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::parse_program;
    use crate::term::parse_term;

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

    const EXAMPLE8: &str = "\
vars x y ;
proc main entry n0 exit n3 ;
edge n0 n1 : x = a ;
edge n1 n2 : y = a ;
edge n2 n3 : call p ;
proc p entry n4 exit n7 ;
edge n4 n5 : x = f(x,a,x) ;
edge n5 n6 : call p ;
edge n6 n7 : y = f(y,a,y) ;
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

    fn conj(eqs: Vec<Equality>) -> Conjunction {
        eqs.into_iter().collect()
    }

    fn fig1_vars() -> BTreeSet<Sym> {
        [sym("x"), sym("y")].into_iter().collect()
    }

    #[test]
    fn wp_of_assignment_substitutes() {
        let post = conj(vec![Equality::pair(t("x"), t("y"))]);
        let got = wp_stmt(&Stmt::Assign(sym("y"), t("f(y,y)")), &post);
        assert_eq!(got, conj(vec![Equality::pair(t("x"), t("f(y,y)"))]));
    }

    #[test]
    fn wp_of_skip_is_identity() {
        let post = conj(vec![Equality::pair(t("f(x,x)"), t("y"))]);
        assert_eq!(wp_stmt(&Stmt::Skip, &post), post);
    }

    #[test]
    fn wp_of_havoc_on_one_sided_variable_is_unsatisfiable() {
        let post = conj(vec![Equality::pair(t("x"), t("y"))]);
        assert!(wp_stmt(&Stmt::Havoc(sym("x")), &post).is_bottom());
    }

    #[test]
    fn wp_of_havoc_seals_shared_variable_into_ground_bodies() {
        let post = conj(vec![Equality::pair(t("f(x,a)"), t("x"))]);
        let got = wp_stmt(&Stmt::Havoc(sym("x")), &post);
        let eqs = got.equalities().expect("satisfiable");
        assert_eq!(eqs.len(), 1);
        let e = eqs.iter().next().unwrap();
        assert!(e.lhs.body().unwrap().is_ground());
        assert!(e.rhs.body().unwrap().is_ground());
        // A for-all over both sides pins B to composing the punched prefix.
        let pairs = solve_system(&[(
            e.lhs.body().unwrap().clone(),
            e.rhs.body().unwrap().clone(),
        )]);
        let expect: BTreeSet<SolutionPair> = [(
            Template::hole(),
            Template::new(t("f(_,a)")).unwrap(),
        )]
        .into_iter()
        .collect();
        assert_eq!(pairs.pairs().unwrap(), &expect);
    }

    #[test]
    fn apply_of_identity_transformer_keeps_posts() {
        let id = Transformer::id(&fig1_vars());
        for phi in [
            conj(vec![Equality::pair(t("f(x,a)"), t("y"))]),
            conj(vec![Equality::pair(t("f(a,a)"), t("y"))]),
            conj(vec![Equality::constant(t("f(x,x)"))]),
            conj(vec![Equality::pair(t("a"), t("f(a,a)"))]),
        ] {
            assert_eq!(apply_transformer(&id, &phi), phi);
        }
    }

    #[test]
    fn apply_reaches_through_bottom_cells() {
        let mut f = Transformer::id(&fig1_vars());
        f.set(PostKey::Pair(sym("x"), sym("y")), Conjunction::Bottom);
        let phi = conj(vec![Equality::pair(t("f(x,x)"), t("y"))]);
        assert!(apply_transformer(&f, &phi).is_bottom());
        assert!(apply_transformer(&f, &Conjunction::Bottom).is_bottom());
    }

    #[test]
    fn apply_composes_prefixes_onto_cell_bodies() {
        let mut f = Transformer::id(&fig1_vars());
        f.set(
            PostKey::Pair(sym("x"), sym("y")),
            conj(vec![
                Equality::pair(t("x"), t("y")),
                Equality::pair(t("f(x,x)"), t("f(y,y)")),
            ]),
        );
        let phi = conj(vec![Equality::pair(t("x"), t("f(y,y)"))]);
        let got = apply_transformer(&f, &phi);
        let want = conj(vec![
            Equality::pair(t("x"), t("f(y,y)")),
            Equality::pair(t("f(x,x)"), t("f(f(y,y),f(y,y))")),
        ]);
        assert_eq!(got, want);
    }

    #[test]
    fn compose_with_identity_is_identity() {
        let prog = program(FIG1);
        let sets = prog.derive_sets();
        let ctx = ApproxCtx::new(sets.universe, prog.var_set(), sets.ir);
        let (summaries, _) = solve_summaries(&prog, &ctx, DEFAULT_MAX_ROUNDS).unwrap();
        let f = &summaries[&sym("n4")];
        let id = Transformer::id(&prog.var_set());
        assert_eq!(&compose(f, &id, &ctx), f);
        assert_eq!(&compose(&id, f, &ctx), f);
    }

    #[test]
    fn summary_iteration_reproduces_the_recursive_doubling_table() {
        let prog = program(FIG1);
        let sets = prog.derive_sets();
        assert!(sets.ir);
        let ctx = ApproxCtx::new(sets.universe, prog.var_set(), sets.ir);
        let (summaries, log) = solve_summaries(&prog, &ctx, DEFAULT_MAX_ROUNDS).unwrap();
        assert_eq!(log.stabilization(), 3);

        let key = PostKey::Pair(sym("x"), sym("y"));
        let cell = |round: usize, point: &str| -> Vec<String> {
            log.arrivals(round, &sym(point), &key)
                .iter()
                .map(render_factored)
                .collect()
        };
        assert_eq!(cell(1, "n7"), ["A x == B y"]);
        assert_eq!(cell(1, "n6"), ["A x == B f(_,_) y"]);
        assert_eq!(cell(1, "n5"), Vec::<String>::new());
        assert_eq!(cell(1, "n4"), ["A x == B y"]);
        assert_eq!(cell(2, "n5"), ["A x == B f(_,_) y"]);
        assert_eq!(cell(2, "n4"), ["A f(_,_) x == B f(_,_) y"]);
        assert_eq!(cell(3, "n5"), ["A f(_,_) x == B f(_,_) f(_,_) y"]);
        assert_eq!(cell(3, "n4"), ["A f(_,_) f(_,_) x == B f(_,_) f(_,_) y"]);

        let entry = &summaries[&sym("n4")];
        assert_eq!(
            entry.get(&key),
            &conj(vec![
                Equality::pair(t("x"), t("y")),
                Equality::pair(t("f(x,x)"), t("f(y,y)")),
            ])
        );
        // Growing x strictly on one side admits no constant for it.
        assert!(entry.get(&PostKey::Const(sym("x"))).is_bottom());
    }

    #[test]
    fn reaching_composes_main_prefix_with_the_call_summary() {
        let prog = program(FIG1);
        let a = analyze(&prog, DEFAULT_MAX_ROUNDS).unwrap();
        let key = PostKey::Pair(sym("x"), sym("y"));
        assert_eq!(
            a.reaching[&sym("n3")].get(&key),
            &conj(vec![
                Equality::pair(t("a"), t("a")),
                Equality::pair(t("f(a,a)"), t("f(a,a)")),
            ])
        );
        assert_eq!(&a.reaching[&sym("n0")], &Transformer::id(&prog.var_set()));
    }

    #[test]
    fn recursive_entries_are_met_over_every_call_site() {
        // Point n4 is reached both with x == y (outer call) and with x
        // already grown (recursive call), so no pair invariant survives
        // there, and none at the procedure exit n7 either.
        let prog = program(FIG1);
        let a = analyze(&prog, DEFAULT_MAX_ROUNDS).unwrap();
        let key = PostKey::Pair(sym("x"), sym("y"));
        assert!(a.reaching[&sym("n4")].get(&key).is_bottom());
        assert!(pairs_at(&a.reaching[&sym("n7")], &sym("x"), &sym("y")).is_empty());
    }

    #[test]
    fn extraction_recovers_constants_and_the_exit_pair() {
        let prog = program(FIG1);
        let a = analyze(&prog, DEFAULT_MAX_ROUNDS).unwrap();
        assert_eq!(constant_at(&a.reaching[&sym("n2")], &sym("x")), Some(t("a")));
        assert_eq!(constant_at(&a.reaching[&sym("n2")], &sym("y")), Some(t("a")));
        assert_eq!(constant_at(&a.reaching[&sym("n3")], &sym("x")), None);
        assert_eq!(constant_at(&a.reaching[&sym("n0")], &sym("x")), None);
        let pairs = pairs_at(&a.reaching[&sym("n3")], &sym("x"), &sym("y"));
        let expect: BTreeSet<SolutionPair> =
            [(Template::hole(), Template::hole())].into_iter().collect();
        assert_eq!(pairs, expect);
        assert!(pairs_at(&a.reaching[&sym("n0")], &sym("x"), &sym("y")).is_empty());
    }

    #[test]
    fn report_lists_exit_invariant_and_stats() {
        let prog = program(FIG1);
        let a = analyze(&prog, DEFAULT_MAX_ROUNDS).unwrap();
        let report = a.report();
        assert_eq!(report.iterations, 3);
        let n3 = report.points.iter().find(|p| p.point == "n3").unwrap();
        assert_eq!(
            n3.pairs,
            vec![PairReport {
                lhs_template: "_".into(),
                lhs_var: "x".into(),
                rhs_template: "_".into(),
                rhs_var: "y".into(),
            }]
        );
        let text = report.to_text();
        assert!(text.contains("n3: x == y"), "{text}");
        assert!(text.contains("exit: x == y"), "{text}");
        assert!(text.contains("iterations: 3"), "{text}");
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["points"][3]["point"], "n3");
        assert_eq!(json["points"][3]["pairs"][0]["lhs_template"], "_");
    }

    #[test]
    fn ternary_variant_stabilizes_one_round_later() {
        let prog = program(EXAMPLE8);
        let sets = prog.derive_sets();
        assert!(!sets.ir);
        let a = analyze(&prog, DEFAULT_MAX_ROUNDS).unwrap();
        assert_eq!(a.summary_log.stabilization(), 4);
        let pairs = pairs_at(&a.reaching[&sym("n3")], &sym("x"), &sym("y"));
        let expect: BTreeSet<SolutionPair> =
            [(Template::hole(), Template::hole())].into_iter().collect();
        assert_eq!(pairs, expect);
    }

    #[test]
    fn solver_surfaces_the_iteration_cap() {
        let prog = program(FIG1);
        let sets = prog.derive_sets();
        let ctx = ApproxCtx::new(sets.universe, prog.var_set(), sets.ir);
        assert_eq!(
            solve_summaries(&prog, &ctx, 1).unwrap_err(),
            SolveError::IterationCap(1)
        );
    }
}
