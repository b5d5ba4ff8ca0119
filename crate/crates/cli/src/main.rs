//! Command line front end: program analysis, procedure summaries, execution
//! checking, and ad-hoc term factorization and word equation solving.
//!
//! Exit codes: 0 success, 1 user error or diagnostics, 2 internal failure
//! (assertion or iteration cap), 3 refuted invariant.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::AssertUnwindSafe;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use heq_core::factor::{decompose, factorize, TermUniverse};
use heq_core::oracle::{soundness_report, RunConfig};
use heq_core::program::parse_program;
use heq_core::subsume::bucket_report;
use heq_core::term::parse_term;
use heq_core::words::{solve_conjugation_pair, Letter, Orient, Relation, SignedLetter, Word};
use heq_core::wp::{
    analyze, post_keys, render_cell, Analysis, PairReport, DEFAULT_MAX_ROUNDS,
};
use heq_core::{Program, Sym, Term};

#[derive(Parser)]
#[command(name = "heq", version, about = "Herbrand equality inference for programs with procedures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Infer all valid one- and two-variable equalities per program point
    Analyze {
        /// Program file
        path: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Restrict the report to one program point
        #[arg(long)]
        point: Option<String>,
        /// Append the compacted cells and their subsumption buckets (text only)
        #[arg(long)]
        explain: bool,
    },
    /// Print each procedure's entry transformer, one row per post-condition
    Summaries {
        /// Program file
        path: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Analyze, then enumerate executions and test every reported invariant
    Check {
        /// Program file
        path: String,
        /// Maximum pending returns during enumeration
        #[arg(long, default_value_t = 4)]
        depth: usize,
        /// Total enumeration step budget
        #[arg(long, default_value_t = 10000)]
        steps: usize,
        /// Comma-separated ground terms non-deterministic values range over
        /// (default: the program's small terms plus a fresh atom)
        #[arg(long, value_delimiter = ',')]
        pool: Option<Vec<String>>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Corrupt the report with a false invariant at this point (testing aid)
        #[arg(long, hide = true)]
        inject: Option<String>,
    },
    /// Factor a ground term over an ad-hoc universe
    Factor {
        /// The term, e.g. f(h(one),two)
        term: String,
        /// Comma-separated protected ground terms
        #[arg(long, value_delimiter = ',')]
        g: Vec<String>,
        /// Comma-separated small ground terms (defaults to the protected set)
        #[arg(long, value_delimiter = ',')]
        s: Option<Vec<String>>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Solve conjugation equations A u A^-1 == B u' B^-1 over the free group
    Words {
        /// Two words u u' for one equation, four for a pair of equations;
        /// each word is space-separated letters, a trailing - inverts: "f g- f-"
        #[arg(num_args = 2..=4)]
        words: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

struct Failure {
    code: u8,
    message: String,
}

fn user(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

fn internal(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn main() -> ExitCode {
    // Die silently on a closed pipe (`heq analyze p | head`) instead of
    // panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
        // The default hook has already printed the panic message.
        Err(_) => ExitCode::from(2),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze { path, format, point, explain } => {
            run_analyze(&path, format, point.as_deref(), explain)
        }
        Command::Summaries { path, format } => run_summaries(&path, format),
        Command::Check { path, depth, steps, pool, format, inject } => {
            run_check(&path, depth, steps, pool, format, inject.as_deref())
        }
        Command::Factor { term, g, s, format } => run_factor(&term, &g, s.as_deref(), format),
        Command::Words { words, format } => run_words(&words, format),
    }
}

fn load_program(path: &str) -> Result<Program, Failure> {
    let src = std::fs::read_to_string(path).map_err(|e| user(format!("{path}: {e}")))?;
    let (prog, diags) = parse_program(&src);
    for d in &diags {
        eprintln!("{path}: {d}");
    }
    let Some(prog) = prog else {
        return Err(user(format!("{path}: aborting on parse errors")));
    };
    if diags.iter().any(|d| d.is_error()) {
        return Err(user(format!("{path}: aborting on parse errors")));
    }
    let errors = prog.validate();
    if !errors.is_empty() {
        for d in &errors {
            eprintln!("{path}: {d}");
        }
        return Err(user(format!("{path}: aborting on structural errors")));
    }
    Ok(prog)
}

fn max_rounds() -> Result<usize, Failure> {
    match std::env::var("HEQ_MAX_ITERS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| user(format!("HEQ_MAX_ITERS: not a number: {v}"))),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_MAX_ROUNDS),
        Err(e) => Err(user(format!("HEQ_MAX_ITERS: {e}"))),
    }
}

fn run_analysis(prog: &Program) -> Result<Analysis, Failure> {
    analyze(prog, max_rounds()?).map_err(|e| internal(e.to_string()))
}

fn run_analyze(
    path: &str,
    format: Format,
    point: Option<&str>,
    explain: bool,
) -> Result<(), Failure> {
    let prog = load_program(path)?;
    let analysis = run_analysis(&prog)?;
    let mut report = analysis.report();
    if let Some(p) = point {
        if !report.points.iter().any(|pt| pt.point == p) {
            return Err(user(format!("unknown point {p}")));
        }
        report.points.retain(|pt| pt.point == p);
    }
    match format {
        Format::Json => println!("{}", report.to_json()),
        Format::Text => {
            print!("{}", report.to_text());
            if explain {
                let keys = post_keys(&prog.var_set());
                println!();
                println!("cells:");
                for pt in &report.points {
                    let tf = &analysis.reaching[&Sym::new(&pt.point)];
                    for key in &keys {
                        let cell = tf.get(key);
                        println!("{} / {key}: {}", pt.point, render_cell(cell));
                        for line in bucket_report(cell, &analysis.ctx) {
                            println!("    {line}");
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn run_summaries(path: &str, format: Format) -> Result<(), Failure> {
    let prog = load_program(path)?;
    let analysis = run_analysis(&prog)?;
    let keys = post_keys(&prog.var_set());
    match format {
        Format::Text => {
            for p in &prog.procs {
                println!("proc {} entry {}:", p.name, p.entry);
                let tf = &analysis.summaries[&p.entry];
                for key in &keys {
                    println!("  {key}: {}", render_cell(tf.get(key)));
                }
            }
        }
        Format::Json => {
            let procs: Vec<_> = prog
                .procs
                .iter()
                .map(|p| {
                    let tf = &analysis.summaries[&p.entry];
                    let rows: BTreeMap<String, String> = keys
                        .iter()
                        .map(|k| (k.to_string(), render_cell(tf.get(k))))
                        .collect();
                    json!({
                        "name": p.name.to_string(),
                        "entry": p.entry.to_string(),
                        "rows": rows,
                    })
                })
                .collect();
            println!("{}", json!({ "procs": procs }));
        }
    }
    Ok(())
}

fn run_check(
    path: &str,
    depth: usize,
    steps: usize,
    pool: Option<Vec<String>>,
    format: Format,
    inject: Option<&str>,
) -> Result<(), Failure> {
    let prog = load_program(path)?;
    let analysis = run_analysis(&prog)?;
    let mut report = analysis.report();
    if let Some(point) = inject {
        let known = prog.procs.iter().any(|p| p.nodes.contains(&Sym::new(point)));
        if !known {
            return Err(user(format!("unknown point {point}")));
        }
        let v = prog
            .vars
            .first()
            .ok_or_else(|| user("cannot inject into a program without variables"))?
            .to_string();
        let pt = report.points.iter_mut().find(|pt| pt.point == point).unwrap();
        // No ground value equals its own doubling, so this claim is false in
        // every state that reaches the point.
        pt.pairs.push(PairReport {
            lhs_template: "_".to_string(),
            lhs_var: v.clone(),
            rhs_template: "f(_,_)".to_string(),
            rhs_var: v,
        });
    }
    let cfg = match pool {
        None => RunConfig::for_program(&prog, depth, steps),
        Some(items) => {
            let mut havoc_pool = BTreeSet::new();
            for item in items.iter().filter(|s| !s.trim().is_empty()) {
                let t = parse_term(item.trim(), &BTreeSet::new())
                    .map_err(|e| user(format!("pool term {item}: {e}")))?;
                if !t.is_ground() {
                    return Err(user(format!("pool term {item} is not ground")));
                }
                havoc_pool.insert(t);
            }
            if havoc_pool.is_empty() {
                return Err(user("the value pool must not be empty"));
            }
            RunConfig { max_call_depth: depth, max_steps: steps, havoc_pool }
        }
    };
    let sound = soundness_report(&prog, &report, &cfg);
    match format {
        Format::Text => {
            println!("checked {} invariant evaluations", sound.checked);
            println!("truncated: {}", sound.truncated);
            for r in &sound.refutations {
                println!("refuted {r}");
            }
            if sound.pass() {
                println!("all reported invariants hold within the bounds");
            }
        }
        Format::Json => {
            let refutations: Vec<_> = sound
                .refutations
                .iter()
                .map(|r| {
                    let state: BTreeMap<String, String> = r
                        .state
                        .iter()
                        .map(|(v, t)| (v.to_string(), t.to_string()))
                        .collect();
                    json!({
                        "point": r.point.to_string(),
                        "invariant": r.invariant.to_string(),
                        "state": state,
                    })
                })
                .collect();
            println!(
                "{}",
                json!({
                    "checked": sound.checked,
                    "truncated": sound.truncated,
                    "refutations": refutations,
                })
            );
        }
    }
    if sound.pass() {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            message: format!("{} invariant(s) refuted", sound.refutations.len()),
        })
    }
}

fn parse_ground_list(items: &[String]) -> Result<Vec<Term>, Failure> {
    items
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let t = parse_term(item.trim(), &BTreeSet::new())
                .map_err(|e| user(format!("term {item}: {e}")))?;
            if !t.is_ground() {
                return Err(user(format!("term {item} is not ground")));
            }
            Ok(t)
        })
        .collect()
}

fn run_factor(
    term: &str,
    g: &[String],
    s: Option<&[String]>,
    format: Format,
) -> Result<(), Failure> {
    let subject = parse_term(term, &BTreeSet::new()).map_err(|e| user(format!("{term}: {e}")))?;
    if !subject.is_ground() {
        return Err(user(format!("{term} is not ground")));
    }
    let g_terms = parse_ground_list(g)?;
    let s_terms = match s {
        Some(items) => parse_ground_list(items)?,
        None => g_terms.clone(),
    };
    let universe = TermUniverse::new(g_terms, s_terms);
    let f = factorize(&subject, &universe).map_err(|e| user(e.to_string()))?;
    let factors: Vec<String> = decompose(&f.prefix).iter().map(|m| m.to_string()).collect();
    match format {
        Format::Text => {
            let mut words = factors.clone();
            words.push(f.tail.to_string());
            println!("{term} = {}", words.join(" "));
        }
        Format::Json => println!(
            "{}",
            json!({
                "term": term,
                "factors": factors,
                "tail": f.tail.to_string(),
            })
        ),
    }
    Ok(())
}

struct Letters {
    names: Vec<String>,
}

impl Letters {
    fn intern(&mut self, name: &str) -> Letter {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return Letter(i as u32);
        }
        self.names.push(name.to_string());
        Letter((self.names.len() - 1) as u32)
    }

    fn show(&self, w: &Word) -> String {
        if w.is_empty() {
            return "1".to_string();
        }
        w.letters()
            .iter()
            .map(|l| {
                let name = &self.names[l.letter.0 as usize];
                if l.positive {
                    name.clone()
                } else {
                    format!("{name}-")
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn parse_word(spec: &str, letters: &mut Letters) -> Result<Word, Failure> {
    let mut out = Vec::new();
    for tok in spec.split_whitespace() {
        let (name, positive) = match tok.strip_suffix('-') {
            Some(base) => (base, false),
            None => (tok, true),
        };
        if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(user(format!("bad letter {tok}")));
        }
        let letter = letters.intern(name);
        out.push(SignedLetter { letter, positive });
    }
    Ok(Word::new(out))
}

fn run_words(specs: &[String], format: Format) -> Result<(), Failure> {
    if specs.len() != 2 && specs.len() != 4 {
        return Err(user("expected two words (one equation) or four (a pair)"));
    }
    let mut letters = Letters { names: Vec::new() };
    let mut ws = Vec::new();
    for spec in specs {
        ws.push(parse_word(spec, &mut letters)?);
    }
    for pair in ws.chunks(2) {
        if pair[0].balance() != pair[1].balance() {
            return Err(user(format!(
                "the sides of an equation must have equal balance: {} vs {}",
                letters.show(&pair[0]),
                letters.show(&pair[1])
            )));
        }
        for w in pair {
            if !w.non_negative() {
                return Err(user(format!(
                    "word {} dips below zero balance",
                    letters.show(w)
                )));
            }
        }
        if pair[0].balance() < 0 {
            return Err(user("equation balances must be non-negative"));
        }
    }
    let empty = Word::empty();
    let rel = if ws.len() == 2 {
        solve_conjugation_pair((&ws[0], &ws[1]), (&empty, &empty))
    } else {
        solve_conjugation_pair((&ws[0], &ws[1]), (&ws[2], &ws[3]))
    };
    let text = match &rel {
        Relation::Trivial => "every pair (A, B) satisfies the system".to_string(),
        Relation::Contradiction => "no pair (A, B) satisfies the system".to_string(),
        Relation::Solved { orient: Orient::LeftTimes, w } if w.is_empty() => {
            "A == B".to_string()
        }
        Relation::Solved { orient: Orient::LeftTimes, w } => {
            format!("A {} == B", letters.show(w))
        }
        Relation::Solved { orient: Orient::RightTimes, w } => {
            format!("A == B {}", letters.show(w))
        }
        Relation::Conjugation { u, u_prime } => format!(
            "A ({}) A- == B ({}) B-",
            letters.show(u),
            letters.show(u_prime)
        ),
    };
    match format {
        Format::Text => println!("{text}"),
        Format::Json => {
            let kind = match &rel {
                Relation::Trivial => "trivial",
                Relation::Contradiction => "contradiction",
                Relation::Solved { .. } => "solved",
                Relation::Conjugation { .. } => "conjugation",
            };
            println!("{}", json!({ "kind": kind, "relation": text }));
        }
    }
    Ok(())
}
