use std::collections::BTreeSet;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use heq_core::factor::{factorize, TermUniverse};
use heq_core::program::parse_program;
use heq_core::term::parse_term;
use heq_core::words::{solve_conjugation_pair, Letter, SignedLetter, Word};
use heq_core::wp::{analyze, DEFAULT_MAX_ROUNDS};
use heq_core::{Program, Term};

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

const TERNARY: &str = "\
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

fn ground(src: &str) -> Term {
    parse_term(src, &BTreeSet::new()).unwrap()
}

fn program(src: &str) -> Program {
    let (prog, _) = parse_program(src);
    prog.unwrap()
}

fn bench_factorize(c: &mut Criterion) {
    let universe = TermUniverse::new(
        [ground("h(one)"), ground("one")],
        [ground("h(one)"), ground("one")],
    );
    let t = ground("f(h(f(two,h(one))),h(f(two,h(one))))");
    c.bench_function("factorize", |b| {
        b.iter(|| factorize(black_box(&t), &universe).unwrap())
    });
}

fn bench_conjugation(c: &mut Criterion) {
    let letter = |i, positive| SignedLetter {
        letter: Letter(i),
        positive,
    };
    let u = Word::new([letter(0, true), letter(0, true), letter(1, false), letter(0, false)]);
    let u2 = Word::new([letter(0, true), letter(1, false)]);
    let v = Word::new([letter(0, true), letter(1, true)]);
    let v2 = Word::new([letter(1, true), letter(0, true)]);
    c.bench_function("conjugation_pair", |b| {
        b.iter(|| solve_conjugation_pair((black_box(&u), &u2), (&v, &v2)))
    });
}

fn bench_analyze(c: &mut Criterion) {
    let fig1 = program(FIG1);
    let ternary = program(TERNARY);
    c.bench_function("analyze_recursive_doubling", |b| {
        b.iter(|| analyze(black_box(&fig1), DEFAULT_MAX_ROUNDS).unwrap())
    });
    c.bench_function("analyze_recursive_ternary", |b| {
        b.iter(|| analyze(black_box(&ternary), DEFAULT_MAX_ROUNDS).unwrap())
    });
}

criterion_group!(benches, bench_factorize, bench_conjugation, bench_analyze);
criterion_main!(benches);
