//! Inference of Herbrand equalities between the variables of programs with
//! procedures, where every assignment mentions at most one variable on its
//! right-hand side.
//!
//! The analysis computes weakest pre-conditions of generic post-conditions
//! `A·x == B·y` and `A·x == C` by solving a greatest-fixpoint constraint
//! system over procedure summaries, and extracts all valid one- and
//! two-variable equalities from the result. Supporting algebra lives in the
//! lower modules: unique factorization of ground terms relative to the
//! program's term universe, and word equations over the free group generated
//! by irreducible templates.

pub mod eq;
pub mod factor;
pub mod oracle;
pub mod program;
pub mod subsume;
pub mod term;
pub mod words;
pub mod wp;

pub use eq::{Conjunction, CtxVar, Equality, Side, SolutionPair, SystemSolutions};
pub use factor::{Factorization, Smallness, TermUniverse};
pub use program::{DerivedSets, Diagnostic, Procedure, Program, Severity, Stmt};
pub use term::{MarkerSolution, Path, Signature, Sym, Template, Term};
pub use words::{Letter, LetterTable, Relation, Word};
pub use wp::{PointReport, PostKey, Report, SolveError, Transformer};
