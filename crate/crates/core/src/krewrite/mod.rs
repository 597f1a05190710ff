//! Derivative rules, rewrite identities and replayable derivation scripts.
//!
//! Fields act on kernels by the product rule, each atom differentiated by a
//! rule of the fixed [`rule_base`]. Scripts (`*.hlk`) transcribe derivations
//! as a sequence of field applications, monomial substitutions and imports of
//! earlier results; replay checks that what is left over has exactly the
//! claimed kernel class.

mod field;
mod perm;
mod rules;
mod script;

use thiserror::Error;

use crate::kexpr::ParseError;

pub use field::{apply_field, FieldKind, FieldResult, FieldSymbol};
pub use perm::{epsilon_sign, PermSign};
pub use rules::{
    apply_substitution, lookup, rule_base, RewriteRule, RulePattern, Selection, Substitution, RULE_BASE_VERSION,
};
pub use script::{replay, Derivation, Instance, Replayer, Script, ScriptBook, StepRecord, STEP_LIMIT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("rule `{0}` is a field rule, not a substitution")]
    NotSubstitution(String),
    #[error("rule `{0}` needs an index, e.g. `{0}[k]`")]
    MissingIndex(String),
    #[error("rule `{0}` takes no index")]
    UnexpectedIndex(String),
    #[error("bad field `{0}`")]
    BadField(String),
    #[error("underived atom `{atom}` under field {field}")]
    UnderivedAtom { field: String, atom: String },
    #[error("rule `{rule}` does not match {target}")]
    NoMatch { rule: String, target: String },
    #[error(transparent)]
    Parse(ParseError),
    #[error("unknown script `{0}`")]
    UnknownScript(String),
    #[error("script {script} line {line}: {message}")]
    Script { script: String, line: usize, message: String },
    #[error("script {script} step {step} (line {line}): {message}")]
    Step { script: String, step: usize, line: usize, message: String },
    #[error("{0}")]
    Io(String),
}
