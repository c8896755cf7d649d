//! The constitutive-law expression language: parsing, typechecking,
//! evaluation, and reverse-mode differentiation.
//!
//! A law is a small pure function from a deformation gradient `F` (a D×D
//! matrix) to either a Kirchhoff stress (elastic laws) or a corrected
//! deformation gradient (plastic laws). Laws declare named continuous
//! parameters with default values; only those parameters receive gradients.
//! Constants in the body are fixed.
//!
//! The grammar is documented in `docs/grammar.md` at the repository root.

mod eval;
pub mod fixtures;
pub mod generate;
mod graph;
mod parser;
mod pretty;
mod token;

pub use eval::{eval_forward, eval_vjp, EvalError};
pub use graph::{ExprGraph, ExprNode, NodeId, Op, ValueType};
pub use parser::{parse_law, ParseError};
pub use pretty::pretty_print;

/// Whether a law maps F to a stress tensor or to a corrected F.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LawKind {
    Elastic,
    Plastic,
}

impl LawKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            LawKind::Elastic => "elastic",
            LawKind::Plastic => "plastic",
        }
    }
}

/// A declared continuous parameter with its default (initial) value.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub init: f64,
}

/// A parsed, typechecked law: parameter declarations plus an expression graph.
#[derive(Clone, Debug)]
pub struct LawProgram {
    pub kind: LawKind,
    pub name: String,
    pub params: Vec<ParamDecl>,
    pub body: ExprGraph,
    pub source_text: String,
}

impl LawProgram {
    /// Structural equality: kind, name, parameters, and graph. The original
    /// source text is deliberately excluded so that reformatting (e.g. a
    /// pretty-print round trip) compares equal.
    pub fn structurally_eq(&self, other: &LawProgram) -> bool {
        self.kind == other.kind
            && self.name == other.name
            && self.params == other.params
            && self.body == other.body
    }

    pub fn param_defaults(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.init).collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// A copy with the parameter defaults replaced (in declaration order)
    /// and the source text regenerated to match.
    pub fn with_defaults(&self, values: &[f64]) -> LawProgram {
        assert_eq!(values.len(), self.params.len());
        let mut law = self.clone();
        for (p, v) in law.params.iter_mut().zip(values) {
            p.init = *v;
        }
        law.source_text = pretty_print(&law);
        law
    }
}
