//! Expression graphs: a topologically ordered node list where every node's
//! inputs precede it. Terminals (the input matrix, parameters, constants)
//! are interned, so identical literals share one node.

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueType {
    Scalar,
    Matrix,
}

/// The closed primitive set. Every op has a forward rule and a
/// vector-Jacobian product rule in `eval`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    /// The deformation-gradient input (matrix).
    InputF,
    /// A declared parameter, by index (scalar).
    Param(usize),
    /// A literal (scalar). Constants never receive gradients.
    Constant(f64),

    // Arithmetic. Add/Sub/Neg work on two scalars or two matrices;
    // Mul and Div are scalar-only. Scalar-matrix products use Scale,
    // matrix-matrix products use MatMul.
    Add,
    Sub,
    Mul,
    Div,
    Neg,

    // Matrix structure.
    MatMul,
    Transpose,
    Inverse,
    Det,
    Trace,
    Identity,
    /// scalar × matrix; the scalar is always the first argument.
    Scale,

    // Scalar analytic functions.
    Exp,
    Log,
    Sqrt,
    Tanh,
    Sigmoid,

    // Piecewise ops; these extend elementwise to matrices, with scalars
    // broadcast.
    Relu,
    Min,
    Max,
    Clamp,
    Pow,

    // Decompositions. `PolarR`/`PolarS` are the factors of F = R·S;
    // `SymEigvals` yields the eigenvalues of the symmetrized input as a
    // diagonal matrix, sorted descending; `SymReconstruct(A, L)` rebuilds
    // Q·diag(L)·Qᵀ using the eigenvectors of sym(A) and the diagonal of L.
    PolarR,
    PolarS,
    SymEigvals,
    SymReconstruct,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExprNode {
    pub op: Op,
    pub args: Vec<NodeId>,
    pub ty: ValueType,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExprGraph {
    pub nodes: Vec<ExprNode>,
    pub output: NodeId,
}

impl ExprGraph {
    pub fn node(&self, id: NodeId) -> &ExprNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Validates the topological invariant: every argument index precedes
    /// its user. Parser output always satisfies this; generators use it
    /// as a sanity check.
    pub fn is_topologically_ordered(&self) -> bool {
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.args.iter().all(|&a| a < i))
    }
}
