//! Forward evaluation and reverse-mode differentiation of expression graphs.
//!
//! Both passes are pure and sequential; identical inputs produce bit-identical
//! outputs. The reverse pass implements one vector-Jacobian product rule per
//! primitive, including the matrix-decomposition adjoints, and reports
//! numeric-domain failures instead of returning NaN.

use crate::linalg::{polar, reconstruct, sym_eig, Mat};

use super::graph::{NodeId, Op, ValueType};
use super::LawProgram;

/// Determinant magnitude below which inversion (and the polar rotation
/// factor, which inverts the stretch) is refused.
pub const SINGULAR_EPS: f64 = 1e-12;

/// Eigenvalue gaps below this are clamped sign-preserving in the
/// reconstruction adjoint instead of erroring.
pub const GAP_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("non-finite value at node {node}")]
    NonFiniteResult { node: NodeId },
    #[error("singular matrix at node {node}")]
    SingularMatrix { node: NodeId },
    #[error("degenerate decomposition at node {node}")]
    DegenerateDecomposition { node: NodeId },
}

#[derive(Clone, Copy, Debug)]
enum Value {
    Scalar(f64),
    Matrix(Mat),
}

impl Value {
    fn as_scalar(&self) -> f64 {
        match self {
            Value::Scalar(x) => *x,
            Value::Matrix(_) => unreachable!("typecheck guarantees scalar"),
        }
    }

    fn as_matrix(&self) -> Mat {
        match self {
            Value::Matrix(m) => *m,
            Value::Scalar(_) => unreachable!("typecheck guarantees matrix"),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Value::Scalar(x) => x.is_finite(),
            Value::Matrix(m) => m.is_finite(),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise select for min/max; ties go to the first operand.
fn pick_first(a: f64, b: f64, is_min: bool) -> bool {
    if is_min {
        a <= b
    } else {
        a >= b
    }
}

fn forward_values(program: &LawProgram, f: &Mat, theta: &[f64]) -> Result<Vec<Value>, EvalError> {
    assert_eq!(theta.len(), program.params.len(), "theta length must match param count");
    let dim = f.dim;
    let g = &program.body;
    let mut vals: Vec<Value> = Vec::with_capacity(g.len());

    for (id, node) in g.nodes.iter().enumerate() {
        let s = |i: usize| vals[node.args[i]].as_scalar();
        let m = |i: usize| vals[node.args[i]].as_matrix();
        let v = match node.op {
            Op::InputF => Value::Matrix(*f),
            Op::Param(i) => Value::Scalar(theta[i]),
            Op::Constant(c) => Value::Scalar(c),
            Op::Add => match node.ty {
                ValueType::Scalar => Value::Scalar(s(0) + s(1)),
                ValueType::Matrix => Value::Matrix(m(0).add(&m(1))),
            },
            Op::Sub => match node.ty {
                ValueType::Scalar => Value::Scalar(s(0) - s(1)),
                ValueType::Matrix => Value::Matrix(m(0).sub(&m(1))),
            },
            Op::Mul => Value::Scalar(s(0) * s(1)),
            Op::Div => Value::Scalar(s(0) / s(1)),
            Op::Neg => match node.ty {
                ValueType::Scalar => Value::Scalar(-s(0)),
                ValueType::Matrix => Value::Matrix(m(0).scale(-1.0)),
            },
            Op::MatMul => Value::Matrix(m(0).matmul(&m(1))),
            Op::Transpose => Value::Matrix(m(0).transpose()),
            Op::Inverse => {
                let a = m(0);
                if a.det().abs() < SINGULAR_EPS {
                    return Err(EvalError::SingularMatrix { node: id });
                }
                Value::Matrix(a.inverse())
            }
            Op::Det => Value::Scalar(m(0).det()),
            Op::Trace => Value::Scalar(m(0).trace()),
            Op::Identity => Value::Matrix(Mat::identity(dim)),
            Op::Scale => Value::Matrix(m(1).scale(s(0))),
            Op::Exp => Value::Scalar(s(0).exp()),
            Op::Log => Value::Scalar(s(0).ln()),
            Op::Sqrt => Value::Scalar(s(0).sqrt()),
            Op::Tanh => Value::Scalar(s(0).tanh()),
            Op::Sigmoid => Value::Scalar(sigmoid(s(0))),
            Op::Relu => match node.ty {
                ValueType::Scalar => Value::Scalar(s(0).max(0.0)),
                ValueType::Matrix => {
                    let mut a = m(0);
                    for k in 0..dim * dim {
                        a.m[k] = a.m[k].max(0.0);
                    }
                    Value::Matrix(a)
                }
            },
            Op::Min | Op::Max => {
                let is_min = node.op == Op::Min;
                match (&vals[node.args[0]], &vals[node.args[1]]) {
                    (Value::Scalar(a), Value::Scalar(b)) => {
                        Value::Scalar(if pick_first(*a, *b, is_min) { *a } else { *b })
                    }
                    (a, b) => {
                        let mut r = Mat::zero(dim);
                        for k in 0..dim * dim {
                            let av = entry(a, k);
                            let bv = entry(b, k);
                            r.m[k] = if pick_first(av, bv, is_min) { av } else { bv };
                        }
                        Value::Matrix(r)
                    }
                }
            }
            Op::Clamp => {
                let lo = s(1);
                let hi = s(2);
                match node.ty {
                    ValueType::Scalar => Value::Scalar(s(0).max(lo).min(hi)),
                    ValueType::Matrix => {
                        let mut a = m(0);
                        for k in 0..dim * dim {
                            a.m[k] = a.m[k].max(lo).min(hi);
                        }
                        Value::Matrix(a)
                    }
                }
            }
            Op::Pow => Value::Scalar(s(0).powf(s(1))),
            Op::PolarR => {
                let a = m(0);
                if a.det().abs() < SINGULAR_EPS {
                    return Err(EvalError::SingularMatrix { node: id });
                }
                Value::Matrix(polar(&a).r)
            }
            Op::PolarS => Value::Matrix(polar(&m(0)).s),
            Op::SymEigvals => {
                let eig = sym_eig(&m(0));
                Value::Matrix(Mat::diag(dim, &eig.lambda[..dim]))
            }
            Op::SymReconstruct => {
                let eig = sym_eig(&m(0));
                let l = m(1);
                let mut d = [0.0; 3];
                for i in 0..dim {
                    d[i] = l.get(i, i);
                }
                Value::Matrix(reconstruct(&eig.q, &d, dim))
            }
        };
        if !v.is_finite() {
            return Err(EvalError::NonFiniteResult { node: id });
        }
        vals.push(v);
    }
    Ok(vals)
}

#[inline]
fn entry(v: &Value, k: usize) -> f64 {
    match v {
        Value::Scalar(x) => *x,
        Value::Matrix(m) => m.m[k],
    }
}

/// Evaluates the law at `f` with parameter vector `theta`.
///
/// Elastic laws return the Kirchhoff stress; plastic laws return the
/// corrected deformation gradient. Non-finite intermediates are reported
/// with the offending node index rather than propagated.
pub fn eval_forward(program: &LawProgram, f: &Mat, theta: &[f64]) -> Result<Mat, EvalError> {
    let vals = forward_values(program, f, theta)?;
    Ok(vals[program.body.output].as_matrix())
}

/// Reverse-mode sweep: returns the vector-Jacobian products of
/// ⟨cotangent, output⟩ with respect to F and theta.
pub fn eval_vjp(
    program: &LawProgram,
    f: &Mat,
    theta: &[f64],
    cotangent: &Mat,
) -> Result<(Mat, Vec<f64>), EvalError> {
    let dim = f.dim;
    let g = &program.body;
    let vals = forward_values(program, f, theta)?;

    let mut adj: Vec<Value> = g
        .nodes
        .iter()
        .map(|n| match n.ty {
            ValueType::Scalar => Value::Scalar(0.0),
            ValueType::Matrix => Value::Matrix(Mat::zero(dim)),
        })
        .collect();
    adj[g.output] = Value::Matrix(*cotangent);

    for id in (0..g.len()).rev() {
        let node = &g.nodes[id];
        // Constants never receive gradients; skipping them also keeps
        // domain-sensitive terms (e.g. ln of a negative pow base) from
        // poisoning unused adjoints.
        let add_s = |adj: &mut Vec<Value>, target: NodeId, d: f64| {
            if matches!(g.nodes[target].op, Op::Constant(_)) {
                return;
            }
            if let Value::Scalar(x) = &mut adj[target] {
                *x += d;
            }
        };
        let add_m = |adj: &mut Vec<Value>, target: NodeId, d: &Mat| {
            if let Value::Matrix(x) = &mut adj[target] {
                *x = x.add(d);
            }
        };

        let w = adj[id];
        let s = |i: usize| vals[node.args[i]].as_scalar();
        let m = |i: usize| vals[node.args[i]].as_matrix();

        match node.op {
            Op::InputF | Op::Param(_) | Op::Constant(_) | Op::Identity => {}
            Op::Add => match w {
                Value::Scalar(w) => {
                    add_s(&mut adj, node.args[0], w);
                    add_s(&mut adj, node.args[1], w);
                }
                Value::Matrix(w) => {
                    add_m(&mut adj, node.args[0], &w);
                    add_m(&mut adj, node.args[1], &w);
                }
            },
            Op::Sub => match w {
                Value::Scalar(w) => {
                    add_s(&mut adj, node.args[0], w);
                    add_s(&mut adj, node.args[1], -w);
                }
                Value::Matrix(w) => {
                    add_m(&mut adj, node.args[0], &w);
                    add_m(&mut adj, node.args[1], &w.scale(-1.0));
                }
            },
            Op::Mul => {
                let w = w.as_scalar();
                add_s(&mut adj, node.args[0], w * s(1));
                add_s(&mut adj, node.args[1], w * s(0));
            }
            Op::Div => {
                let w = w.as_scalar();
                let b = s(1);
                add_s(&mut adj, node.args[0], w / b);
                add_s(&mut adj, node.args[1], -w * s(0) / (b * b));
            }
            Op::Neg => match w {
                Value::Scalar(w) => add_s(&mut adj, node.args[0], -w),
                Value::Matrix(w) => add_m(&mut adj, node.args[0], &w.scale(-1.0)),
            },
            Op::MatMul => {
                let w = w.as_matrix();
                add_m(&mut adj, node.args[0], &w.matmul(&m(1).transpose()));
                add_m(&mut adj, node.args[1], &m(0).transpose().matmul(&w));
            }
            Op::Transpose => {
                let w = w.as_matrix();
                add_m(&mut adj, node.args[0], &w.transpose());
            }
            Op::Inverse => {
                // d(A⁻¹) adjoint: −A⁻ᵀ W A⁻ᵀ, using the stored inverse.
                let w = w.as_matrix();
                let y = vals[id].as_matrix();
                let yt = y.transpose();
                add_m(&mut adj, node.args[0], &yt.matmul(&w).matmul(&yt).scale(-1.0));
            }
            Op::Det => {
                let w = w.as_scalar();
                add_m(&mut adj, node.args[0], &m(0).cofactor().scale(w));
            }
            Op::Trace => {
                let w = w.as_scalar();
                add_m(&mut adj, node.args[0], &Mat::identity(dim).scale(w));
            }
            Op::Scale => {
                let w = w.as_matrix();
                add_s(&mut adj, node.args[0], w.inner(&m(1)));
                add_m(&mut adj, node.args[1], &w.scale(s(0)));
            }
            Op::Exp => {
                let w = w.as_scalar();
                add_s(&mut adj, node.args[0], w * vals[id].as_scalar());
            }
            Op::Log => {
                let w = w.as_scalar();
                add_s(&mut adj, node.args[0], w / s(0));
            }
            Op::Sqrt => {
                let w = w.as_scalar();
                add_s(&mut adj, node.args[0], w / (2.0 * vals[id].as_scalar()));
            }
            Op::Tanh => {
                let w = w.as_scalar();
                let t = vals[id].as_scalar();
                add_s(&mut adj, node.args[0], w * (1.0 - t * t));
            }
            Op::Sigmoid => {
                let w = w.as_scalar();
                let sg = vals[id].as_scalar();
                add_s(&mut adj, node.args[0], w * sg * (1.0 - sg));
            }
            Op::Relu => match w {
                Value::Scalar(w) => {
                    if s(0) > 0.0 {
                        add_s(&mut adj, node.args[0], w);
                    }
                }
                Value::Matrix(w) => {
                    let a = m(0);
                    let mut d = Mat::zero(dim);
                    for k in 0..dim * dim {
                        if a.m[k] > 0.0 {
                            d.m[k] = w.m[k];
                        }
                    }
                    add_m(&mut adj, node.args[0], &d);
                }
            },
            Op::Min | Op::Max => {
                let is_min = node.op == Op::Min;
                let (va, vb) = (vals[node.args[0]], vals[node.args[1]]);
                match w {
                    Value::Scalar(w) => {
                        if pick_first(va.as_scalar(), vb.as_scalar(), is_min) {
                            add_s(&mut adj, node.args[0], w);
                        } else {
                            add_s(&mut adj, node.args[1], w);
                        }
                    }
                    Value::Matrix(w) => {
                        let mut da = Mat::zero(dim);
                        let mut db = Mat::zero(dim);
                        let mut sa = 0.0;
                        let mut sb = 0.0;
                        for k in 0..dim * dim {
                            let first = pick_first(entry(&va, k), entry(&vb, k), is_min);
                            if first {
                                da.m[k] = w.m[k];
                                sa += w.m[k];
                            } else {
                                db.m[k] = w.m[k];
                                sb += w.m[k];
                            }
                        }
                        match va {
                            Value::Scalar(_) => add_s(&mut adj, node.args[0], sa),
                            Value::Matrix(_) => add_m(&mut adj, node.args[0], &da),
                        }
                        match vb {
                            Value::Scalar(_) => add_s(&mut adj, node.args[1], sb),
                            Value::Matrix(_) => add_m(&mut adj, node.args[1], &db),
                        }
                    }
                }
            }
            Op::Clamp => {
                let lo = s(1);
                let hi = s(2);
                match w {
                    Value::Scalar(w) => {
                        let x = s(0);
                        if x < lo {
                            add_s(&mut adj, node.args[1], w);
                        } else if x > hi {
                            add_s(&mut adj, node.args[2], w);
                        } else {
                            add_s(&mut adj, node.args[0], w);
                        }
                    }
                    Value::Matrix(w) => {
                        let a = m(0);
                        let mut dx = Mat::zero(dim);
                        let mut dlo = 0.0;
                        let mut dhi = 0.0;
                        for k in 0..dim * dim {
                            if a.m[k] < lo {
                                dlo += w.m[k];
                            } else if a.m[k] > hi {
                                dhi += w.m[k];
                            } else {
                                dx.m[k] = w.m[k];
                            }
                        }
                        add_m(&mut adj, node.args[0], &dx);
                        add_s(&mut adj, node.args[1], dlo);
                        add_s(&mut adj, node.args[2], dhi);
                    }
                }
            }
            Op::Pow => {
                let w = w.as_scalar();
                let (x, y) = (s(0), s(1));
                // x^0 has zero slope in x; avoid 0·inf at x = 0.
                let dx = if y == 0.0 { 0.0 } else { w * y * x.powf(y - 1.0) };
                add_s(&mut adj, node.args[0], dx);
                // d/dy = x^y ln x; only evaluated when y can carry a
                // gradient (add_s drops constants before this is used,
                // but ln(x) for x <= 0 must not be computed eagerly).
                if !matches!(g.nodes[node.args[1]].op, Op::Constant(_)) {
                    add_s(&mut adj, node.args[1], w * vals[id].as_scalar() * x.ln());
                }
            }
            Op::PolarR => {
                let w = w.as_matrix();
                let a = m(0);
                let p = polar(&a);
                let mut inv_sigma = [0.0; 3];
                for i in 0..dim {
                    inv_sigma[i] = 1.0 / p.sigma[i];
                }
                let s_inv = reconstruct(&p.q, &inv_sigma, dim);
                // R = F S⁻¹: direct term plus the chain through S.
                add_m(&mut adj, node.args[0], &w.matmul(&s_inv));
                let s_bar = p.r.transpose().matmul(&w).matmul(&s_inv).scale(-1.0);
                let f_bar = sqrt_chain(&a, &p, &s_bar, id)?;
                add_m(&mut adj, node.args[0], &f_bar);
            }
            Op::PolarS => {
                let w = w.as_matrix();
                let a = m(0);
                let p = polar(&a);
                let f_bar = sqrt_chain(&a, &p, &w, id)?;
                add_m(&mut adj, node.args[0], &f_bar);
            }
            Op::SymEigvals => {
                let w = w.as_matrix();
                let eig = sym_eig(&m(0));
                let mut lam_bar = [0.0; 3];
                for i in 0..dim {
                    lam_bar[i] = w.get(i, i);
                }
                add_m(&mut adj, node.args[0], &reconstruct(&eig.q, &lam_bar, dim));
            }
            Op::SymReconstruct => {
                let w = w.as_matrix();
                let eig = sym_eig(&m(0));
                let l = m(1);
                // G = Qᵀ W Q in the eigenbasis of sym(A).
                let gq = eig.q.transpose().matmul(&w).matmul(&eig.q);
                let mut l_bar = Mat::zero(dim);
                for i in 0..dim {
                    l_bar.set(i, i, gq.get(i, i));
                }
                add_m(&mut adj, node.args[1], &l_bar);
                let mut wmat = Mat::zero(dim);
                for i in 0..dim {
                    for j in 0..dim {
                        if i == j {
                            continue;
                        }
                        let gap = clamp_gap(eig.lambda[j] - eig.lambda[i]);
                        let num = l.get(j, j) - l.get(i, i);
                        wmat.set(i, j, 0.5 * (gq.get(i, j) + gq.get(j, i)) * num / gap);
                    }
                }
                let a_bar = eig.q.matmul(&wmat).matmul(&eig.q.transpose());
                add_m(&mut adj, node.args[0], &a_bar);
            }
        }
    }

    // Non-finite adjoints anywhere mean the gradient is unusable.
    for (id, a) in adj.iter().enumerate() {
        if !a.is_finite() {
            return Err(EvalError::NonFiniteResult { node: id });
        }
    }

    let df = g
        .nodes
        .iter()
        .enumerate()
        .find(|(_, n)| n.op == Op::InputF)
        .map(|(id, _)| adj[id].as_matrix())
        .unwrap_or_else(|| Mat::zero(dim));
    let mut dtheta = vec![0.0; theta.len()];
    for (id, n) in g.nodes.iter().enumerate() {
        if let Op::Param(i) = n.op {
            dtheta[i] = adj[id].as_scalar();
        }
    }
    Ok((df, dtheta))
}

/// Sign-preserving clamp of eigenvalue gaps used by the reconstruction
/// adjoint; gaps below `GAP_EPS` are widened instead of erroring.
fn clamp_gap(gap: f64) -> f64 {
    if gap.abs() >= GAP_EPS {
        gap
    } else if gap < 0.0 {
        -GAP_EPS
    } else {
        GAP_EPS
    }
}

/// Adjoint of S = (FᵀF)^{1/2}: maps a cotangent on S to a cotangent on F
/// through the eigendecomposition of C = FᵀF (Daleckii–Krein divided
/// differences of the square root).
fn sqrt_chain(f: &Mat, p: &crate::linalg::Polar, s_bar: &Mat, node: NodeId) -> Result<Mat, EvalError> {
    let dim = f.dim;
    let sym = s_bar.sym();
    let gq = p.q.transpose().matmul(&sym).matmul(&p.q);
    let mut kg = Mat::zero(dim);
    for i in 0..dim {
        for j in 0..dim {
            let denom = p.sigma[i] + p.sigma[j];
            if denom < SINGULAR_EPS {
                return Err(EvalError::DegenerateDecomposition { node });
            }
            kg.set(i, j, gq.get(i, j) / denom);
        }
    }
    let c_bar = p.q.matmul(&kg).matmul(&p.q.transpose());
    Ok(f.matmul(&c_bar).scale(2.0))
}
