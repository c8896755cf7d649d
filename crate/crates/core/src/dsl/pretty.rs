//! Canonical printer. Every constant and operation node becomes one `let`
//! statement in graph order, so `parse_law(pretty_print(p))` rebuilds the
//! same graph node for node (parameters and the input matrix occupy fixed
//! leading positions). Floats use Rust's shortest round-trip formatting.

use super::graph::{ExprGraph, NodeId, Op};
use super::LawProgram;

pub fn pretty_print(program: &LawProgram) -> String {
    let mut out = String::new();
    out.push_str(&format!("law {} \"{}\" {{\n", program.kind.keyword(), program.name));
    out.push_str("  params {\n");
    for p in &program.params {
        out.push_str(&format!("    {} = {:?};\n", p.name, p.init));
    }
    out.push_str("  }\n");
    out.push_str("  forward(F: mat) -> mat {\n");

    let g = &program.body;
    for (id, node) in g.nodes.iter().enumerate() {
        match node.op {
            Op::InputF | Op::Param(_) => {}
            Op::Constant(c) => {
                out.push_str(&format!("    let v{} = {:?};\n", id, c));
            }
            _ => {
                out.push_str(&format!("    let v{} = {};\n", id, render(program, g, id)));
            }
        }
    }
    out.push_str(&format!("    return {};\n", atom(program, g.output)));
    out.push_str("  }\n}\n");
    out
}

/// How a node is referred to from later expressions.
fn atom(program: &LawProgram, id: NodeId) -> String {
    let node = &program.body.nodes[id];
    match node.op {
        Op::InputF => "F".to_string(),
        Op::Param(i) => program.params[i].name.clone(),
        _ => format!("v{id}"),
    }
}

fn render(program: &LawProgram, g: &ExprGraph, id: NodeId) -> String {
    let node = &g.nodes[id];
    let a = |i: usize| atom(program, node.args[i]);
    match node.op {
        Op::InputF | Op::Param(_) | Op::Constant(_) => atom(program, id),
        Op::Add => format!("{} + {}", a(0), a(1)),
        Op::Sub => format!("{} - {}", a(0), a(1)),
        Op::Mul | Op::Scale | Op::MatMul => format!("{} * {}", a(0), a(1)),
        Op::Div => format!("{} / {}", a(0), a(1)),
        // Parenthesized so a negated literal does not re-fold into a
        // negative constant.
        Op::Neg => format!("-({})", a(0)),
        Op::Transpose => format!("transpose({})", a(0)),
        Op::Inverse => format!("inverse({})", a(0)),
        Op::Det => format!("det({})", a(0)),
        Op::Trace => format!("trace({})", a(0)),
        Op::Identity => "identity()".to_string(),
        Op::Exp => format!("exp({})", a(0)),
        Op::Log => format!("log({})", a(0)),
        Op::Sqrt => format!("sqrt({})", a(0)),
        Op::Tanh => format!("tanh({})", a(0)),
        Op::Sigmoid => format!("sigmoid({})", a(0)),
        Op::Relu => format!("relu({})", a(0)),
        Op::Min => format!("min({}, {})", a(0), a(1)),
        Op::Max => format!("max({}, {})", a(0), a(1)),
        Op::Clamp => format!("clamp({}, {}, {})", a(0), a(1), a(2)),
        Op::Pow => format!("pow({}, {})", a(0), a(1)),
        Op::PolarR => format!("polar_r({})", a(0)),
        Op::PolarS => format!("polar_s({})", a(0)),
        Op::SymEigvals => format!("sym_eigvals({})", a(0)),
        Op::SymReconstruct => format!("sym_reconstruct({}, {})", a(0), a(1)),
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_law;
    use super::*;

    #[test]
    fn zero_law_round_trips() {
        let src = r#"law elastic "zero" { params {} forward(F: mat) -> mat { return 0.0 * F; } }"#;
        let p = parse_law(src).unwrap();
        let printed = pretty_print(&p);
        let q = parse_law(&printed).unwrap();
        assert!(p.structurally_eq(&q), "printed:\n{printed}");
    }

    #[test]
    fn negative_defaults_round_trip() {
        let src = r#"
            law plastic "neg" {
              params { gamma = -0.07; }
              forward(F: mat) -> mat {
                let t = tanh(det(F) - 1.0);
                return F - (gamma * t) * (F - identity());
              }
            }"#;
        let p = parse_law(src).unwrap();
        let q = parse_law(&pretty_print(&p)).unwrap();
        assert!(p.structurally_eq(&q));
    }

    #[test]
    fn explicit_negation_round_trips() {
        let src = r#"law elastic "n" { params {} forward(F: mat) -> mat { let s = -(det(F)); let t = -(1.5); return (s * t) * F; } }"#;
        let p = parse_law(src).unwrap();
        let q = parse_law(&pretty_print(&p)).unwrap();
        assert!(p.structurally_eq(&q));
    }
}
