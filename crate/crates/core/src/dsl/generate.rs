//! Seeded random law generator.
//!
//! Used by the `gradcheck --random` path and the round-trip/gradient
//! property suites. Programs are emitted as source text and re-parsed, so
//! everything the generator produces is by construction well-typed. The
//! production weights lean toward numerically tame expressions (guarded
//! inverses, bounded constants) so that most programs evaluate finitely
//! near F = I.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{parse_law, LawProgram};

pub fn random_program(seed: u64, n_ops: usize) -> LawProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_params = rng.gen_range(0..=3);

    let mut src = String::new();
    let kind = if rng.gen_bool(0.5) { "elastic" } else { "plastic" };
    src.push_str(&format!("law {kind} \"generated_{seed}\" {{\n  params {{\n"));
    let mut scalars: Vec<String> = Vec::new();
    for i in 0..n_params {
        let name = format!("p{i}");
        src.push_str(&format!("    {} = {:?};\n", name, round3(rng.gen_range(-1.5..1.5))));
        scalars.push(name);
    }
    src.push_str("  }\n  forward(F: mat) -> mat {\n");

    let mut matrices: Vec<String> = vec!["F".to_string()];
    let mut next_id = 0usize;

    for _ in 0..n_ops {
        let make_matrix = rng.gen_bool(0.45);
        let name = format!("x{next_id}");
        next_id += 1;
        let expr = if make_matrix {
            let expr = matrix_production(&mut rng, &scalars, &matrices);
            matrices.push(name.clone());
            expr
        } else {
            let expr = scalar_production(&mut rng, &scalars, &matrices);
            scalars.push(name.clone());
            expr
        };
        src.push_str(&format!("    let {name} = {expr};\n"));
    }

    let ret = matrices.choose(&mut rng).unwrap().clone();
    src.push_str(&format!("    return {ret};\n  }}\n}}\n"));
    parse_law(&src).expect("generated program parses")
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn lit(rng: &mut ChaCha8Rng) -> String {
    format!("{:?}", round3(rng.gen_range(-2.0..2.0)))
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [String]) -> &'a str {
    pool.choose(rng).map(|s| s.as_str()).unwrap_or("F")
}

fn scalar_atom(rng: &mut ChaCha8Rng, scalars: &[String]) -> String {
    if scalars.is_empty() || rng.gen_bool(0.3) {
        lit(rng)
    } else {
        pick(rng, scalars).to_string()
    }
}

fn scalar_production(rng: &mut ChaCha8Rng, scalars: &[String], matrices: &[String]) -> String {
    let a = scalar_atom(rng, scalars);
    let b = scalar_atom(rng, scalars);
    let m = pick(rng, matrices);
    match rng.gen_range(0..12) {
        0 => format!("{a} + {b}"),
        1 => format!("{a} - {b}"),
        2 => format!("{a} * {b}"),
        // Keep denominators away from zero.
        3 => format!("{a} / (1.0 + {b} * {b})"),
        4 => format!("tanh({a})"),
        5 => format!("sigmoid({a})"),
        6 => format!("sqrt(0.25 + {a} * {a})"),
        7 => format!("log(0.5 + {a} * {a})"),
        8 => format!("det({m})"),
        9 => format!("trace({m})"),
        10 => format!("min({a}, {b})"),
        _ => {
            let (lo, hi) = ordered_bounds(rng);
            format!("clamp({a}, {lo:?}, {hi:?})")
        }
    }
}

fn ordered_bounds(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let a = round3(rng.gen_range(-1.5..0.0));
    let b = round3(rng.gen_range(0.0..1.5));
    (a, b)
}

fn matrix_production(rng: &mut ChaCha8Rng, scalars: &[String], matrices: &[String]) -> String {
    let a = pick(rng, matrices);
    let b = pick(rng, matrices);
    let s = scalar_atom(rng, scalars);
    match rng.gen_range(0..14) {
        0 => format!("{a} + {b}"),
        1 => format!("{a} - {b}"),
        2 => format!("tanh({s}) * {a}"),
        3 => format!("{a} * {b}"),
        4 => format!("transpose({a})"),
        5 => format!("identity()"),
        // Shifted Gram matrix: symmetric positive definite, safely invertible.
        6 => format!("inverse(0.5 * identity() + {a} * transpose({a}))"),
        7 => format!("relu({a})"),
        8 => format!("min({a}, {b})"),
        9 => format!("max({a}, tanh({s}))"),
        10 => {
            let (lo, hi) = ordered_bounds(rng);
            format!("clamp({a}, {lo:?}, {hi:?})")
        }
        11 => {
            // Keep polar inputs away from singularity.
            if rng.gen_bool(0.5) {
                format!("polar_r(identity() + 0.2 * {a})")
            } else {
                format!("polar_s(identity() + 0.2 * {a})")
            }
        }
        12 => format!("sym_eigvals({a})"),
        _ => format!("sym_reconstruct(identity() + 0.2 * {a}, sym_eigvals({b}))"),
    }
}
