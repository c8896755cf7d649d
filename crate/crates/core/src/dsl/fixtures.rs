//! Bundled reference laws.
//!
//! These are the regression fixtures for the gradient suites and the raw
//! material for the task catalog: a neo-Hookean elastic law, three plastic
//! correction laws (determinant-driven softening, principal-stretch
//! clamping, volume reset), and a clamped blend correction. Parameter
//! defaults are the tuned values each law ships with.

use super::{parse_law, LawProgram};

/// Neo-Hookean elastic law with log/sigmoid-transformed moduli.
pub const NEO_HOOKEAN: &str = r#"law elastic "neo_hookean" {
  params {
    youngs_modulus_log = 13.03;
    poissons_ratio_sigmoid = -1.99;
  }
  forward(F: mat) -> mat {
    let youngs_modulus = exp(youngs_modulus_log);
    let poissons_ratio = 0.49 * sigmoid(poissons_ratio_sigmoid);
    let mu = youngs_modulus / (2.0 * (1.0 + poissons_ratio));
    let lam = youngs_modulus * poissons_ratio / ((1.0 + poissons_ratio) * (1.0 - 2.0 * poissons_ratio));
    let J = det(F);
    let F_invT = transpose(inverse(F));
    let P_vol = (lam * (J - 1.0)) * F_invT;
    let P_dev = mu * (F - (1.0 / J) * F_invT);
    return P_vol + P_dev * transpose(F);
  }
}
"#;

/// Plastic correction that pulls F toward the identity in proportion to
/// tanh(J − 1): a soft volumetric yield.
pub const DET_TANH_CORRECTION: &str = r#"law plastic "det_tanh_correction" {
  params {
    gamma = -0.07;
  }
  forward(F: mat) -> mat {
    let J = det(F);
    let deviation = tanh(J - 1.0);
    return F - (gamma * deviation) * (F - identity());
  }
}
"#;

/// Granular-style correction: clamp the principal stretches against a
/// hardening-adjusted limit, then restore the original volume.
pub const PRINCIPAL_CLAMP: &str = r#"law plastic "principal_clamp" {
  params {
    elastic_limit = 0.92;
    hardening_factor = 0.1;
  }
  forward(F: mat) -> mat {
    let R = polar_r(F);
    let S = polar_s(F);
    let sig = sym_eigvals(S);
    let strain = relu(sig - elastic_limit * identity());
    let hardening = identity() + hardening_factor * strain;
    let limit = elastic_limit * hardening;
    let clamped = min(sig, limit);
    let Fc = R * sym_reconstruct(S, clamped);
    let ratio = pow(det(F) / det(Fc), 1.0 / 3.0);
    return ratio * Fc;
  }
}
"#;

/// Fluid-style correction: reset F to an isotropic stretch carrying the
/// current volume, with a tunable pull on the deviatoric remainder.
pub const VOLUME_RESET: &str = r#"law plastic "volume_reset" {
  params {
    blend = 0.0;
  }
  forward(F: mat) -> mat {
    let J = det(F);
    let Jc = pow(J, 1.0 / 3.0);
    let vol = Jc * identity();
    let dev = (1.0 / Jc) * F;
    return vol + blend * (identity() - dev);
  }
}
"#;

/// Blended correction with clamped volumetric and deviatoric factors.
pub const CLAMPED_BLEND: &str = r#"law plastic "clamped_blend" {
  params {
    kappa = 0.08;
    mu = 0.28;
  }
  forward(F: mat) -> mat {
    let J = det(F);
    let vol_factor = clamp(kappa * (J - 1.0), 0.0, 1.0);
    let vol_correction = vol_factor * identity();
    let dev = F - (trace(F) / 3.0) * identity();
    let shape_factor = clamp(mu, 0.0, 1.0);
    return F - vol_correction - shape_factor * dev;
  }
}
"#;

/// Small-strain linear elasticity (two log-transformed moduli). The stock
/// starting point for the search tasks.
pub const LINEAR_ELASTIC: &str = r#"law elastic "linear_elastic" {
  params {
    mu_log = 10.4;
    lam_log = 10.4;
  }
  forward(F: mat) -> mat {
    let mu = exp(mu_log);
    let lam = exp(lam_log);
    let strain = 0.5 * (F + transpose(F)) - identity();
    return 2.0 * mu * strain + (lam * trace(strain)) * identity();
  }
}
"#;

/// One-parameter linear law used by hand-checkable gradient tests.
pub const LINEAR_SIMPLE: &str = r#"law elastic "linear_simple" {
  params {
    mu = 1.0;
  }
  forward(F: mat) -> mat {
    return mu * (F + transpose(F) - 2.0 * identity());
  }
}
"#;

/// The minimal well-formed law: zero stress.
pub const ZERO_STRESS: &str = r#"law elastic "zero" {
  params {}
  forward(F: mat) -> mat {
    return 0.0 * F;
  }
}
"#;

/// Identity plastic correction: the purely elastic baseline for tasks that
/// search over plastic laws.
pub const NO_CORRECTION: &str = r#"law plastic "no_correction" {
  params {}
  forward(F: mat) -> mat {
    return F;
  }
}
"#;

fn must_parse(src: &str) -> LawProgram {
    parse_law(src).expect("bundled fixture parses")
}

pub fn neo_hookean() -> LawProgram {
    must_parse(NEO_HOOKEAN)
}

pub fn det_tanh_correction() -> LawProgram {
    must_parse(DET_TANH_CORRECTION)
}

pub fn principal_clamp() -> LawProgram {
    must_parse(PRINCIPAL_CLAMP)
}

pub fn volume_reset() -> LawProgram {
    must_parse(VOLUME_RESET)
}

pub fn clamped_blend() -> LawProgram {
    must_parse(CLAMPED_BLEND)
}

pub fn linear_elastic() -> LawProgram {
    must_parse(LINEAR_ELASTIC)
}

pub fn linear_simple() -> LawProgram {
    must_parse(LINEAR_SIMPLE)
}

pub fn zero_stress() -> LawProgram {
    must_parse(ZERO_STRESS)
}

pub fn no_correction() -> LawProgram {
    must_parse(NO_CORRECTION)
}

/// The five reference fixtures checked by the gradient acceptance suite.
pub fn gradient_fixtures() -> Vec<LawProgram> {
    vec![
        neo_hookean(),
        det_tanh_correction(),
        principal_clamp(),
        volume_reset(),
        clamped_blend(),
    ]
}
