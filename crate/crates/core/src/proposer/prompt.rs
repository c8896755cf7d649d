//! Prompt assembly. The bundle order is fixed: system text, then one block
//! per top-K candidate from worst to best (reversed top-K), then the format
//! text. Identical inputs produce byte-identical bundles.

use crate::dsl::LawKind;
use crate::mpm::Validity;
use crate::search::Candidate;

use super::{fnv1a, FeedbackSummary};

const GRAMMAR: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/grammar.md"));

const SYSTEM_PREAMBLE: &str = "\
You are an intelligent AI assistant for coding, physical simulation, and scientific discovery.
Follow the user's requirements carefully and make sure you understand them.
Your expertise is strictly limited to physical simulation, material science, mathematics, and coding.
Keep your answers short and to the point.
Do not provide any information that is not requested.
Always document your code as comments to explain the reason behind them.
Use Markdown to format your solution.
You write constitutive laws in the tensor-expression DSL specified below and in nothing else.
Do not use any primitive that is not part of the DSL.
";

const FORMAT_COMMON: &str = "\
## Format Requirements

### DSL Tips
1. `*` multiplies two scalars, scales a matrix by a scalar, or multiplies two matrices, depending on operand types. `/` divides scalars only; scale a matrix by a reciprocal instead.
2. Only names declared in the `params` block are tuned by the differentiable optimizer; literals in the body stay fixed. Declare every quantity you want fitted as a param with a sensible default, and carry the best values from previous iterations forward into the defaults.

### Solution Requirements
1. Analyze step-by-step what the potential problem is in the previous iterations based on the feedback. Think about why the results from previous constitutive laws mismatched with the ground truth. Do not give advice about how to optimize. Focus on the formulation of the constitutive law. Start this section with \"### Analysis\". Analyze every iteration in the history individually, each under a \"#### Iteration N\" heading.
2. Think step-by-step about what to do in this iteration. Separate your algorithm into a continuous parameter part and a symbolic expression part. Describe your plan in pseudo-code, written out in great detail. Remember to update the default values of the parameters based on previous optimizations. Start this section with \"### Step-by-Step Plan\".
3. Output the law in a single fenced code block starting with ```dsl and nothing after it. Start this section with \"### Code\".
";

const FORMAT_ELASTIC: &str = "\
### Code Requirements
1. The law kind must be `elastic`: `forward` maps the deformation gradient F to the Kirchhoff stress tensor. The Kirchhoff stress is the first Piola-Kirchhoff stress multiplied by the transpose of the deformation gradient (`tau = P * transpose(F)`). Do not return any other stress measure.
2. The proposed law must follow this structure exactly:

```dsl
law elastic \"my_law\" {
  params {
    some_param = 1.0;
  }
  forward(F: mat) -> mat {
    return 0.0 * F;
  }
}
```
";

const FORMAT_PLASTIC: &str = "\
### Code Requirements
1. The law kind must be `plastic`: `forward` maps the trial deformation gradient F to the corrected deformation gradient after the plastic return mapping. Plasticity is not always necessary; returning F unchanged is the purely elastic baseline. If your analysis supports plasticity, correct F toward the admissible set.
2. The proposed law must follow this structure exactly:

```dsl
law plastic \"my_law\" {
  params {
    some_param = 1.0;
  }
  forward(F: mat) -> mat {
    return F;
  }
}
```
";

#[derive(Clone, Debug, thiserror::Error)]
#[error("prompt history is empty")]
pub struct EmptyHistory;

/// The three prompt segments, assembled in order: system, history
/// (worst-of-top-K first, best last), format.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptBundle {
    pub system: String,
    pub history_blocks: Vec<String>,
    pub format: String,
}

impl PromptBundle {
    /// The single user message: history blocks then the format prompt,
    /// newline-joined.
    pub fn user_message(&self) -> String {
        let mut parts: Vec<&str> = self.history_blocks.iter().map(String::as_str).collect();
        parts.push(&self.format);
        parts.join("\n")
    }

    /// Full transcript (system + user) as one string; this is what gets
    /// hashed into the logs.
    pub fn full_text(&self) -> String {
        format!("{}\n{}", self.system, self.user_message())
    }

    pub fn hash(&self) -> u64 {
        fnv1a(self.full_text().as_bytes())
    }
}

fn fmt_loss(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6e}")
    } else {
        "invalid".to_string()
    }
}

/// Deterministic fixed-format rendering of a feedback summary.
pub fn render_feedback(fb: &FeedbackSummary) -> String {
    let mut out = String::from("feedback:\n");
    out.push_str(&format!(
        "  validity: {}\n",
        if fb.validity == Validity::Valid { "valid" } else { "invalid" }
    ));
    if let Some(msg) = &fb.error_message {
        out.push_str(&format!("  error: {msg}\n"));
    }
    out.push_str(&format!("  final_loss: {}\n", fmt_loss(fb.final_loss)));
    if !fb.theta_hat_named.is_empty() {
        out.push_str("  optimized_params:\n");
        for (name, value) in &fb.theta_hat_named {
            out.push_str(&format!("    {name} = {value:.6e}\n"));
        }
    }
    if !fb.loss_curve.is_empty() {
        out.push_str("  loss_curve:\n");
        for (step, loss) in &fb.loss_curve {
            out.push_str(&format!("    step {step}: {}\n", fmt_loss(*loss)));
        }
    }
    if !fb.per_frame_error.is_empty() {
        out.push_str("  mean_position_error_per_frame (m):\n");
        for (frame, err) in &fb.per_frame_error {
            out.push_str(&format!("    frame {frame}: {err:.6e}\n"));
        }
    }
    out
}

/// Assembles the prompt from the top-K candidates (ascending loss). The
/// history is rendered in reversed order so the best candidate sits
/// closest to the format prompt.
pub fn build_prompt(topk: &[Candidate], task_kind: LawKind) -> Result<PromptBundle, EmptyHistory> {
    if topk.is_empty() {
        return Err(EmptyHistory);
    }
    debug_assert!(
        topk.iter().all(|c| c.validity == Validity::Valid),
        "prompt history must contain only valid candidates"
    );
    let system = format!("{SYSTEM_PREAMBLE}\n{GRAMMAR}");
    let history_blocks = topk
        .iter()
        .rev()
        .map(|c| format!("{}\n{}", c.program.source_text.trim_end(), render_feedback(&c.feedback)))
        .collect();
    let format = match task_kind {
        LawKind::Elastic => format!("{FORMAT_COMMON}\n{FORMAT_ELASTIC}"),
        LawKind::Plastic => format!("{FORMAT_COMMON}\n{FORMAT_PLASTIC}"),
    };
    Ok(PromptBundle { system, history_blocks, format })
}
