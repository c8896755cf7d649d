//! Extraction of a law program from a raw completion. Never panics on
//! arbitrary input; every failure maps to an invalid candidate.

use crate::dsl::{parse_law, LawProgram, ParseError};

#[derive(Clone, Debug, thiserror::Error)]
pub enum ProposalError {
    #[error("no fenced code block after a '### Code' heading")]
    NoCodeBlock,
    #[error("{0}")]
    Law(#[from] ParseError),
}

const CODE_HEADING: &str = "### Code";
const ANALYSIS_HEADING: &str = "### Analysis";
const ANALYSIS_EXCERPT_CHARS: usize = 500;

/// Finds the last fenced code block after the last `### Code` heading,
/// parses it as a law, and captures a short analysis excerpt for the log.
pub fn parse_proposal(text: &str) -> Result<(LawProgram, String), ProposalError> {
    let after_heading = match text.rfind(CODE_HEADING) {
        Some(pos) => &text[pos + CODE_HEADING.len()..],
        None => return Err(ProposalError::NoCodeBlock),
    };
    let block = last_fenced_block(after_heading).ok_or(ProposalError::NoCodeBlock)?;
    let program = parse_law(block)?;
    Ok((program, analysis_excerpt(text)))
}

/// The contents of the last complete ``` fence in `text`. Language tags on
/// the opening fence line are ignored.
fn last_fenced_block(text: &str) -> Option<&str> {
    let mut fences: Vec<usize> = Vec::new();
    let mut from = 0;
    while let Some(rel) = text[from..].find("```") {
        fences.push(from + rel);
        from += rel + 3;
    }
    // Pair fences (open, close); an unpaired trailing fence is ignored.
    let mut last = None;
    for pair in fences.chunks_exact(2) {
        let (open, close) = (pair[0], pair[1]);
        let body_start = match text[open..close].find('\n') {
            Some(nl) => open + nl + 1,
            None => continue, // fence opened and closed on one line
        };
        if body_start <= close {
            last = Some(&text[body_start..close]);
        }
    }
    last
}

fn analysis_excerpt(text: &str) -> String {
    match text.find(ANALYSIS_HEADING) {
        Some(pos) => text[pos + ANALYSIS_HEADING.len()..]
            .chars()
            .take(ANALYSIS_EXCERPT_CHARS)
            .collect::<String>()
            .trim()
            .to_string(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"### Analysis
The previous law was too stiff.

### Step-by-Step Plan
Soften it.

### Code
```dsl
law elastic "soft" {
  params {
    mu = 0.5;
  }
  forward(F: mat) -> mat {
    return mu * (F - identity());
  }
}
```
"#;

    #[test]
    fn extracts_law_and_excerpt() {
        let (law, excerpt) = parse_proposal(GOOD).unwrap();
        assert_eq!(law.name, "soft");
        assert!(excerpt.starts_with("The previous law was too stiff."));
    }

    #[test]
    fn prose_without_block_is_no_code_block() {
        assert!(matches!(
            parse_proposal("### Code\nno fence here"),
            Err(ProposalError::NoCodeBlock)
        ));
        assert!(matches!(parse_proposal("just prose"), Err(ProposalError::NoCodeBlock)));
    }

    #[test]
    fn bad_law_maps_to_parse_error() {
        let text = "### Code\n```dsl\nlaw elastic \"x\" { params {} forward(F: mat) -> mat { return det(F); } }\n```";
        assert!(matches!(parse_proposal(text), Err(ProposalError::Law(_))));
    }

    #[test]
    fn picks_last_block_after_last_heading() {
        let text = format!(
            "### Code\n```dsl\nlaw elastic \"first\" {{ params {{}} forward(F: mat) -> mat {{ return F; }} }}\n```\n\
             intermezzo\n```dsl\nlaw elastic \"second\" {{ params {{}} forward(F: mat) -> mat {{ return 2.0 * F; }} }}\n```\n"
        );
        let (law, _) = parse_proposal(&text).unwrap();
        assert_eq!(law.name, "second");
    }

    #[test]
    fn arbitrary_bytes_do_not_panic() {
        for s in ["", "```", "``````", "### Code```", "### Code\n``` \n", "\u{0}\u{7f}´´´"] {
            let _ = parse_proposal(s);
        }
    }
}
