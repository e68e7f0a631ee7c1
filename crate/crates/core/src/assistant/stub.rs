use std::collections::BTreeSet;

use super::parse_prompt;
use crate::generator::{GeneratorError, TextGenerator};
use crate::text::{sentences, tokens};

pub const FRAMING_LINE: &str = "From the course material:";

/// Deterministic generator that answers with one sentence of the top passage.
///
/// The chosen sentence shares the most distinct tokens with the question,
/// earliest sentence on ties. With no overlap at all the first sentence is
/// used. The answer is the framing line, a newline, the sentence and ` [1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveGenerator;

impl ExtractiveGenerator {
    pub fn best_sentence<'a>(passage: &'a str, question: &str) -> Option<&'a str> {
        let q: BTreeSet<String> = tokens(question).into_iter().collect();
        let mut best: Option<(&str, usize)> = None;
        for s in sentences(passage) {
            let st: BTreeSet<String> = tokens(s).into_iter().collect();
            let overlap = st.intersection(&q).count();
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((s, overlap));
            }
        }
        best.map(|(s, _)| s)
    }
}

impl TextGenerator for ExtractiveGenerator {
    fn id(&self) -> &str {
        "extractive-stub"
    }

    fn generate(&self, prompt: &str) -> Result<String, GeneratorError> {
        let (passages, question) = parse_prompt(prompt).map_err(|e| GeneratorError::BadPrompt(e.to_string()))?;
        let top = &passages[0];
        let sentence = Self::best_sentence(&top.text, question).unwrap_or("The passage contains no text.");
        Ok(format!("{FRAMING_LINE}\n{sentence} [1]"))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{compose_prompt, Passage};
    use super::*;

    const FIXTURE: &str = "Edge nodes sample sensors every second. \
The broker forwards telemetry to the dashboard. \
Telemetry from edge nodes reaches the broker over MQTT.";

    fn prompt(q: &str) -> String {
        compose_prompt(q, &[Passage { chunk_id: 0, text: FIXTURE.into(), score: 1.0 }]).unwrap()
    }

    #[test]
    fn picks_sentence_with_most_shared_tokens() {
        // Question tokens: how, does, telemetry, reach, the, broker.
        // Sentence 1 shares none, sentence 2 shares {the, broker, telemetry} = 3,
        // sentence 3 shares {telemetry, the, broker} = 3; the earlier one wins.
        let out = ExtractiveGenerator.generate(&prompt("How does telemetry reach the broker?")).unwrap();
        assert_eq!(out, "From the course material:\nThe broker forwards telemetry to the dashboard. [1]");
        // Adding "mqtt" and "edge" tips it to sentence 3 (5 shared).
        let out = ExtractiveGenerator.generate(&prompt("edge telemetry broker mqtt the")).unwrap();
        assert!(out.contains("over MQTT."));
    }

    #[test]
    fn no_overlap_falls_back_to_first_sentence() {
        let out = ExtractiveGenerator.generate(&prompt("zebra?")).unwrap();
        assert_eq!(out, "From the course material:\nEdge nodes sample sensors every second. [1]");
    }

    #[test]
    fn deterministic() {
        let p = prompt("broker");
        assert_eq!(ExtractiveGenerator.generate(&p), ExtractiveGenerator.generate(&p));
    }

    #[test]
    fn foreign_prompt_is_rejected() {
        assert!(ExtractiveGenerator.generate("hello").is_err());
    }
}
