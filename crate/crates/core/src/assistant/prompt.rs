use serde::{Deserialize, Serialize};

use super::AssistantError;

/// A retrieved chunk as handed to a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub chunk_id: usize,
    pub text: String,
    pub score: f64,
}

/// Appends the numbered passage block used by every prompt template.
///
/// Each passage is a header line `[n] chunk <id> score <s> bytes <len>`
/// followed by exactly `len` bytes of passage text and a blank line. The
/// byte count makes the block parseable whatever the passage contains.
pub fn write_passages(out: &mut String, passages: &[Passage]) {
    for (i, p) in passages.iter().enumerate() {
        out.push_str(&format!(
            "[{}] chunk {} score {:.6} bytes {}\n",
            i + 1,
            p.chunk_id,
            p.score,
            p.text.len()
        ));
        out.push_str(&p.text);
        out.push_str("\n\n");
    }
}

/// Parses a block written by [`write_passages`] from the start of `s`.
/// Returns the passages and the unparsed remainder.
pub fn parse_passages(mut s: &str) -> Result<(Vec<Passage>, &str), AssistantError> {
    let bad = |m: &str| AssistantError::BadPrompt(m.to_string());
    let mut out = Vec::new();
    while s.starts_with('[') {
        let (header, rest) = s.split_once('\n').ok_or_else(|| bad("unterminated passage header"))?;
        let fields: Vec<&str> = header.split(' ').collect();
        let [marker, "chunk", id, "score", score, "bytes", len] = fields.as_slice() else {
            return Err(bad("malformed passage header"));
        };
        let n: usize = marker
            .strip_prefix('[')
            .and_then(|m| m.strip_suffix(']'))
            .and_then(|m| m.parse().ok())
            .ok_or_else(|| bad("malformed passage marker"))?;
        if n != out.len() + 1 {
            return Err(bad("passages out of order"));
        }
        let chunk_id = id.parse().map_err(|_| bad("bad chunk id"))?;
        let score = score.parse().map_err(|_| bad("bad score"))?;
        let len: usize = len.parse().map_err(|_| bad("bad length"))?;
        let text = rest.get(..len).ok_or_else(|| bad("passage text truncated"))?;
        s = rest[len..].strip_prefix("\n\n").ok_or_else(|| bad("passage not terminated"))?;
        out.push(Passage { chunk_id, text: text.to_string(), score });
    }
    Ok((out, s))
}
