use serde::{Deserialize, Serialize};

use super::RetrievalError;

/// Recursive splitter settings. Sizes are in characters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct SplitterParams {
    chunk_size: usize,
    overlap: usize,
    separators: Vec<String>,
}

#[derive(Deserialize)]
struct RawParams {
    chunk_size: usize,
    overlap: usize,
    separators: Vec<String>,
}

impl TryFrom<RawParams> for SplitterParams {
    type Error = RetrievalError;
    fn try_from(r: RawParams) -> Result<Self, Self::Error> {
        SplitterParams::new(r.chunk_size, r.overlap, r.separators)
    }
}

impl Default for SplitterParams {
    fn default() -> Self {
        Self {
            chunk_size: 1000,
            overlap: 200,
            separators: Self::default_separators(),
        }
    }
}

impl SplitterParams {
    pub fn new(chunk_size: usize, overlap: usize, separators: Vec<String>) -> Result<Self, RetrievalError> {
        if chunk_size <= overlap {
            return Err(RetrievalError::InvalidParams { chunk_size, overlap });
        }
        Ok(Self { chunk_size, overlap, separators })
    }

    /// Paragraph, line, word, then single character.
    pub fn default_separators() -> Vec<String> {
        ["\n\n", "\n", " ", ""].map(String::from).to_vec()
    }

    pub fn with_sizes(chunk_size: usize, overlap: usize) -> Result<Self, RetrievalError> {
        Self::new(chunk_size, overlap, Self::default_separators())
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn separators(&self) -> &[String] {
        &self.separators
    }
}

/// A contiguous character span of a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: usize,
    /// Character offset, inclusive.
    pub start_offset: usize,
    /// Character offset, exclusive.
    pub end_offset: usize,
    pub text: String,
}

/// Splits `text` into chunks of at most `chunk_size` characters.
///
/// The first separator of the ladder that occurs in an oversized span splits
/// it; pieces that still do not fit are split again with the remaining
/// separators, and adjacent pieces are greedily merged back while they fit.
/// A separator at a chunk boundary belongs to neither chunk. Text with no
/// separator left (or the empty separator) is cut into fixed windows where
/// each window repeats the last `overlap` characters of the previous one.
pub fn split_text(text: &str, params: &SplitterParams) -> Vec<Chunk> {
    let text_chars = CharText::new(text);
    let mut spans = Vec::new();
    text_chars.split(params, 0, text_chars.len(), 0, &mut spans);
    spans
        .into_iter()
        .enumerate()
        .map(|(chunk_id, (s, e))| Chunk {
            chunk_id,
            start_offset: s,
            end_offset: e,
            text: text_chars.slice(s, e).to_string(),
        })
        .collect()
}

struct CharText<'a> {
    text: &'a str,
    /// Byte offset of each character, plus the total length.
    byte_at: Vec<usize>,
}

impl<'a> CharText<'a> {
    fn new(text: &'a str) -> Self {
        let mut byte_at: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        byte_at.push(text.len());
        Self { text, byte_at }
    }

    fn len(&self) -> usize {
        self.byte_at.len() - 1
    }

    fn slice(&self, s: usize, e: usize) -> &'a str {
        &self.text[self.byte_at[s]..self.byte_at[e]]
    }

    fn char_index(&self, byte: usize) -> usize {
        self.byte_at.binary_search(&byte).expect("match on a char boundary")
    }

    fn split(&self, p: &SplitterParams, s: usize, e: usize, level: usize, out: &mut Vec<(usize, usize)>) {
        if e - s <= p.chunk_size {
            if e > s {
                out.push((s, e));
            }
            return;
        }
        let span = self.slice(s, e);
        let found = p.separators[level.min(p.separators.len())..]
            .iter()
            .position(|sep| sep.is_empty() || span.contains(sep.as_str()))
            .map(|i| level + i);
        let Some(sep_level) = found.filter(|&i| !p.separators[i].is_empty()) else {
            self.windows(p, s, e, out);
            return;
        };
        let sep = p.separators[sep_level].as_str();
        let sep_chars = sep.chars().count();

        // Pieces between separator occurrences, as char ranges.
        let base = self.byte_at[s];
        let mut pieces = Vec::new();
        let mut piece_start = s;
        for (b, _) in span.match_indices(sep) {
            let at = self.char_index(base + b);
            pieces.push((piece_start, at));
            piece_start = at + sep_chars;
        }
        pieces.push((piece_start, e));

        let mut current: Option<(usize, usize)> = None;
        for (ps, pe) in pieces.into_iter().filter(|(ps, pe)| pe > ps) {
            if pe - ps > p.chunk_size {
                if let Some(c) = current.take() {
                    out.push(c);
                }
                self.split(p, ps, pe, sep_level + 1, out);
                continue;
            }
            current = match current {
                Some((cs, _)) if pe - cs <= p.chunk_size => Some((cs, pe)),
                Some(c) => {
                    out.push(c);
                    Some((ps, pe))
                }
                None => Some((ps, pe)),
            };
        }
        if let Some(c) = current {
            out.push(c);
        }
    }

    fn windows(&self, p: &SplitterParams, s: usize, e: usize, out: &mut Vec<(usize, usize)>) {
        let mut start = s;
        loop {
            let end = (start + p.chunk_size).min(e);
            out.push((start, end));
            if end == e {
                break;
            }
            start = end - p.overlap;
        }
    }
}
