//! Tokenization and sentence helpers shared by the embedder, the extractive
//! answer stub and the cloze quiz stub.

/// Lowercased alphanumeric tokens of `text`. Every non-alphanumeric character
/// is a separator.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Alphanumeric runs of `text` with their byte offsets, original case kept.
pub fn token_spans(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, &text[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out
}

/// Splits `text` into trimmed sentences. A sentence ends at `.`, `!` or `?`
/// followed by whitespace or end of text, or at a line break. Returned slices
/// borrow from `text`, so every sentence is a verbatim substring.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let end = match c {
            '.' | '!' | '?' => match chars.peek() {
                None => Some(i + c.len_utf8()),
                Some((_, n)) if n.is_whitespace() => Some(i + c.len_utf8()),
                _ => None,
            },
            '\n' => Some(i),
            _ => None,
        };
        if let Some(end) = end {
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

const STOPWORDS: &[&str] = &[
    "about", "above", "across", "after", "again", "against", "along", "among", "another", "around",
    "because", "before", "being", "below", "between", "beyond", "cannot", "could", "doing",
    "during", "either", "every", "first", "having", "however", "itself", "might", "never",
    "other", "others", "ought", "their", "theirs", "there", "these", "thing", "things", "those",
    "through", "throughout", "under", "until", "using", "various", "where", "whereas", "which",
    "while", "whose", "within", "without", "would", "yours", "should", "shall", "since", "still",
    "though", "toward", "towards", "upon", "whether", "although", "also", "always", "often",
];

/// True for tokens that carry content: at least five characters and not a stopword.
pub fn is_content_token(token: &str) -> bool {
    token.chars().count() >= 5 && !STOPWORDS.contains(&token.to_lowercase().as_str())
}

/// Characters that count as markup in quiz text.
pub const MARKUP_CHARS: [char; 5] = ['*', '#', '`', '<', '>'];

pub fn contains_markup(s: &str) -> bool {
    s.contains(MARKUP_CHARS)
}
