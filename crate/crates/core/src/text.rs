//! Tokenization and sentence segmentation shared by the summarizer, the split
//! policy and the text embedder.

/// Lowercased word tokens. Letters, digits, and inner `-`, `.`, `%` are kept so
/// that "fan-in", "0.25" and "40%" survive as single tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '.' || c == '%'))
        .map(|t| t.trim_matches(|c: char| c == '-' || c == '.'))
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// True for tokens that read as a number, optionally with a trailing `%`.
pub fn is_numeric(token: &str) -> bool {
    let t = token.strip_suffix('%').unwrap_or(token);
    !t.is_empty() && t.parse::<f64>().is_ok()
}

/// Splits on terminal punctuation (`.`, `!`, `?`) followed by whitespace.
/// Sentences keep their terminal punctuation; empty pieces are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in bytes.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = bytes.get(i + 1) {
                if next.is_whitespace() {
                    let end = pos + c.len_utf8();
                    push_trimmed(&mut out, &text[start..end]);
                    start = end;
                }
            }
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// Joins sentences with the separator [`split_sentences`] understands.
pub fn join_sentences<S: AsRef<str>>(sentences: &[S]) -> String {
    sentences
        .iter()
        .map(|s| s.as_ref())
        .collect::<Vec<_>>()
        .join(" ")
}
