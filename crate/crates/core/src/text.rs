//! Word counting shared by script length checks and feedback validation.

/// Counts maximal runs of non-whitespace. A hyphenated compound such as
/// "well-known" is a single word.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// The last `n` sentences of `text`, split on `.`, `!` or `?` followed by
/// whitespace or end of text.
pub fn last_sentences(text: &str, n: usize) -> String {
    let mut sentences = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if matches!(c, '.' | '!' | '?') {
            let next_is_break = chars.get(i + 1).is_none_or(|&(_, nc)| nc.is_whitespace());
            if next_is_break {
                let end = pos + c.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    sentences.push(s);
                }
                start = end;
            }
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        sentences.push(rest);
    }
    let from = sentences.len().saturating_sub(n);
    sentences[from..].join(" ")
}
