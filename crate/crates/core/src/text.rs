//! Text-level helpers shared by the document model, the recap builder and the
//! generation doubles.

use std::ops::Range;

/// Byte ranges of the sentences in `text`, trimmed of surrounding whitespace.
///
/// A sentence ends after `.`, `!` or `?` when the next character is
/// whitespace, and at every newline.
pub fn sentence_ranges(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_end = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c.is_whitespace() {
            if c == '\n' {
                if let Some(s) = start.take() {
                    out.push(s..last_end);
                }
            }
            continue;
        }
        if start.is_none() {
            start = Some(i);
        }
        last_end = i + c.len_utf8();
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_whitespace() {
                    out.push(start.take().unwrap()..last_end);
                }
            }
        }
    }
    if let Some(s) = start {
        out.push(s..last_end);
    }
    out
}

/// The sentences of `text` as borrowed slices.
pub fn sentences(text: &str) -> Vec<&str> {
    sentence_ranges(text)
        .into_iter()
        .map(|r| &text[r])
        .collect()
}

/// Keep at most `max` leading sentences, preserving the original separators
/// between them.
pub fn truncate_sentences(text: &str, max: usize) -> &str {
    let ranges = sentence_ranges(text);
    if max == 0 || ranges.is_empty() {
        return "";
    }
    let last = &ranges[max.min(ranges.len()) - 1];
    &text[ranges[0].start..last.end]
}

/// Number of whitespace-separated tokens.
pub fn whitespace_len(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Prefix of `text` holding at most `max` whitespace tokens, trimmed.
pub fn truncate_whitespace_tokens(text: &str, max: usize) -> &str {
    if max == 0 {
        return "";
    }
    let mut count = 0;
    let mut end = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_token = false;
        } else {
            if !in_token {
                count += 1;
                if count > max {
                    break;
                }
                in_token = true;
            }
            end = i + c.len_utf8();
        }
    }
    text[..end].trim_start()
}

/// Cut `text` at the first occurrence of any stop sequence.
pub fn cut_at_stop<'a>(text: &'a str, stops: &[String]) -> &'a str {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    &text[..cut]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_terminal_punctuation_followed_by_space() {
        assert_eq!(sentences("A. B."), vec!["A.", "B."]);
        assert_eq!(
            sentences("Is it? Yes! Done."),
            vec!["Is it?", "Yes!", "Done."]
        );
    }

    #[test]
    fn decimal_points_do_not_split() {
        assert_eq!(sentences("Pi is 3.14 today."), vec!["Pi is 3.14 today."]);
    }

    #[test]
    fn newline_always_splits() {
        assert_eq!(
            sentences("first line\nsecond line"),
            vec!["first line", "second line"]
        );
        assert_eq!(sentences("\n\n  \n"), Vec::<&str>::new());
    }

    #[test]
    fn no_punctuation_is_one_sentence() {
        assert_eq!(
            sentences("no punctuation here"),
            vec!["no punctuation here"]
        );
    }

    #[test]
    fn truncation_keeps_leading_sentences() {
        let t = "One. Two. Three. Four.";
        assert_eq!(truncate_sentences(t, 2), "One. Two.");
        assert_eq!(truncate_sentences(t, 10), t);
        assert_eq!(truncate_sentences(t, 0), "");
        assert_eq!(truncate_sentences("", 3), "");
    }

    #[test]
    fn whitespace_truncation() {
        assert_eq!(truncate_whitespace_tokens("  a b  c d", 3), "a b  c");
        assert_eq!(truncate_whitespace_tokens("a b", 5), "a b");
        assert_eq!(truncate_whitespace_tokens("a b", 0), "");
        assert_eq!(whitespace_len(" a  b\nc "), 3);
    }

    #[test]
    fn stop_sequences_cut_at_earliest() {
        let stops = vec!["</re>".to_string(), "END".to_string()];
        assert_eq!(cut_at_stop("x END y </re>", &stops), "x ");
        assert_eq!(cut_at_stop("x </re> END", &stops), "x ");
        assert_eq!(cut_at_stop("plain", &stops), "plain");
    }
}
