//! Tokenization and sentence segmentation.
//!
//! Text is lowercased and split on whitespace and punctuation. Hyphens and
//! periods survive only between two alphanumeric characters, so terms like
//! `t-spine` or `2.5` stay whole. Sentences end at `.` or `;` unless the
//! period belongs to an abbreviation on the guard list or sits inside a number.

const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "vs", "approx", "e.g", "i.e", "etc", "fig", "st", "no", "cf",
];

/// Splits one sentence into lowercase tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let joins = matches!(c, '-' | '.')
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
            && chars[i - 1].is_alphanumeric();
        if c.is_alphanumeric() || joins {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn is_boundary(chars: &[char], i: usize) -> bool {
    match chars[i] {
        ';' => true,
        '.' => {
            // periods inside a token ("2.5", "e.g") never end a sentence
            if chars.get(i + 1).is_some_and(|c| c.is_alphanumeric()) {
                return false;
            }
            // word immediately before the period
            let start = chars[..i]
                .iter()
                .rposition(|c| c.is_whitespace())
                .map_or(0, |p| p + 1);
            let word: String = chars[start..i].iter().flat_map(|c| c.to_lowercase()).collect();
            let followed_by_lower = chars[i + 1..]
                .iter()
                .find(|c| !c.is_whitespace())
                .is_some_and(|c| c.is_lowercase());
            // "no." is only an abbreviation when the text continues in lower case
            if word == "no" {
                return !followed_by_lower;
            }
            !ABBREVIATIONS.contains(&word.as_str())
        }
        _ => false,
    }
}

/// Segments free text into tokenized sentences, dropping empty ones.
pub fn split_sentences(text: &str) -> Vec<Vec<String>> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    for i in 0..chars.len() {
        if is_boundary(&chars, i) {
            let piece: String = chars[start..i].iter().collect();
            let toks = tokenize(&piece);
            if !toks.is_empty() {
                sentences.push(toks);
            }
            start = i + 1;
        }
    }
    let tail: String = chars[start..].iter().collect();
    let toks = tokenize(&tail);
    if !toks.is_empty() {
        sentences.push(toks);
    }
    sentences
}

/// Renders tokenized sentences back to text that re-segments to the same
/// sentences.
pub fn join_sentences(sentences: &[Vec<String>]) -> String {
    sentences
        .iter()
        .map(|s| format!("{} .", s.join(" ")))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_strips_punctuation() {
        assert_eq!(
            tokenize("Heart size is Normal, no effusion!"),
            vec!["heart", "size", "is", "normal", "no", "effusion"]
        );
    }

    #[test]
    fn tokenize_keeps_hyphenated_terms_and_decimals() {
        assert_eq!(tokenize("T-spine 2.5 cm x-ray"), vec!["t-spine", "2.5", "cm", "x-ray"]);
        assert_eq!(tokenize("- -- ."), Vec::<String>::new());
    }

    #[test]
    fn split_on_period_and_semicolon() {
        let s = split_sentences("The lungs are clear. No effusion; heart normal.");
        assert_eq!(s.len(), 3);
        assert_eq!(s[1], vec!["no", "effusion"]);
    }

    #[test]
    fn abbreviation_and_decimal_guards() {
        let s = split_sentences("Nodule measures 1.5 cm, e.g. stable vs. prior. Next.");
        assert_eq!(s.len(), 2);
        assert_eq!(s[1], vec!["next"]);
    }

    #[test]
    fn no_at_sentence_end_still_splits() {
        let s = split_sentences("Effusion present: no. Heart normal.");
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn join_round_trips() {
        let s = split_sentences("Mild cardiomegaly. Small left pleural effusion; 2.5 cm nodule.");
        assert_eq!(split_sentences(&join_sentences(&s)), s);
    }
}
