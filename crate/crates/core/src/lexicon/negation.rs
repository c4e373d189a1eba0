use crate::corpus::tokenize;

use super::Span;

/// Certainty of a mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mention {
    Positive,
    Negative,
    /// Probable or inconclusive; excluded from tuples.
    Uncertain,
}

/// NegEx-style trigger configuration.
#[derive(Debug, Clone)]
pub struct NegationRules {
    pub pre_negation: Vec<Vec<String>>,
    pub post_negation: Vec<Vec<String>>,
    pub pre_uncertain: Vec<Vec<String>>,
    pub post_uncertain: Vec<Vec<String>>,
    /// Phrases that contain a trigger without negating anything
    /// ("no change in ...").
    pub pseudo_triggers: Vec<Vec<String>>,
    pub scope_breakers: Vec<String>,
    /// Maximum number of tokens between a trigger and the term it scopes.
    pub window: usize,
}

fn phrases(list: &[&str]) -> Vec<Vec<String>> {
    list.iter().map(|p| tokenize(p)).collect()
}

impl Default for NegationRules {
    fn default() -> Self {
        Self {
            pre_negation: phrases(&[
                "no",
                "not",
                "without",
                "free of",
                "negative for",
                "absence of",
                "clear of",
                "resolution of",
                "rule out",
                "never",
                "nor",
            ]),
            post_negation: phrases(&[
                "is absent",
                "are absent",
                "absent",
                "not seen",
                "not identified",
                "not present",
                "not visualized",
                "has resolved",
                "have resolved",
                "resolved",
            ]),
            pre_uncertain: phrases(&[
                "may",
                "might",
                "could",
                "possible",
                "possibly",
                "probable",
                "probably",
                "likely",
                "suggest",
                "suggests",
                "suggestive of",
                "questionable",
                "question of",
                "concerning for",
                "suspicious for",
                "cannot exclude",
                "can not exclude",
                "differential",
                "versus",
                "vs",
                "consider",
                "equivocal",
            ]),
            post_uncertain: phrases(&[
                "may",
                "might",
                "could",
                "not excluded",
                "cannot be excluded",
                "can not be excluded",
                "not ruled out",
                "is suspected",
                "are suspected",
                "is possible",
                "is likely",
                "versus",
                "vs",
            ]),
            pseudo_triggers: phrases(&[
                "no change",
                "no interval change",
                "no significant change",
                "no increase",
                "not only",
                "without change",
                "no significant interval change",
            ]),
            scope_breakers: ["but", "however", "although", "though", "except", "apart", "aside", "yet", "whereas"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            window: 6,
        }
    }
}

fn occurrences(sentence: &[String], phrase: &[String]) -> Vec<Span> {
    if phrase.is_empty() || phrase.len() > sentence.len() {
        return Vec::new();
    }
    (0..=sentence.len() - phrase.len())
        .filter(|&i| sentence[i..i + phrase.len()] == *phrase)
        .map(|i| Span::new(i, i + phrase.len()))
        .collect()
}

impl NegationRules {
    fn breaks(&self, sentence: &[String], from: usize, to: usize) -> bool {
        sentence[from..to].iter().any(|t| self.scope_breakers.contains(t))
    }

    fn is_pseudo(&self, sentence: &[String], at: usize) -> bool {
        self.pseudo_triggers
            .iter()
            .any(|p| sentence.len() >= at + p.len() && sentence[at..at + p.len()] == p[..])
    }

    fn scoped_before(&self, sentence: &[String], target: Span, triggers: &[Vec<String>]) -> bool {
        triggers.iter().any(|trig| {
            occurrences(sentence, trig).into_iter().any(|occ| {
                !self.is_pseudo(sentence, occ.start)
                    && occ.end <= target.start
                    && target.start - occ.end <= self.window
                    && !self.breaks(sentence, occ.end, target.start)
            })
        })
    }

    fn scoped_after(&self, sentence: &[String], target: Span, triggers: &[Vec<String>]) -> bool {
        triggers.iter().any(|trig| {
            occurrences(sentence, trig).into_iter().any(|occ| {
                occ.start >= target.end
                    && occ.start - target.end <= self.window
                    && !self.breaks(sentence, target.end, occ.start)
            })
        })
    }

    pub fn classify(&self, sentence: &[String], span: Span) -> Mention {
        assert!(span.end <= sentence.len(), "span outside sentence");
        if self.scoped_before(sentence, span, &self.pre_negation)
            || self.scoped_after(sentence, span, &self.post_negation)
        {
            Mention::Negative
        } else if self.scoped_before(sentence, span, &self.pre_uncertain)
            || self.scoped_after(sentence, span, &self.post_uncertain)
        {
            Mention::Uncertain
        } else {
            Mention::Positive
        }
    }
}

/// Classifies the mention at `span` using the default rules.
pub fn detect_negation(sentence: &[String], span: Span) -> Mention {
    NegationRules::default().classify(sentence, span)
}
