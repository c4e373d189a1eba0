use std::collections::BTreeSet;

use crate::corpus::{tokenize, ReportCase, Sentence};

use super::negation::{Mention, NegationRules};
use super::{other_abnormality, ExtractionTuple, Lexicon, Negation, Span, TermMatch};

/// Descriptor-to-finding attachment settings.
#[derive(Debug, Clone)]
pub struct AssociationRules {
    /// Maximum token gap between a descriptor and the finding it modifies.
    pub window: usize,
    /// Cues that mark a descriptor-only sentence as a normal statement, in
    /// which case no `other, <part>` abnormality is produced.
    pub normal_cues: Vec<Vec<String>>,
}

impl Default for AssociationRules {
    fn default() -> Self {
        Self {
            window: 8,
            normal_cues: ["normal", "clear", "unremarkable", "intact", "within normal limits", "well expanded", "maintained"]
                .iter()
                .map(|c| tokenize(c))
                .collect(),
        }
    }
}

/// Tuple plus the span whose negation decides the tuple's polarity.
#[derive(Debug, Clone)]
struct Anchored {
    anchor: Span,
    fallback: bool,
    tuple: ExtractionTuple,
}

fn associate(matches: &[TermMatch<'_>], window: usize, sentence_index: usize) -> Vec<Anchored> {
    let findings: Vec<&TermMatch> = matches.iter().filter(|m| m.entry.is_finding()).collect();
    let descriptors: Vec<&TermMatch> = matches.iter().filter(|m| !m.entry.is_finding()).collect();

    if findings.is_empty() {
        let Some(part) = descriptors.iter().find(|d| d.entry.is_anatomical_part()) else {
            return Vec::new();
        };
        return vec![Anchored {
            anchor: part.span,
            fallback: true,
            tuple: ExtractionTuple {
                abnormality: other_abnormality(&part.entry.canonical),
                negation: Negation::Positive,
                attributes: descriptors.iter().map(|d| d.entry.canonical.clone()).collect(),
                sentence_index,
            },
        }];
    }

    let mut out: Vec<Anchored> = findings
        .iter()
        .map(|f| Anchored {
            anchor: f.span,
            fallback: false,
            tuple: ExtractionTuple {
                abnormality: f.entry.canonical.clone(),
                negation: Negation::Positive,
                attributes: BTreeSet::new(),
                sentence_index,
            },
        })
        .collect();
    for d in descriptors {
        // findings are in sentence order, so min_by_key keeps the earlier one on ties
        let nearest = findings
            .iter()
            .enumerate()
            .map(|(i, f)| (i, d.span.gap(&f.span)))
            .filter(|(_, gap)| *gap <= window)
            .min_by_key(|(_, gap)| *gap);
        if let Some((i, _)) = nearest {
            out[i].tuple.attributes.insert(d.entry.canonical.clone());
        }
    }
    out
}

/// Attaches every descriptor to the nearest finding of the same sentence
/// (ties go to the earlier finding). A sentence with descriptors but no
/// finding yields one `other, <anatomical-part>` tuple when an anatomical
/// part is present. Returned tuples are all marked positive.
pub fn associate_attributes(matches: &[TermMatch<'_>], rules: &AssociationRules) -> Vec<ExtractionTuple> {
    associate(matches, rules.window, 0)
        .into_iter()
        .map(|a| a.tuple)
        .collect()
}

/// Lexicon plus negation and attachment rules.
#[derive(Debug, Clone)]
pub struct Extractor {
    pub lexicon: Lexicon,
    pub negation: NegationRules,
    pub association: AssociationRules,
}

impl Extractor {
    pub fn new(lexicon: Lexicon) -> Self {
        Self {
            lexicon,
            negation: NegationRules::default(),
            association: AssociationRules::default(),
        }
    }

    pub fn bundled() -> Self {
        Self::new(Lexicon::bundled())
    }

    fn has_normal_cue(&self, sentence: &[String]) -> bool {
        self.association.normal_cues.iter().any(|cue| {
            sentence.len() >= cue.len() && sentence.windows(cue.len()).any(|w| w == &cue[..])
        })
    }

    /// Positive and negative tuples of one sentence; uncertain mentions are
    /// dropped.
    pub fn sentence(&self, sentence: &[String], sentence_index: usize) -> Vec<ExtractionTuple> {
        let matches = self.lexicon.match_terms(sentence);
        associate(&matches, self.association.window, sentence_index)
            .into_iter()
            .filter(|a| !(a.fallback && self.has_normal_cue(sentence)))
            .filter_map(|mut a| match self.negation.classify(sentence, a.anchor) {
                Mention::Positive => Some(a.tuple),
                Mention::Negative => {
                    a.tuple.negation = Negation::Negative;
                    Some(a.tuple)
                }
                Mention::Uncertain => None,
            })
            .collect()
    }

    pub fn report(&self, sentences: &[Sentence]) -> Vec<ExtractionTuple> {
        sentences
            .iter()
            .enumerate()
            .flat_map(|(i, s)| self.sentence(s, i))
            .collect()
    }

    /// Annotation strings look like `Finding / descriptor / descriptor`.
    /// The first finding found becomes the abnormality and every descriptor
    /// of the annotation attaches to it.
    pub fn annotation(&self, annotation: &str) -> Option<ExtractionTuple> {
        let mut finding: Option<String> = None;
        let mut part: Option<String> = None;
        let mut attributes = BTreeSet::new();
        for segment in annotation.split('/') {
            for m in self.lexicon.match_terms(&tokenize(segment)) {
                if m.entry.is_finding() {
                    finding.get_or_insert_with(|| m.entry.canonical.clone());
                } else {
                    if m.entry.is_anatomical_part() {
                        part.get_or_insert_with(|| m.entry.canonical.clone());
                    }
                    attributes.insert(m.entry.canonical.clone());
                }
            }
        }
        let abnormality = finding.or_else(|| part.map(|p| other_abnormality(&p)))?;
        Some(ExtractionTuple {
            abnormality,
            negation: Negation::Positive,
            attributes,
            sentence_index: 0,
        })
    }

    pub fn case_annotations(&self, case: &ReportCase) -> Vec<ExtractionTuple> {
        case.annotations
            .iter()
            .enumerate()
            .filter_map(|(i, a)| {
                self.annotation(a).map(|mut t| {
                    t.sentence_index = i;
                    t
                })
            })
            .collect()
    }
}

pub fn extract_sentence(extractor: &Extractor, sentence: &[String], index: usize) -> Vec<ExtractionTuple> {
    extractor.sentence(sentence, index)
}

pub fn extract_report(extractor: &Extractor, sentences: &[Sentence]) -> Vec<ExtractionTuple> {
    extractor.report(sentences)
}

pub fn extract_annotation(extractor: &Extractor, annotation: &str) -> Option<ExtractionTuple> {
    extractor.annotation(annotation)
}

pub fn extract_case_annotations(extractor: &Extractor, case: &ReportCase) -> Vec<ExtractionTuple> {
    extractor.case_annotations(case)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Category, LexiconEntry, ANATOMICAL_PART};

    fn attrs(t: &ExtractionTuple) -> Vec<&str> {
        t.attributes.iter().map(String::as_str).collect()
    }

    #[test]
    fn catheter_tip_gets_three_attributes() {
        let ex = Extractor::bundled();
        let t = ex.sentence(&tokenize("catheter tip in left central subclavian"), 0);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].abnormality, "catheter tip");
        assert_eq!(t[0].negation, Negation::Positive);
        assert_eq!(attrs(&t[0]), ["central", "left", "subclavian"]);
    }

    #[test]
    fn descriptor_without_finding_falls_back_to_other_part() {
        let ex = Extractor::bundled();
        let t = ex.sentence(&tokenize("streaky left base"), 0);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].abnormality, "other, base");
        assert_eq!(attrs(&t[0]), ["base", "left", "streaky"]);
        assert!(ex.sentence(&tokenize("mild and stable"), 0).is_empty());
        assert!(ex.sentence(&tokenize("the lungs are clear"), 0).is_empty());
    }

    #[test]
    fn equidistant_descriptor_goes_to_earlier_finding() {
        let lex = Lexicon::new(vec![
            LexiconEntry::new("a", Category::ClinicalFinding, None, &["fa"]),
            LexiconEntry::new("b", Category::ClinicalFinding, None, &["fb"]),
            LexiconEntry::new("d", Category::Descriptor, Some("location"), &["dd"]),
        ])
        .unwrap();
        let sentence = tokenize("fa x dd x fb");
        let t = associate_attributes(&lex.match_terms(&sentence), &AssociationRules::default());
        assert_eq!(attrs(&t[0]), ["d"]);
        assert!(t[1].attributes.is_empty());
    }

    #[test]
    fn descriptor_beyond_window_is_dropped() {
        let lex = Lexicon::new(vec![
            LexiconEntry::new("a", Category::ClinicalFinding, None, &["fa"]),
            LexiconEntry::new("p", Category::Descriptor, Some(ANATOMICAL_PART), &["pp"]),
        ])
        .unwrap();
        let sentence = tokenize("fa 1 2 3 4 5 6 7 8 9 pp");
        let t = associate_attributes(&lex.match_terms(&sentence), &AssociationRules::default());
        assert_eq!(t.len(), 1);
        assert!(t[0].attributes.is_empty());
    }

    #[test]
    fn negative_and_uncertain_mentions() {
        let ex = Extractor::bundled();
        let t = ex.sentence(&tokenize("no focal consolidation but small effusion noted"), 0);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].negation, Negation::Negative);
        assert_eq!(t[1].abnormality, "pleural effusion");
        assert_eq!(t[1].negation, Negation::Positive);
        assert!(ex.sentence(&tokenize("possible pneumonia"), 0).is_empty());
    }

    #[test]
    fn annotation_mode_attaches_all_descriptors() {
        let ex = Extractor::bundled();
        let t = ex.annotation("Calcified Granuloma / lung / upper lobe / left").unwrap();
        assert_eq!(t.abnormality, "calcified granuloma");
        assert_eq!(attrs(&t), ["left", "lung", "upper lobe"]);
        let t = ex.annotation("Lung/hypoinflation").unwrap();
        assert_eq!(t.abnormality, "hypoinflation");
        let t = ex.annotation("Spine/thoracic/degenerative").unwrap();
        assert_eq!(t.abnormality, "other, spine");
        assert!(ex.annotation("normal").is_none());
    }

    #[test]
    fn annotation_without_finding_uses_part() {
        let ex = Extractor::bundled();
        let t = ex.annotation("Diaphragm/right/elevated").unwrap();
        assert_eq!(t.abnormality, "other, diaphragm");
        assert_eq!(attrs(&t), ["diaphragm", "elevated", "right"]);
    }
}
