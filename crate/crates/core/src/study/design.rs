use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::StudyError;

/// One yes/no question asked about every candidate statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub id: String,
    /// Column label used in analysis tables; never shown to raters.
    pub short_name: String,
    /// Row label shown next to the yes/no choices.
    pub prompt: String,
    /// Full instruction text shown before the first ballot.
    pub instruction: String,
    /// Whether substituted decoy statements count in analyses of this dimension.
    #[serde(default)]
    pub include_decoys: bool,
}

impl Dimension {
    fn with_decoys(mut self) -> Self {
        self.include_decoys = true;
        self
    }

    fn new(id: &str, short_name: &str, prompt: &str, instruction: &str) -> Self {
        Dimension {
            id: id.into(),
            short_name: short_name.into(),
            prompt: prompt.into(),
            instruction: instruction.into(),
            include_decoys: false,
        }
    }
}

/// The three quality questions: is it a need, is it specific enough, is it grounded in the review.
pub fn quality_dimensions() -> Vec<Dimension> {
    vec![
        Dimension::new(
            "is_cn",
            "Is Customer Need",
            "Is a customer need typically identified in a VOC study",
            "Please indicate whether the statement qualifies as a customer need identified in a typical VOC study. \
             Customer needs capture conceptual benefits that customers want to obtain from a product, which is different \
             from customer-provided technical specifications and desired solutions.\n\n\
             General Comment: For Q1, evaluate only if the statement is a customer need, regardless of whether the \
             statement is detailed enough, which will be judged in Q2. This question also does not evaluate whether the \
             statement came from the review, which will be judged in Q3.",
        ),
        Dimension::new(
            "specific",
            "Sufficiently Specific",
            "Captures sufficient detail about a customer need",
            "Please evaluate whether or not the statement is actionable and not too general. For example, \u{201c}good \
             communication\u{201d} might be too general. \u{201c}Can stay informed of the technician's status (e.g. when \
             they will arrive)\u{201d} captures sufficient detail.",
        ),
        Dimension::new(
            "grounded",
            "Follows from a Verbatim",
            "Is based on some information in the review",
            "Please evaluate whether or not the statement is based on information in the review. In particular, is it \
             reasonable that a VOC study would extract this customer need from the review.",
        )
        .with_decoys(),
    ]
}

/// Optional pack for characterising needs along three binary axes.
pub fn characteristic_dimensions() -> Vec<Dimension> {
    vec![
        Dimension::new(
            "functional",
            "Functional (vs. Emotional)",
            "Describes a functional rather than an emotional benefit",
            "Answer yes if the statement is mainly about what the product does for the customer; answer no if it is mainly \
             about how the customer feels.",
        ),
        Dimension::new(
            "universal",
            "Universal (vs. Niche)",
            "Applies to most customers rather than a niche",
            "Answer yes if most customers in the category would share this need; answer no if it applies to a distinct \
             subgroup.",
        ),
        Dimension::new(
            "enduring",
            "Enduring (vs. Fleeting)",
            "Is an enduring rather than a fleeting need",
            "Answer yes if the need is present whenever the product is used or owned; answer no if it arises only at a \
             specific moment.",
        ),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub verbatim: usize,
    pub informative: usize,
    pub uninformative: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec { verbatim: 90, informative: 30, uninformative: 30 }
    }
}

impl SampleSpec {
    pub fn total(&self) -> usize {
        self.verbatim + self.informative + self.uninformative
    }
}

fn default_instructions() -> String {
    "Answer all questions. For each review you will see several candidate statements. Judge each statement on \
     every question independently."
        .into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub study_id: String,
    #[serde(default = "default_instructions")]
    pub instructions: String,
    #[serde(default = "quality_dimensions")]
    pub dimensions: Vec<Dimension>,
    /// Extractor identifiers; kept server-side only.
    pub methods: Vec<String>,
    #[serde(default)]
    pub sample_spec: SampleSpec,
    pub raters: Vec<String>,
    pub seed: u64,
}

impl StudyDesign {
    pub fn new(study_id: &str, methods: &[&str], raters: &[&str], seed: u64) -> Self {
        StudyDesign {
            study_id: study_id.into(),
            instructions: default_instructions(),
            dimensions: quality_dimensions(),
            methods: methods.iter().map(|s| s.to_string()).collect(),
            sample_spec: SampleSpec::default(),
            raters: raters.iter().map(|s| s.to_string()).collect(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        let invalid = |msg: String| Err(StudyError::InvalidDesign(msg));
        if self.study_id.is_empty()
            || !self.study_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return invalid(format!("study id {:?} must be non-empty ASCII letters, digits, '-' or '_'", self.study_id));
        }
        if self.dimensions.is_empty() {
            return invalid("at least one dimension is required".into());
        }
        if self.methods.len() < 2 {
            return invalid("at least two methods are required".into());
        }
        if self.raters.len() < 3 || self.raters.len() % 2 == 0 {
            return invalid(format!("need an odd number of raters, at least 3 (got {})", self.raters.len()));
        }
        for (what, ids) in [
            ("dimension", self.dimensions.iter().map(|d| d.id.as_str()).collect::<Vec<_>>()),
            ("method", self.methods.iter().map(String::as_str).collect()),
            ("rater", self.raters.iter().map(String::as_str).collect()),
        ] {
            let mut seen = HashSet::new();
            for id in ids {
                if id.trim().is_empty() || !seen.insert(id) {
                    return invalid(format!("{what} ids must be unique and non-empty ({id:?})"));
                }
            }
        }
        if let Some(m) = self.methods.iter().find(|m| m.chars().count() < 3 || !m.chars().any(char::is_alphabetic)) {
            return invalid(format!("method id {m:?} must have at least 3 characters including a letter"));
        }
        // nothing a rater sees may name a method
        let visible: Vec<&str> = self
            .dimensions
            .iter()
            .flat_map(|d| [d.id.as_str(), d.prompt.as_str(), d.instruction.as_str()])
            .chain(self.raters.iter().map(String::as_str))
            .chain([self.instructions.as_str(), self.study_id.as_str()])
            .collect();
        for method in &self.methods {
            if let Some(text) = visible.iter().find(|t| t.contains(method.as_str())) {
                return invalid(format!("method id {method:?} appears in rater-visible text {text:?}"));
            }
        }
        Ok(())
    }
}
