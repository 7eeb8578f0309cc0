//! Structured pass/fail reports shared by the theorem checkers.
//!
//! A report separates premises from the verdict: a checker can run with
//! failed premises (relaxed instances) and still measure its conclusions,
//! and a conclusion failure under verified premises must never be
//! swallowed.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Indeterminate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Premise {
    pub name: String,
    /// `None` when the premise could not be evaluated (e.g. no oracle).
    pub holds: Option<bool>,
    /// Backed by sampling rather than proof.
    #[serde(default, skip_serializing_if = "is_false")]
    pub empirical: bool,
    pub detail: String,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub label: String,
    pub value: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub claim: String,
    pub premises: Vec<Premise>,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
}

impl Report {
    pub fn new(claim: impl Into<String>) -> Self {
        Report {
            claim: claim.into(),
            premises: Vec::new(),
            verdict: Verdict::Pass,
            witnesses: Vec::new(),
        }
    }

    pub fn premise(&mut self, name: impl Into<String>, holds: bool, detail: impl Into<String>) {
        self.premises.push(Premise {
            name: name.into(),
            holds: Some(holds),
            empirical: false,
            detail: detail.into(),
        });
    }

    pub fn premise_empirical(
        &mut self,
        name: impl Into<String>,
        holds: Option<bool>,
        detail: impl Into<String>,
    ) {
        self.premises.push(Premise {
            name: name.into(),
            holds,
            empirical: true,
            detail: detail.into(),
        });
    }

    pub fn witness(&mut self, label: impl Into<String>, value: impl std::fmt::Display) {
        self.witnesses.push(Witness {
            label: label.into(),
            value: value.to_string(),
        });
    }

    /// Record a checked conclusion: a single failure flips the verdict.
    pub fn require(&mut self, ok: bool, label: impl Into<String>, value: impl std::fmt::Display) {
        if !ok {
            self.verdict = Verdict::Fail;
        }
        self.witnesses.push(Witness {
            label: format!("{}{}", if ok { "" } else { "FAILED: " }, label.into()),
            value: value.to_string(),
        });
    }

    pub fn indeterminate(&mut self, label: impl Into<String>) {
        if self.verdict == Verdict::Pass {
            self.verdict = Verdict::Indeterminate;
        }
        self.witnesses.push(Witness {
            label: label.into(),
            value: "undecided".into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// All evaluated premises hold (ignoring empirical gaps).
    pub fn premises_hold(&self) -> bool {
        self.premises.iter().all(|p| p.holds != Some(false))
    }
}
