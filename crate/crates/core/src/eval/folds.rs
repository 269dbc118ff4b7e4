use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::SubjectId;

/// One leave-one-subject-out split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub test_subject: SubjectId,
    /// Sorted.
    pub train_subjects: Vec<SubjectId>,
}

impl Fold {
    /// Subject whose windows drive early stopping: the training subjects
    /// take turns by fold index. `None` when only one training subject exists.
    pub fn validation_subject(&self) -> Option<&SubjectId> {
        if self.train_subjects.len() < 2 {
            return None;
        }
        Some(&self.train_subjects[self.index % self.train_subjects.len()])
    }

    /// Positions of the items belonging to training subjects.
    pub fn train_indices<'a>(&self, subjects: impl IntoIterator<Item = &'a SubjectId>) -> Vec<usize> {
        subjects
            .into_iter()
            .enumerate()
            .filter(|(_, s)| self.train_subjects.binary_search(s).is_ok())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn test_indices<'a>(&self, subjects: impl IntoIterator<Item = &'a SubjectId>) -> Vec<usize> {
        subjects
            .into_iter()
            .enumerate()
            .filter(|(_, s)| **s == self.test_subject)
            .map(|(i, _)| i)
            .collect()
    }
}

/// One fold per subject, in the given order.
pub fn loso_folds(subjects: &[SubjectId]) -> Result<Vec<Fold>> {
    let mut seen = BTreeSet::new();
    for s in subjects {
        if !seen.insert(s) {
            return Err(Error::precondition(format!("duplicate subject id {s}")));
        }
    }
    if subjects.len() < 2 {
        return Err(Error::precondition(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    Ok(subjects
        .iter()
        .enumerate()
        .map(|(index, test)| Fold {
            index,
            test_subject: test.clone(),
            train_subjects: seen.iter().filter(|s| **s != test).map(|s| (*s).clone()).collect(),
        })
        .collect())
}

/// Fails when any item of a training input belongs to the held-out subject.
pub fn ensure_excluded<'a>(
    held_out: &SubjectId,
    stage: &str,
    subjects: impl IntoIterator<Item = &'a SubjectId>,
) -> Result<()> {
    if subjects.into_iter().any(|s| s == held_out) {
        return Err(Error::Leakage {
            subject: held_out.to_string(),
            stage: stage.to_owned(),
        });
    }
    Ok(())
}
