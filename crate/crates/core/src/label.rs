use std::fmt;

use serde::{Deserialize, Serialize};

/// A semantic class in `1..=N`.
///
/// Labels are one-based everywhere they are visible (files, reports,
/// configuration); [`Label::index`] gives the zero-based slot into a
/// confidence vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(u16);

impl Label {
    /// # Panics
    /// If `value` is zero.
    pub fn new(value: u16) -> Self {
        assert!(value >= 1, "labels are one-based");
        Label(value)
    }

    pub fn from_index(index: usize) -> Self {
        Label(u16::try_from(index + 1).expect("label index fits in u16"))
    }

    pub fn get(self) -> u16 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0) - 1
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}
