//! Record of the argmax choices made by the adaptive operators during one
//! forward pass. The decoder reads it back to undo every data-dependent
//! offset.

use serde::{Deserialize, Serialize};

/// Which adaptive operator made a choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    /// Tokenization offset `m*`, one entry per axis in `[0, L)`.
    Token,
    /// Window-grid offset in `[0, W)` per axis.
    Window,
    /// Polyphase component index in `[0, P)` per axis.
    Merge,
}

/// A single argmax outcome.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub offset: Vec<usize>,
    /// Another candidate scored exactly the same maximum.
    pub tied: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionEntry {
    /// Encoder stage; the tokenizer is stage 0 and stages count from 1.
    pub stage: usize,
    pub kind: SelectionKind,
    pub offset: Vec<usize>,
    pub tied: bool,
}

/// Entries in execution order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionTrace {
    entries: Vec<SelectionEntry>,
}

impl SelectionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, stage: usize, kind: SelectionKind, sel: Selection) {
        self.entries.push(SelectionEntry { stage, kind, offset: sel.offset, tied: sel.tied });
    }

    pub fn entries(&self) -> &[SelectionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, stage: usize, kind: SelectionKind) -> Option<&SelectionEntry> {
        self.entries.iter().find(|e| e.stage == stage && e.kind == kind)
    }

    pub fn tie_count(&self) -> usize {
        self.entries.iter().filter(|e| e.tied).count()
    }

    pub fn any_tied(&self) -> bool {
        self.entries.iter().any(|e| e.tied)
    }
}
