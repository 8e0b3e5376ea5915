use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::FileId;
use crate::kv::{KvDoc, KvError};

/// Partitions to erase (permanent) or mark unavailable (transient).
///
/// Text form:
///
/// ```text
/// erased = 3, 17
/// unavailable = 4
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultPlan {
    pub erased: BTreeSet<FileId>,
    pub unavailable: BTreeSet<FileId>,
}

impl FaultPlan {
    pub fn is_empty(&self) -> bool {
        self.erased.is_empty() && self.unavailable.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let doc = KvDoc::parse(text)?;
        doc.expect_only(&["erased", "unavailable"])?;
        Self::from_doc(&doc)
    }

    pub(crate) fn from_doc(doc: &KvDoc) -> Result<Self, KvError> {
        let ids = |key| -> Result<BTreeSet<FileId>, KvError> {
            Ok(doc.get_list::<u32>(key)?.unwrap_or_default().into_iter().map(FileId).collect())
        };
        Ok(Self { erased: ids("erased")?, unavailable: ids("unavailable")? })
    }

    pub fn to_text(&self) -> String {
        let join = |s: &BTreeSet<FileId>| s.iter().map(|f| f.0.to_string()).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let _ = writeln!(out, "erased = {}", join(&self.erased));
        let _ = writeln!(out, "unavailable = {}", join(&self.unavailable));
        out
    }
}
