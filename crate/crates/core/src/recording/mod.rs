//! Bag recording, playback and CSV export.

pub mod bag;
pub mod export;
pub mod playback;
pub mod recorder;

use std::collections::BTreeMap;
use std::fmt;

pub use bag::{read_bag, read_bag_file, read_bag_prefix, BagError, BagReader, BagWriter};
pub use export::{export_csv, CsvExportSpec, ExportError};
pub use playback::{play, play_file, BagPlayer, PlayError, PlayOptions};
pub use recorder::{RecordHandle, Recorder};

use crate::bus::Envelope;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicInfo {
    pub type_name: &'static str,
    pub count: usize,
}

/// Summary printed by `rpbag info`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BagInfo {
    pub count: usize,
    pub first_ns: Option<u64>,
    pub last_ns: Option<u64>,
    pub topics: BTreeMap<String, TopicInfo>,
}

impl BagInfo {
    pub fn of(records: &[Envelope]) -> Self {
        let mut topics: BTreeMap<String, TopicInfo> = BTreeMap::new();
        for e in records {
            topics
                .entry(e.topic.clone())
                .or_insert(TopicInfo {
                    type_name: e.payload.type_name(),
                    count: 0,
                })
                .count += 1;
        }
        Self {
            count: records.len(),
            first_ns: records.first().map(|e| e.stamp_ns),
            last_ns: records.last().map(|e| e.stamp_ns),
            topics,
        }
    }

    pub fn span_ns(&self) -> u64 {
        match (self.first_ns, self.last_ns) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }
}

impl fmt::Display for BagInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records:  {}", self.count)?;
        if let (Some(a), Some(b)) = (self.first_ns, self.last_ns) {
            writeln!(
                f,
                "span:     {} s ({} .. {})",
                export::format_time(b - a),
                export::format_time(a),
                export::format_time(b)
            )?;
        }
        for (t, i) in &self.topics {
            writeln!(f, "  {t}  {}  {}", i.type_name, i.count)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{Payload, TextMsg};

    #[test]
    fn info_counts_topics() {
        let t = |topic: &str, s| Envelope::new(topic, s, Payload::Text(TextMsg { text: String::new() }));
        let info = BagInfo::of(&[t("a", 1_000_000_000), t("b", 1_500_000_000), t("a", 3_000_000_000)]);
        assert_eq!(info.count, 3);
        assert_eq!(info.span_ns(), 2_000_000_000);
        assert_eq!(info.topics["a"].count, 2);
        let s = info.to_string();
        assert!(s.contains("2.000000000 s"), "{s}");
        assert_eq!(BagInfo::of(&[]).span_ns(), 0);
    }
}
