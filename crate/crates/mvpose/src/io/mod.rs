//! File formats: JSON Lines records, JSON config files and binary streams.

pub mod binary;
pub mod files;
pub mod jsonl;
pub mod records;

pub use binary::{read_patches, write_patches, HeatmapHeader, HeatmapReader, HeatmapWriter};
pub use files::*;
pub use jsonl::{read_json, read_jsonl, write_json, write_jsonl, write_text, JsonlReader, JsonlWriter};
pub use records::*;
