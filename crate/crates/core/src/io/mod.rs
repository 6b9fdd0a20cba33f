//! Serialization: structure XML and the line-oriented record formats.
//!
//! Every record file starts with a header line `<magic> v1 <count>=<n>`;
//! readers reject other magics and versions. Layouts are listed in FORMATS.md.

mod records;
mod xml;

use thiserror::Error;

use crate::structure::Violation;

pub use records::{
    read_adjacency, read_annotations, read_boxes, read_reports, read_spans, read_trace, read_words, sweep_table,
    write_adjacency, write_annotations, write_boxes, write_reports, write_spans, write_trace, write_words, BoxRecord,
    NamedReport, SpanRecord,
};
pub use xml::{emit_xml, parse_prediction_xml, parse_xml, parse_xml_unchecked};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IoError {
    #[error("line {line}: malformed document: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("structure fails validation: {}", join(.0))]
    StructureInvalid(Vec<Violation>),
    #[error("line 1: expected a {expected} file, found {found:?}")]
    WrongFormat { expected: &'static str, found: String },
    #[error("line 1: unsupported {format} version {found:?} (this reader handles v1)")]
    UnknownVersion { format: &'static str, found: String },
    #[error("line {line}: file ends after {found} of {expected} expected records")]
    Truncated { expected: usize, found: usize, line: usize },
}

fn join(v: &[Violation]) -> String {
    const SHOWN: usize = 5;
    let mut s = v.iter().take(SHOWN).map(ToString::to_string).collect::<Vec<_>>().join("; ");
    if v.len() > SHOWN {
        s.push_str(&format!("; and {} more", v.len() - SHOWN));
    }
    s
}
