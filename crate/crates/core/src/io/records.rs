use std::fmt::Write as _;

use super::IoError;
use crate::adjacency::{BoolMatrix, Direction, RectilinearAdjacency};
use crate::eval::{Criterion, EvalReport};
use crate::geometry::BoundingBox;
use crate::losses::LossBreakdown;
use crate::normalize::{ContentAnnotation, WordBox};
use crate::refine::{LossWeights, RefineTrace, TraceRecord};
use crate::structure::GridSpan;

const ANNOTATIONS: &str = "tsr-annotations";
const WORDS: &str = "tsr-words";
const BOXES: &str = "tsr-boxes";
const SPANS: &str = "tsr-spans";
const ADJACENCY: &str = "tsr-adjacency";
const REPORT: &str = "tsr-report";
const TRACE: &str = "tsr-trace";

/// A predicted cell box keyed by cell id.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRecord {
    pub id: usize,
    pub bbox: BoundingBox,
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanRecord {
    pub id: usize,
    pub span: GridSpan,
}

/// An evaluation report with the table (or aggregate) it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedReport {
    pub name: String,
    pub report: EvalReport,
}

fn header(magic: &str, key: &str, n: usize) -> String {
    format!("{magic} v1 {key}={n}\n")
}

/// Splits off and checks the header, then returns exactly `count` record
/// lines with their 1-based line numbers.
fn records<'a>(
    text: &'a str,
    magic: &'static str,
    key: &str,
    per_record: impl Fn(usize) -> usize,
) -> Result<(usize, Vec<(usize, &'a str)>), IoError> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    let parts: Vec<&str> = first.split_whitespace().collect();
    if parts.first() != Some(&magic) {
        return Err(IoError::WrongFormat {
            expected: magic,
            found: first.chars().take(40).collect(),
        });
    }
    match parts.get(1) {
        Some(&"v1") => {}
        other => {
            return Err(IoError::UnknownVersion {
                format: magic,
                found: other.unwrap_or(&"").to_string(),
            })
        }
    }
    let n = match parts.as_slice() {
        [_, _, field] => field
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .and_then(|v| v.parse::<usize>().ok()),
        _ => None,
    }
    .ok_or_else(|| IoError::Malformed {
        line: 1,
        message: format!("header must read \"{magic} v1 {key}=<n>\""),
    })?;

    let expected = per_record(n);
    let mut out = Vec::with_capacity(expected);
    for (idx, line) in lines.by_ref().enumerate() {
        if out.len() == expected {
            if !line.trim().is_empty() {
                return Err(IoError::Malformed {
                    line: idx + 2,
                    message: format!("unexpected content after {expected} records"),
                });
            }
            continue;
        }
        out.push((idx + 2, line));
    }
    if out.len() < expected {
        return Err(IoError::Truncated {
            expected,
            found: out.len(),
            line: out.len() + 2,
        });
    }
    Ok((n, out))
}

fn fields(line_no: usize, line: &str, n: usize) -> Result<Vec<&str>, IoError> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != n {
        return Err(IoError::Schema {
            line: line_no,
            message: format!("expected {n} tab-separated fields, found {}", f.len()),
        });
    }
    Ok(f)
}

fn num<T: std::str::FromStr>(line: usize, name: &str, v: &str) -> Result<T, IoError> {
    v.parse().map_err(|_| IoError::Schema {
        line,
        message: format!("field {name}: cannot parse {v:?}"),
    })
}

fn float(line: usize, name: &str, v: &str) -> Result<f64, IoError> {
    let x: f64 = num(line, name, v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(IoError::Schema {
            line,
            message: format!("field {name}: {v:?} is not finite"),
        })
    }
}

fn flag(line: usize, name: &str, v: &str) -> Result<bool, IoError> {
    match v {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(IoError::Schema {
            line,
            message: format!("field {name}: expected 0 or 1, found {v:?}"),
        }),
    }
}

fn bbox(line: usize, f: &[&str]) -> Result<BoundingBox, IoError> {
    BoundingBox::new(
        float(line, "x1", f[0])?,
        float(line, "y1", f[1])?,
        float(line, "x2", f[2])?,
        float(line, "y2", f[3])?,
    )
    .map_err(|e| IoError::Schema {
        line,
        message: e.to_string(),
    })
}

fn span(line: usize, f: &[&str]) -> Result<GridSpan, IoError> {
    GridSpan::new(
        num(line, "sr", f[0])?,
        num(line, "sc", f[1])?,
        num(line, "er", f[2])?,
        num(line, "ec", f[3])?,
    )
    .map_err(|e| IoError::Schema {
        line,
        message: e.to_string(),
    })
}

fn write_box(out: &mut String, b: &BoundingBox) {
    write!(out, "{:?}\t{:?}\t{:?}\t{:?}", b.x1(), b.y1(), b.x2(), b.y2()).unwrap();
}

fn write_span(out: &mut String, s: &GridSpan) {
    write!(out, "{}\t{}\t{}\t{}", s.sr(), s.sc(), s.er(), s.ec()).unwrap();
}

/// Backslash escapes for tab, newline, carriage return and backslash.
fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            _ => out.push(ch),
        }
    }
    out
}

fn unescape(line: usize, s: &str) -> Result<String, IoError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        out.push(match chars.next() {
            Some('\\') => '\\',
            Some('t') => '\t',
            Some('n') => '\n',
            Some('r') => '\r',
            other => {
                return Err(IoError::Schema {
                    line,
                    message: format!("bad escape \\{}", other.map(String::from).unwrap_or_default()),
                })
            }
        });
    }
    Ok(out)
}

/// Empty text field means no text.
fn opt_text(line: usize, s: &str) -> Result<Option<String>, IoError> {
    if s.is_empty() {
        Ok(None)
    } else {
        unescape(line, s).map(Some)
    }
}

/// `sr sc er ec x1 y1 x2 y2 text`
pub fn write_annotations(items: &[ContentAnnotation]) -> String {
    let mut out = header(ANNOTATIONS, "count", items.len());
    for a in items {
        write_span(&mut out, &a.span);
        out.push('\t');
        write_box(&mut out, &a.bbox);
        writeln!(out, "\t{}", escape(a.text.as_deref().unwrap_or(""))).unwrap();
    }
    out
}

pub fn read_annotations(text: &str) -> Result<Vec<ContentAnnotation>, IoError> {
    let (_, lines) = records(text, ANNOTATIONS, "count", |n| n)?;
    lines
        .into_iter()
        .map(|(no, line)| {
            let f = fields(no, line, 9)?;
            Ok(ContentAnnotation {
                span: span(no, &f[0..4])?,
                bbox: bbox(no, &f[4..8])?,
                text: opt_text(no, f[8])?,
            })
        })
        .collect()
}

/// `x1 y1 x2 y2 text`
pub fn write_words(items: &[WordBox]) -> String {
    let mut out = header(WORDS, "count", items.len());
    for w in items {
        write_box(&mut out, &w.bbox);
        writeln!(out, "\t{}", escape(w.text.as_deref().unwrap_or(""))).unwrap();
    }
    out
}

pub fn read_words(text: &str) -> Result<Vec<WordBox>, IoError> {
    let (_, lines) = records(text, WORDS, "count", |n| n)?;
    lines
        .into_iter()
        .map(|(no, line)| {
            let f = fields(no, line, 5)?;
            Ok(WordBox {
                bbox: bbox(no, &f[0..4])?,
                text: opt_text(no, f[4])?,
            })
        })
        .collect()
}

/// `id x1 y1 x2 y2 empty`
pub fn write_boxes(items: &[BoxRecord]) -> String {
    let mut out = header(BOXES, "count", items.len());
    for b in items {
        write!(out, "{}\t", b.id).unwrap();
        write_box(&mut out, &b.bbox);
        writeln!(out, "\t{}", u8::from(b.empty)).unwrap();
    }
    out
}

pub fn read_boxes(text: &str) -> Result<Vec<BoxRecord>, IoError> {
    let (_, lines) = records(text, BOXES, "count", |n| n)?;
    lines
        .into_iter()
        .map(|(no, line)| {
            let f = fields(no, line, 6)?;
            Ok(BoxRecord {
                id: num(no, "id", f[0])?,
                bbox: bbox(no, &f[1..5])?,
                empty: flag(no, "empty", f[5])?,
            })
        })
        .collect()
}

/// `id sr sc er ec`
pub fn write_spans(items: &[SpanRecord]) -> String {
    let mut out = header(SPANS, "count", items.len());
    for s in items {
        write!(out, "{}\t", s.id).unwrap();
        write_span(&mut out, &s.span);
        out.push('\n');
    }
    out
}

pub fn read_spans(text: &str) -> Result<Vec<SpanRecord>, IoError> {
    let (_, lines) = records(text, SPANS, "count", |n| n)?;
    lines
        .into_iter()
        .map(|(no, line)| {
            let f = fields(no, line, 5)?;
            Ok(SpanRecord {
                id: num(no, "id", f[0])?,
                span: span(no, &f[1..5])?,
            })
        })
        .collect()
}

const MATRIX_ORDER: [Direction; 4] = [Direction::Left, Direction::Right, Direction::Top, Direction::Bottom];

/// Header `n=N`, then the left, right, top and bottom matrices as `N` rows of
/// `N` characters `0`/`1` each.
pub fn write_adjacency(adj: &RectilinearAdjacency) -> String {
    let n = adj.len();
    let mut out = header(ADJACENCY, "n", n);
    for d in MATRIX_ORDER {
        let m = adj.matrix(d);
        for i in 0..n {
            out.extend(m.row(i).iter().map(|&b| if b { '1' } else { '0' }));
            out.push('\n');
        }
    }
    out
}

/// The four matrices in the order left, right, top, bottom; invariants are
/// left to [`RectilinearAdjacency::from_matrices`].
pub fn read_adjacency(text: &str) -> Result<[BoolMatrix; 4], IoError> {
    let (n, lines) = records(text, ADJACENCY, "n", |n| 4 * n)?;
    let mut rows: Vec<Vec<bool>> = Vec::with_capacity(4 * n);
    for (no, line) in lines {
        let row: Vec<bool> = line
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(IoError::Schema {
                    line: no,
                    message: format!("matrix rows hold only 0 and 1, found {other:?}"),
                }),
            })
            .collect::<Result<_, _>>()?;
        if row.len() != n {
            return Err(IoError::Schema {
                line: no,
                message: format!("matrix row has {} entries, expected {n}", row.len()),
            });
        }
        rows.push(row);
    }
    let mut chunks = rows.chunks(n.max(1)).map(|c| BoolMatrix::from_rows(c.to_vec()).expect("rows are square"));
    let mut next = || chunks.next().unwrap_or_else(|| BoolMatrix::new(0));
    Ok([next(), next(), next(), next()])
}

/// `name criterion iou tp fp fn precision recall f1 unmatched_pred unmatched_gt`
pub fn write_reports(items: &[NamedReport]) -> String {
    let mut out = header(REPORT, "count", items.len());
    for NamedReport { name, report: r } in items {
        writeln!(
            out,
            "{}\t{}\t{:?}\t{}\t{}\t{}\t{:?}\t{:?}\t{:?}\t{}\t{}",
            escape(name),
            r.criterion,
            r.iou_threshold,
            r.true_positives,
            r.false_positives,
            r.false_negatives,
            r.precision,
            r.recall,
            r.f1,
            r.unmatched_pred_cells,
            r.unmatched_gt_cells
        )
        .unwrap();
    }
    out
}

pub fn read_reports(text: &str) -> Result<Vec<NamedReport>, IoError> {
    let (_, lines) = records(text, REPORT, "count", |n| n)?;
    lines
        .into_iter()
        .map(|(no, line)| {
            let f = fields(no, line, 11)?;
            let criterion: Criterion = f[1].parse().map_err(|message| IoError::Schema { line: no, message })?;
            Ok(NamedReport {
                name: unescape(no, f[0])?,
                report: EvalReport {
                    criterion,
                    iou_threshold: float(no, "iou", f[2])?,
                    true_positives: num(no, "tp", f[3])?,
                    false_positives: num(no, "fp", f[4])?,
                    false_negatives: num(no, "fn", f[5])?,
                    precision: float(no, "precision", f[6])?,
                    recall: float(no, "recall", f[7])?,
                    f1: float(no, "f1", f[8])?,
                    unmatched_pred_cells: num(no, "unmatched_pred", f[9])?,
                    unmatched_gt_cells: num(no, "unmatched_gt", f[10])?,
                },
            })
        })
        .collect()
}

/// `iteration objective l_al l_cl l_ol_x l_ol_y w_al w_cl w_ol_x w_ol_y`
pub fn write_trace(trace: &RefineTrace) -> String {
    let mut out = header(TRACE, "count", trace.records.len());
    for r in &trace.records {
        let l = r.losses.as_array();
        let w = r.weights.as_array();
        writeln!(
            out,
            "{}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}\t{:?}",
            r.iteration, r.objective, l[0], l[1], l[2], l[3], w[0], w[1], w[2], w[3]
        )
        .unwrap();
    }
    out
}

pub fn read_trace(text: &str) -> Result<RefineTrace, IoError> {
    let (_, lines) = records(text, TRACE, "count", |n| n)?;
    let records = lines
        .into_iter()
        .map(|(no, line)| {
            let f = fields(no, line, 10)?;
            let vals = |from: usize| -> Result<[f64; 4], IoError> {
                let mut v = [0.0; 4];
                for (k, slot) in v.iter_mut().enumerate() {
                    *slot = float(no, "value", f[from + k])?;
                }
                Ok(v)
            };
            Ok(TraceRecord {
                iteration: num(no, "iteration", f[0])?,
                objective: float(no, "objective", f[1])?,
                losses: LossBreakdown::from_array(vals(2)?),
                weights: LossWeights::from_array(vals(6)?).map_err(|e| IoError::Schema {
                    line: no,
                    message: e.to_string(),
                })?,
            })
        })
        .collect::<Result<_, IoError>>()?;
    Ok(RefineTrace {
        records,
        cell_weights: Vec::new(),
    })
}

/// Aligned plain-text table, one row per threshold.
pub fn sweep_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let criterion = reports.first().map_or("-".to_string(), |r| r.criterion.to_string().to_uppercase());
    writeln!(out, "Criterion: {criterion}").unwrap();
    writeln!(out, "{:<6}{:>11}{:>9}{:>9}", "IoU", "Precision", "Recall", "F1").unwrap();
    for r in reports {
        writeln!(
            out,
            "{:<6}{:>11.4}{:>9.4}{:>9.4}",
            format!("{:.1}", r.iou_threshold),
            r.precision,
            r.recall,
            r.f1
        )
        .unwrap();
    }
    out
}
