use std::fmt::Write as _;

use roxmltree::{Document, Node};

use super::IoError;
use crate::geometry::BoundingBox;
use crate::structure::{Cell, GridSpan, TableStructure};

const CELL_ATTRS: [&str; 6] = ["id", "start-row", "end-row", "start-col", "end-col", "empty"];
const BBOX_ATTRS: [&str; 4] = ["x1", "y1", "x2", "y2"];

/// Structure XML, cells in reading order.
///
/// Coordinates use the shortest decimal form that reads back to the same
/// value, so `parse_xml(emit_xml(t))` reproduces `t` exactly.
pub fn emit_xml(t: &TableStructure) -> String {
    let mut cells: Vec<&Cell> = t.cells.iter().collect();
    cells.sort_by_key(|c| (c.span.sr(), c.span.sc(), c.span.er(), c.span.ec(), c.id));

    let mut out = String::new();
    writeln!(out, "<table rows=\"{}\" cols=\"{}\">", t.n_rows, t.n_cols).unwrap();
    for c in cells {
        let s = c.span;
        write!(
            out,
            "  <cell id=\"{}\" start-row=\"{}\" end-row=\"{}\" start-col=\"{}\" end-col=\"{}\" empty=\"{}\">",
            c.id,
            s.sr(),
            s.er(),
            s.sc(),
            s.ec(),
            c.empty
        )
        .unwrap();
        if let Some(b) = c.bbox {
            write!(
                out,
                "<bbox x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>",
                b.x1(),
                b.y1(),
                b.x2(),
                b.y2()
            )
            .unwrap();
        }
        if let Some(text) = &c.text {
            write!(out, "<content>{}</content>", escape_text(text)).unwrap();
        }
        out.push_str("</cell>\n");
    }
    out.push_str("</table>\n");
    out
}

fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#13;"),
            _ => out.push(ch),
        }
    }
    out
}

/// Ground-truth XML: the structure must pass full validation.
pub fn parse_xml(text: &str) -> Result<TableStructure, IoError> {
    let t = parse_xml_unchecked(text)?;
    let violations = t.validate();
    if violations.is_empty() {
        Ok(t)
    } else {
        Err(IoError::StructureInvalid(violations))
    }
}

/// Predicted XML: grid holes and misaligned or overlapping boxes are
/// accepted; out-of-grid spans, duplicate ids and doubly covered positions are not.
pub fn parse_prediction_xml(text: &str) -> Result<TableStructure, IoError> {
    let t = parse_xml_unchecked(text)?;
    let violations = t.structural_violations(false);
    if violations.is_empty() {
        Ok(t)
    } else {
        Err(IoError::StructureInvalid(violations))
    }
}

/// Reads the document without checking the structure rules.
pub fn parse_xml_unchecked(text: &str) -> Result<TableStructure, IoError> {
    let doc = Document::parse(text).map_err(|e| IoError::Malformed {
        line: e.pos().row as usize,
        message: e.to_string(),
    })?;
    let line_of = |n: Node| doc.text_pos_at(n.range().start).row as usize;
    let schema = |n: Node, message: String| IoError::Schema {
        line: line_of(n),
        message,
    };

    let root = doc.root_element();
    if root.tag_name().name() != "table" {
        return Err(schema(
            root,
            format!("root element must be <table>, found <{}>", root.tag_name().name()),
        ));
    }
    check_attrs(root, &["rows", "cols"]).map_err(|m| schema(root, m))?;
    let n_rows = usize_attr(root, "rows").map_err(|m| schema(root, m))?;
    let n_cols = usize_attr(root, "cols").map_err(|m| schema(root, m))?;

    let mut cells = Vec::new();
    for node in root.children() {
        if !node.is_element() {
            if node.is_text() && !node.text().unwrap_or("").trim().is_empty() {
                return Err(schema(node, "unexpected text inside <table>".into()));
            }
            continue;
        }
        if node.tag_name().name() != "cell" {
            return Err(schema(node, format!("unexpected element <{}>", node.tag_name().name())));
        }
        cells.push(parse_cell(node).map_err(|m| schema(node, m))?);
    }
    Ok(TableStructure::new(n_rows, n_cols, cells))
}

fn parse_cell(node: Node) -> Result<Cell, String> {
    check_attrs(node, &CELL_ATTRS)?;
    let id = usize_attr(node, "id")?;
    let span = GridSpan::new(
        usize_attr(node, "start-row")?,
        usize_attr(node, "start-col")?,
        usize_attr(node, "end-row")?,
        usize_attr(node, "end-col")?,
    )
    .map_err(|e| format!("cell {id}: {e}"))?;
    let empty = match attr(node, "empty")? {
        "true" => true,
        "false" => false,
        other => return Err(format!("cell {id}: empty must be \"true\" or \"false\", found {other:?}")),
    };

    let mut bbox = None;
    let mut text = None;
    for child in node.children() {
        if !child.is_element() {
            if child.is_text() && !child.text().unwrap_or("").trim().is_empty() {
                return Err(format!("cell {id}: unexpected text outside <content>"));
            }
            continue;
        }
        match child.tag_name().name() {
            "bbox" if bbox.is_none() => {
                check_attrs(child, &BBOX_ATTRS)?;
                let v = |a| f64_attr(child, a);
                let b = BoundingBox::new(v("x1")?, v("y1")?, v("x2")?, v("y2")?);
                bbox = Some(b.map_err(|e| format!("cell {id}: {e}"))?);
            }
            "content" if text.is_none() => {
                if child.children().any(|n| n.is_element()) {
                    return Err(format!("cell {id}: <content> holds markup"));
                }
                text = Some(child.text().unwrap_or("").to_string());
            }
            other => return Err(format!("cell {id}: unexpected or repeated element <{other}>")),
        }
    }
    let bbox = bbox.ok_or_else(|| format!("cell {id}: missing <bbox>"))?;
    Ok(Cell {
        id,
        bbox: Some(bbox),
        span,
        empty,
        text,
    })
}

fn check_attrs(node: Node, allowed: &[&str]) -> Result<(), String> {
    for a in node.attributes() {
        if !allowed.contains(&a.name()) {
            return Err(format!("unknown attribute {:?} on <{}>", a.name(), node.tag_name().name()));
        }
    }
    Ok(())
}

fn attr<'a>(node: Node<'a, '_>, name: &str) -> Result<&'a str, String> {
    node.attribute(name)
        .ok_or_else(|| format!("<{}> is missing attribute {name:?}", node.tag_name().name()))
}

fn usize_attr(node: Node, name: &str) -> Result<usize, String> {
    let v = attr(node, name)?;
    v.parse()
        .map_err(|_| format!("attribute {name:?} must be a non-negative integer, found {v:?}"))
}

fn f64_attr(node: Node, name: &str) -> Result<f64, String> {
    let v = attr(node, name)?;
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("attribute {name:?} must be a finite number, found {v:?}"))
}
