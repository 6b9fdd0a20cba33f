//! Ground-truth normalization (content boxes to an aligned cell grid with
//! synthesized empty cells) and word-box boundary snapping.

use thiserror::Error;

use crate::geometry::{BoundingBox, GeometryError, X1, X2, Y1, Y2};
use crate::structure::{Axis, Cell, GridSpan, StructureError, TableStructure, DEFAULT_ALIGN_TOL};

pub const DEFAULT_PAD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormalizeError {
    #[error("grid must have at least one row and one column")]
    EmptyGrid,
    #[error("annotation {index} span {span} lies outside the {n_rows}x{n_cols} grid")]
    SpanOutOfGrid {
        index: usize,
        span: GridSpan,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("annotations {a} and {b} both cover position ({row}, {col})")]
    OverlappingAnnotations { a: usize, b: usize, row: usize, col: usize },
    #[error("{axis} boundary {line}: content ending at {before} runs past content starting at {after}")]
    BoundaryConflict {
        axis: Axis,
        line: usize,
        before: f64,
        after: f64,
    },
    #[error("{axis} boundary {line} has no content on either side to anchor it")]
    UnanchoredBoundary { axis: Axis, line: usize },
    #[error("pad must be finite and non-negative, got {0}")]
    InvalidPad(f64),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A ground-truth cell given by the tight box around its content.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentAnnotation {
    pub bbox: BoundingBox,
    pub span: GridSpan,
    pub text: Option<String>,
}

impl ContentAnnotation {
    pub fn new(bbox: BoundingBox, span: GridSpan) -> Self {
        Self { bbox, span, text: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordBox {
    pub bbox: BoundingBox,
    pub text: Option<String>,
}

impl WordBox {
    pub fn new(bbox: BoundingBox) -> Self {
        Self { bbox, text: None }
    }
}

/// Builds an aligned cell grid around content boxes.
///
/// A boundary with content on both sides sits midway between the last content
/// end before it and the first content start after it. A boundary with content
/// on one side only (including the table's outer edges) sits `pad` pixels
/// beyond that content. Boundaries with no content on either side are linearly
/// interpolated between their nearest placed neighbours. Grid positions not
/// covered by any annotation become 1x1 empty cells. Ids follow reading order.
pub fn normalize_ground_truth(
    annotations: &[ContentAnnotation],
    n_rows: usize,
    n_cols: usize,
    pad: f64,
) -> Result<TableStructure, NormalizeError> {
    if n_rows == 0 || n_cols == 0 {
        return Err(NormalizeError::EmptyGrid);
    }
    if !pad.is_finite() || pad < 0.0 {
        return Err(NormalizeError::InvalidPad(pad));
    }
    let mut owner: Vec<Option<usize>> = vec![None; n_rows * n_cols];
    for (index, a) in annotations.iter().enumerate() {
        if a.span.er() >= n_rows || a.span.ec() >= n_cols {
            return Err(NormalizeError::SpanOutOfGrid {
                index,
                span: a.span,
                n_rows,
                n_cols,
            });
        }
        for row in a.span.rows() {
            for col in a.span.cols() {
                let slot = &mut owner[row * n_cols + col];
                if let Some(prev) = *slot {
                    return Err(NormalizeError::OverlappingAnnotations {
                        a: prev,
                        b: index,
                        row,
                        col,
                    });
                }
                *slot = Some(index);
            }
        }
    }

    let cols = axis_lines(annotations, Axis::Cols, n_cols, pad)?;
    let rows = axis_lines(annotations, Axis::Rows, n_rows, pad)?;
    let rect = |span: &GridSpan| {
        BoundingBox::new(cols[span.sc()], rows[span.sr()], cols[span.ec() + 1], rows[span.er() + 1])
    };

    let mut cells = Vec::with_capacity(n_rows * n_cols);
    for a in annotations {
        let mut cell = Cell::new(0, Some(rect(&a.span)?), a.span);
        cell.text = a.text.clone();
        cells.push(cell);
    }
    for row in 0..n_rows {
        for col in 0..n_cols {
            if owner[row * n_cols + col].is_none() {
                let span = GridSpan::single(row, col);
                cells.push(Cell::empty(0, Some(rect(&span)?), span));
            }
        }
    }
    let mut t = TableStructure::new(n_rows, n_cols, cells);
    t.assign_reading_order_ids();
    Ok(t)
}

fn axis_lines(annotations: &[ContentAnnotation], axis: Axis, n: usize, pad: f64) -> Result<Vec<f64>, NormalizeError> {
    // Content ending just before each line and starting just after it.
    let mut before: Vec<Option<f64>> = vec![None; n + 1];
    let mut after: Vec<Option<f64>> = vec![None; n + 1];
    for a in annotations {
        let c = a.bbox.coords();
        let (start, end, lo, hi) = match axis {
            Axis::Cols => (a.span.sc(), a.span.ec(), c[X1], c[X2]),
            Axis::Rows => (a.span.sr(), a.span.er(), c[Y1], c[Y2]),
        };
        let b = &mut before[end + 1];
        *b = Some(b.map_or(hi, |v: f64| v.max(hi)));
        let s = &mut after[start];
        *s = Some(s.map_or(lo, |v: f64| v.min(lo)));
    }

    let mut lines: Vec<Option<f64>> = Vec::with_capacity(n + 1);
    for line in 0..=n {
        lines.push(match (before[line], after[line]) {
            (Some(b), Some(a)) => {
                if b > a {
                    return Err(NormalizeError::BoundaryConflict {
                        axis,
                        line,
                        before: b,
                        after: a,
                    });
                }
                Some((b + a) / 2.0)
            }
            (Some(b), None) => Some(b + pad),
            (None, Some(a)) => Some(a - pad),
            (None, None) => None,
        });
    }

    let mut out = vec![0.0; n + 1];
    for line in 0..=n {
        out[line] = match lines[line] {
            Some(v) => v,
            None => {
                let prev = (0..line).rev().find(|&k| lines[k].is_some());
                let next = (line + 1..=n).find(|&k| lines[k].is_some());
                match (prev, next) {
                    (Some(p), Some(q)) => {
                        let (a, b) = (lines[p].unwrap(), lines[q].unwrap());
                        a + (b - a) * (line - p) as f64 / (q - p) as f64
                    }
                    _ => return Err(NormalizeError::UnanchoredBoundary { axis, line }),
                }
            }
        };
    }
    for line in 1..=n {
        if out[line] <= out[line - 1] {
            return Err(NormalizeError::BoundaryConflict {
                axis,
                line,
                before: out[line - 1],
                after: out[line],
            });
        }
    }
    Ok(out)
}

/// A boundary that could not be moved clear of a word.
#[derive(Debug, Clone, PartialEq)]
pub struct UnresolvedSnap {
    pub axis: Axis,
    pub line: usize,
    pub position: f64,
    /// Index into the word list.
    pub word: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapOutcome {
    pub structure: TableStructure,
    pub unresolved: Vec<UnresolvedSnap>,
}

/// Moves interior grid boundaries off any word they cut.
///
/// Only the parts of a line that separate two different cells count. A line
/// cutting a word moves to the nearest position clear of every word along
/// those parts, staying strictly between its neighbouring lines; ties go to
/// the smaller coordinate. Lines with no such position are reported and left
/// where they are. Passes repeat until nothing moves, so the result is a
/// fixed point. Cell edges are rewritten only on lines that moved.
pub fn snap_to_word_boxes(t: &TableStructure, words: &[WordBox]) -> Result<SnapOutcome, NormalizeError> {
    snap_to_word_boxes_with(t, words, DEFAULT_ALIGN_TOL)
}

pub fn snap_to_word_boxes_with(
    t: &TableStructure,
    words: &[WordBox],
    align_tol: f64,
) -> Result<SnapOutcome, NormalizeError> {
    let original = t.grid_boundaries(align_tol)?;
    let mut cols = original.cols.clone();
    let mut rows = original.rows.clone();
    let occ = t.occupancy();

    // Grid positions (along the other axis) where a line separates two cells.
    let col_segments: Vec<Vec<usize>> = (0..=t.n_cols)
        .map(|k| {
            if k == 0 || k == t.n_cols {
                return Vec::new();
            }
            (0..t.n_rows).filter(|&r| occ.at(r, k - 1) != occ.at(r, k)).collect()
        })
        .collect();
    let row_segments: Vec<Vec<usize>> = (0..=t.n_rows)
        .map(|k| {
            if k == 0 || k == t.n_rows {
                return Vec::new();
            }
            (0..t.n_cols).filter(|&c| occ.at(k - 1, c) != occ.at(k, c)).collect()
        })
        .collect();

    let max_passes = 2 * (t.n_rows + t.n_cols) + 2;
    let mut unresolved = Vec::new();
    for _ in 0..max_passes {
        unresolved.clear();
        let moved_cols = snap_axis(Axis::Cols, &mut cols, &rows, &col_segments, words, &mut unresolved);
        let moved_rows = snap_axis(Axis::Rows, &mut rows, &cols, &row_segments, words, &mut unresolved);
        if !moved_cols && !moved_rows {
            break;
        }
    }

    let mut out = t.clone();
    for cell in &mut out.cells {
        let Some(b) = cell.bbox else { continue };
        let mut c = b.coords();
        let s = cell.span;
        let pick = |lines: &[f64], orig: &[f64], k: usize, current: f64| {
            if lines[k] != orig[k] {
                lines[k]
            } else {
                current
            }
        };
        c[X1] = pick(&cols, &original.cols, s.sc(), c[X1]);
        c[X2] = pick(&cols, &original.cols, s.ec() + 1, c[X2]);
        c[Y1] = pick(&rows, &original.rows, s.sr(), c[Y1]);
        c[Y2] = pick(&rows, &original.rows, s.er() + 1, c[Y2]);
        cell.bbox = Some(BoundingBox::from_coords(c)?);
    }
    Ok(SnapOutcome {
        structure: out,
        unresolved,
    })
}

/// One pass over the interior lines of an axis. Returns whether any moved.
fn snap_axis(
    axis: Axis,
    lines: &mut [f64],
    across: &[f64],
    segments: &[Vec<usize>],
    words: &[WordBox],
    unresolved: &mut Vec<UnresolvedSnap>,
) -> bool {
    let (lo, hi, other_lo, other_hi) = match axis {
        Axis::Cols => (X1, X2, Y1, Y2),
        Axis::Rows => (Y1, Y2, X1, X2),
    };
    let mut moved = false;
    for k in 1..lines.len().saturating_sub(1) {
        if segments[k].is_empty() {
            continue;
        }
        // Words lying across the separating parts of this line.
        let mut blocked: Vec<(f64, f64, usize)> = words
            .iter()
            .enumerate()
            .filter_map(|(w, word)| {
                let c = word.bbox.coords();
                let touches = segments[k]
                    .iter()
                    .any(|&p| c[other_lo] < across[p + 1] && c[other_hi] > across[p]);
                touches.then_some((c[lo], c[hi], w))
            })
            .collect();
        let x = lines[k];
        let Some(&(_, _, first_hit)) = blocked.iter().find(|(a, b, _)| *a < x && x < *b) else {
            continue;
        };
        blocked.sort_by(|p, q| p.0.total_cmp(&q.0));

        // Grow the blocked interval around x until both ends are clear.
        let (mut a, mut b) = (x, x);
        loop {
            let mut grew = false;
            for &(s, e, _) in &blocked {
                if s < b && e > a && (s < a || e > b) {
                    a = a.min(s);
                    b = b.max(e);
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        let (prev, next) = (lines[k - 1], lines[k + 1]);
        let candidates = [a, b].into_iter().filter(|&v| prev < v && v < next);
        let best = candidates.min_by(|p, q| (p - x).abs().total_cmp(&(q - x).abs()).then(p.total_cmp(q)));
        match best {
            Some(v) => {
                lines[k] = v;
                moved = true;
            }
            None => unresolved.push(UnresolvedSnap {
                axis,
                line: k,
                position: x,
                word: first_hit,
            }),
        }
    }
    moved
}
