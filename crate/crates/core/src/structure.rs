//! Logical table model: cells with grid spans, and the rules that make a set of
//! cells a table.
//!
//! Geometric rules follow the usual alignment constraints on annotated tables:
//!
//! * (i) cells of the same row share start-y (same start row) and end-y (same end row),
//! * (ii) cells of the same column share start-x and end-x,
//! * (iii) a cell starting at column `c` starts where its left neighbours end,
//! * (iv) a cell starting at row `r` starts where its top neighbours end,
//! * (v) no two cells overlap.
//!
//! Structural rules (grid partition, span bounds, unique ids) come first; the
//! geometric ones are only checked between cells that carry boxes.

use std::collections::HashSet;
use std::fmt;
use std::ops::RangeInclusive;

use thiserror::Error;

use crate::geometry::{extent_overlap_x, extent_overlap_y, BoundingBox, X1, X2, Y1, Y2};

/// Default tolerance on shared boundary coordinates, in pixels.
pub const DEFAULT_ALIGN_TOL: f64 = 1.0;
/// Default tolerance on the overlap extent between two cells, in pixels.
pub const DEFAULT_OVERLAP_TOL: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error("invalid span: start ({start_row}, {start_col}) is after end ({end_row}, {end_col})")]
    InvalidSpan {
        start_row: usize,
        start_col: usize,
        end_row: usize,
        end_col: usize,
    },
    #[error("cell {cell} has no bounding box")]
    MissingBox { cell: usize },
    #[error("structure is invalid: {}", join_violations(.0))]
    InvalidStructure(Vec<Violation>),
    #[error("inconsistent alignment on {axis} boundary {line}: edges spread over {spread} px")]
    InconsistentAlignment {
        axis: Axis,
        line: usize,
        spread: f64,
    },
    #[error("{axis} boundaries are not strictly increasing at line {line}")]
    NonIncreasingBoundaries { axis: Axis, line: usize },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Rows,
    Cols,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Rows => f.write_str("row"),
            Axis::Cols => f.write_str("column"),
        }
    }
}

/// Start/end row and column indices of a cell, all inclusive and 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridSpan {
    sr: usize,
    sc: usize,
    er: usize,
    ec: usize,
}

impl GridSpan {
    pub fn new(sr: usize, sc: usize, er: usize, ec: usize) -> Result<Self, StructureError> {
        if sr > er || sc > ec {
            return Err(StructureError::InvalidSpan {
                start_row: sr,
                start_col: sc,
                end_row: er,
                end_col: ec,
            });
        }
        Ok(Self { sr, sc, er, ec })
    }

    /// A 1x1 span at `(row, col)`.
    pub fn single(row: usize, col: usize) -> Self {
        Self {
            sr: row,
            sc: col,
            er: row,
            ec: col,
        }
    }

    pub fn sr(&self) -> usize {
        self.sr
    }

    pub fn sc(&self) -> usize {
        self.sc
    }

    pub fn er(&self) -> usize {
        self.er
    }

    pub fn ec(&self) -> usize {
        self.ec
    }

    pub fn row_span(&self) -> usize {
        self.er - self.sr + 1
    }

    pub fn col_span(&self) -> usize {
        self.ec - self.sc + 1
    }

    pub fn rows(&self) -> RangeInclusive<usize> {
        self.sr..=self.er
    }

    pub fn cols(&self) -> RangeInclusive<usize> {
        self.sc..=self.ec
    }

    pub fn area(&self) -> usize {
        self.row_span() * self.col_span()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.rows().contains(&row) && self.cols().contains(&col)
    }

    pub fn rows_intersect(&self, other: &GridSpan) -> bool {
        self.sr <= other.er && other.sr <= self.er
    }

    pub fn cols_intersect(&self, other: &GridSpan) -> bool {
        self.sc <= other.ec && other.sc <= self.ec
    }

    /// Smallest span covering both.
    pub fn union(&self, other: &GridSpan) -> GridSpan {
        GridSpan {
            sr: self.sr.min(other.sr),
            sc: self.sc.min(other.sc),
            er: self.er.max(other.er),
            ec: self.ec.max(other.ec),
        }
    }
}

impl fmt::Display for GridSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[r{}..r{}, c{}..c{}]", self.sr, self.er, self.sc, self.ec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: usize,
    /// Absent only for span-only intermediate structures.
    pub bbox: Option<BoundingBox>,
    pub span: GridSpan,
    pub empty: bool,
    /// Always `None` for empty cells.
    pub text: Option<String>,
}

impl Cell {
    pub fn new(id: usize, bbox: Option<BoundingBox>, span: GridSpan) -> Self {
        Self {
            id,
            bbox,
            span,
            empty: false,
            text: None,
        }
    }

    pub fn empty(id: usize, bbox: Option<BoundingBox>, span: GridSpan) -> Self {
        Self {
            id,
            bbox,
            span,
            empty: true,
            text: None,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }
}

/// The alignment rule a geometric violation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlignmentRule {
    /// (i) same start row, different start-y.
    RowStart,
    /// (i) same end row, different end-y.
    RowEnd,
    /// (ii) same start column, different start-x.
    ColumnStart,
    /// (ii) same end column, different end-x.
    ColumnEnd,
    /// (iii) start-x differs from the end-x of a left neighbour.
    ColumnContinuity,
    /// (iv) start-y differs from the end-y of a top neighbour.
    RowContinuity,
}

impl AlignmentRule {
    pub fn label(&self) -> &'static str {
        match self {
            AlignmentRule::RowStart | AlignmentRule::RowEnd => "(i)",
            AlignmentRule::ColumnStart | AlignmentRule::ColumnEnd => "(ii)",
            AlignmentRule::ColumnContinuity => "(iii)",
            AlignmentRule::RowContinuity => "(iv)",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SpanOutOfBounds {
        cell: usize,
        span: GridSpan,
    },
    DuplicateId {
        id: usize,
    },
    Uncovered {
        row: usize,
        col: usize,
    },
    MultiplyCovered {
        row: usize,
        col: usize,
        cells: Vec<usize>,
    },
    EmptyWithText {
        cell: usize,
    },
    Misaligned {
        rule: AlignmentRule,
        cell: usize,
        other: usize,
        delta: f64,
    },
    /// (v)
    Overlap {
        a: usize,
        b: usize,
        overlap_x: f64,
        overlap_y: f64,
    },
}

impl Violation {
    /// Short name of the broken rule: `partition`, `bounds`, `ids`, `empty`,
    /// or one of `(i)`..`(v)`.
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::SpanOutOfBounds { .. } => "bounds",
            Violation::DuplicateId { .. } => "ids",
            Violation::Uncovered { .. } | Violation::MultiplyCovered { .. } => "partition",
            Violation::EmptyWithText { .. } => "empty",
            Violation::Misaligned { rule, .. } => rule.label(),
            Violation::Overlap { .. } => "(v)",
        }
    }

    /// True for violations that do not depend on geometry.
    pub fn is_structural(&self) -> bool {
        !matches!(self, Violation::Misaligned { .. } | Violation::Overlap { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SpanOutOfBounds { cell, span } => {
                write!(f, "bounds: cell {cell} span {span} leaves the grid")
            }
            Violation::DuplicateId { id } => write!(f, "ids: cell id {id} is used more than once"),
            Violation::Uncovered { row, col } => {
                write!(f, "partition: position ({row}, {col}) is not covered by any cell")
            }
            Violation::MultiplyCovered { row, col, cells } => write!(
                f,
                "partition: position ({row}, {col}) is covered by cells {cells:?}"
            ),
            Violation::EmptyWithText { cell } => {
                write!(f, "empty: cell {cell} is marked empty but carries text")
            }
            Violation::Misaligned {
                rule,
                cell,
                other,
                delta,
            } => write!(
                f,
                "{}: cells ({cell}, {other}) boundary mismatch of {delta} px ({rule:?})",
                rule.label()
            ),
            Violation::Overlap {
                a,
                b,
                overlap_x,
                overlap_y,
            } => write!(
                f,
                "(v): cells ({a}, {b}) overlap by {overlap_x} x {overlap_y} px"
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    pub align_tol: f64,
    pub overlap_tol: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            align_tol: DEFAULT_ALIGN_TOL,
            overlap_tol: DEFAULT_OVERLAP_TOL,
        }
    }
}

impl ValidateOptions {
    /// Zero tolerance on both alignment and overlap.
    pub fn exact() -> Self {
        Self {
            align_tol: 0.0,
            overlap_tol: 0.0,
        }
    }
}

/// Row/column boundary coordinates of a table with aligned boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBoundaries {
    /// `n_rows + 1` y-values.
    pub rows: Vec<f64>,
    /// `n_cols + 1` x-values.
    pub cols: Vec<f64>,
}

impl GridBoundaries {
    /// The rectangle spanned by `span` on this grid.
    pub fn cell_box(&self, span: &GridSpan) -> Result<BoundingBox, crate::geometry::GeometryError> {
        BoundingBox::new(
            self.cols[span.sc],
            self.rows[span.sr],
            self.cols[span.ec + 1],
            self.rows[span.er + 1],
        )
    }

    pub fn axis(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::Rows => &self.rows,
            Axis::Cols => &self.cols,
        }
    }
}

/// Which cell covers each grid position. Built leniently: positions claimed by
/// several cells keep the first claimant.
#[derive(Debug, Clone)]
pub struct Occupancy {
    n_rows: usize,
    n_cols: usize,
    owner: Vec<Option<usize>>,
}

impl Occupancy {
    /// Cell *index* (position in `cells`) at `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.n_rows || col >= self.n_cols {
            return None;
        }
        self.owner[row * self.n_cols + col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableStructure {
    pub n_rows: usize,
    pub n_cols: usize,
    pub cells: Vec<Cell>,
}

impl TableStructure {
    pub fn new(n_rows: usize, n_cols: usize, cells: Vec<Cell>) -> Self {
        Self {
            n_rows,
            n_cols,
            cells,
        }
    }

    /// Sorts cells by `(start row, start column)` and renumbers ids from 0.
    pub fn assign_reading_order_ids(&mut self) {
        self.sort_reading_order();
        for (i, cell) in self.cells.iter_mut().enumerate() {
            cell.id = i;
        }
    }

    pub fn sort_reading_order(&mut self) {
        self.cells
            .sort_by_key(|c| (c.span.sr, c.span.sc, c.span.er, c.span.ec, c.id));
    }

    pub fn has_boxes(&self) -> bool {
        self.cells.iter().all(|c| c.bbox.is_some())
    }

    pub fn cell_by_id(&self, id: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.id == id)
    }

    pub fn boxes(&self) -> Result<Vec<BoundingBox>, StructureError> {
        self.cells
            .iter()
            .map(|c| c.bbox.ok_or(StructureError::MissingBox { cell: c.id }))
            .collect()
    }

    pub fn spans(&self) -> Vec<GridSpan> {
        self.cells.iter().map(|c| c.span).collect()
    }

    pub fn occupancy(&self) -> Occupancy {
        let mut owner = vec![None; self.n_rows * self.n_cols];
        for (idx, cell) in self.cells.iter().enumerate() {
            for r in cell.span.rows().filter(|&r| r < self.n_rows) {
                for c in cell.span.cols().filter(|&c| c < self.n_cols) {
                    let slot = &mut owner[r * self.n_cols + c];
                    if slot.is_none() {
                        *slot = Some(idx);
                    }
                }
            }
        }
        Occupancy {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            owner,
        }
    }

    /// All rule violations with default tolerances.
    pub fn validate(&self) -> Vec<Violation> {
        self.validate_with(&ValidateOptions::default())
    }

    pub fn validate_with(&self, opts: &ValidateOptions) -> Vec<Violation> {
        let mut out = self.structural_violations(true);
        out.extend(self.geometric_violations(opts));
        out
    }

    /// Bounds, id, emptiness and (when `require_full_cover`) coverage checks.
    /// Double coverage is always reported.
    pub fn structural_violations(&self, require_full_cover: bool) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for cell in &self.cells {
            if !seen.insert(cell.id) {
                out.push(Violation::DuplicateId { id: cell.id });
            }
            if cell.span.er >= self.n_rows || cell.span.ec >= self.n_cols {
                out.push(Violation::SpanOutOfBounds {
                    cell: cell.id,
                    span: cell.span,
                });
            }
            if cell.empty && cell.text.is_some() {
                out.push(Violation::EmptyWithText { cell: cell.id });
            }
        }

        let mut cover: Vec<Vec<usize>> = vec![Vec::new(); self.n_rows * self.n_cols];
        for cell in &self.cells {
            for r in cell.span.rows().filter(|&r| r < self.n_rows) {
                for c in cell.span.cols().filter(|&c| c < self.n_cols) {
                    cover[r * self.n_cols + c].push(cell.id);
                }
            }
        }
        for r in 0..self.n_rows {
            for c in 0..self.n_cols {
                let ids = &cover[r * self.n_cols + c];
                match ids.len() {
                    0 if require_full_cover => out.push(Violation::Uncovered { row: r, col: c }),
                    0 | 1 => {}
                    _ => out.push(Violation::MultiplyCovered {
                        row: r,
                        col: c,
                        cells: ids.clone(),
                    }),
                }
            }
        }
        out
    }

    /// Constraints (i)-(v) between every pair of cells that both carry boxes.
    pub fn geometric_violations(&self, opts: &ValidateOptions) -> Vec<Violation> {
        let mut out = Vec::new();
        let boxed: Vec<(&Cell, [f64; 4], BoundingBox)> = self
            .cells
            .iter()
            .filter_map(|c| c.bbox.map(|b| (c, b.coords(), b)))
            .collect();

        let mut check = |rule: AlignmentRule, cell: usize, other: usize, delta: f64| {
            if delta.abs() > opts.align_tol {
                out.push(Violation::Misaligned {
                    rule,
                    cell,
                    other,
                    delta,
                });
            }
        };

        for (i, (ci, a, _)) in boxed.iter().enumerate() {
            for (cj, b, _) in boxed.iter().skip(i + 1) {
                let (si, sj) = (&ci.span, &cj.span);
                if si.sr == sj.sr {
                    check(AlignmentRule::RowStart, ci.id, cj.id, a[Y1] - b[Y1]);
                }
                if si.er == sj.er {
                    check(AlignmentRule::RowEnd, ci.id, cj.id, a[Y2] - b[Y2]);
                }
                if si.sc == sj.sc {
                    check(AlignmentRule::ColumnStart, ci.id, cj.id, a[X1] - b[X1]);
                }
                if si.ec == sj.ec {
                    check(AlignmentRule::ColumnEnd, ci.id, cj.id, a[X2] - b[X2]);
                }
            }
        }

        // Continuity against immediate neighbours, reported as (cell, neighbour).
        for (ci, a, _) in &boxed {
            for (cj, b, _) in &boxed {
                let (si, sj) = (&ci.span, &cj.span);
                if si.sc == sj.ec + 1 && si.rows_intersect(sj) {
                    check(AlignmentRule::ColumnContinuity, ci.id, cj.id, a[X1] - b[X2]);
                }
                if si.sr == sj.er + 1 && si.cols_intersect(sj) {
                    check(AlignmentRule::RowContinuity, ci.id, cj.id, a[Y1] - b[Y2]);
                }
            }
        }

        for (i, (ci, _, ba)) in boxed.iter().enumerate() {
            for (cj, _, bb) in boxed.iter().skip(i + 1) {
                let ox = extent_overlap_x(ba, bb);
                let oy = extent_overlap_y(ba, bb);
                if ox > opts.overlap_tol && oy > opts.overlap_tol {
                    out.push(Violation::Overlap {
                        a: ci.id,
                        b: cj.id,
                        overlap_x: ox,
                        overlap_y: oy,
                    });
                }
            }
        }
        out
    }

    /// Recovers the row and column boundary coordinates.
    ///
    /// Each boundary takes the mean of the box edges lying on it; lines with
    /// no edge at all (crossed by spanning cells everywhere) are linearly
    /// interpolated between their nearest neighbours.
    pub fn grid_boundaries(&self, align_tol: f64) -> Result<GridBoundaries, StructureError> {
        let structural = self.structural_violations(true);
        if !structural.is_empty() {
            return Err(StructureError::InvalidStructure(structural));
        }
        let boxes = self.boxes()?;
        let rows = self.axis_boundaries(&boxes, Axis::Rows, align_tol)?;
        let cols = self.axis_boundaries(&boxes, Axis::Cols, align_tol)?;
        Ok(GridBoundaries { rows, cols })
    }

    fn axis_boundaries(
        &self,
        boxes: &[BoundingBox],
        axis: Axis,
        align_tol: f64,
    ) -> Result<Vec<f64>, StructureError> {
        let n = match axis {
            Axis::Rows => self.n_rows,
            Axis::Cols => self.n_cols,
        };
        let mut edges: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
        for (cell, b) in self.cells.iter().zip(boxes) {
            let (start, end, lo, hi) = match axis {
                Axis::Rows => (cell.span.sr, cell.span.er, b.y1(), b.y2()),
                Axis::Cols => (cell.span.sc, cell.span.ec, b.x1(), b.x2()),
            };
            edges[start].push(lo);
            edges[end + 1].push(hi);
        }

        let mut values: Vec<Option<f64>> = Vec::with_capacity(n + 1);
        for (line, e) in edges.iter().enumerate() {
            if e.is_empty() {
                values.push(None);
                continue;
            }
            let min = e.iter().copied().fold(f64::INFINITY, f64::min);
            let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max - min > align_tol {
                return Err(StructureError::InconsistentAlignment {
                    axis,
                    line,
                    spread: max - min,
                });
            }
            values.push(Some(e.iter().sum::<f64>() / e.len() as f64));
        }

        // Outer lines always carry edges in a valid partition.
        let mut out = vec![0.0; n + 1];
        let mut line = 0;
        while line <= n {
            match values[line] {
                Some(v) => {
                    out[line] = v;
                    line += 1;
                }
                None => {
                    let prev = line - 1;
                    let next = (line..=n).find(|&k| values[k].is_some()).unwrap_or(n);
                    let (a, b) = (out[prev], values[next].unwrap_or(out[prev]));
                    for k in line..next {
                        let t = (k - prev) as f64 / (next - prev) as f64;
                        out[k] = a + (b - a) * t;
                    }
                    line = next;
                }
            }
        }
        for line in 1..=n {
            if out[line] <= out[line - 1] {
                return Err(StructureError::NonIncreasingBoundaries { axis, line });
            }
        }
        Ok(out)
    }
}
