//! Rectilinear adjacency: the left/right/top/bottom neighbour matrices of a
//! table, and their inversion back into a grid structure.
//!
//! `m_t[(i, j)]` is true when cell `j` sits immediately on top of cell `i`
//! (its end row is the row just before `i`'s start row and their column
//! ranges intersect); the other three matrices are defined the same way.

use std::fmt;

use thiserror::Error;

use crate::geometry::BoundingBox;
use crate::structure::{Cell, GridSpan, TableStructure, Violation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdjacencyError {
    #[error("structure is invalid: {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidStructure(Vec<Violation>),
    #[error("matrix {which} has size {got}, expected {expected}")]
    DimensionMismatch {
        which: Direction,
        got: usize,
        expected: usize,
    },
    #[error("matrix {which} disagrees with {other} at ({i}, {j})")]
    Asymmetric {
        which: Direction,
        other: Direction,
        i: usize,
        j: usize,
    },
    #[error("matrix {which} marks cell {i} as its own neighbour")]
    SelfLoop { which: Direction, i: usize },
    #[error("span resolution did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("{boxes} boxes but {rowspans} row spans and {colspans} column spans")]
    LengthMismatch {
        boxes: usize,
        rowspans: usize,
        colspans: usize,
    },
    #[error("a span of zero was given for cell {cell}")]
    ZeroSpan { cell: usize },
    #[error("recovered spans do not partition the grid: {} violation(s), first: {}", .0.len(), .0[0])]
    InconsistentGrid(Vec<Violation>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
    Top,
    Bottom,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Top => "top",
            Direction::Bottom => "bottom",
        })
    }
}

/// Square boolean matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BoolMatrix {
    n: usize,
    bits: Vec<bool>,
}

impl BoolMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self, usize> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(bad.len());
        }
        Ok(Self {
            n,
            bits: rows.into_iter().flatten().collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.bits[i * self.n..(i + 1) * self.n]
    }

    /// Column indices set in row `i`.
    pub fn ones_in_row(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().filter(|(_, b)| **b).map(|(j, _)| j)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::new(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn or(&self, other: &BoolMatrix) -> Self {
        Self {
            n: self.n,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// How to treat predicted matrices that break the transpose invariants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymmetryMode {
    /// `m_l <- m_l | m_r^T` (and so on) and clear the diagonals.
    #[default]
    Symmetrize,
    /// Reject any disagreement.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RectilinearAdjacency {
    n: usize,
    m_l: BoolMatrix,
    m_r: BoolMatrix,
    m_t: BoolMatrix,
    m_b: BoolMatrix,
}

impl RectilinearAdjacency {
    /// Checks the size, transpose and zero-diagonal invariants (or repairs
    /// them under [`SymmetryMode::Symmetrize`]).
    pub fn from_matrices(
        m_l: BoolMatrix,
        m_r: BoolMatrix,
        m_t: BoolMatrix,
        m_b: BoolMatrix,
        mode: SymmetryMode,
    ) -> Result<Self, AdjacencyError> {
        let n = m_l.size();
        for (which, m) in [
            (Direction::Left, &m_l),
            (Direction::Right, &m_r),
            (Direction::Top, &m_t),
            (Direction::Bottom, &m_b),
        ] {
            if m.size() != n {
                return Err(AdjacencyError::DimensionMismatch {
                    which,
                    got: m.size(),
                    expected: n,
                });
            }
        }
        match mode {
            SymmetryMode::Strict => {
                for (which, m) in [
                    (Direction::Left, &m_l),
                    (Direction::Right, &m_r),
                    (Direction::Top, &m_t),
                    (Direction::Bottom, &m_b),
                ] {
                    if let Some(i) = (0..n).find(|&i| m.get(i, i)) {
                        return Err(AdjacencyError::SelfLoop { which, i });
                    }
                }
                for (which, a, other, b) in [
                    (Direction::Left, &m_l, Direction::Right, &m_r),
                    (Direction::Top, &m_t, Direction::Bottom, &m_b),
                ] {
                    for i in 0..n {
                        for j in 0..n {
                            if a.get(i, j) != b.get(j, i) {
                                return Err(AdjacencyError::Asymmetric { which, other, i, j });
                            }
                        }
                    }
                }
                Ok(Self { n, m_l, m_r, m_t, m_b })
            }
            SymmetryMode::Symmetrize => {
                let clear = |mut m: BoolMatrix| {
                    for i in 0..n {
                        m.set(i, i, false);
                    }
                    m
                };
                let l = clear(m_l.or(&m_r.transpose()));
                let t = clear(m_t.or(&m_b.transpose()));
                Ok(Self {
                    n,
                    m_r: l.transpose(),
                    m_l: l,
                    m_b: t.transpose(),
                    m_t: t,
                })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn matrix(&self, d: Direction) -> &BoolMatrix {
        match d {
            Direction::Left => &self.m_l,
            Direction::Right => &self.m_r,
            Direction::Top => &self.m_t,
            Direction::Bottom => &self.m_b,
        }
    }

    /// Cells `j` with `m_d[(i, j)]` set.
    pub fn neighbours(&self, i: usize, d: Direction) -> Vec<usize> {
        self.matrix(d).ones_in_row(i).collect()
    }

    /// Transpose pairs agree and all diagonals are clear.
    pub fn invariants_hold(&self) -> bool {
        let diag_clear = [&self.m_l, &self.m_r, &self.m_t, &self.m_b]
            .iter()
            .all(|m| (0..self.n).all(|i| !m.get(i, i)));
        diag_clear && self.m_l == self.m_r.transpose() && self.m_t == self.m_b.transpose()
    }
}

/// Neighbour matrices of a structure, indexed by position in `t.cells`.
pub fn build_rectilinear(t: &TableStructure) -> Result<RectilinearAdjacency, AdjacencyError> {
    let violations = t.structural_violations(true);
    if !violations.is_empty() {
        return Err(AdjacencyError::InvalidStructure(violations));
    }
    let n = t.cells.len();
    let occ = t.occupancy();
    let mut m_r = BoolMatrix::new(n);
    let mut m_b = BoolMatrix::new(n);
    for (i, cell) in t.cells.iter().enumerate() {
        let s = cell.span;
        for r in s.rows() {
            if let Some(j) = occ.at(r, s.ec() + 1) {
                m_r.set(i, j, true);
            }
        }
        for c in s.cols() {
            if let Some(j) = occ.at(s.er() + 1, c) {
                m_b.set(i, j, true);
            }
        }
    }
    Ok(RectilinearAdjacency {
        n,
        m_l: m_r.transpose(),
        m_r,
        m_t: m_b.transpose(),
        m_b,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedSpans {
    pub rowspan: Vec<usize>,
    pub colspan: Vec<usize>,
}

/// Row and column span counts recovered from adjacency alone.
///
/// Row spans come from left/right neighbours: a left neighbour `j` of `i`
/// whose only right neighbour is `i` lies within `i`'s rows and contributes its
/// own row span; any other left neighbour shares at least one row with `i` and
/// contributes one. `rowspan(i)` is the larger of the left-side and right-side
/// counts (at least 1), iterated to a fixed point from all ones. Column spans
/// use top/bottom neighbours the same way.
///
/// Every iterate is a lower bound on the true spans, so the result is exact
/// whenever, on some side of each cell, the neighbours that reach past the
/// cell overlap it by a single row (column). Grids whose spans are at most
/// two rows/columns always satisfy this.
pub fn resolve_spans(adj: &RectilinearAdjacency) -> Result<ResolvedSpans, AdjacencyError> {
    resolve_spans_with_history(adj).map(|(spans, _)| spans)
}

/// Like [`resolve_spans`], also returning the values after every sweep.
pub fn resolve_spans_with_history(
    adj: &RectilinearAdjacency,
) -> Result<(ResolvedSpans, Vec<ResolvedSpans>), AdjacencyError> {
    let mut row_history = Vec::new();
    let rowspan = fixed_point(adj, Direction::Left, Direction::Right, |v| row_history.push(v.to_vec()))?;
    let mut col_history = Vec::new();
    let colspan = fixed_point(adj, Direction::Top, Direction::Bottom, |v| col_history.push(v.to_vec()))?;

    // Pair up sweeps; the shorter sequence holds its final value.
    let sweeps = row_history.len().max(col_history.len());
    let snapshots = (0..sweeps)
        .map(|k| ResolvedSpans {
            rowspan: row_history.get(k).cloned().unwrap_or_else(|| rowspan.clone()),
            colspan: col_history.get(k).cloned().unwrap_or_else(|| colspan.clone()),
        })
        .collect();
    Ok((ResolvedSpans { rowspan, colspan }, snapshots))
}

fn fixed_point(
    adj: &RectilinearAdjacency,
    before: Direction,
    after: Direction,
    mut record: impl FnMut(&[usize]),
) -> Result<Vec<usize>, AdjacencyError> {
    let n = adj.len();
    let side_before: Vec<Vec<usize>> = (0..n).map(|i| adj.neighbours(i, before)).collect();
    let side_after: Vec<Vec<usize>> = (0..n).map(|i| adj.neighbours(i, after)).collect();

    // Contribution of the neighbours on one side of i; `back` is the opposite
    // side seen from each neighbour.
    let side_count = |i: usize, side: &[usize], back: &[Vec<usize>], span: &[usize]| -> usize {
        side.iter()
            .map(|&j| if back[j].as_slice() == [i] { span[j] } else { 1 })
            .sum()
    };

    let mut span = vec![1usize; n];
    let max_sweeps = n.max(1) + 1;
    for _ in 0..max_sweeps {
        let mut changed = false;
        for i in 0..n {
            let left = side_count(i, &side_before[i], &side_after, &span);
            let right = side_count(i, &side_after[i], &side_before, &span);
            let v = left.max(right).max(1);
            if v != span[i] {
                span[i] = v;
                changed = true;
            }
        }
        record(&span);
        if !changed {
            return Ok(span);
        }
    }
    Err(AdjacencyError::NoConvergence { sweeps: max_sweeps })
}

/// Default clustering tolerance for start coordinates: 0.5% of the table
/// extent along the axis, at least 2 px.
pub fn default_cluster_tol(extent: f64) -> f64 {
    (0.005 * extent).max(2.0)
}

/// Single-linkage clustering of 1-D values: sorted values further apart than
/// `tol` start a new cluster. Returns the cluster rank of each value and the
/// number of clusters.
pub fn cluster_positions(values: &[f64], tol: f64) -> (Vec<usize>, usize) {
    let (rank, centres) = cluster_with_centres(values, tol);
    (rank, centres.len())
}

/// Cluster ranks plus the mean position of each cluster, in ascending order.
fn cluster_with_centres(values: &[f64], tol: f64) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut rank = vec![0; values.len()];
    let mut sums: Vec<(f64, usize)> = Vec::new();
    let mut prev: Option<f64> = None;
    for idx in order {
        let v = values[idx];
        match prev {
            Some(p) if v - p <= tol => {}
            _ => sums.push((0.0, 0)),
        }
        let last = sums.last_mut().expect("a cluster was just opened");
        last.0 += v;
        last.1 += 1;
        rank[idx] = sums.len() - 1;
        prev = Some(v);
    }
    (rank, sums.into_iter().map(|(s, k)| s / k as f64).collect())
}

/// Index of the last cluster starting before `end - tol`.
fn last_line_before(centres: &[f64], end: f64, tol: f64) -> Option<usize> {
    centres.iter().rposition(|&c| c < end - tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AssignOptions {
    /// Start-x clustering tolerance; `None` uses [`default_cluster_tol`] of the table width.
    pub col_tol: Option<f64>,
    /// Start-y clustering tolerance; `None` uses [`default_cluster_tol`] of the table height.
    pub row_tol: Option<f64>,
}

/// Grid indices from box coordinates and span counts.
///
/// Start rows/columns are the ranks of the clustered start coordinates. The
/// end column is the larger of `SC + colspan - 1` and the last column start
/// lying before the box's right edge (rows likewise): adjacency alone cannot
/// always tell how many grid lines a tall cell crosses, and the resolved
/// spans never exceed the true ones. Cell ids are the input positions.
pub fn assign_indices(
    boxes: &[BoundingBox],
    rowspan: &[usize],
    colspan: &[usize],
    opts: &AssignOptions,
) -> Result<TableStructure, AdjacencyError> {
    if boxes.len() != rowspan.len() || boxes.len() != colspan.len() {
        return Err(AdjacencyError::LengthMismatch {
            boxes: boxes.len(),
            rowspans: rowspan.len(),
            colspans: colspan.len(),
        });
    }
    if let Some(cell) = (0..boxes.len()).find(|&i| rowspan[i] == 0 || colspan[i] == 0) {
        return Err(AdjacencyError::ZeroSpan { cell });
    }
    if boxes.is_empty() {
        return Ok(TableStructure::new(0, 0, Vec::new()));
    }
    let extent = |lo: fn(&BoundingBox) -> f64, hi: fn(&BoundingBox) -> f64| {
        let min = boxes.iter().map(lo).fold(f64::INFINITY, f64::min);
        let max = boxes.iter().map(hi).fold(f64::NEG_INFINITY, f64::max);
        max - min
    };
    let col_tol = opts
        .col_tol
        .unwrap_or_else(|| default_cluster_tol(extent(BoundingBox::x1, BoundingBox::x2)));
    let row_tol = opts
        .row_tol
        .unwrap_or_else(|| default_cluster_tol(extent(BoundingBox::y1, BoundingBox::y2)));

    let xs: Vec<f64> = boxes.iter().map(BoundingBox::x1).collect();
    let ys: Vec<f64> = boxes.iter().map(BoundingBox::y1).collect();
    let (sc, col_starts) = cluster_with_centres(&xs, col_tol);
    let (sr, row_starts) = cluster_with_centres(&ys, row_tol);

    let cells = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let ec = (sc[i] + colspan[i] - 1).max(last_line_before(&col_starts, b.x2(), col_tol).unwrap_or(0));
            let er = (sr[i] + rowspan[i] - 1).max(last_line_before(&row_starts, b.y2(), row_tol).unwrap_or(0));
            let span = GridSpan::new(sr[i], sc[i], er, ec).expect("end indices are never before start indices");
            Cell::new(i, Some(*b), span)
        })
        .collect();
    let t = TableStructure::new(row_starts.len(), col_starts.len(), cells);
    let violations = t.structural_violations(true);
    if violations.is_empty() {
        Ok(t)
    } else {
        Err(AdjacencyError::InconsistentGrid(violations))
    }
}

/// Spans from the adjacency, then indices from the boxes.
pub fn recover_structure(
    boxes: &[BoundingBox],
    adj: &RectilinearAdjacency,
    opts: &AssignOptions,
) -> Result<TableStructure, AdjacencyError> {
    let spans = resolve_spans(adj)?;
    assign_indices(boxes, &spans.rowspan, &spans.colspan, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::tests::{bb, span, unit_grid};

    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;

    fn xyz() -> TableStructure {
        TableStructure::new(
            2,
            2,
            vec![
                Cell::new(0, Some(bb(0.0, 0.0, 10.0, 20.0)), span(0, 1, 0, 0)),
                Cell::new(1, Some(bb(10.0, 0.0, 20.0, 10.0)), span(0, 0, 1, 1)),
                Cell::new(2, Some(bb(10.0, 10.0, 20.0, 20.0)), span(1, 1, 1, 1)),
            ],
        )
    }

    #[test]
    fn single_cell_has_no_neighbours() {
        let t = TableStructure::new(1, 1, vec![Cell::new(0, None, span(0, 0, 0, 0))]);
        let adj = build_rectilinear(&t).unwrap();
        for d in [Direction::Left, Direction::Right, Direction::Top, Direction::Bottom] {
            assert_eq!(adj.matrix(d).count_ones(), 0);
        }
        let s = resolve_spans(&adj).unwrap();
        assert_eq!((s.rowspan, s.colspan), (vec![1], vec![1]));
    }

    #[test]
    fn unit_grid_neighbours() {
        let adj = build_rectilinear(&unit_grid()).unwrap();
        assert!(adj.matrix(Direction::Right).get(A, B));
        assert!(adj.matrix(Direction::Bottom).get(A, C));
        assert!(adj.matrix(Direction::Right).get(C, D));
        assert!(adj.matrix(Direction::Bottom).get(B, D));
        let total: usize = [Direction::Left, Direction::Right, Direction::Top, Direction::Bottom]
            .iter()
            .map(|&d| adj.matrix(d).count_ones())
            .sum();
        assert_eq!(total, 8);
        assert!(adj.invariants_hold());
    }

    #[test]
    fn spanning_cell_has_two_right_neighbours() {
        let (x, y, z) = (0, 1, 2);
        let adj = build_rectilinear(&xyz()).unwrap();
        let (r, l) = (adj.matrix(Direction::Right), adj.matrix(Direction::Left));
        assert!(r.get(x, y) && r.get(x, z));
        assert!(l.get(y, x) && l.get(z, x));
        assert!(adj.matrix(Direction::Bottom).get(y, z));
        assert!(adj.matrix(Direction::Top).get(z, y));
        let s = resolve_spans(&adj).unwrap();
        assert_eq!(s.rowspan, vec![2, 1, 1]);
        assert_eq!(s.colspan, vec![1, 1, 1]);
    }

    #[test]
    fn nested_spans_need_recursion() {
        // X and W span both rows; Y and Z sit to the right of W.
        let t = TableStructure::new(
            2,
            3,
            vec![
                Cell::new(0, Some(bb(0.0, 0.0, 10.0, 20.0)), span(0, 1, 0, 0)),
                Cell::new(1, Some(bb(10.0, 0.0, 20.0, 20.0)), span(0, 1, 1, 1)),
                Cell::new(2, Some(bb(20.0, 0.0, 30.0, 10.0)), span(0, 0, 2, 2)),
                Cell::new(3, Some(bb(20.0, 10.0, 30.0, 20.0)), span(1, 1, 2, 2)),
            ],
        );
        let adj = build_rectilinear(&t).unwrap();
        let (spans, history) = resolve_spans_with_history(&adj).unwrap();
        assert_eq!(spans.rowspan, vec![2, 2, 1, 1]);
        // X only learns its span once W has it.
        assert_eq!(history[0].rowspan, vec![1, 2, 1, 1]);
        assert_eq!(history[1].rowspan, vec![2, 2, 1, 1]);
        for w in history.windows(2) {
            assert!(w[0].rowspan.iter().zip(&w[1].rowspan).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn assign_indices_examples() {
        let t = unit_grid();
        let out = assign_indices(&t.boxes().unwrap(), &[1; 4], &[1; 4], &AssignOptions::default()).unwrap();
        assert_eq!(out.spans(), t.spans());
        assert_eq!((out.n_rows, out.n_cols), (2, 2));

        let t = xyz();
        let out = assign_indices(&t.boxes().unwrap(), &[2, 1, 1], &[1, 1, 1], &AssignOptions::default()).unwrap();
        assert_eq!(out.spans(), vec![span(0, 1, 0, 0), span(0, 0, 1, 1), span(1, 1, 1, 1)]);
    }

    #[test]
    fn clustering_merges_close_starts() {
        let (rank, n) = cluster_positions(&[10.0, 0.4, 0.0], 1.0);
        assert_eq!(n, 2);
        assert_eq!(rank, vec![1, 0, 0]);
        assert_eq!(default_cluster_tol(100.0), 2.0);
        assert_eq!(default_cluster_tol(1000.0), 5.0);
    }

    #[test]
    fn end_edges_settle_spans_adjacency_cannot() {
        // Column 0 splits at y = 10, column 2 at y = 20: the middle cell spans
        // three rows, yet its adjacency matches the two-row layout.
        let t = TableStructure::new(
            3,
            3,
            vec![
                Cell::new(0, Some(bb(0.0, 0.0, 10.0, 10.0)), span(0, 0, 0, 0)),
                Cell::new(1, Some(bb(0.0, 10.0, 10.0, 30.0)), span(1, 2, 0, 0)),
                Cell::new(2, Some(bb(10.0, 0.0, 20.0, 30.0)), span(0, 2, 1, 1)),
                Cell::new(3, Some(bb(20.0, 0.0, 30.0, 20.0)), span(0, 1, 2, 2)),
                Cell::new(4, Some(bb(20.0, 20.0, 30.0, 30.0)), span(2, 2, 2, 2)),
            ],
        );
        let adj = build_rectilinear(&t).unwrap();
        let spans = resolve_spans(&adj).unwrap();
        assert_eq!(spans.rowspan[2], 2);
        let out = recover_structure(&t.boxes().unwrap(), &adj, &AssignOptions::default()).unwrap();
        assert_eq!(out.spans(), t.spans());
    }

    #[test]
    fn wrong_spans_are_rejected() {
        let t = unit_grid();
        let err = assign_indices(&t.boxes().unwrap(), &[2, 1, 1, 1], &[1; 4], &AssignOptions::default());
        assert!(matches!(err, Err(AdjacencyError::InconsistentGrid(_))));
        // Starts closer than the tolerance collapse two columns into one.
        let err = assign_indices(&t.boxes().unwrap(), &[1; 4], &[1; 4], &AssignOptions {
            col_tol: Some(15.0),
            row_tol: None,
        });
        assert!(matches!(err, Err(AdjacencyError::InconsistentGrid(_))));
        let err = assign_indices(&t.boxes().unwrap(), &[1; 3], &[1; 4], &AssignOptions::default());
        assert!(matches!(err, Err(AdjacencyError::LengthMismatch { .. })));
    }

    #[test]
    fn predicted_matrices_are_symmetrized_or_rejected() {
        let adj = build_rectilinear(&unit_grid()).unwrap();
        // Drop one direction of the A-B link and add a self loop.
        let mut m_l = adj.matrix(Direction::Left).clone();
        m_l.set(B, A, false);
        m_l.set(C, C, true);
        let parts = || {
            (
                adj.matrix(Direction::Right).clone(),
                adj.matrix(Direction::Top).clone(),
                adj.matrix(Direction::Bottom).clone(),
            )
        };
        let (r, t, b) = parts();
        let repaired =
            RectilinearAdjacency::from_matrices(m_l.clone(), r, t, b, SymmetryMode::Symmetrize).unwrap();
        assert_eq!(repaired, adj);
        let (r, t, b) = parts();
        assert!(matches!(
            RectilinearAdjacency::from_matrices(m_l, r, t, b, SymmetryMode::Strict),
            Err(AdjacencyError::SelfLoop { .. })
        ));
        let mut m_l = adj.matrix(Direction::Left).clone();
        m_l.set(B, A, false);
        let (r, t, b) = parts();
        assert!(matches!(
            RectilinearAdjacency::from_matrices(m_l, r, t, b, SymmetryMode::Strict),
            Err(AdjacencyError::Asymmetric { .. })
        ));
    }

    #[test]
    fn contradictory_matrices_do_not_converge() {
        // 1 and 2 sit left of 0 and 0 sits left of 1, so span(0) >= span(1) + span(2).
        let mut m = BoolMatrix::new(3);
        m.set(0, 1, true);
        m.set(0, 2, true);
        m.set(1, 0, true);
        let adj = RectilinearAdjacency::from_matrices(
            m.clone(),
            m.transpose(),
            BoolMatrix::new(3),
            BoolMatrix::new(3),
            SymmetryMode::Strict,
        )
        .unwrap();
        assert!(matches!(resolve_spans(&adj), Err(AdjacencyError::NoConvergence { .. })));
    }

    #[test]
    fn invalid_structure_is_rejected() {
        let mut t = unit_grid();
        t.cells.pop();
        assert!(matches!(build_rectilinear(&t), Err(AdjacencyError::InvalidStructure(_))));
    }
}
