//! Adjacency-relation scoring of a predicted structure against ground truth.
//!
//! Under [`Criterion::Sec`] only non-empty cells take part and empty cells are
//! skipped over; under [`Criterion::Nec`] every cell relates to its immediate
//! neighbours, so empty-empty and empty-non-empty pairs are scored too.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::iou;
use crate::structure::{TableStructure, Violation};

pub const DEFAULT_IOU: f64 = 0.6;
pub const TABLE_THRESHOLDS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{side} cell {cell} has no bounding box")]
    MissingBoxes { side: Side, cell: usize },
    #[error("{side} structure is invalid: {} violation(s), first: {}", .violations.len(), .violations[0])]
    InvalidStructure { side: Side, violations: Vec<Violation> },
    #[error("IoU threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Pred,
    Gt,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Pred => "predicted",
            Side::Gt => "ground-truth",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criterion {
    Sec,
    Nec,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Sec => "sec",
            Criterion::Nec => "nec",
        })
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sec" => Ok(Criterion::Sec),
            "nec" => Ok(Criterion::Nec),
            other => Err(format!("unknown criterion {other:?}, expected sec or nec")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationDirection {
    Horizontal,
    Vertical,
}

impl fmt::Display for RelationDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelationDirection::Horizontal => "h",
            RelationDirection::Vertical => "v",
        })
    }
}

/// `to_cell` lies right of (horizontal) or below (vertical) `from_cell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AdjacencyRelation {
    pub from_cell: usize,
    pub to_cell: usize,
    pub direction: RelationDirection,
}

impl AdjacencyRelation {
    pub fn new(from_cell: usize, to_cell: usize, direction: RelationDirection) -> Self {
        Self {
            from_cell,
            to_cell,
            direction,
        }
    }

    /// Orientation-free form used for set comparison: ids ordered ascending.
    pub fn key(&self) -> AdjacencyRelation {
        AdjacencyRelation {
            from_cell: self.from_cell.min(self.to_cell),
            to_cell: self.from_cell.max(self.to_cell),
            direction: self.direction,
        }
    }
}

impl fmt::Display for AdjacencyRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.from_cell, self.to_cell, self.direction)
    }
}

/// Relations between cells, by cell id.
///
/// Positions not covered by any cell are tolerated: SEC scans past them like
/// empty cells, NEC finds no neighbour there.
pub fn extract_relations(t: &TableStructure, criterion: Criterion) -> BTreeSet<AdjacencyRelation> {
    let occ = t.occupancy();
    let mut out = BTreeSet::new();
    for cell in &t.cells {
        if criterion == Criterion::Sec && cell.empty {
            continue;
        }
        let s = cell.span;
        let lines = [
            (RelationDirection::Horizontal, s.rows().map(|r| (r, s.ec() + 1, true)).collect::<Vec<_>>()),
            (RelationDirection::Vertical, s.cols().map(|c| (s.er() + 1, c, false)).collect()),
        ];
        for (direction, starts) in lines {
            for (mut r, mut c, horizontal) in starts {
                while r < t.n_rows && c < t.n_cols {
                    match occ.at(r, c).map(|k| &t.cells[k]) {
                        Some(other) if criterion == Criterion::Nec || !other.empty => {
                            out.insert(AdjacencyRelation::new(cell.id, other.id, direction));
                            break;
                        }
                        None if criterion == Criterion::Nec => break,
                        _ => {}
                    }
                    if horizontal {
                        c += 1;
                    } else {
                        r += 1;
                    }
                }
            }
        }
    }
    out
}

/// Greedy one-to-one matching, predicted id to ground-truth id.
///
/// All pairs with IoU at least `iou_threshold` are taken in descending IoU
/// order, ties broken by ground-truth id then predicted id.
pub fn match_cells(
    pred: &TableStructure,
    gt: &TableStructure,
    iou_threshold: f64,
) -> Result<BTreeMap<usize, usize>, EvalError> {
    check_threshold(iou_threshold)?;
    let pred_boxes = boxes_of(pred, Side::Pred)?;
    let gt_boxes = boxes_of(gt, Side::Gt)?;
    let mut pairs = Vec::new();
    for (pid, pb) in &pred_boxes {
        for (gid, gb) in &gt_boxes {
            let v = iou(pb, gb);
            if v > 0.0 && v >= iou_threshold {
                pairs.push((v, *gid, *pid));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_gt = BTreeSet::new();
    let mut mapping = BTreeMap::new();
    for (_, gid, pid) in pairs {
        if mapping.contains_key(&pid) || used_gt.contains(&gid) {
            continue;
        }
        mapping.insert(pid, gid);
        used_gt.insert(gid);
    }
    Ok(mapping)
}

fn check_threshold(t: f64) -> Result<(), EvalError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidThreshold(t))
    }
}

fn boxes_of(t: &TableStructure, side: Side) -> Result<Vec<(usize, crate::geometry::BoundingBox)>, EvalError> {
    t.cells
        .iter()
        .map(|c| {
            c.bbox
                .map(|b| (c.id, b))
                .ok_or(EvalError::MissingBoxes { side, cell: c.id })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub criterion: Criterion,
    pub iou_threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub unmatched_pred_cells: usize,
    pub unmatched_gt_cells: usize,
}

impl EvalReport {
    pub fn from_counts(
        criterion: Criterion,
        iou_threshold: f64,
        tp: usize,
        fp: usize,
        fn_: usize,
        unmatched_pred_cells: usize,
        unmatched_gt_cells: usize,
    ) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        Self {
            criterion,
            iou_threshold,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
            unmatched_pred_cells,
            unmatched_gt_cells,
        }
    }
}

/// Relation sets behind a report. Predicted relations are in predicted ids;
/// the others are orientation-free keys in ground-truth ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationDiff {
    pub true_positives: BTreeSet<AdjacencyRelation>,
    /// Predicted relations with no ground-truth counterpart.
    pub false_positives: BTreeSet<AdjacencyRelation>,
    pub false_negatives: BTreeSet<AdjacencyRelation>,
}

pub fn score(
    pred: &TableStructure,
    gt: &TableStructure,
    criterion: Criterion,
    iou_threshold: f64,
) -> Result<EvalReport, EvalError> {
    score_detailed(pred, gt, criterion, iou_threshold).map(|(r, _)| r)
}

/// Scores and also returns the relation sets.
pub fn score_detailed(
    pred: &TableStructure,
    gt: &TableStructure,
    criterion: Criterion,
    iou_threshold: f64,
) -> Result<(EvalReport, RelationDiff), EvalError> {
    check_structure(pred, Side::Pred, false)?;
    check_structure(gt, Side::Gt, true)?;
    let mapping = match_cells(pred, gt, iou_threshold)?;

    let gt_rel: BTreeSet<AdjacencyRelation> = extract_relations(gt, criterion).iter().map(|r| r.key()).collect();
    let mut tp = BTreeSet::new();
    let mut fp = BTreeSet::new();
    for r in extract_relations(pred, criterion) {
        let mapped = mapping
            .get(&r.from_cell)
            .zip(mapping.get(&r.to_cell))
            .map(|(&a, &b)| AdjacencyRelation::new(a, b, r.direction).key());
        match mapped {
            Some(k) if gt_rel.contains(&k) => {
                tp.insert(k);
            }
            _ => {
                fp.insert(r);
            }
        }
    }
    let fn_: BTreeSet<AdjacencyRelation> = gt_rel.difference(&tp).copied().collect();
    let report = EvalReport::from_counts(
        criterion,
        iou_threshold,
        tp.len(),
        fp.len(),
        fn_.len(),
        pred.cells.len() - mapping.len(),
        gt.cells.len() - mapping.len(),
    );
    Ok((
        report,
        RelationDiff {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        },
    ))
}

fn check_structure(t: &TableStructure, side: Side, require_full_cover: bool) -> Result<(), EvalError> {
    let violations = t.structural_violations(require_full_cover);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(EvalError::InvalidStructure { side, violations })
    }
}

/// One report per threshold, matching redone each time.
pub fn sweep(
    pred: &TableStructure,
    gt: &TableStructure,
    criterion: Criterion,
    thresholds: &[f64],
) -> Result<Vec<EvalReport>, EvalError> {
    thresholds.iter().map(|&t| score(pred, gt, criterion, t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Sum counts over tables, then compute the ratios.
    #[default]
    Micro,
    /// Average the per-table ratios.
    Macro,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Micro => "micro",
            Aggregation::Macro => "macro",
        })
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "micro" => Ok(Aggregation::Micro),
            "macro" => Ok(Aggregation::Macro),
            other => Err(format!("unknown aggregation {other:?}, expected micro or macro")),
        }
    }
}

/// Corpus report from per-table reports sharing a criterion and threshold.
/// Counts are always summed; `agg` decides the ratios. `None` for no tables.
pub fn aggregate(reports: &[EvalReport], agg: Aggregation) -> Option<EvalReport> {
    let first = reports.first()?;
    let sum = |f: fn(&EvalReport) -> usize| reports.iter().map(f).sum::<usize>();
    let mut out = EvalReport::from_counts(
        first.criterion,
        first.iou_threshold,
        sum(|r| r.true_positives),
        sum(|r| r.false_positives),
        sum(|r| r.false_negatives),
        sum(|r| r.unmatched_pred_cells),
        sum(|r| r.unmatched_gt_cells),
    );
    if agg == Aggregation::Macro {
        let n = reports.len() as f64;
        out.precision = reports.iter().map(|r| r.precision).sum::<f64>() / n;
        out.recall = reports.iter().map(|r| r.recall).sum::<f64>() / n;
        out.f1 = reports.iter().map(|r| r.f1).sum::<f64>() / n;
    }
    Some(out)
}
