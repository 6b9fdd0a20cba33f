//! Structural regularizers on cell boxes: alignment, continuity and overlap
//! losses, with analytic gradients with respect to box coordinates.
//!
//! Every loss is a sum of squared residuals, and every residual is a
//! difference of two coordinates (`coord[plus] - coord[minus]`). The
//! enumeration of those terms lives in one place ([`for_each_term`]); losses,
//! gradients and per-cell attributions are all folds over it, in a fixed
//! order, so results are bitwise reproducible for a fixed input order.

use std::fmt;

use crate::geometry::{BoundingBox, X1, X2, Y1, Y2};
use crate::structure::GridSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LossKind {
    Alignment,
    Continuity,
    OverlapX,
    OverlapY,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::Alignment,
        LossKind::Continuity,
        LossKind::OverlapX,
        LossKind::OverlapY,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Alignment => "alignment",
            LossKind::Continuity => "continuity",
            LossKind::OverlapX => "overlap-x",
            LossKind::OverlapY => "overlap-y",
        })
    }
}

/// How the overlap loss treats pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapForm {
    /// `max(0, extent)^2` over pairs whose spans are disjoint along the
    /// measured axis and share a row (column) in the other; without spans,
    /// pairs overlapping in the other axis.
    #[default]
    Hinged,
    /// Raw `extent^2` over every ordered pair `i != j`; penalizes gaps too.
    Literal,
}

/// A box together with its grid span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpannedBox {
    pub bbox: BoundingBox,
    pub span: GridSpan,
}

impl SpannedBox {
    pub fn new(bbox: BoundingBox, span: GridSpan) -> Self {
        Self { bbox, span }
    }
}

/// Unweighted values of the four regularizers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_al: f64,
    pub l_cl: f64,
    pub l_ol_x: f64,
    pub l_ol_y: f64,
}

impl LossBreakdown {
    pub fn from_array(v: [f64; 4]) -> Self {
        Self {
            l_al: v[0],
            l_cl: v[1],
            l_ol_x: v[2],
            l_ol_y: v[3],
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.l_al, self.l_cl, self.l_ol_x, self.l_ol_y]
    }

    pub fn get(&self, kind: LossKind) -> f64 {
        self.as_array()[kind.index()]
    }

    pub fn total(&self) -> f64 {
        self.l_al + self.l_cl + self.l_ol_x + self.l_ol_y
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

/// Per-cell `[d/dx1, d/dy1, d/dx2, d/dy2]`, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient(pub Vec<[f64; 4]>);

impl LossGradient {
    pub fn zeros(n: usize) -> Self {
        Self(vec![[0.0; 4]; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[[f64; 4]] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|&g| g == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|g| g.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &LossGradient, scale: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for k in 0..4 {
                a[k] += scale * b[k];
            }
        }
    }
}

/// One squared residual `(coords[plus] - coords[minus])^2` owned by the
/// cell pair `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Term {
    pub kind: LossKind,
    pub i: usize,
    pub j: usize,
    pub plus: (usize, usize),
    pub minus: (usize, usize),
    pub residual: f64,
}

impl Term {
    fn new(kind: LossKind, i: usize, j: usize, plus: (usize, usize), minus: (usize, usize), coords: &[[f64; 4]]) -> Self {
        Self {
            kind,
            i,
            j,
            plus,
            minus,
            residual: coords[plus.0][plus.1] - coords[minus.0][minus.1],
        }
    }

    pub fn value(&self) -> f64 {
        self.residual * self.residual
    }
}

fn extent(coords: &[[f64; 4]], i: usize, j: usize, lo: usize, hi: usize) -> f64 {
    coords[i][hi].min(coords[j][hi]) - coords[i][lo].max(coords[j][lo])
}

/// Visits every loss term in a fixed order: alignment, continuity, overlap-x,
/// overlap-y. Alignment and continuity need spans and are skipped without them.
pub(crate) fn for_each_term(
    coords: &[[f64; 4]],
    spans: Option<&[GridSpan]>,
    form: OverlapForm,
    mut visit: impl FnMut(&Term),
) {
    let n = coords.len();

    if let Some(spans) = spans {
        // Alignment: unordered pairs sharing a start/end index.
        for i in 0..n {
            for j in (i + 1)..n {
                let (si, sj) = (&spans[i], &spans[j]);
                if si.sr() == sj.sr() {
                    visit(&Term::new(LossKind::Alignment, i, j, (i, Y1), (j, Y1), coords));
                }
                if si.er() == sj.er() {
                    visit(&Term::new(LossKind::Alignment, i, j, (i, Y2), (j, Y2), coords));
                }
                if si.sc() == sj.sc() {
                    visit(&Term::new(LossKind::Alignment, i, j, (i, X1), (j, X1), coords));
                }
                if si.ec() == sj.ec() {
                    visit(&Term::new(LossKind::Alignment, i, j, (i, X2), (j, X2), coords));
                }
            }
        }

        // Continuity: ordered pairs where i starts right after j ends.
        for i in 0..n {
            for j in 0..n {
                let (si, sj) = (&spans[i], &spans[j]);
                if si.sr() == sj.er() + 1 {
                    visit(&Term::new(LossKind::Continuity, i, j, (i, Y1), (j, Y2), coords));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let (si, sj) = (&spans[i], &spans[j]);
                if si.sc() == sj.ec() + 1 {
                    visit(&Term::new(LossKind::Continuity, i, j, (i, X1), (j, X2), coords));
                }
            }
        }
    }

    for (kind, lo, hi, other_lo, other_hi) in [
        (LossKind::OverlapX, X1, X2, Y1, Y2),
        (LossKind::OverlapY, Y1, Y2, X1, X2),
    ] {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if form == OverlapForm::Hinged {
                    let gated = match spans {
                        Some(spans) => match kind {
                            LossKind::OverlapX => {
                                !spans[i].cols_intersect(&spans[j]) && spans[i].rows_intersect(&spans[j])
                            }
                            _ => !spans[i].rows_intersect(&spans[j]) && spans[i].cols_intersect(&spans[j]),
                        },
                        None => extent(coords, i, j, other_lo, other_hi) > 0.0,
                    };
                    if !gated || extent(coords, i, j, lo, hi) <= 0.0 {
                        continue;
                    }
                }
                // min(hi_i, hi_j) - max(lo_i, lo_j); ties resolve to i.
                let a = if coords[i][hi] <= coords[j][hi] { i } else { j };
                let b = if coords[i][lo] >= coords[j][lo] { i } else { j };
                visit(&Term::new(kind, i, j, (a, hi), (b, lo), coords));
            }
        }
    }
}

/// All four losses and their separate gradients on raw coordinates.
pub fn structural_losses(
    coords: &[[f64; 4]],
    spans: Option<&[GridSpan]>,
    form: OverlapForm,
) -> (LossBreakdown, [LossGradient; 4]) {
    let n = coords.len();
    let mut values = [0.0; 4];
    let mut grads: [LossGradient; 4] = std::array::from_fn(|_| LossGradient::zeros(n));
    for_each_term(coords, spans, form, |t| {
        let k = t.kind.index();
        values[k] += t.value();
        let g = 2.0 * t.residual;
        grads[k].0[t.plus.0][t.plus.1] += g;
        grads[k].0[t.minus.0][t.minus.1] -= g;
    });
    (LossBreakdown::from_array(values), grads)
}

fn split(cells: &[SpannedBox]) -> (Vec<[f64; 4]>, Vec<GridSpan>) {
    cells.iter().map(|c| (c.bbox.coords(), c.span)).unzip()
}

/// Pairwise L2 between shared start/end coordinates of cells with equal
/// start/end indices.
pub fn alignment_loss(cells: &[SpannedBox]) -> (f64, LossGradient) {
    let (coords, spans) = split(cells);
    let (v, [g, ..]) = structural_losses(&coords, Some(&spans), OverlapForm::Hinged);
    (v.l_al, g)
}

/// Squared gaps between the start of each cell and the end of every cell in
/// the row (column) immediately before it, over ordered pairs.
pub fn continuity_loss(cells: &[SpannedBox]) -> (f64, LossGradient) {
    let (coords, spans) = split(cells);
    let (v, [_, g, ..]) = structural_losses(&coords, Some(&spans), OverlapForm::Hinged);
    (v.l_cl, g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapLoss {
    pub x: f64,
    pub y: f64,
    pub grad_x: LossGradient,
    pub grad_y: LossGradient,
}

impl OverlapLoss {
    /// Gradient of `x + y`.
    pub fn gradient(&self) -> LossGradient {
        let mut g = self.grad_x.clone();
        g.add_scaled(&self.grad_y, 1.0);
        g
    }
}

/// Hinged, span-gated overlap losses along x and y.
pub fn overlap_loss(cells: &[SpannedBox]) -> OverlapLoss {
    let (coords, spans) = split(cells);
    overlap_on_coords(&coords, Some(&spans), OverlapForm::Hinged)
}

/// Overlap losses on bare boxes (gate falls back to the other axis) or with
/// an explicit form.
pub fn overlap_loss_with(
    boxes: &[BoundingBox],
    spans: Option<&[GridSpan]>,
    form: OverlapForm,
) -> OverlapLoss {
    let coords: Vec<[f64; 4]> = boxes.iter().map(BoundingBox::coords).collect();
    overlap_on_coords(&coords, spans, form)
}

fn overlap_on_coords(coords: &[[f64; 4]], spans: Option<&[GridSpan]>, form: OverlapForm) -> OverlapLoss {
    let n = coords.len();
    let mut out = OverlapLoss {
        x: 0.0,
        y: 0.0,
        grad_x: LossGradient::zeros(n),
        grad_y: LossGradient::zeros(n),
    };
    for_each_term(coords, spans, form, |t| {
        let (value, grad) = match t.kind {
            LossKind::OverlapX => (&mut out.x, &mut out.grad_x),
            LossKind::OverlapY => (&mut out.y, &mut out.grad_y),
            _ => return,
        };
        *value += t.value();
        grad.0[t.plus.0][t.plus.1] += 2.0 * t.residual;
        grad.0[t.minus.0][t.minus.1] -= 2.0 * t.residual;
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{extent_overlap_x, extent_overlap_y};
    use crate::structure::tests::{bb, span, unit_grid};
    use proptest::prelude::*;

    fn cells_of(t: &crate::structure::TableStructure) -> Vec<SpannedBox> {
        t.cells
            .iter()
            .map(|c| SpannedBox::new(c.bbox.unwrap(), c.span))
            .collect()
    }

    // Independent brute-force oracles, written straight from the formulas.
    fn oracle_continuity(c: &[SpannedBox]) -> f64 {
        let mut l = 0.0;
        for i in c {
            for j in c {
                if i.span.sr() == j.span.er() + 1 {
                    l += (i.bbox.y1() - j.bbox.y2()).powi(2);
                }
                if i.span.sc() == j.span.ec() + 1 {
                    l += (i.bbox.x1() - j.bbox.x2()).powi(2);
                }
            }
        }
        l
    }

    fn oracle_alignment(c: &[SpannedBox]) -> f64 {
        let mut l = 0.0;
        for (k, i) in c.iter().enumerate() {
            for j in &c[k + 1..] {
                if i.span.sr() == j.span.sr() {
                    l += (i.bbox.y1() - j.bbox.y1()).powi(2);
                }
                if i.span.er() == j.span.er() {
                    l += (i.bbox.y2() - j.bbox.y2()).powi(2);
                }
                if i.span.sc() == j.span.sc() {
                    l += (i.bbox.x1() - j.bbox.x1()).powi(2);
                }
                if i.span.ec() == j.span.ec() {
                    l += (i.bbox.x2() - j.bbox.x2()).powi(2);
                }
            }
        }
        l
    }

    fn oracle_overlap(c: &[SpannedBox]) -> (f64, f64) {
        let (mut lx, mut ly) = (0.0, 0.0);
        for (a, i) in c.iter().enumerate() {
            for (b, j) in c.iter().enumerate() {
                if a == b {
                    continue;
                }
                if !i.span.cols_intersect(&j.span) && i.span.rows_intersect(&j.span) {
                    lx += extent_overlap_x(&i.bbox, &j.bbox).max(0.0).powi(2);
                }
                if !i.span.rows_intersect(&j.span) && i.span.cols_intersect(&j.span) {
                    ly += extent_overlap_y(&i.bbox, &j.bbox).max(0.0).powi(2);
                }
            }
        }
        (lx, ly)
    }

    #[test]
    fn aligned_grid_is_a_zero() {
        let c = cells_of(&unit_grid());
        let (l, g) = continuity_loss(&c);
        assert_eq!(l, 0.0);
        assert!(g.is_zero());
        let (l, g) = alignment_loss(&c);
        assert_eq!(l, 0.0);
        assert!(g.is_zero());
        let o = overlap_loss(&c);
        assert_eq!((o.x, o.y), (0.0, 0.0));
        assert!(o.gradient().is_zero());
    }

    #[test]
    fn continuity_with_shifted_row_start() {
        let mut t = unit_grid();
        t.cells[2].bbox = Some(bb(0.0, 12.0, 10.0, 20.0));
        let c = cells_of(&t);
        assert_eq!(oracle_continuity(&c), 8.0);
        let (l, g) = continuity_loss(&c);
        assert_eq!(l, 8.0);
        // C.y1 pairs with A and B: 2 * (2 + 2)
        assert_eq!(g.entries()[2][Y1], 8.0);
        assert_eq!(g.entries()[0][Y2], -4.0);
        assert_eq!(g.entries()[1][Y2], -4.0);
    }

    #[test]
    fn single_cell_losses_vanish() {
        let c = vec![SpannedBox::new(bb(0.0, 0.0, 7.0, 3.0), span(0, 0, 0, 0))];
        assert_eq!(continuity_loss(&c).0, 0.0);
        assert_eq!(alignment_loss(&c).0, 0.0);
        let o = overlap_loss(&c);
        assert_eq!((o.x, o.y), (0.0, 0.0));
    }

    #[test]
    fn overlap_counts_both_ordered_pairs() {
        let mut t = unit_grid();
        t.cells[1].bbox = Some(bb(8.0, 0.0, 20.0, 10.0));
        let c = cells_of(&t);
        let o = overlap_loss(&c);
        assert_eq!(oracle_overlap(&c), (8.0, 0.0));
        assert_eq!((o.x, o.y), (8.0, 0.0));
    }

    #[test]
    fn same_column_stack_is_not_an_overlap() {
        let c = vec![
            SpannedBox::new(bb(0.0, 0.0, 10.0, 10.0), span(0, 0, 0, 0)),
            SpannedBox::new(bb(0.0, 10.0, 10.0, 20.0), span(1, 1, 0, 0)),
        ];
        let o = overlap_loss(&c);
        assert_eq!((o.x, o.y), (0.0, 0.0));
        // The literal form squares the full shared width: 10^2 for both orders.
        let boxes: Vec<_> = c.iter().map(|c| c.bbox).collect();
        let lit = overlap_loss_with(&boxes, None, OverlapForm::Literal);
        assert_eq!(lit.x, 200.0);
        assert_eq!(lit.y, 0.0);
    }

    #[test]
    fn literal_form_penalizes_gaps() {
        let boxes = [bb(0.0, 0.0, 10.0, 10.0), bb(15.0, 0.0, 20.0, 10.0)];
        let lit = overlap_loss_with(&boxes, None, OverlapForm::Literal);
        assert_eq!(lit.x, 50.0);
        let hinged = overlap_loss_with(&boxes, None, OverlapForm::Hinged);
        assert_eq!(hinged.x, 0.0);
    }

    #[test]
    fn spanless_gate_uses_other_axis() {
        // Overlap in x by 2, but one box sits far below: no y overlap, no x penalty.
        let far = [bb(0.0, 0.0, 10.0, 10.0), bb(8.0, 50.0, 20.0, 60.0)];
        assert_eq!(overlap_loss_with(&far, None, OverlapForm::Hinged).x, 0.0);
        let near = [bb(0.0, 0.0, 10.0, 10.0), bb(8.0, 5.0, 20.0, 15.0)];
        let o = overlap_loss_with(&near, None, OverlapForm::Hinged);
        assert_eq!(o.x, 8.0);
        assert_eq!(o.y, 50.0);
    }

    #[test]
    fn alignment_with_raised_neighbour() {
        let mut t = unit_grid();
        t.cells[1].bbox = Some(bb(10.0, 1.0, 20.0, 10.0));
        let c = cells_of(&t);
        assert_eq!(oracle_alignment(&c), 1.0);
        assert_eq!(alignment_loss(&c).0, 1.0);
    }

    fn jittered_grid(rows: usize, cols: usize, noise: &[f64]) -> Vec<SpannedBox> {
        let mut out = Vec::new();
        let mut k = 0;
        for r in 0..rows {
            for c in 0..cols {
                let mut nz = || {
                    let v = noise[k % noise.len()];
                    k += 1;
                    v
                };
                let x1 = c as f64 * 40.0 + nz();
                let y1 = r as f64 * 20.0 + nz();
                let x2 = (c + 1) as f64 * 40.0 + nz();
                let y2 = (r + 1) as f64 * 20.0 + nz();
                out.push(SpannedBox::new(bb(x1, y1, x2, y2), span(r, r, c, c)));
            }
        }
        out
    }

    proptest! {
        #[test]
        fn losses_match_oracles(noise in prop::collection::vec(-4.0..4.0f64, 4..40), rows in 1usize..5, cols in 1usize..5) {
            let c = jittered_grid(rows, cols, &noise);
            let (ox, oy) = oracle_overlap(&c);
            let o = overlap_loss(&c);
            prop_assert!((continuity_loss(&c).0 - oracle_continuity(&c)).abs() < 1e-9);
            prop_assert!((alignment_loss(&c).0 - oracle_alignment(&c)).abs() < 1e-9);
            prop_assert!((o.x - ox).abs() < 1e-9);
            prop_assert!((o.y - oy).abs() < 1e-9);
        }

        #[test]
        fn losses_invariant_under_translation(noise in prop::collection::vec(-4.0..4.0f64, 4..40), dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
            let c = jittered_grid(3, 3, &noise);
            let moved: Vec<_> = c.iter().map(|s| {
                let b = s.bbox;
                SpannedBox::new(bb(b.x1() + dx, b.y1() + dy, b.x2() + dx, b.y2() + dy), s.span)
            }).collect();
            let tol = 1e-7;
            prop_assert!((continuity_loss(&c).0 - continuity_loss(&moved).0).abs() < tol);
            prop_assert!((alignment_loss(&c).0 - alignment_loss(&moved).0).abs() < tol);
            let (a, b) = (overlap_loss(&c), overlap_loss(&moved));
            prop_assert!((a.x - b.x).abs() < tol && (a.y - b.y).abs() < tol);
        }

        #[test]
        fn gradients_permute_with_cells(noise in prop::collection::vec(-4.0..4.0f64, 4..40), rot in 0usize..9) {
            let c = jittered_grid(3, 3, &noise);
            let mut p = c.clone();
            p.rotate_left(rot);
            let (coords, spans) = split(&c);
            let (pcoords, pspans) = split(&p);
            let (v, g) = structural_losses(&coords, Some(&spans), OverlapForm::Hinged);
            let (pv, pg) = structural_losses(&pcoords, Some(&pspans), OverlapForm::Hinged);
            for k in 0..4 {
                prop_assert!((v.as_array()[k] - pv.as_array()[k]).abs() < 1e-9);
                for i in 0..c.len() {
                    let pi = (i + c.len() - rot) % c.len();
                    for d in 0..4 {
                        prop_assert!((g[k].0[i][d] - pg[k].0[pi][d]).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn evaluation_is_bitwise_deterministic() {
        let noise: Vec<f64> = (0..37).map(|k| ((k * 7919) % 97) as f64 / 12.0 - 4.0).collect();
        let c = jittered_grid(6, 5, &noise);
        let (coords, spans) = split(&c);
        let a = structural_losses(&coords, Some(&spans), OverlapForm::Hinged);
        let b = structural_losses(&coords, Some(&spans), OverlapForm::Hinged);
        assert_eq!(a, b);
    }
}
