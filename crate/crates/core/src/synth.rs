//! Seeded synthetic tables: a merged ground-truth grid and a corrupted
//! prediction of it.
//!
//! Randomness comes from ChaCha8 seeded with `seed`, so output is identical
//! across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::BoundingBox;
use crate::structure::{Cell, GridSpan, TableStructure};

/// Smallest width or height a jittered box is clamped to, in pixels.
pub const MIN_EXTENT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("{name} must lie in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("jitter_sigma must be finite and non-negative, got {0}")]
    Jitter(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_rows: usize,
    pub n_cols: usize,
    pub merge_prob: f64,
    pub empty_prob: f64,
    pub jitter_sigma: f64,
    pub drop_prob: f64,
    pub cell_w: f64,
    pub cell_h: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_rows: 8,
            n_cols: 5,
            merge_prob: 0.0,
            empty_prob: 0.0,
            jitter_sigma: 0.0,
            drop_prob: 0.0,
            cell_w: 60.0,
            cell_h: 20.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, value) in [
            ("merge_prob", self.merge_prob),
            ("empty_prob", self.empty_prob),
            ("drop_prob", self.drop_prob),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SynthError::Probability { name, value });
            }
        }
        for (name, value) in [
            ("n_rows", self.n_rows as f64),
            ("n_cols", self.n_cols as f64),
            ("cell_w", self.cell_w),
            ("cell_h", self.cell_h),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SynthError::NonPositive { name, value });
            }
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(SynthError::Jitter(self.jitter_sigma));
        }
        Ok(())
    }
}

/// Ground truth and prediction for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTable {
    pub gt: TableStructure,
    pub pred: TableStructure,
}

/// Builds a table from `cfg`; a pure function of it.
///
/// Ground truth: starting from 1x1 cells, each cell in reading order tries to
/// merge right, then down, with probability `merge_prob`. A merge goes ahead
/// only if the union is a rectangle and every grid line stays in use. Each
/// resulting cell is empty with probability `empty_prob`.
///
/// Prediction: each cell is dropped with probability `drop_prob`. A dropped
/// empty cell is absorbed by a random neighbour whose union with it is a
/// rectangle; otherwise it leaves a hole. Every coordinate then gets
/// `N(0, jitter_sigma^2)` noise, clamped to keep boxes at least
/// [`MIN_EXTENT`] wide and high.
pub fn generate(cfg: &SynthConfig) -> Result<SynthTable, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut spans = merged_spans(cfg, &mut rng);
    spans.sort_by_key(|s| (s.sr(), s.sc()));
    let rect = |s: &GridSpan| {
        BoundingBox::new(
            s.sc() as f64 * cfg.cell_w,
            s.sr() as f64 * cfg.cell_h,
            (s.ec() + 1) as f64 * cfg.cell_w,
            (s.er() + 1) as f64 * cfg.cell_h,
        )
        .expect("grid cells have positive size")
    };
    let gt_cells: Vec<Cell> = spans
        .iter()
        .enumerate()
        .map(|(id, s)| {
            if rng.random_bool(cfg.empty_prob) {
                Cell::empty(id, Some(rect(s)), *s)
            } else {
                Cell::new(id, Some(rect(s)), *s).with_text(format!("r{}c{}", s.sr(), s.sc()))
            }
        })
        .collect();
    let gt = TableStructure::new(cfg.n_rows, cfg.n_cols, gt_cells);

    // Dropping and absorption, in reading order over the live cells.
    let mut live: Vec<Option<Cell>> = gt.cells.iter().cloned().map(Some).collect();
    for i in 0..live.len() {
        let Some(cell) = live[i].clone() else { continue };
        if !rng.random_bool(cfg.drop_prob) {
            continue;
        }
        live[i] = None;
        if !cell.empty {
            continue;
        }
        let partners: Vec<usize> = (0..live.len())
            .filter(|&j| live[j].as_ref().is_some_and(|o| forms_rectangle(&o.span, &cell.span)))
            .collect();
        if partners.is_empty() {
            continue;
        }
        let j = partners[rng.random_range(0..partners.len())];
        let other = live[j].as_mut().expect("partner is live");
        other.span = other.span.union(&cell.span);
    }

    let noise = (cfg.jitter_sigma > 0.0).then(|| Normal::new(0.0, cfg.jitter_sigma).expect("sigma is finite"));
    let mut pred_cells = Vec::new();
    for mut cell in live.into_iter().flatten() {
        let mut c = rect(&cell.span).coords();
        if let Some(n) = &noise {
            for v in &mut c {
                *v += n.sample(&mut rng);
            }
            c[2] = c[2].max(c[0] + MIN_EXTENT);
            c[3] = c[3].max(c[1] + MIN_EXTENT);
        }
        cell.bbox = Some(BoundingBox::from_coords(c).expect("clamped box is valid"));
        pred_cells.push(cell);
    }
    let mut pred = TableStructure::new(cfg.n_rows, cfg.n_cols, pred_cells);
    pred.assign_reading_order_ids();
    Ok(SynthTable { gt, pred })
}

/// Side by side with matching rows, or stacked with matching columns.
fn forms_rectangle(a: &GridSpan, b: &GridSpan) -> bool {
    let same_rows = a.sr() == b.sr() && a.er() == b.er();
    let same_cols = a.sc() == b.sc() && a.ec() == b.ec();
    (same_rows && (a.ec() + 1 == b.sc() || b.ec() + 1 == a.sc()))
        || (same_cols && (a.er() + 1 == b.sr() || b.er() + 1 == a.sr()))
}

fn merged_spans(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<GridSpan> {
    let (rows, cols) = (cfg.n_rows, cfg.n_cols);
    let mut owner: Vec<usize> = (0..rows * cols).collect();
    let mut spans: Vec<Option<GridSpan>> = (0..rows * cols)
        .map(|k| Some(GridSpan::single(k / cols, k % cols)))
        .collect();

    for r in 0..rows {
        for c in 0..cols {
            for right in [true, false] {
                let id = owner[r * cols + c];
                let s = spans[id].expect("owner is live");
                // Only the top-left position of a cell acts for it.
                if (s.sr(), s.sc()) != (r, c) || !rng.random_bool(cfg.merge_prob) {
                    continue;
                }
                let (nr, nc) = if right { (s.sr(), s.ec() + 1) } else { (s.er() + 1, s.sc()) };
                if nr >= rows || nc >= cols {
                    continue;
                }
                let other_id = owner[nr * cols + nc];
                let o = spans[other_id].expect("owner is live");
                if !forms_rectangle(&s, &o) {
                    continue;
                }
                let merged = s.union(&o);
                let previous = (owner.clone(), spans.clone());
                for p in merged.rows() {
                    for q in merged.cols() {
                        owner[p * cols + q] = id;
                    }
                }
                spans[id] = Some(merged);
                spans[other_id] = None;
                if !all_lines_used(&owner, rows, cols) {
                    (owner, spans) = previous;
                }
            }
        }
    }
    spans.into_iter().flatten().collect()
}

/// Every interior row and column line separates two cells somewhere.
fn all_lines_used(owner: &[usize], rows: usize, cols: usize) -> bool {
    let row_ok = (1..rows).all(|r| (0..cols).any(|c| owner[(r - 1) * cols + c] != owner[r * cols + c]));
    let col_ok = (1..cols).all(|c| (0..rows).any(|r| owner[r * cols + c - 1] != owner[r * cols + c]));
    row_ok && col_ok
}
