//! Min-max refinement of cell boxes.
//!
//! Box coordinates descend the weighted sum of the structural losses while the
//! loss weights ascend it. Weights are the normalized exponential of four free
//! parameters, so they stay on the probability simplex without projection:
//!
//! ```text
//! coords  <- coords  - eta * d(sum_k w_k L_k)/d coords
//! logits  <- logits  + eta * d(sum_k w_k L_k)/d logits,   w = softmax(logits)
//! ```
//!
//! Both updates use the gradients at the current iterate (simultaneous
//! updates). A descent step that would invert a box, or raise the objective
//! at the current weights, is retried with half the step, up to
//! [`MAX_HALVINGS`] times.

use thiserror::Error;

use crate::geometry::{BoundingBox, X1, X2, Y1, Y2};
use crate::losses::{for_each_term, structural_losses, LossBreakdown, LossKind, OverlapForm, SpannedBox};
use crate::structure::GridSpan;

pub const MAX_HALVINGS: usize = 20;

/// Allowed drift of the weight sum away from 1.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefineError {
    #[error("invalid refine configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid loss weights {0:?}: components must be non-negative and sum to 1")]
    InvalidWeights([f64; 4]),
    #[error("nothing to refine: no cells given")]
    NoCells,
    #[error("iteration {iteration}: step would invert box of cell {cell} even after {MAX_HALVINGS} halvings")]
    DegenerateBox { iteration: usize, cell: usize },
    #[error("iteration {iteration}: objective or gradient is not finite")]
    NonFinite { iteration: usize },
}

/// Non-negative weights on (alignment, continuity, overlap-x, overlap-y)
/// summing to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights([f64; 4]);

impl LossWeights {
    pub fn new(w_al: f64, w_cl: f64, w_ol_x: f64, w_ol_y: f64) -> Result<Self, RefineError> {
        Self::from_array([w_al, w_cl, w_ol_x, w_ol_y])
    }

    pub fn from_array(w: [f64; 4]) -> Result<Self, RefineError> {
        let ok = w.iter().all(|v| v.is_finite() && *v >= 0.0)
            && (w.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL;
        if ok {
            Ok(Self(w))
        } else {
            Err(RefineError::InvalidWeights(w))
        }
    }

    pub fn uniform() -> Self {
        Self([0.25; 4])
    }

    /// Normalized exponential of free parameters.
    pub fn from_logits(logits: &[f64; 4]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = logits.map(|t| (t - max).exp());
        let sum: f64 = e.iter().sum();
        Self(e.map(|v| v / sum))
    }

    /// Inverse of [`LossWeights::from_logits`] up to an additive constant.
    pub fn logits(&self) -> [f64; 4] {
        self.0.map(f64::ln)
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    pub fn get(&self, kind: LossKind) -> f64 {
        self.0[kind.index()]
    }

    pub fn w_al(&self) -> f64 {
        self.0[0]
    }

    pub fn w_cl(&self) -> f64 {
        self.0[1]
    }

    pub fn w_ol_x(&self) -> f64 {
        self.0[2]
    }

    pub fn w_ol_y(&self) -> f64 {
        self.0[3]
    }

    pub fn dot(&self, losses: &LossBreakdown) -> f64 {
        let l = losses.as_array();
        (0..4).map(|k| self.0[k] * l[k]).sum()
    }

    pub fn on_simplex(&self) -> bool {
        self.0.iter().all(|&w| w >= 0.0) && (self.0.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
    }

    fn mean(all: &[LossWeights]) -> LossWeights {
        let mut acc = [0.0; 4];
        for w in all {
            for k in 0..4 {
                acc[k] += w.0[k];
            }
        }
        LossWeights(acc.map(|v| v / all.len() as f64))
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::uniform()
    }
}

/// One weight vector per cell, or one for the whole table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightGranularity {
    /// Each pair term is weighted by the mean of its two cells' weights and
    /// each cell ascends on its half-share of the terms it takes part in.
    #[default]
    PerCell,
    /// A single vector sees whole-table losses, which run to thousands on
    /// jittered input, and its softmax tends to lock onto one loss.
    PerTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    pub eta: f64,
    pub iterations: usize,
    pub weights_trainable: bool,
    pub initial_weights: LossWeights,
    /// Early exit when the objective changes by less than this.
    pub stop_tol: f64,
    pub granularity: WeightGranularity,
    pub overlap_form: OverlapForm,
    /// Keep every weight vector at every iterate in the trace.
    pub record_cell_weights: bool,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            eta: 0.05,
            iterations: 500,
            weights_trainable: true,
            initial_weights: LossWeights::uniform(),
            stop_tol: 1e-8,
            granularity: WeightGranularity::PerCell,
            overlap_form: OverlapForm::Hinged,
            record_cell_weights: false,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(RefineError::InvalidConfig(format!("eta must be positive, got {}", self.eta)));
        }
        if self.iterations == 0 {
            return Err(RefineError::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(RefineError::InvalidConfig(format!(
                "stop tolerance must be non-negative, got {}",
                self.stop_tol
            )));
        }
        if !self.initial_weights.on_simplex() {
            return Err(RefineError::InvalidWeights(self.initial_weights.as_array()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub losses: LossBreakdown,
    /// Per-cell mode records the mean over cells.
    pub weights: LossWeights,
}

/// State at every iterate, starting with the input (iteration 0).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefineTrace {
    pub records: Vec<TraceRecord>,
    /// Per iterate, one vector per cell (or one for the table); empty unless
    /// [`RefineConfig::record_cell_weights`] is set.
    pub cell_weights: Vec<Vec<LossWeights>>,
}

impl RefineTrace {
    pub fn objectives(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.objective)
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// First iteration whose `metric` is at or below `target`.
    pub fn first_reaching(&self, target: f64, metric: impl Fn(&TraceRecord) -> f64) -> Option<usize> {
        self.records.iter().find(|r| metric(r) <= target).map(|r| r.iteration)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub boxes: Vec<BoundingBox>,
    /// Table weights; the mean over cells in per-cell mode.
    pub weights: LossWeights,
    pub cell_weights: Option<Vec<LossWeights>>,
    pub trace: RefineTrace,
}

/// `w_al L_al + w_cl L_cl + w_ol_x L_ol_x + w_ol_y L_ol_y`.
pub fn objective(cells: &[SpannedBox], weights: &LossWeights) -> f64 {
    objective_with(cells, weights, OverlapForm::Hinged)
}

pub fn objective_with(cells: &[SpannedBox], weights: &LossWeights, form: OverlapForm) -> f64 {
    let coords: Vec<[f64; 4]> = cells.iter().map(|c| c.bbox.coords()).collect();
    let spans: Vec<GridSpan> = cells.iter().map(|c| c.span).collect();
    let (losses, _) = structural_losses(&coords, Some(&spans), form);
    weights.dot(&losses)
}

struct Evaluation {
    losses: LossBreakdown,
    objective: f64,
    /// Loss shares per weight group.
    group_losses: Vec<[f64; 4]>,
    grad: Vec<[f64; 4]>,
}

struct Problem<'a> {
    spans: &'a [GridSpan],
    form: OverlapForm,
    /// Weight group of each cell.
    group: Vec<usize>,
    n_groups: usize,
}

impl Problem<'_> {
    fn evaluate(&self, coords: &[[f64; 4]], weights: &[LossWeights], with_grad: bool) -> Evaluation {
        let mut totals = [0.0; 4];
        let mut group_losses = vec![[0.0; 4]; self.n_groups];
        let mut grad = vec![[0.0; 4]; if with_grad { coords.len() } else { 0 }];
        for_each_term(coords, Some(self.spans), self.form, |t| {
            let k = t.kind.index();
            let v = t.value();
            let (gi, gj) = (self.group[t.i], self.group[t.j]);
            totals[k] += v;
            group_losses[gi][k] += 0.5 * v;
            group_losses[gj][k] += 0.5 * v;
            if with_grad {
                let scale = 0.5 * (weights[gi].0[k] + weights[gj].0[k]);
                let g = 2.0 * t.residual * scale;
                grad[t.plus.0][t.plus.1] += g;
                grad[t.minus.0][t.minus.1] -= g;
            }
        });
        let objective = group_losses
            .iter()
            .zip(weights)
            .map(|(l, w)| (0..4).map(|k| w.0[k] * l[k]).sum::<f64>())
            .sum();
        Evaluation {
            losses: LossBreakdown::from_array(totals),
            objective,
            group_losses,
            grad,
        }
    }
}

fn inverted_cell(coords: &[[f64; 4]]) -> Option<usize> {
    coords
        .iter()
        .position(|c| !(c[X1] < c[X2] && c[Y1] < c[Y2]) || c.iter().any(|v| !v.is_finite()))
}

/// Refines `cells` in place of a detector: the optimized variables are the box
/// coordinates themselves.
pub fn refine_boxes(cells: &[SpannedBox], cfg: &RefineConfig) -> Result<RefineOutcome, RefineError> {
    cfg.validate()?;
    if cells.is_empty() {
        return Err(RefineError::NoCells);
    }
    let spans: Vec<GridSpan> = cells.iter().map(|c| c.span).collect();
    let (group, n_groups) = match cfg.granularity {
        WeightGranularity::PerTable => (vec![0; cells.len()], 1),
        WeightGranularity::PerCell => ((0..cells.len()).collect(), cells.len()),
    };
    let problem = Problem {
        spans: &spans,
        form: cfg.overlap_form,
        group,
        n_groups,
    };

    let mut coords: Vec<[f64; 4]> = cells.iter().map(|c| c.bbox.coords()).collect();
    let mut weights = vec![cfg.initial_weights; n_groups];
    let mut logits = vec![cfg.initial_weights.logits(); n_groups];
    let mut trace = RefineTrace::default();

    let mut iteration = 0;
    let mut current = problem.evaluate(&coords, &weights, true);
    loop {
        if !current.objective.is_finite() || current.grad.iter().flatten().any(|g| !g.is_finite()) {
            return Err(RefineError::NonFinite { iteration });
        }
        trace.records.push(TraceRecord {
            iteration,
            objective: current.objective,
            losses: current.losses,
            weights: LossWeights::mean(&weights),
        });
        if cfg.record_cell_weights {
            trace.cell_weights.push(weights.clone());
        }
        if iteration >= cfg.iterations {
            break;
        }
        if iteration > 0 {
            let prev = trace.records[trace.records.len() - 2].objective;
            if (current.objective - prev).abs() < cfg.stop_tol {
                break;
            }
        }

        // Descent on coordinates at the current weights.
        let mut step = cfg.eta;
        let mut accepted = None;
        for attempt in 0..=MAX_HALVINGS {
            let candidate: Vec<[f64; 4]> = coords
                .iter()
                .zip(&current.grad)
                .map(|(c, g)| std::array::from_fn(|k| c[k] - step * g[k]))
                .collect();
            if let Some(cell) = inverted_cell(&candidate) {
                if attempt == MAX_HALVINGS {
                    return Err(RefineError::DegenerateBox { iteration, cell });
                }
                step *= 0.5;
                continue;
            }
            let probe = problem.evaluate(&candidate, &weights, false);
            if probe.objective > current.objective {
                step *= 0.5;
                continue;
            }
            accepted = Some(candidate);
            break;
        }

        // Ascent on the weight logits, from the same iterate.
        if cfg.weights_trainable {
            for (g, (theta, lk)) in logits.iter_mut().zip(&current.group_losses).enumerate() {
                let w = weights[g].0;
                let mean: f64 = (0..4).map(|k| w[k] * lk[k]).sum();
                let mut moved = false;
                for k in 0..4 {
                    let d = w[k] * (lk[k] - mean);
                    if d != 0.0 {
                        theta[k] += cfg.eta * d;
                        moved = true;
                    }
                }
                // Untouched logits keep the weights bit-identical.
                if moved {
                    weights[g] = LossWeights::from_logits(theta);
                }
            }
        }

        // No descent step could lower the objective: numerically converged.
        let Some(next) = accepted else {
            break;
        };
        coords = next;
        iteration += 1;
        current = problem.evaluate(&coords, &weights, true);
    }

    let boxes = coords
        .iter()
        .map(|c| BoundingBox::from_coords(*c).expect("step guard keeps boxes valid"))
        .collect();
    let cell_weights = match cfg.granularity {
        WeightGranularity::PerTable => None,
        WeightGranularity::PerCell => Some(weights.clone()),
    };
    Ok(RefineOutcome {
        boxes,
        weights: LossWeights::mean(&weights),
        cell_weights,
        trace,
    })
}
