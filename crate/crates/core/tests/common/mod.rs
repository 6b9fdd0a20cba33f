#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tabstruct::eval::{Criterion, RelationDirection};
use tabstruct::geometry::{iou, BoundingBox};
use tabstruct::losses::{structural_losses, LossKind, OverlapForm};
use tabstruct::normalize::ContentAnnotation;
use tabstruct::structure::{Cell, GridSpan, TableStructure};
use tabstruct::synth::{generate, SynthConfig, SynthTable};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
    BoundingBox::new(x1, y1, x2, y2).unwrap()
}

pub fn synth(cfg: SynthConfig) -> SynthTable {
    generate(&cfg).unwrap()
}

/// Tables up to 15x15 with merge probability up to 0.3 and empty probability
/// up to 0.2, drawn from the seed.
pub fn random_table(seed: u64) -> SynthTable {
    let mut r = rng(seed ^ 0x5eed);
    synth(SynthConfig {
        n_rows: r.random_range(1..=15),
        n_cols: r.random_range(1..=15),
        merge_prob: r.random_range(0.0..=0.3),
        empty_prob: r.random_range(0.0..=0.2),
        seed,
        ..SynthConfig::default()
    })
}

pub fn mean_iou(a: &[BoundingBox], b: &[BoundingBox]) -> f64 {
    a.iter().zip(b).map(|(x, y)| iou(x, y)).sum::<f64>() / a.len() as f64
}

/// Cell index at every grid position.
fn dense(t: &TableStructure) -> Vec<Vec<Option<usize>>> {
    let mut g = vec![vec![None; t.n_cols]; t.n_rows];
    for (k, c) in t.cells.iter().enumerate() {
        for r in c.span.rows() {
            for col in c.span.cols() {
                g[r][col] = Some(k);
            }
        }
    }
    g
}

pub type RelKey = (usize, usize, RelationDirection);

fn key(a: usize, b: usize, d: RelationDirection) -> RelKey {
    (a.min(b), a.max(b), d)
}

/// Relations read off the dense grid line by line: NEC links distinct cells
/// at consecutive positions; SEC links consecutive non-empty cells after
/// dropping empty cells and holes from the line.
pub fn oracle_relations(t: &TableStructure, criterion: Criterion) -> BTreeSet<RelKey> {
    let g = dense(t);
    let mut lines: Vec<(RelationDirection, Vec<Option<usize>>)> = Vec::new();
    for row in &g {
        lines.push((RelationDirection::Horizontal, row.clone()));
    }
    for c in 0..t.n_cols {
        lines.push((RelationDirection::Vertical, g.iter().map(|row| row[c]).collect()));
    }
    let mut out = BTreeSet::new();
    for (d, line) in lines {
        match criterion {
            Criterion::Nec => {
                for w in line.windows(2) {
                    if let (Some(a), Some(b)) = (w[0], w[1]) {
                        if a != b {
                            out.insert(key(t.cells[a].id, t.cells[b].id, d));
                        }
                    }
                }
            }
            Criterion::Sec => {
                let mut seq: Vec<usize> = line.into_iter().flatten().filter(|&k| !t.cells[k].empty).collect();
                seq.dedup();
                for w in seq.windows(2) {
                    out.insert(key(t.cells[w[0]].id, t.cells[w[1]].id, d));
                }
            }
        }
    }
    out
}

/// Repeatedly takes the best remaining pair.
pub fn oracle_match(pred: &TableStructure, gt: &TableStructure, theta: f64) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    let mut used_gt = BTreeSet::new();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for p in &pred.cells {
            if out.contains_key(&p.id) {
                continue;
            }
            for g in &gt.cells {
                if used_gt.contains(&g.id) {
                    continue;
                }
                let v = iou(&p.bbox.unwrap(), &g.bbox.unwrap());
                if v <= 0.0 || v < theta {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bv, bg, bp)) => v > bv || (v == bv && (g.id, p.id) < (bg, bp)),
                };
                if better {
                    best = Some((v, g.id, p.id));
                }
            }
        }
        match best {
            Some((_, g, p)) => {
                out.insert(p, g);
                used_gt.insert(g);
            }
            None => return out,
        }
    }
}

/// (tp, fp, fn) by set arithmetic on mapped relations.
pub fn oracle_counts(pred: &TableStructure, gt: &TableStructure, c: Criterion, theta: f64) -> (usize, usize, usize) {
    let m = oracle_match(pred, gt, theta);
    let gt_rel = oracle_relations(gt, c);
    let pred_rel = oracle_relations(pred, c);
    let mapped: BTreeSet<RelKey> = pred_rel
        .iter()
        .filter_map(|&(a, b, d)| Some(key(*m.get(&a)?, *m.get(&b)?, d)))
        .collect();
    let tp = mapped.intersection(&gt_rel).count();
    (tp, pred_rel.len() - tp, gt_rel.len() - tp)
}

/// A ground truth and a corrupted prediction: jitter and dropped cells, and
/// for odd seeds a prediction built on a different merge pattern.
pub fn corrupted_pair(seed: u64) -> (TableStructure, TableStructure) {
    let mut r = rng(seed ^ 0xc0de);
    let base = SynthConfig {
        n_rows: r.random_range(1..=10),
        n_cols: r.random_range(1..=10),
        merge_prob: r.random_range(0.0..=0.3),
        empty_prob: r.random_range(0.0..=0.4),
        jitter_sigma: r.random_range(0.0..=6.0),
        drop_prob: r.random_range(0.0..=0.2),
        cell_w: 30.0,
        cell_h: 12.0,
        seed,
    };
    let gt = synth(base.clone()).gt;
    let pred = if seed % 2 == 1 {
        synth(SynthConfig {
            seed: seed + 1_000_000,
            ..base
        })
        .pred
    } else {
        synth(base).pred
    };
    (gt, pred)
}

/// Random content annotations over a random grid with uneven row heights and
/// column widths. Content sits strictly inside its cell. Every outer row and
/// column keeps some content so all boundaries are anchored.
pub fn annotation_set(seed: u64) -> (Vec<ContentAnnotation>, usize, usize) {
    let mut r = rng(seed ^ 0xa770);
    let layout = synth(SynthConfig {
        n_rows: r.random_range(1..=10),
        n_cols: r.random_range(1..=10),
        merge_prob: r.random_range(0.0..=0.3),
        empty_prob: r.random_range(0.0..=0.5),
        seed,
        ..SynthConfig::default()
    })
    .gt;
    let (rows, cols) = (layout.n_rows, layout.n_cols);
    let mut cuts = |n: usize, lo: f64, hi: f64| {
        let mut v = vec![r.random_range(0.0..50.0)];
        for _ in 0..n {
            let step = r.random_range(lo..hi);
            v.push(v.last().unwrap() + step);
        }
        v
    };
    let ys = cuts(rows, 10.0, 40.0);
    let xs = cuts(cols, 20.0, 90.0);
    let outer = |s: &GridSpan| s.sr() == 0 || s.sc() == 0 || s.er() + 1 == rows || s.ec() + 1 == cols;
    let mut out = Vec::new();
    for c in &layout.cells {
        if c.empty && !outer(&c.span) {
            continue;
        }
        let s = c.span;
        let (x1, x2) = (xs[s.sc()], xs[s.ec() + 1]);
        let (y1, y2) = (ys[s.sr()], ys[s.er() + 1]);
        let w = x2 - x1;
        let h = y2 - y1;
        let bx = bb(
            x1 + r.random_range(0.5..w * 0.4),
            y1 + r.random_range(0.5..h * 0.4),
            x2 - r.random_range(0.5..w * 0.4),
            y2 - r.random_range(0.5..h * 0.4),
        );
        let mut a = ContentAnnotation::new(bx, s);
        a.text = Some(format!("t{}", c.id));
        out.push(a);
    }
    (out, rows, cols)
}

/// A copy with a cell's box replaced.
pub fn with_box(t: &TableStructure, id: usize, b: BoundingBox) -> TableStructure {
    let mut t = t.clone();
    for c in &mut t.cells {
        if c.id == id {
            c.bbox = Some(b);
        }
    }
    t
}

pub fn cell(id: usize, b: BoundingBox, sr: usize, sc: usize, er: usize, ec: usize) -> Cell {
    Cell::new(id, Some(b), GridSpan::new(sr, sc, er, ec).unwrap())
}

pub fn empty_cell(id: usize, b: BoundingBox, sr: usize, sc: usize, er: usize, ec: usize) -> Cell {
    Cell::empty(id, Some(b), GridSpan::new(sr, sc, er, ec).unwrap())
}

pub const STEP: f64 = 1e-4;
pub const MAX_REL_ERR: f64 = 1e-6;

/// A jittered table with merged cells, as raw coordinates and spans.
pub fn configuration(seed: u64) -> (Vec<[f64; 4]>, Vec<GridSpan>) {
    let mut r = rng(seed ^ 0x9ad);
    let t = synth(SynthConfig {
        n_rows: r.random_range(2..=6),
        n_cols: r.random_range(2..=6),
        merge_prob: 0.25,
        jitter_sigma: 3.0,
        cell_w: 30.0,
        cell_h: 12.0,
        seed,
        ..SynthConfig::default()
    })
    .pred;
    t.cells.iter().map(|c| (c.bbox.unwrap().coords(), c.span)).unzip()
}

/// Central differences of one loss over every coordinate.
pub fn numeric_gradient(coords: &[[f64; 4]], spans: &[GridSpan], form: OverlapForm, kind: LossKind) -> Vec<[f64; 4]> {
    let f = |c: &[[f64; 4]]| structural_losses(c, Some(spans), form).0.get(kind);
    let mut out = vec![[0.0; 4]; coords.len()];
    let mut c = coords.to_vec();
    for i in 0..coords.len() {
        for k in 0..4 {
            let x = coords[i][k];
            c[i][k] = x + STEP;
            let up = f(&c);
            c[i][k] = x - STEP;
            let down = f(&c);
            c[i][k] = x;
            out[i][k] = (up - down) / (2.0 * STEP);
        }
    }
    out
}

/// `|a - n| / max(|a|, |n|, 1)` over the whole gradient vector.
pub fn relative_error(a: &[[f64; 4]], n: &[[f64; 4]]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().flatten().zip(n.iter().flatten()).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().flatten().copied()).max(norm(&mut n.iter().flatten().copied())).max(1.0);
    diff / scale
}

/// Worst relative error over 50 seeded configurations, and how many of them
/// have a nonzero analytic gradient.
pub fn gradient_check(kind: LossKind, form: OverlapForm) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    for seed in 0..50 {
        let (coords, spans) = configuration(seed);
        let (_, grads) = structural_losses(&coords, Some(&spans), form);
        let analytic = grads[kind.index()].entries().to_vec();
        worst = worst.max(relative_error(&analytic, &numeric_gradient(&coords, &spans, form, kind)));
        if analytic.iter().flatten().any(|&g| g != 0.0) {
            nonzero += 1;
        }
    }
    (worst, nonzero)
}

const TEXT_CHARS: &[char] = &['a', 'Z', '7', ' ', '\t', '\n', '\r', '\\', '<', '>', '&', '"', '\'', 'é', '表'];

pub fn random_text(r: &mut ChaCha8Rng) -> Option<String> {
    let n = r.random_range(0..8);
    if n == 0 {
        return None;
    }
    Some((0..n).map(|_| TEXT_CHARS[r.random_range(0..TEXT_CHARS.len())]).collect())
}

pub fn random_float(r: &mut ChaCha8Rng) -> f64 {
    match r.random_range(0..4) {
        0 => r.random_range(-1e-9..1e-9),
        1 => r.random_range(-1e6..1e6),
        2 => r.random_range(0..500) as f64,
        _ => r.random::<f64>() * 1000.0,
    }
}

pub fn random_box(r: &mut ChaCha8Rng) -> BoundingBox {
    let x = random_float(r);
    let y = random_float(r);
    bb(x, y, x + r.random_range(0.0..300.0), y + r.random_range(0.0..100.0))
}

pub fn random_span(r: &mut ChaCha8Rng) -> GridSpan {
    let sr = r.random_range(0..40);
    let sc = r.random_range(0..40);
    GridSpan::new(sr, sc, sr + r.random_range(0..4), sc + r.random_range(0..4)).unwrap()
}

/// One seeded instance of each record format, written, read back and
/// written again. Returns the formats that failed.
pub fn round_trip_failures(seed: u64) -> Vec<&'static str> {
    use tabstruct::adjacency::{build_rectilinear, RectilinearAdjacency, SymmetryMode};
    use tabstruct::eval::EvalReport;
    use tabstruct::io::*;
    use tabstruct::losses::LossBreakdown;
    use tabstruct::normalize::WordBox;
    use tabstruct::refine::{LossWeights, RefineTrace, TraceRecord};

    let mut r = rng(seed ^ 0xf0f0);
    let n = r.random_range(0..20);
    let mut failed = Vec::new();
    let mut check = |name: &'static str, ok: bool| {
        if !ok {
            failed.push(name);
        }
    };

    let anns: Vec<ContentAnnotation> = (0..n)
        .map(|_| ContentAnnotation {
            bbox: random_box(&mut r),
            span: random_span(&mut r),
            text: random_text(&mut r),
        })
        .collect();
    let text = write_annotations(&anns);
    check("annotations", read_annotations(&text).is_ok_and(|v| v == anns && write_annotations(&v) == text));

    let words: Vec<WordBox> = (0..n)
        .map(|_| WordBox {
            bbox: random_box(&mut r),
            text: random_text(&mut r),
        })
        .collect();
    let text = write_words(&words);
    check("words", read_words(&text).is_ok_and(|v| v == words && write_words(&v) == text));

    let boxes: Vec<BoxRecord> = (0..n)
        .map(|i| BoxRecord {
            id: i * 3 + r.random_range(0..3),
            bbox: random_box(&mut r),
            empty: r.random_bool(0.3),
        })
        .collect();
    let text = write_boxes(&boxes);
    check("boxes", read_boxes(&text).is_ok_and(|v| v == boxes && write_boxes(&v) == text));

    let spans: Vec<SpanRecord> = (0..n)
        .map(|i| SpanRecord {
            id: i,
            span: random_span(&mut r),
        })
        .collect();
    let text = write_spans(&spans);
    check("spans", read_spans(&text).is_ok_and(|v| v == spans && write_spans(&v) == text));

    let adj = build_rectilinear(&random_table(seed).gt).unwrap();
    let text = write_adjacency(&adj);
    let back = read_adjacency(&text)
        .ok()
        .and_then(|[a, b, c, d]| RectilinearAdjacency::from_matrices(a, b, c, d, SymmetryMode::Strict).ok());
    check("adjacency", back.is_some_and(|v| v == adj && write_adjacency(&v) == text));

    let reports: Vec<NamedReport> = (0..n)
        .map(|i| NamedReport {
            name: random_text(&mut r).unwrap_or_else(|| format!("t{i}")),
            report: EvalReport::from_counts(
                if r.random_bool(0.5) { Criterion::Sec } else { Criterion::Nec },
                r.random_range(0.01..=1.0),
                r.random_range(0..100),
                r.random_range(0..100),
                r.random_range(0..100),
                r.random_range(0..10),
                r.random_range(0..10),
            ),
        })
        .collect();
    let text = write_reports(&reports);
    check("reports", read_reports(&text).is_ok_and(|v| v == reports && write_reports(&v) == text));

    let trace = RefineTrace {
        records: (0..n)
            .map(|i| TraceRecord {
                iteration: i,
                objective: random_float(&mut r).abs(),
                losses: LossBreakdown::from_array(std::array::from_fn(|_| random_float(&mut r).abs())),
                weights: LossWeights::from_logits(&std::array::from_fn(|_| r.random_range(-20.0..20.0))),
            })
            .collect(),
        cell_weights: Vec::new(),
    };
    let text = write_trace(&trace);
    check("trace", read_trace(&text).is_ok_and(|v| v == trace && write_trace(&v) == text));

    let mut table = random_table(seed);
    for c in table.gt.cells.iter_mut().chain(table.pred.cells.iter_mut()) {
        c.text = if c.empty { None } else { random_text(&mut r) };
    }
    let text = emit_xml(&table.gt);
    check("xml", parse_xml(&text).is_ok_and(|v| v == table.gt && emit_xml(&v) == text));
    let text = emit_xml(&table.pred);
    check("prediction xml", parse_prediction_xml(&text).is_ok_and(|v| v == table.pred && emit_xml(&v) == text));

    failed
}
