use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tabstruct::adjacency::{build_rectilinear, recover_structure, AssignOptions, RectilinearAdjacency, SymmetryMode};
use tabstruct::eval::{self, Aggregation, Criterion, EvalReport, DEFAULT_IOU, TABLE_THRESHOLDS};
use tabstruct::io::{self, BoxRecord, NamedReport, SpanRecord};
use tabstruct::losses::{OverlapForm, SpannedBox};
use tabstruct::normalize::{normalize_ground_truth, snap_to_word_boxes_with, DEFAULT_PAD};
use tabstruct::refine::{refine_boxes, RefineConfig, WeightGranularity};
use tabstruct::structure::{TableStructure, ValidateOptions, DEFAULT_ALIGN_TOL};
use tabstruct::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(name = "tabstruct", version, about = "Table structure recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ground-truth table and a corrupted prediction.
    Gen(GenArgs),
    /// Build an aligned ground-truth structure from content annotations.
    Normalize(NormalizeArgs),
    /// Move grid lines off word boxes they cut through.
    Snap(SnapArgs),
    /// Write the rectilinear adjacency matrices of a structure.
    Targets(TargetsArgs),
    /// Recover spans and grid indices from boxes and adjacency.
    Resolve(ResolveArgs),
    /// Refine boxes under the structural losses.
    Refine(RefineArgs),
    /// Score a prediction against ground truth at one IoU threshold.
    Evaluate(EvaluateArgs),
    /// Score at several IoU thresholds.
    Sweep(SweepArgs),
    /// Print the rule violations of a structure.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long, default_value_t = 0.0)]
    merge_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    empty_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0.0)]
    drop: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 60.0)]
    cell_width: f64,
    #[arg(long, default_value_t = 20.0)]
    cell_height: f64,
    #[arg(long)]
    out_gt: PathBuf,
    #[arg(long)]
    out_pred: PathBuf,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long, default_value_t = DEFAULT_PAD)]
    pad: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SnapArgs {
    #[arg(long)]
    structure: PathBuf,
    #[arg(long)]
    words: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALIGN_TOL)]
    align_tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TargetsArgs {
    #[arg(long)]
    structure: PathBuf,
    #[arg(long)]
    out_adjacency: PathBuf,
    /// Also write the cell boxes as a box record file.
    #[arg(long)]
    out_boxes: Option<PathBuf>,
    /// Also write the cell spans as a span record file.
    #[arg(long)]
    out_spans: Option<PathBuf>,
}

#[derive(Args)]
struct ResolveArgs {
    #[arg(long)]
    boxes: PathBuf,
    #[arg(long)]
    adjacency: PathBuf,
    /// Reject matrices whose left/right or top/bottom halves disagree.
    #[arg(long)]
    strict_adjacency: bool,
    /// Column clustering tolerance in pixels (default 0.5% of table width, at least 2).
    #[arg(long)]
    col_tol: Option<f64>,
    /// Row clustering tolerance in pixels (default 0.5% of table height, at least 2).
    #[arg(long)]
    row_tol: Option<f64>,
    #[arg(long)]
    out_xml: PathBuf,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long)]
    boxes: PathBuf,
    #[arg(long)]
    spans: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    /// Keep the loss weights uniform.
    #[arg(long)]
    fixed_weights: bool,
    /// One weight vector per cell (the default).
    #[arg(long, conflicts_with = "per_table_weights")]
    per_cell_weights: bool,
    /// One weight vector for the whole table.
    #[arg(long)]
    per_table_weights: bool,
    /// Unhinged overlap over all pairs.
    #[arg(long)]
    literal_overlap: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Prediction XML, or a directory of them.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth XML, or a directory of them paired by file name.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    criterion: Criterion,
    #[arg(long, default_value_t = DEFAULT_IOU)]
    iou: f64,
    #[arg(long, default_value_t = Aggregation::Micro)]
    agg: Aggregation,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    criterion: Criterion,
    #[arg(long, value_delimiter = ',', default_values_t = TABLE_THRESHOLDS)]
    thresholds: Vec<f64>,
    #[arg(long, default_value_t = Aggregation::Micro)]
    agg: Aggregation,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    structure: PathBuf,
    /// Allow grid holes, as in predictions.
    #[arg(long)]
    prediction: bool,
    #[arg(long, default_value_t = DEFAULT_ALIGN_TOL)]
    align_tol: f64,
    #[arg(long)]
    overlap_tol: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Gen(a) => gen(a)?,
        Command::Normalize(a) => {
            let anns = io::read_annotations(&read(&a.annotations)?).with_context(|| ctx(&a.annotations))?;
            let t = normalize_ground_truth(&anns, a.rows, a.cols, a.pad)?;
            write(&a.out, &io::emit_xml(&t))?;
        }
        Command::Snap(a) => {
            let t = read_xml(&a.structure, true)?;
            let words = io::read_words(&read(&a.words)?).with_context(|| ctx(&a.words))?;
            let out = snap_to_word_boxes_with(&t, &words, a.align_tol)?;
            for u in &out.unresolved {
                eprintln!(
                    "unresolved: {} line {} at {} cuts word {}",
                    u.axis, u.line, u.position, u.word
                );
            }
            write(&a.out, &io::emit_xml(&out.structure))?;
        }
        Command::Targets(a) => {
            let t = read_xml(&a.structure, false)?;
            write(&a.out_adjacency, &io::write_adjacency(&build_rectilinear(&t)?))?;
            if let Some(p) = &a.out_boxes {
                let boxes: Vec<BoxRecord> = t
                    .cells
                    .iter()
                    .map(|c| BoxRecord {
                        id: c.id,
                        bbox: c.bbox.expect("parsed cells carry boxes"),
                        empty: c.empty,
                    })
                    .collect();
                write(p, &io::write_boxes(&boxes))?;
            }
            if let Some(p) = &a.out_spans {
                let spans: Vec<SpanRecord> = t.cells.iter().map(|c| SpanRecord { id: c.id, span: c.span }).collect();
                write(p, &io::write_spans(&spans))?;
            }
        }
        Command::Resolve(a) => resolve(a)?,
        Command::Refine(a) => refine(a)?,
        Command::Evaluate(a) => {
            let reports = score_all(&a.pred, &a.gt, a.criterion, &[a.iou], a.agg)?;
            write(&a.report, &io::write_reports(&reports))?;
            if let Some(r) = reports.last() {
                println!(
                    "{} {}: precision {:.4} recall {:.4} f1 {:.4}",
                    r.report.criterion, r.name, r.report.precision, r.report.recall, r.report.f1
                );
            }
        }
        Command::Sweep(a) => {
            if a.thresholds.is_empty() {
                bail!("no thresholds given");
            }
            let reports = score_all(&a.pred, &a.gt, a.criterion, &a.thresholds, a.agg)?;
            write(&a.report, &io::write_reports(&reports))?;
            let last_name = &reports.last().expect("one report per threshold").name;
            let rows: Vec<EvalReport> = reports
                .iter()
                .filter(|r| &r.name == last_name)
                .map(|r| r.report.clone())
                .collect();
            print!("{}", io::sweep_table(&rows));
        }
        Command::Validate(a) => return validate(a),
    }
    Ok(ExitCode::SUCCESS)
}

fn ctx(p: &Path) -> String {
    format!("reading {}", p.display())
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| ctx(p))
}

fn write(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).with_context(|| format!("writing {}", p.display()))
}

fn read_xml(p: &Path, strict: bool) -> Result<TableStructure> {
    let text = read(p)?;
    let t = if strict {
        io::parse_xml(&text)
    } else {
        io::parse_prediction_xml(&text)
    };
    t.with_context(|| ctx(p))
}

fn gen(a: GenArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_rows: a.rows,
        n_cols: a.cols,
        merge_prob: a.merge_prob,
        empty_prob: a.empty_prob,
        jitter_sigma: a.jitter,
        drop_prob: a.drop,
        cell_w: a.cell_width,
        cell_h: a.cell_height,
        seed: a.seed,
    };
    let table = generate(&cfg)?;
    write(&a.out_gt, &io::emit_xml(&table.gt))?;
    write(&a.out_pred, &io::emit_xml(&table.pred))
}

fn resolve(a: ResolveArgs) -> Result<()> {
    let records = io::read_boxes(&read(&a.boxes)?).with_context(|| ctx(&a.boxes))?;
    let [l, r, t, b] = io::read_adjacency(&read(&a.adjacency)?).with_context(|| ctx(&a.adjacency))?;
    let mode = if a.strict_adjacency {
        SymmetryMode::Strict
    } else {
        SymmetryMode::Symmetrize
    };
    let adj = RectilinearAdjacency::from_matrices(l, r, t, b, mode)?;
    if adj.len() != records.len() {
        bail!("{} boxes but adjacency over {} cells", records.len(), adj.len());
    }
    let boxes: Vec<_> = records.iter().map(|r| r.bbox).collect();
    let opts = AssignOptions {
        col_tol: a.col_tol,
        row_tol: a.row_tol,
    };
    let mut t = recover_structure(&boxes, &adj, &opts)?;
    for (cell, rec) in t.cells.iter_mut().zip(&records) {
        cell.id = rec.id;
        cell.empty = rec.empty;
    }
    write(&a.out_xml, &io::emit_xml(&t))
}

fn refine(a: RefineArgs) -> Result<()> {
    let records = io::read_boxes(&read(&a.boxes)?).with_context(|| ctx(&a.boxes))?;
    let spans = io::read_spans(&read(&a.spans)?).with_context(|| ctx(&a.spans))?;
    let cells = records
        .iter()
        .map(|r| {
            let s = spans
                .iter()
                .find(|s| s.id == r.id)
                .with_context(|| format!("no span for box {}", r.id))?;
            Ok(SpannedBox::new(r.bbox, s.span))
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = RefineConfig {
        eta: a.eta,
        iterations: a.iters,
        weights_trainable: !a.fixed_weights,
        granularity: if a.per_table_weights {
            WeightGranularity::PerTable
        } else {
            WeightGranularity::PerCell
        },
        overlap_form: if a.literal_overlap {
            OverlapForm::Literal
        } else {
            OverlapForm::Hinged
        },
        ..RefineConfig::default()
    };
    let out = refine_boxes(&cells, &cfg)?;
    let refined: Vec<BoxRecord> = records
        .iter()
        .zip(&out.boxes)
        .map(|(r, &bbox)| BoxRecord { bbox, ..r.clone() })
        .collect();
    write(&a.out, &io::write_boxes(&refined))?;
    if let Some(p) = &a.trace {
        write(p, &io::write_trace(&out.trace))?;
    }
    Ok(())
}

/// Pairs of (name, pred, gt); directories are paired by sorted file name.
fn load_pairs(pred: &Path, gt: &Path) -> Result<Vec<(String, TableStructure, TableStructure)>> {
    if !pred.is_dir() {
        let name = gt.file_name().map_or("table".into(), |n| n.to_string_lossy().into_owned());
        return Ok(vec![(name, read_xml(pred, false)?, read_xml(gt, true)?)]);
    }
    if !gt.is_dir() {
        bail!("{} is a directory but {} is not", pred.display(), gt.display());
    }
    let mut names: Vec<String> = fs::read_dir(gt)
        .with_context(|| ctx(gt))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no ground-truth files in {}", gt.display());
    }
    names
        .into_iter()
        .map(|n| {
            let p = pred.join(&n);
            if !p.is_file() {
                bail!("no prediction {} for ground truth {n}", p.display());
            }
            Ok((n.clone(), read_xml(&p, false)?, read_xml(&gt.join(&n), true)?))
        })
        .collect()
}

/// Per-table reports at each threshold; for a corpus, aggregate rows named
/// `*` follow.
fn score_all(
    pred: &Path,
    gt: &Path,
    criterion: Criterion,
    thresholds: &[f64],
    agg: Aggregation,
) -> Result<Vec<NamedReport>> {
    let pairs = load_pairs(pred, gt)?;
    let mut out = Vec::new();
    let mut per_threshold: Vec<Vec<EvalReport>> = vec![Vec::new(); thresholds.len()];
    for (name, p, g) in &pairs {
        let reports = eval::sweep(p, g, criterion, thresholds).with_context(|| format!("scoring {name}"))?;
        for (k, report) in reports.into_iter().enumerate() {
            per_threshold[k].push(report.clone());
            out.push(NamedReport {
                name: name.clone(),
                report,
            });
        }
    }
    if pred.is_dir() {
        for reports in &per_threshold {
            out.push(NamedReport {
                name: "*".into(),
                report: eval::aggregate(reports, agg).expect("corpus is not empty"),
            });
        }
    }
    Ok(out)
}

fn validate(a: ValidateArgs) -> Result<ExitCode> {
    let t = io::parse_xml_unchecked(&read(&a.structure)?).with_context(|| ctx(&a.structure))?;
    let opts = ValidateOptions {
        align_tol: a.align_tol,
        overlap_tol: a.overlap_tol.unwrap_or(ValidateOptions::default().overlap_tol),
    };
    let violations = if a.prediction {
        t.structural_violations(false)
    } else {
        t.validate_with(&opts)
    };
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        println!("ok");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{} violations", violations.len());
        Ok(ExitCode::FAILURE)
    }
}
