//! Experiment sweeps, append-only persistence, and the paired-comparison
//! aggregation behind the benchmark tables.
//!
//! A sweep is a grid over (task, method, budget, seed). Each cell runs one
//! inference job, draws a reference posterior sample, scores the metric
//! triple, and yields one [`ResultRecord`]. Records stream to a JSONL file
//! as they finish, so a crashed sweep keeps everything already computed.
//!
//! Aggregation pairs candidate records against a baseline method by seed
//! and reports reductions (baseline minus candidate, positive is an
//! improvement for the candidate), good:bad ratios, and a 0..9 verdict
//! counting improved cells among {mean, SD, ratio} x {mmd2, c2st, ed2}.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write as IoWrite};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::MdnConfig;
use crate::error::{Error, Result};
use crate::inference::{self, InferenceConfig, Method};
use crate::metrics::{loc_disp, metric_triple, LocDisp, MetricTriple};
use crate::nn::TrainConfig;
use crate::rng::derive_seed;
use crate::sample::{evenly_spaced, median, quantile, sample_sd, SampleMatrix};
use crate::tasks::Task;

/// Environment variable naming the root directory that relative output
/// paths resolve against.
pub const OUTPUT_ENV: &str = "SBI_OUT_DIR";

/// Sample size per side for metric evaluation, capped by `n_post`.
pub const EVAL_SAMPLES: usize = 2000;

/// Pseudo-method that scores one reference sample against another; its
/// records calibrate what "indistinguishable" looks like per task.
pub const ORACLE_METHOD: &str = "oracle";

/// Budget grid used when the experiment does not name one.
pub fn default_budgets(task: &str) -> Result<&'static [usize]> {
    match task {
        "gmm1d" | "two_moons" => Ok(&[
            100, 200, 300, 400, 500, 750, 1000, 1250, 1500, 1750, 2000,
        ]),
        "sisson" => Ok(&[250, 500, 1000, 1500, 2500, 5000, 7500]),
        "slcp" => Ok(&[250, 500, 1000, 2500, 5000, 7500]),
        "bayes_lr" => Ok(&[250, 500, 750, 1000, 1500, 2500, 5000, 7500, 10000]),
        "bernoulli_glm" => Ok(&[250, 500, 1000, 1500, 2500, 5000, 7500, 10000]),
        other => Err(Error::UnknownTask(other.to_string())),
    }
}

/// Seeds for a sweep: a count expands to `0..count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Count(5)
    }
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub tasks: Vec<String>,
    /// Method names, plus optionally "oracle".
    pub methods: Vec<String>,
    /// None falls back to the per-task default grid.
    #[serde(default)]
    pub budgets: Option<Vec<usize>>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "inference::default_rounds")]
    pub rounds: usize,
    #[serde(default = "inference::default_multiplier")]
    pub surrogate_multiplier: usize,
    #[serde(default = "inference::default_oversample")]
    pub sp_oversample: usize,
    #[serde(default = "inference::default_atoms")]
    pub atoms: usize,
    #[serde(default = "inference::default_n_post")]
    pub n_post: usize,
    #[serde(default)]
    pub mdn: MdnConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// JSONL destination; None keeps records in memory only. Relative
    /// paths resolve under [`OUTPUT_ENV`] when it is set.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(tasks: &[&str], methods: &[&str]) -> Self {
        Self {
            tasks: tasks.iter().map(|s| s.to_string()).collect(),
            methods: methods.iter().map(|s| s.to_string()).collect(),
            budgets: None,
            seeds: Seeds::default(),
            rounds: inference::default_rounds(),
            surrogate_multiplier: inference::default_multiplier(),
            sp_oversample: inference::default_oversample(),
            atoms: inference::default_atoms(),
            n_post: inference::default_n_post(),
            mdn: MdnConfig::default(),
            train: TrainConfig::default(),
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::InvalidConfig("no tasks configured".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods configured".into()));
        }
        for task in &self.tasks {
            Task::by_name(task)?;
        }
        for method in &self.methods {
            if method != ORACLE_METHOD {
                Method::parse(method)?;
            }
        }
        if let Some(budgets) = &self.budgets {
            if budgets.is_empty() {
                return Err(Error::InvalidConfig("budget list is empty".into()));
            }
            if budgets.iter().any(|&b| b == 0) {
                return Err(Error::InvalidConfig("budgets must be positive".into()));
            }
            if budgets.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig(
                    "budgets must be strictly increasing".into(),
                ));
            }
        }
        if self.seeds.expand().is_empty() {
            return Err(Error::InvalidConfig("at least one seed required".into()));
        }
        Ok(())
    }

    fn inference_config(&self, task: &str, method: Method, budget: usize, seed: u64) -> InferenceConfig {
        InferenceConfig {
            task: task.to_string(),
            method,
            budget,
            rounds: self.rounds,
            surrogate_multiplier: self.surrogate_multiplier,
            sp_oversample: self.sp_oversample,
            atoms: self.atoms,
            n_post: self.n_post,
            mdn: self.mdn.clone(),
            train: self.train.clone(),
            seed,
        }
    }
}

/// One sweep cell's outcome. Failed runs carry `error` and empty metric
/// fields instead of aborting the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub task: String,
    pub method: String,
    pub budget: usize,
    pub seed: u64,
    pub mmd2: Option<f64>,
    pub c2st: Option<f64>,
    pub ed2: Option<f64>,
    #[serde(default)]
    pub loc_disp: Option<LocDisp>,
    /// Per-side sample count used for the metric evaluation.
    pub eval_n: usize,
    pub sim_calls: usize,
    pub wall_secs: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }

    fn triple(&self) -> Option<MetricTriple> {
        match (self.mmd2, self.c2st, self.ed2) {
            (Some(mmd2), Some(c2st), Some(ed2)) => Some(MetricTriple { mmd2, c2st, ed2 }),
            _ => None,
        }
    }
}

/// Resolves an output path against [`OUTPUT_ENV`] when the path is
/// relative and the variable is set.
pub fn resolve_output(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ENV) {
        Some(root) => PathBuf::from(root).join(path),
        None => path.to_path_buf(),
    }
}

/// Append-only JSONL record sink; one flushed line per record, so partial
/// sweeps keep everything already finished.
pub struct RecordWriter {
    file: Mutex<File>,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let resolved = resolve_output(path);
        if let Some(parent) = resolved.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&resolved)?;
        Ok(Self {
            file: Mutex::new(file),
        })
    }

    pub fn append(&self, record: &ResultRecord) -> Result<()> {
        let line = serde_json::to_string(record)?;
        let mut file = self.file.lock().expect("record writer poisoned");
        writeln!(file, "{line}")?;
        file.flush()?;
        Ok(())
    }
}

/// Reads a JSONL record stream back; blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let file = File::open(resolve_output(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

struct Cell {
    task: String,
    method: String,
    budget: usize,
    seed: u64,
}

/// Runs the full grid, one record per (task, method, budget, seed) cell.
/// Cells run in parallel; records are returned sorted by cell key and, if
/// `cfg.out` is set, appended to the JSONL file as they finish.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for task in &cfg.tasks {
        let defaults;
        let budgets: &[usize] = match &cfg.budgets {
            Some(b) => b,
            None => {
                defaults = default_budgets(task)?;
                defaults
            }
        };
        for method in &cfg.methods {
            for &budget in budgets {
                for seed in cfg.seeds.expand() {
                    cells.push(Cell {
                        task: task.clone(),
                        method: method.clone(),
                        budget,
                        seed,
                    });
                }
            }
        }
    }
    let writer = match &cfg.out {
        Some(path) => Some(RecordWriter::create(path)?),
        None => None,
    };
    let mut records: Vec<ResultRecord> = cells
        .par_iter()
        .map(|cell| {
            let record = run_cell(cfg, cell);
            if let Some(w) = &writer {
                // Persistence failure is fatal: losing records defeats the
                // point of the sweep.
                w.append(&record).expect("record append failed");
            }
            record
        })
        .collect();
    records.sort_by(|a, b| {
        (&a.task, &a.method, a.budget, a.seed).cmp(&(&b.task, &b.method, b.budget, b.seed))
    });
    Ok(records)
}

fn run_cell(cfg: &ExperimentConfig, cell: &Cell) -> ResultRecord {
    let started = Instant::now();
    let mut record = ResultRecord {
        task: cell.task.clone(),
        method: cell.method.clone(),
        budget: cell.budget,
        seed: cell.seed,
        mmd2: None,
        c2st: None,
        ed2: None,
        loc_disp: None,
        eval_n: 0,
        sim_calls: 0,
        wall_secs: 0.0,
        diagnostics: Vec::new(),
        error: None,
    };
    match evaluate_cell(cfg, cell, &mut record) {
        Ok(()) => {}
        Err(e) => record.error = Some(e.to_string()),
    }
    record.wall_secs = started.elapsed().as_secs_f64();
    record
}

fn evaluate_cell(cfg: &ExperimentConfig, cell: &Cell, record: &mut ResultRecord) -> Result<()> {
    let task = Task::by_name(&cell.task)?;
    let eval_n = EVAL_SAMPLES.min(cfg.n_post);
    let ref_seed = derive_seed(cell.seed, 0x0EF5);
    let score_seed = derive_seed(cell.seed, 0x5C0E);

    let (candidate, reference) = if cell.method == ORACLE_METHOD {
        let a = task.reference_sample(eval_n, derive_seed(ref_seed, 1))?;
        let b = task.reference_sample(eval_n, derive_seed(ref_seed, 2))?;
        if let Some(d) = &a.diagnostics {
            record
                .diagnostics
                .push(format!("reference MH split-Rhat {:.3}", d.split_rhat));
        }
        (a.samples, b.samples)
    } else {
        let method = Method::parse(&cell.method)?;
        let icfg = cfg.inference_config(&cell.task, method, cell.budget, cell.seed);
        let result = inference::run(&icfg)?;
        record.sim_calls = result.sim_calls;
        record.diagnostics = result.diagnostics.notes();
        let reference = task.reference_sample(eval_n, ref_seed)?;
        let idx = evenly_spaced(result.samples.nrows(), eval_n);
        let mut candidate = Array2::zeros((eval_n, result.samples.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            candidate.row_mut(r).assign(&result.samples.row(i));
        }
        (candidate, reference.samples)
    };

    let triple = metric_triple(&candidate.view(), &reference.view(), score_seed)?;
    record.mmd2 = Some(triple.mmd2);
    record.c2st = Some(triple.c2st);
    record.ed2 = Some(triple.ed2);
    let ranges = task.prior_ranges();
    record.loc_disp = Some(loc_disp(
        &candidate.view(),
        &reference.view(),
        &ranges.view(),
    )?);
    record.eval_n = eval_n;
    Ok(())
}

/// Reference samples can be reused across methods at the same (task,
/// seed); this helper exists for callers that want to precompute them.
pub fn reference_for(task: &Task, n: usize, seed: u64) -> Result<SampleMatrix> {
    Ok(task.reference_sample(n, derive_seed(seed, 0x0EF5))?.samples)
}

/// Across-seed statistics of one metric for baseline and candidate, with
/// reductions (baseline minus candidate; positive favors the candidate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub baseline_mean: f64,
    pub candidate_mean: f64,
    pub mean_reduction: f64,
    pub baseline_sd: f64,
    pub candidate_sd: f64,
    pub sd_reduction: f64,
    pub baseline_median: f64,
    pub candidate_median: f64,
    pub median_reduction: f64,
    pub baseline_iqr: f64,
    pub candidate_iqr: f64,
    pub iqr_reduction: f64,
    /// (strict wins + half the ties) / pairs; a tie-only comparison shows
    /// 0.5 and never counts as an improvement.
    pub good_bad: f64,
}

fn aggregate_metric(baseline: &[f64], candidate: &[f64]) -> MetricAggregate {
    let stats = |v: &[f64]| {
        (
            v.iter().sum::<f64>() / v.len() as f64,
            sample_sd(v),
            median(v),
            quantile(v, 0.75) - quantile(v, 0.25),
        )
    };
    let (b_mean, b_sd, b_median, b_iqr) = stats(baseline);
    let (c_mean, c_sd, c_median, c_iqr) = stats(candidate);
    let mut wins = 0.0;
    for (b, c) in baseline.iter().zip(candidate.iter()) {
        if c < b {
            wins += 1.0;
        } else if c == b {
            wins += 0.5;
        }
    }
    MetricAggregate {
        baseline_mean: b_mean,
        candidate_mean: c_mean,
        mean_reduction: b_mean - c_mean,
        baseline_sd: b_sd,
        candidate_sd: c_sd,
        sd_reduction: b_sd - c_sd,
        baseline_median: b_median,
        candidate_median: c_median,
        median_reduction: b_median - c_median,
        baseline_iqr: b_iqr,
        candidate_iqr: c_iqr,
        iqr_reduction: b_iqr - c_iqr,
        good_bad: wins / baseline.len() as f64,
    }
}

/// Paired comparison of one candidate method against the baseline at one
/// (task, budget).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub task: String,
    /// Candidate method the baseline is compared against.
    pub method: String,
    pub budget: usize,
    /// Seed pairs that entered the statistics.
    pub pairs: usize,
    /// Records dropped for failure or missing counterpart.
    pub dropped: usize,
    pub mmd2: MetricAggregate,
    pub c2st: MetricAggregate,
    pub ed2: MetricAggregate,
    /// Count of improved cells among {mean, SD, ratio} x three metrics;
    /// 5 or more is read as an overall improvement.
    pub verdict: u8,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn verdict(aggs: [&MetricAggregate; 3]) -> u8 {
    let mut count = 0u8;
    for agg in aggs {
        count += u8::from(agg.mean_reduction > 0.0);
        count += u8::from(agg.sd_reduction > 0.0);
        count += u8::from(agg.good_bad > 0.5);
    }
    count
}

/// Pairs candidate records against the baseline method by seed and
/// summarizes each (task, budget, candidate-method) group. Groups with no
/// usable pairs are omitted. When seed sets differ the records are paired
/// by sorted seed index instead, noted on the summary.
pub fn aggregate(records: &[ResultRecord], baseline: &str) -> Result<Vec<ComparisonSummary>> {
    let mut baseline_map: BTreeMap<(String, usize), Vec<&ResultRecord>> = BTreeMap::new();
    let mut groups: BTreeMap<(String, usize, String), Vec<&ResultRecord>> = BTreeMap::new();
    let mut seen_baseline = false;
    for record in records {
        if record.method == baseline {
            seen_baseline = true;
            if record.succeeded() && record.triple().is_some() {
                baseline_map
                    .entry((record.task.clone(), record.budget))
                    .or_default()
                    .push(record);
            }
        } else {
            groups
                .entry((record.task.clone(), record.budget, record.method.clone()))
                .or_default()
                .push(record);
        }
    }
    if !seen_baseline {
        return Err(Error::InvalidConfig(format!(
            "no records for baseline method '{baseline}'"
        )));
    }

    let mut summaries = Vec::new();
    for ((task, budget, method), group) in groups {
        let total = group.len();
        let Some(base_group) = baseline_map.get(&(task.clone(), budget)) else {
            continue;
        };
        let mut candidates: Vec<&ResultRecord> = group
            .into_iter()
            .filter(|r| r.succeeded() && r.triple().is_some())
            .collect();
        let mut baselines = base_group.clone();
        candidates.sort_by_key(|r| r.seed);
        baselines.sort_by_key(|r| r.seed);

        let mut notes = Vec::new();
        let cand_seeds: BTreeSet<u64> = candidates.iter().map(|r| r.seed).collect();
        let base_seeds: BTreeSet<u64> = baselines.iter().map(|r| r.seed).collect();
        let pairs: Vec<(MetricTriple, MetricTriple)> = if cand_seeds == base_seeds
            && cand_seeds.len() == candidates.len()
            && base_seeds.len() == baselines.len()
        {
            baselines
                .iter()
                .zip(candidates.iter())
                .map(|(b, c)| (b.triple().unwrap(), c.triple().unwrap()))
                .collect()
        } else {
            notes.push("seed sets differ; paired by sorted seed index".to_string());
            baselines
                .iter()
                .zip(candidates.iter())
                .map(|(b, c)| (b.triple().unwrap(), c.triple().unwrap()))
                .collect()
        };
        if pairs.is_empty() {
            continue;
        }
        let dropped = total - pairs.len();

        let collect = |f: fn(&MetricTriple) -> f64| -> (Vec<f64>, Vec<f64>) {
            (
                pairs.iter().map(|(b, _)| f(b)).collect(),
                pairs.iter().map(|(_, c)| f(c)).collect(),
            )
        };
        let (b_mmd, c_mmd) = collect(|t| t.mmd2);
        let (b_c2, c_c2) = collect(|t| t.c2st);
        let (b_ed, c_ed) = collect(|t| t.ed2);
        let mmd2 = aggregate_metric(&b_mmd, &c_mmd);
        let c2st = aggregate_metric(&b_c2, &c_c2);
        let ed2 = aggregate_metric(&b_ed, &c_ed);
        let verdict = verdict([&mmd2, &c2st, &ed2]);
        summaries.push(ComparisonSummary {
            task,
            method,
            budget,
            pairs: pairs.len(),
            dropped,
            mmd2,
            c2st,
            ed2,
            verdict,
            notes,
        });
    }
    Ok(summaries)
}

/// One row of the published comparison tables: per-task averages across
/// budgets, three metrics per column group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub task: String,
    pub method: String,
    /// Number of budget levels averaged over.
    pub budgets: usize,
    /// Column order within each group: mmd2, c2st, ed2.
    pub mean_reduction: [f64; 3],
    pub sd_reduction: [f64; 3],
    pub median_reduction: [f64; 3],
    pub iqr_reduction: [f64; 3],
    pub good_bad: [f64; 3],
}

/// Averages summaries across budgets per (task, method).
pub fn across_budgets(summaries: &[ComparisonSummary]) -> Vec<TableRow> {
    let mut groups: BTreeMap<(String, String), Vec<&ComparisonSummary>> = BTreeMap::new();
    for s in summaries {
        groups
            .entry((s.task.clone(), s.method.clone()))
            .or_default()
            .push(s);
    }
    groups
        .into_iter()
        .map(|((task, method), group)| {
            let n = group.len() as f64;
            let avg = |f: &dyn Fn(&ComparisonSummary) -> [f64; 3]| -> [f64; 3] {
                let mut out = [0.0; 3];
                for s in &group {
                    let v = f(s);
                    for k in 0..3 {
                        out[k] += v[k] / n;
                    }
                }
                out
            };
            TableRow {
                task,
                method,
                budgets: group.len(),
                mean_reduction: avg(&|s| {
                    [s.mmd2.mean_reduction, s.c2st.mean_reduction, s.ed2.mean_reduction]
                }),
                sd_reduction: avg(&|s| {
                    [s.mmd2.sd_reduction, s.c2st.sd_reduction, s.ed2.sd_reduction]
                }),
                median_reduction: avg(&|s| {
                    [
                        s.mmd2.median_reduction,
                        s.c2st.median_reduction,
                        s.ed2.median_reduction,
                    ]
                }),
                iqr_reduction: avg(&|s| {
                    [s.mmd2.iqr_reduction, s.c2st.iqr_reduction, s.ed2.iqr_reduction]
                }),
                good_bad: avg(&|s| [s.mmd2.good_bad, s.c2st.good_bad, s.ed2.good_bad]),
            }
        })
        .collect()
}

/// Which pair of spread statistics a formatted table reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableVariant {
    /// Mean reduction, SD reduction, good:bad.
    MeanSd,
    /// Median reduction, IQR reduction, good:bad.
    MedianIqr,
}

/// Renders across-budget rows in the benchmark-table shape: one row per
/// problem, three column groups of (MMD, C2ST, ED) each.
pub fn format_table(rows: &[TableRow], variant: TableVariant) -> String {
    let (g1, g2) = match variant {
        TableVariant::MeanSd => ("Mean Reduction", "SD Reduction"),
        TableVariant::MedianIqr => ("Median Reduction", "IQR Reduction"),
    };
    let name_width = rows
        .iter()
        .map(|r| r.task.len())
        .chain(["Problem".len()])
        .max()
        .unwrap_or(7);
    let cell = 9;
    let group_width = 3 * (cell + 1) - 1;
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_width$} | {:^group_width$} | {:^group_width$} | {:^group_width$}\n",
        "Problem", g1, g2, "Good:Bad Ratio"
    ));
    let sub = format!(
        "{:>cell$} {:>cell$} {:>cell$}",
        "MMD", "C2ST", "ED"
    );
    out.push_str(&format!(
        "{:<name_width$} | {sub} | {sub} | {sub}\n",
        ""
    ));
    out.push_str(&format!(
        "{}\n",
        "-".repeat(name_width + 3 * (group_width + 3))
    ));
    for row in rows {
        let (a, b) = match variant {
            TableVariant::MeanSd => (row.mean_reduction, row.sd_reduction),
            TableVariant::MedianIqr => (row.median_reduction, row.iqr_reduction),
        };
        let fmt3 = |v: [f64; 3]| {
            format!(
                "{:>cell$.4} {:>cell$.4} {:>cell$.4}",
                v[0], v[1], v[2]
            )
        };
        out.push_str(&format!(
            "{:<name_width$} | {} | {} | {}\n",
            row.task,
            fmt3(a),
            fmt3(b),
            fmt3(row.good_bad)
        ));
    }
    out
}

/// CSV export of across-budget rows, both statistic variants in one sheet.
pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from(
        "task,method,budgets,\
         mean_red_mmd2,mean_red_c2st,mean_red_ed2,\
         sd_red_mmd2,sd_red_c2st,sd_red_ed2,\
         median_red_mmd2,median_red_c2st,median_red_ed2,\
         iqr_red_mmd2,iqr_red_c2st,iqr_red_ed2,\
         good_bad_mmd2,good_bad_c2st,good_bad_ed2\n",
    );
    for r in rows {
        let nums: Vec<String> = r
            .mean_reduction
            .iter()
            .chain(&r.sd_reduction)
            .chain(&r.median_reduction)
            .chain(&r.iqr_reduction)
            .chain(&r.good_bad)
            .map(|v| format!("{v:.6}"))
            .collect();
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.task,
            r.method,
            r.budgets,
            nums.join(",")
        ));
    }
    out
}
