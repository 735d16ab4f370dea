//! Dataset harness: generate models over a grid, compile them, recover them
//! and score the recovery against ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::eqc::{compile, CompileOptions, Compiled, ConstMode, Convention, GroundTruthMeta, MODEL_FN};
use crate::expr::{count_ops, pretty, serialize, substitute, Expr, ParseError, Role, P};
use crate::genet::{dag_to_symbolic, gen_valid, GenConfig, Model, OpPool, INPUT_COUNTS, NODE_COUNTS};
use crate::isa::{decode, encode, DecodeError};
use crate::matching::{match_equations, match_with_constants, MatchOptions, MatchVerdict};
use crate::recover::{recover_function, RecoverOptions, StageTimes};
use crate::simp::{simplify, substitute_constants, SimplifyOptions};
use crate::symx::{Hooks, StorageLoc};

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub models_per_cell: usize,
    pub conventions: Vec<Convention>,
    pub const_mode: ConstMode,
    pub detect_immediates: bool,
    pub reciprocal: bool,
    pub fold_literals: bool,
    /// Score against the generated equation with its constants kept as
    /// named symbols instead of folded numbers.
    pub symbolic_truth: bool,
    pub matching: MatchOptions,
    pub seed: u64,
    /// Generation attempts per model before a cell slot is given up.
    pub max_attempts: usize,
    /// Worker threads; 1 gives sequential runs suitable for timing.
    pub workers: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            models_per_cell: 10,
            conventions: vec![Convention::RegArgs, Convention::GlobalMem],
            const_mode: ConstMode::GlobalPool,
            detect_immediates: true,
            reciprocal: false,
            fold_literals: false,
            symbolic_truth: false,
            matching: MatchOptions::default(),
            seed: 0,
            max_attempts: 500,
            workers: 1,
        }
    }
}

/// Seed of the `index`-th model of grid cell `cell`.
pub fn model_seed(seed: u64, cell: usize, index: usize) -> u64 {
    let mut z = seed ^ ((cell as u64) << 40) ^ index as u64;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Valid models for every cell of `grid`, `per_cell` each.
pub fn generate_dataset(grid: &[GenConfig], per_cell: usize, seed: u64, max_attempts: usize) -> Vec<Model> {
    let jobs: Vec<GenConfig> = grid
        .iter()
        .enumerate()
        .flat_map(|(c, cfg)| (0..per_cell).map(move |i| GenConfig { seed: model_seed(seed, c, i), ..*cfg }))
        .collect();
    jobs.iter().filter_map(|cfg| gen_valid(cfg, max_attempts)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub id: usize,
    pub op_pool: OpPool,
    pub n_inputs: usize,
    pub n_nodes: usize,
    pub convention: Convention,
    pub gen_ops: usize,
    pub truth_ops: usize,
    pub recovered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<MatchVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rec_ops: Option<usize>,
    /// Recovered parameter locations equal the compiler's placement.
    pub params_exact: bool,
    pub times: StageTimes,
    pub truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovered_expr: Option<String>,
}

impl ModelOutcome {
    pub fn matched(&self) -> bool {
        self.verdict.as_ref().is_some_and(MatchVerdict::is_match)
    }

    pub fn op_ratio(&self) -> Option<f64> {
        Some(self.rec_ops? as f64 / self.truth_ops.max(1) as f64)
    }
}

fn params_exact(eq: &crate::symx::FunctionEquation, meta: &GroundTruthMeta, mode: ConstMode) -> bool {
    let ins: Vec<StorageLoc> = eq.metadata.inputs.iter().map(|p| p.loc).collect();
    let outs: Vec<StorageLoc> = eq.metadata.outputs.iter().filter(|p| !p.suspected_spill).map(|p| p.loc).collect();
    let consts_ok = mode != ConstMode::GlobalPool || {
        let got: Vec<(StorageLoc, Option<f32>)> = eq.metadata.constants.iter().map(|p| (p.loc, p.value)).collect();
        let want: Vec<(StorageLoc, Option<f32>)> = meta.constants.iter().map(|(l, v)| (*l, Some(*v))).collect();
        got == want
    };
    ins == meta.inputs && outs == meta.outputs && consts_ok
}

/// Runs the pipeline on one compiled model and scores it against `truth`.
pub fn evaluate(id: usize, model: &Model, compiled: &Compiled, conv: Convention, opts: &BenchOptions) -> ModelOutcome {
    let truth = &model.truth;
    let mut out = ModelOutcome {
        id,
        op_pool: model.cfg.op_pool,
        n_inputs: model.cfg.n_inputs,
        n_nodes: model.cfg.n_nodes,
        convention: conv,
        gen_ops: count_ops(&model.expr),
        truth_ops: count_ops(truth),
        recovered: false,
        error: None,
        verdict: None,
        rec_ops: None,
        params_exact: false,
        times: StageTimes::default(),
        truth: pretty(truth),
        recovered_expr: None,
    };
    let ropts = RecoverOptions::default().detect_immediates(opts.detect_immediates);
    let rec = match recover_function(&compiled.image, &compiled.function, &Hooks::new(), &ropts) {
        Ok(r) => r,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    out.times = rec.times;
    out.params_exact = params_exact(&rec.equation, &compiled.meta, opts.const_mode);
    let outputs: Vec<_> = rec.equation.outputs.iter().filter(|o| !o.suspected_spill).collect();
    let [o] = outputs.as_slice() else {
        out.error = Some(format!("{} outputs recovered", outputs.len()));
        return out;
    };
    if o.expr.contains_undef() || has_call(&o.expr) {
        out.error = Some("output is not a closed equation".into());
        return out;
    }
    out.recovered = true;
    let consts: BTreeMap<String, f64> = rec.equation.constants.iter().map(|(k, v)| (k.clone(), *v as f64)).collect();
    let rec_expr = simplify(&substitute_constants(&o.expr, &consts), &SimplifyOptions::default());
    out.rec_ops = Some(count_ops(&rec_expr));
    out.recovered_expr = Some(pretty(&o.expr));
    let verdict = if opts.symbolic_truth {
        let (t, tk) = dag_to_symbolic(&model.dag);
        let t = simplify(&t, &SimplifyOptions::default());
        let r = simplify(&name_by_value(&o.raw, &rec.equation.constants, &tk), &SimplifyOptions::default());
        out.truth = pretty(&t);
        out.recovered_expr = Some(pretty(&r));
        match_with_constants(&r, &t, &tk, &opts.matching)
    } else {
        match_equations(&rec_expr, truth, &opts.matching)
    };
    out.verdict = Some(match verdict {
        Ok(v) => v,
        Err(e) => MatchVerdict::Fail { divergence: e.to_string() },
    });
    out
}

/// Renames recovered constants to the truth constant with the same value and
/// inlines the rest as numbers.
fn name_by_value(e: &P, rec: &BTreeMap<String, f32>, truth: &BTreeMap<String, f64>) -> P {
    substitute(e, &|s| {
        if s.role != Role::Const {
            return None;
        }
        let v = *rec.get(&s.name)?;
        Some(match truth.iter().find(|(_, t)| (**t as f32).to_bits() == v.to_bits()) {
            Some((k, _)) => Expr::konst(k.clone()),
            None => Expr::num(v as f64),
        })
    })
}

fn has_call(e: &Expr) -> bool {
    matches!(e, Expr::Call(..)) || e.children().into_iter().any(|c| has_call(c))
}

/// One model under one convention, compiled or not.
pub struct Job<'a> {
    pub id: usize,
    pub model: &'a Model,
    pub convention: Convention,
    pub compiled: Result<Compiled, String>,
}

/// Evaluates jobs, in parallel when `opts.workers > 1`.
pub fn run_jobs(jobs: Vec<Job<'_>>, opts: &BenchOptions) -> BenchReport {
    let run = |j: &Job| match &j.compiled {
        Ok(c) => evaluate(j.id, j.model, c, j.convention, opts),
        Err(e) => {
            let mut o = evaluate_failure(j.id, j.model, j.convention);
            o.error = Some(e.clone());
            o
        }
    };
    let workers = opts.workers.max(1);
    let outcomes: Vec<ModelOutcome> = if workers == 1 {
        jobs.iter().map(run).collect()
    } else {
        let chunk = jobs.len().div_ceil(workers).max(1);
        std::thread::scope(|s| {
            let handles: Vec<_> =
                jobs.chunks(chunk).map(|part| s.spawn(move || part.iter().map(run).collect::<Vec<_>>())).collect();
            handles.into_iter().flat_map(|h| h.join().unwrap_or_default()).collect()
        })
    };
    BenchReport::from_outcomes(outcomes, workers == 1)
}

pub fn compile_options(m: &Model, conv: Convention, opts: &BenchOptions) -> CompileOptions {
    let mut co = CompileOptions::new(conv, opts.const_mode, m.sub_seed);
    co.reciprocal = opts.reciprocal;
    co.fold_literals = opts.fold_literals;
    co
}

/// Compiles and evaluates every model under every convention.
pub fn run_models(models: &[Model], opts: &BenchOptions) -> BenchReport {
    let jobs = models
        .iter()
        .enumerate()
        .flat_map(|(id, m)| {
            opts.conventions.iter().map(move |&convention| Job {
                id,
                model: m,
                convention,
                compiled: compile(&m.expr, &compile_options(m, convention, opts)).map_err(|e| e.to_string()),
            })
        })
        .collect();
    run_jobs(jobs, opts)
}

fn evaluate_failure(id: usize, m: &Model, conv: Convention) -> ModelOutcome {
    ModelOutcome {
        id,
        op_pool: m.cfg.op_pool,
        n_inputs: m.cfg.n_inputs,
        n_nodes: m.cfg.n_nodes,
        convention: conv,
        gen_ops: count_ops(&m.expr),
        truth_ops: count_ops(&m.truth),
        recovered: false,
        error: None,
        verdict: None,
        rec_ops: None,
        params_exact: false,
        times: StageTimes::default(),
        truth: pretty(&m.truth),
        recovered_expr: None,
    }
}

pub fn run_benchmark(grid: &[GenConfig], opts: &BenchOptions) -> BenchReport {
    let models = generate_dataset(grid, opts.models_per_cell, opts.seed, opts.max_attempts);
    run_models(&models, opts)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub models: usize,
    pub recovered: usize,
    pub matched: usize,
    pub structural: usize,
    pub semantic: usize,
    /// Semantic matches established only by sampling.
    pub semantic_numeric: usize,
    pub approximate: usize,
    pub failed: usize,
    pub params_exact: usize,
}

impl Counts {
    fn add(&mut self, o: &ModelOutcome) {
        self.models += 1;
        self.recovered += o.recovered as usize;
        self.matched += o.matched() as usize;
        self.params_exact += o.params_exact as usize;
        match &o.verdict {
            Some(MatchVerdict::Structural) => self.structural += 1,
            Some(MatchVerdict::Semantic { numeric }) => {
                self.semantic += 1;
                self.semantic_numeric += *numeric as usize;
            }
            Some(MatchVerdict::Approximate { .. }) => self.approximate += 1,
            Some(MatchVerdict::Fail { .. }) | None => self.failed += 1,
        }
    }

    fn pct(n: usize, d: usize) -> f64 {
        if d == 0 {
            0.0
        } else {
            100.0 * n as f64 / d as f64
        }
    }

    pub fn recovery_pct(&self) -> f64 {
        Self::pct(self.recovered, self.models)
    }

    pub fn match_pct(&self) -> f64 {
        Self::pct(self.matched, self.models)
    }

    /// Structural and semantic matches only.
    pub fn exact_pct(&self) -> f64 {
        Self::pct(self.structural + self.semantic, self.models)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cell {
    pub op_pool: OpPool,
    pub n_inputs: usize,
    pub convention: Convention,
    pub counts: Counts,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StageMeans {
    pub params: f64,
    pub symx: f64,
    pub simp: f64,
    pub total: f64,
    pub max_total: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Spread {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(xs: &[f64]) -> Spread {
        if xs.is_empty() {
            return Spread::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Spread {
            count: xs.len(),
            mean,
            std: var.sqrt(),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RatioBin {
    /// Ground-truth op counts in `lo..hi`.
    pub lo: usize,
    pub hi: usize,
    pub ratio: Spread,
}

pub const RATIO_BINS: [usize; 8] = [0, 5, 10, 20, 50, 100, 200, usize::MAX];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeBin {
    pub n_nodes: usize,
    pub counts: Counts,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub cells: Vec<Cell>,
    pub total: Counts,
    /// Present when the run was sequential; the first model is a warm-up.
    pub stage_means: Option<StageMeans>,
    pub ratio: Spread,
    pub ratio_bins: Vec<RatioBin>,
    pub node_hist: Vec<NodeBin>,
    /// Every model that was not recovered or not matched.
    pub failures: Vec<ModelOutcome>,
    pub outcomes: Vec<ModelOutcome>,
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

impl BenchReport {
    pub fn from_outcomes(outcomes: Vec<ModelOutcome>, timed: bool) -> BenchReport {
        let mut cells: BTreeMap<(OpPool, usize, Convention), Counts> = BTreeMap::new();
        let mut nodes: BTreeMap<usize, Counts> = BTreeMap::new();
        let mut total = Counts::default();
        for o in &outcomes {
            cells.entry((o.op_pool, o.n_inputs, o.convention)).or_default().add(o);
            nodes.entry(o.n_nodes).or_default().add(o);
            total.add(o);
        }
        let stage_means = (timed && outcomes.len() > 1).then(|| {
            let t: Vec<&StageTimes> = outcomes.iter().skip(1).filter(|o| o.recovered).map(|o| &o.times).collect();
            let n = t.len().max(1) as f64;
            StageMeans {
                params: t.iter().map(|t| secs(t.params)).sum::<f64>() / n,
                symx: t.iter().map(|t| secs(t.symx)).sum::<f64>() / n,
                simp: t.iter().map(|t| secs(t.simp)).sum::<f64>() / n,
                total: t.iter().map(|t| secs(t.total())).sum::<f64>() / n,
                max_total: t.iter().map(|t| secs(t.total())).fold(0.0, f64::max),
                samples: t.len(),
            }
        });
        let ratios: Vec<(usize, f64)> = outcomes.iter().filter_map(|o| Some((o.truth_ops, o.op_ratio()?))).collect();
        let ratio = Spread::of(&ratios.iter().map(|r| r.1).collect::<Vec<_>>());
        let ratio_bins = RATIO_BINS
            .windows(2)
            .map(|w| {
                let xs: Vec<f64> = ratios.iter().filter(|(n, _)| (w[0]..w[1]).contains(n)).map(|r| r.1).collect();
                RatioBin { lo: w[0], hi: w[1], ratio: Spread::of(&xs) }
            })
            .filter(|b| b.ratio.count > 0)
            .collect();
        BenchReport {
            cells: cells
                .into_iter()
                .map(|((op_pool, n_inputs, convention), counts)| Cell { op_pool, n_inputs, convention, counts })
                .collect(),
            total,
            stage_means,
            ratio,
            ratio_bins,
            node_hist: nodes.into_iter().map(|(n_nodes, counts)| NodeBin { n_nodes, counts }).collect(),
            failures: outcomes.iter().filter(|o| !o.matched()).cloned().collect(),
            outcomes,
        }
    }

    /// Accuracy and timing tables as plain text.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:>3} {:<10} {:>6} {:>9} {:>8} {:>8} {:>8} {:>6} {:>6} {:>6} {:>6}",
            "ops", "i/p", "conv", "models", "recovered", "%", "matched", "%", "struct", "sem", "approx", "fail"
        );
        let mut line = |label: &str, ins: String, conv: String, c: &Counts| {
            let _ = writeln!(
                s,
                "{:<16} {:>3} {:<10} {:>6} {:>9} {:>7.2}% {:>8} {:>7.2}% {:>6} {:>6} {:>6} {:>6}",
                label,
                ins,
                conv,
                c.models,
                c.recovered,
                c.recovery_pct(),
                c.matched,
                c.match_pct(),
                c.structural,
                c.semantic,
                c.approximate,
                c.failed
            );
        };
        for c in &self.cells {
            line(c.op_pool.label(), c.n_inputs.to_string(), format!("{:?}", c.convention), &c.counts);
        }
        line("total", String::new(), String::new(), &self.total);
        if let Some(t) = &self.stage_means {
            let _ = writeln!(
                s,
                "\nmean stage time (s): params {:.4}  symx {:.4}  simp {:.4}  total {:.4}  max {:.4}",
                t.params, t.symx, t.simp, t.total, t.max_total
            );
        }
        let r = &self.ratio;
        let _ = writeln!(
            s,
            "\nop ratio: mean {:.3} std {:.3} min {:.3} max {:.3} (n={})",
            r.mean, r.std, r.min, r.max, r.count
        );
        for b in &self.ratio_bins {
            let hi = if b.hi == usize::MAX { "inf".to_string() } else { b.hi.to_string() };
            let _ = writeln!(
                s,
                "  ops {:>3}..{:<4} n={:<5} mean {:.3} std {:.3}",
                b.lo, hi, b.ratio.count, b.ratio.mean, b.ratio.std
            );
        }
        let _ = writeln!(
            s,
            "\nnote: GlobalMem images carry no asin/acos argument guards, so guard-related recovery failures do not occur"
        );
        if !self.failures.is_empty() {
            let _ = writeln!(s, "\nunmatched models:");
            for f in &self.failures {
                let why = match (&f.error, &f.verdict) {
                    (Some(e), _) => e.clone(),
                    (None, Some(MatchVerdict::Fail { divergence })) => divergence.clone(),
                    _ => "not matched".into(),
                };
                let _ = writeln!(s, "  #{} {:?} {} nodes: {}", f.id, f.convention, f.n_nodes, why);
            }
        }
        s
    }

    /// Per node count outcome histogram.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("n_nodes,models,recovered,matched,structural,semantic,approximate,failed\n");
        for b in &self.node_hist {
            let c = &b.counts;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                b.n_nodes, c.models, c.recovered, c.matched, c.structural, c.semantic, c.approximate, c.failed
            );
        }
        s
    }
}

/// One manifest record of a generated dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: usize,
    pub cfg: GenConfig,
    pub sub_seed: u64,
    pub expr: String,
    pub truth: String,
    pub images: BTreeMap<String, String>,
    pub meta: BTreeMap<String, GroundTruthMeta>,
}

impl DatasetRecord {
    pub fn model(&self) -> Result<Model, crate::expr::ParseError> {
        let expr: P = crate::expr::parse(&self.expr)?;
        let truth = crate::expr::parse(&self.truth)?;
        let dag = crate::genet::gen_dag(&GenConfig { seed: self.sub_seed, ..self.cfg });
        Ok(Model { cfg: self.cfg, sub_seed: self.sub_seed, dag, expr, truth, rejected: 0 })
    }

    pub fn new(id: usize, m: &Model) -> DatasetRecord {
        DatasetRecord {
            id,
            cfg: m.cfg,
            sub_seed: m.sub_seed,
            expr: serialize(&m.expr),
            truth: serialize(&m.truth),
            images: BTreeMap::new(),
            meta: BTreeMap::new(),
        }
    }
}

/// Which cells of the generation grid to populate and how to compile them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub op_pools: Vec<OpPool>,
    pub n_inputs: Vec<usize>,
    pub n_nodes: Vec<usize>,
    pub models_per_cell: usize,
    pub conventions: Vec<Convention>,
    pub const_mode: ConstMode,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            op_pools: OpPool::ALL.to_vec(),
            n_inputs: INPUT_COUNTS.to_vec(),
            n_nodes: NODE_COUNTS.to_vec(),
            models_per_cell: 10,
            conventions: vec![Convention::RegArgs, Convention::GlobalMem],
            const_mode: ConstMode::GlobalPool,
        }
    }
}

impl GridSpec {
    pub fn configs(&self, seed: u64) -> Vec<GenConfig> {
        let mut out = Vec::new();
        for &op_pool in &self.op_pools {
            for &n_inputs in &self.n_inputs {
                for &n_nodes in &self.n_nodes {
                    out.push(GenConfig { op_pool, n_inputs, n_nodes, seed });
                }
            }
        }
        out
    }
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub grid: GridSpec,
    pub records: Vec<DatasetRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("record {id}: {source}")]
    Expr { id: usize, source: ParseError },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: DecodeError },
    #[error("record {id} has no metadata for {convention:?}")]
    MissingMeta { id: usize, convention: Convention },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Generates the grid, compiles every model and writes one image file per
/// model and convention plus the manifest.
pub fn write_dataset(dir: &Path, grid: &GridSpec, seed: u64) -> Result<DatasetManifest, DatasetError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let opts = BenchOptions { const_mode: grid.const_mode, ..Default::default() };
    let models = generate_dataset(&grid.configs(seed), grid.models_per_cell, seed, opts.max_attempts);
    let mut records = Vec::new();
    for (id, m) in models.iter().enumerate() {
        let mut rec = DatasetRecord::new(id, m);
        for &conv in &grid.conventions {
            let Ok(c) = compile(&m.expr, &compile_options(m, conv, &opts)) else { continue };
            let file = format!("model_{id:05}_{conv:?}.img");
            let path = dir.join(&file);
            std::fs::write(&path, encode(&c.image)).map_err(io_err(&path))?;
            rec.images.insert(format!("{conv:?}"), file);
            rec.meta.insert(format!("{conv:?}"), c.meta);
        }
        records.push(rec);
    }
    let manifest = DatasetManifest { seed, grid: grid.clone(), records };
    let path = dir.join(MANIFEST);
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok(manifest)
}

/// A dataset read back from disk.
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub models: Vec<Model>,
    /// `(model index, convention, compiled image)`.
    pub images: Vec<(usize, Convention, Compiled)>,
}

pub fn load_dataset(dir: &Path) -> Result<LoadedDataset, DatasetError> {
    let path = dir.join(MANIFEST);
    let manifest: DatasetManifest = serde_json::from_slice(&std::fs::read(&path).map_err(io_err(&path))?)?;
    let mut models = Vec::new();
    let mut images = Vec::new();
    for rec in &manifest.records {
        let model = rec.model().map_err(|source| DatasetError::Expr { id: rec.id, source })?;
        for &conv in &manifest.grid.conventions {
            let key = format!("{conv:?}");
            let Some(file) = rec.images.get(&key) else { continue };
            let meta = rec.meta.get(&key).cloned().ok_or(DatasetError::MissingMeta { id: rec.id, convention: conv })?;
            let path = dir.join(file);
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            let image = decode(&bytes).map_err(|source| DatasetError::Image { path: path.clone(), source })?;
            images.push((models.len(), conv, Compiled { image, function: MODEL_FN.into(), meta }));
        }
        models.push(model);
    }
    Ok(LoadedDataset { manifest, models, images })
}

/// Recovers and scores every stored image.
pub fn run_dataset(data: &LoadedDataset, opts: &BenchOptions) -> BenchReport {
    let jobs = data
        .images
        .iter()
        .map(|(i, conv, c)| Job { id: *i, model: &data.models[*i], convention: *conv, compiled: Ok(c.clone()) })
        .collect();
    run_jobs(jobs, opts)
}
