use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{
    build_distance_tensor, generate_splits, load_dataset, synth_generate, write_dataset, Dataset, DistanceTensor, Split,
};
use crate::ensemble::{cross_validate_nu_on, parse_manifest, train, EnsembleModel};
use crate::evaluation::{
    aggregate, cmc_curve, ensemble_distance_matrix, parse_curve_table, uniform_baseline_matrix, CmcCurve, EvalReport,
};
use crate::fsutil::write_atomic;
use crate::metrics::{build_metric_bank, load_bank, save_bank, BankConfig, BaseMetric};
use crate::{fmt17, par};

use super::cache::{self, sha256_hex, CacheEntry};
use super::{ExperimentConfig, ExperimentError, Method};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for concurrent splits; `None` uses all cores.
    pub jobs: Option<usize>,
    /// Cache location; defaults to `<out>/cache`.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitFailure {
    pub split: usize,
    pub message: String,
}

impl std::fmt::Display for SplitFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "split {}: {}", self.split, self.message)
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub method: Method,
    /// Per split, `None` where the split failed before producing a model.
    pub models: Vec<Option<EnsembleModel>>,
    pub failures: Vec<SplitFailure>,
    pub log: String,
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub failures: Vec<SplitFailure>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::io(path, e)
}

fn write_file(path: &Path, text: &str) -> Result<(), ExperimentError> {
    write_atomic(path, text.as_bytes()).map_err(io(path))
}

pub fn load_experiment_dataset(config: &ExperimentConfig) -> Result<Dataset, ExperimentError> {
    match &config.data.synth {
        Some(s) => Ok(synth_generate(s)?),
        None => Ok(load_dataset(&config.data.paths)?),
    }
}

/// Writes the synthetic dataset described by `config` to
/// `<out>/dataset.txt` and returns its path.
pub fn run_synth(config: &ExperimentConfig, out: &Path) -> Result<PathBuf, ExperimentError> {
    let spec = config
        .data
        .synth
        .as_ref()
        .ok_or_else(|| ExperimentError::Config("synth needs a [data.synth] section".into()))?;
    let dataset = synth_generate(spec)?;
    let mut bytes = Vec::new();
    write_dataset(&dataset, &mut bytes).map_err(io(out))?;
    let path = out.join("dataset.txt");
    write_atomic(&path, &bytes).map_err(io(&path))?;
    Ok(path)
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    dataset: Dataset,
    dataset_hash: String,
    splits: Vec<Split>,
    out: PathBuf,
    cache_root: PathBuf,
}

impl<'a> Context<'a> {
    fn new(config: &'a ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<Self, ExperimentError> {
        let dataset = load_experiment_dataset(config)?;
        let mut bytes = Vec::new();
        write_dataset(&dataset, &mut bytes).map_err(io(out))?;
        let splits = generate_splits(&dataset, config.num_splits, config.seed, config.split)?;
        let cache_root = opts.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
        std::fs::create_dir_all(&cache_root).map_err(io(&cache_root))?;
        Ok(Self { config, dataset, dataset_hash: sha256_hex(&bytes), splits, out: out.to_path_buf(), cache_root })
    }

    fn split_dir(&self, split: &Split) -> PathBuf {
        self.out.join(format!("split_{:02}", split.index))
    }

    fn bank_config(&self, split: &Split) -> BankConfig {
        self.config.bank.resolve(self.dataset.schema(), split.seed)
    }

    fn cache_key(&self, split: &Split) -> String {
        let bank = toml::to_string(&self.bank_config(split)).expect("bank config serializes");
        let text = format!(
            "mer-cache-v1\n{}\n{bank}\n{}\n{}\n{}\n",
            self.dataset_hash,
            split.seed,
            split.train_ids.join(","),
            split.test_ids.join(",")
        );
        sha256_hex(text.as_bytes())
    }

    /// Hash tying a manifest to the data, split, bank and training setup
    /// that produced it.
    fn schema_hash(&self, split: &Split, method: Method) -> String {
        let training = match method {
            Method::Uniform => String::new(),
            _ => toml::to_string(&self.config.training).expect("training spec serializes"),
        };
        sha256_hex(format!("{}\n{}\n{training}", self.cache_key(split), method.name()).as_bytes())
    }

    fn prepare(&self, split: &Split) -> Result<(CacheEntry, bool), ExperimentError> {
        let key = self.cache_key(split);
        if let Some(entry) =
            cache::load(&self.cache_root, &key, &split.train_ids, &split.test_ids).map_err(ExperimentError::stage("cache"))?
        {
            return Ok((entry, true));
        }
        let bank = build_metric_bank(&self.dataset, &split.train_ids, &self.bank_config(split))
            .map_err(|e| ExperimentError::stage("bank")(e.into()))?;
        let tensor = |ids: &[String]| {
            build_distance_tensor(&bank, &self.dataset, ids).map_err(|e| ExperimentError::stage("tensor")(e.into()))
        };
        let entry = CacheEntry { train: tensor(&split.train_ids)?, test: tensor(&split.test_ids)?, bank };
        cache::store(&self.cache_root, &key, &entry).map_err(ExperimentError::stage("cache"))?;
        Ok((entry, false))
    }
}

fn manifest_name(method: Method) -> String {
    format!("ensemble_{}.manifest", method.name())
}

fn train_split(ctx: &Context, split: &Split, method: Method, log: &mut String) -> Result<EnsembleModel, ExperimentError> {
    let dir = ctx.split_dir(split);
    let mut ids = String::new();
    for id in &split.train_ids {
        let _ = writeln!(ids, "train\t{id}");
    }
    for id in &split.test_ids {
        let _ = writeln!(ids, "test\t{id}");
    }
    write_file(&dir.join("split.tsv"), &ids)?;

    let key = ctx.cache_key(split);
    let (entry, hit) = ctx.prepare(split)?;
    let _ = writeln!(log, "cache {} {key}", if hit { "hit" } else { "miss" });
    let bank_dir = dir.join("bank");
    save_bank(&bank_dir, &entry.bank).map_err(|e| ExperimentError::stage("bank")(e.into()))?;
    let labels: Vec<String> = entry.bank.iter().map(|m| m.label().to_string()).collect();
    let _ = writeln!(log, "bank {} metrics: {}", labels.len(), labels.join(" "));

    let mut extra = vec![
        ("split".to_string(), split.index.to_string()),
        ("split_seed".to_string(), split.seed.to_string()),
        ("dataset_sha256".to_string(), ctx.dataset_hash.clone()),
        ("schema_hash".to_string(), ctx.schema_hash(split, method)),
    ];
    let model = match method.objective() {
        None => EnsembleModel::uniform(labels),
        Some(objective) => {
            let training = &ctx.config.training;
            let mut cfg = training.config(objective);
            if let Some(grid) = training.grid(objective) {
                let cv = cross_validate_nu_on(&entry.train, &grid, training.folds, split.seed, &cfg)
                    .map_err(|e| ExperimentError::stage("cross-validation")(e.into()))?;
                let mut table = String::from("nu\tmean_rank1");
                for f in 0..training.folds {
                    let _ = write!(table, "\tfold_{f}");
                }
                table.push('\n');
                for row in &cv.rows {
                    let _ = write!(table, "{}\t{}", fmt17(row.nu), fmt17(row.mean_rank1));
                    for r in &row.fold_rank1 {
                        let _ = write!(table, "\t{}", fmt17(*r));
                    }
                    table.push('\n');
                }
                write_file(&dir.join(format!("cv_{}.tsv", method.name())), &table)?;
                let _ = writeln!(log, "cross-validation ({} folds):", training.folds);
                for row in &cv.rows {
                    let _ = writeln!(log, "  nu {:.4e}  mean rank-1 {:.4}", row.nu, row.mean_rank1);
                }
                let _ = writeln!(log, "selected nu {}", fmt17(cv.nu));
                extra.push(("cv_selected_nu".to_string(), fmt17(cv.nu)));
                cfg.nu = cv.nu;
            } else {
                let _ = writeln!(log, "nu {}", fmt17(cfg.nu));
            }
            train(&entry.train, &cfg).map_err(|e| ExperimentError::stage("training")(e.into()))?
        }
    };
    write_file(&dir.join(manifest_name(method)), &model.to_manifest(&extra))?;
    if let Some(d) = &model.diagnostics {
        let _ = writeln!(
            log,
            "iterations {} xi {} final violation {} converged {}",
            d.iterations,
            fmt17(d.xi),
            fmt17(d.violation),
            d.converged
        );
        if !d.converged {
            return Err(ExperimentError::NotConverged { iterations: d.iterations, violation: d.violation });
        }
    }
    let weights: Vec<String> = model.weights.iter().map(|w| fmt17(*w)).collect();
    let _ = writeln!(log, "weights {}", weights.join(" "));
    Ok(model)
}

/// Fits banks and learns (or writes uniform) ensembles for every split.
/// Split failures are collected, not propagated; setup errors are.
pub fn run_train(config: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<TrainOutcome, ExperimentError> {
    let ctx = Context::new(config, out, opts)?;
    write_file(&out.join("config.toml"), &config.to_toml())?;
    let method = config.objective;
    let results = par::with_jobs(opts.jobs, || {
        par::map_slice(&ctx.splits, |split| {
            let mut log = String::new();
            let r = train_split(&ctx, split, method, &mut log);
            (r, log)
        })
    });
    let mut log = String::new();
    let mut models = Vec::new();
    let mut failures = Vec::new();
    for (split, (result, text)) in ctx.splits.iter().zip(results) {
        let _ = writeln!(log, "[split {}] seed {} train {} test {}", split.index, split.seed, split.train_ids.len(), split.test_ids.len());
        log.push_str(&text);
        match result {
            Ok(m) => models.push(Some(m)),
            Err(e) => {
                let _ = writeln!(log, "FAILED: {e}");
                log::error!("split {}: {e}", split.index);
                let keep = matches!(e, ExperimentError::NotConverged { .. });
                models.push(if keep { parse_existing(&ctx, split, method) } else { None });
                failures.push(SplitFailure { split: split.index, message: e.to_string() });
            }
        }
    }
    for line in log.lines() {
        log::info!("{line}");
    }
    write_file(&out.join(format!("train_{}.log", method.name())), &log)?;
    Ok(TrainOutcome { method, models, failures, log })
}

fn parse_existing(ctx: &Context, split: &Split, method: Method) -> Option<EnsembleModel> {
    let text = std::fs::read_to_string(ctx.split_dir(split).join(manifest_name(method))).ok()?;
    parse_manifest(&text).ok().map(|m| m.model)
}

fn eval_split(ctx: &Context, split: &Split, method: Method) -> Result<CmcCurve, ExperimentError> {
    let dir = ctx.split_dir(split);
    let path = dir.join(manifest_name(method));
    let text = std::fs::read_to_string(&path).map_err(io(&path))?;
    let manifest = parse_manifest(&text)?;
    let expected = ctx.schema_hash(split, method);
    let found = manifest.extra.iter().find(|(k, _)| k == "schema_hash").map(|(_, v)| v.as_str());
    if found != Some(expected.as_str()) {
        return Err(ExperimentError::Mismatch(format!(
            "{} was produced by a different data/bank/training setup (schema hash {} != {expected})",
            path.display(),
            found.unwrap_or("missing")
        )));
    }
    let test = match cache::load(&ctx.cache_root, &ctx.cache_key(split), &split.train_ids, &split.test_ids)? {
        Some(entry) => entry.test,
        None => {
            let bank = load_bank(&dir.join("bank"))?;
            build_distance_tensor(&bank, &ctx.dataset, &split.test_ids)?
        }
    };
    if test.labels() != manifest.model.labels.as_slice() {
        return Err(ExperimentError::Mismatch(format!("{}: metric labels differ from the bank", path.display())));
    }
    Ok(cmc_curve(&score_matrix(&manifest.model, &test)?)?)
}

/// Learned ensembles rank raw weighted distances; the uniform baseline
/// averages per-probe normalized slices.
fn score_matrix(model: &EnsembleModel, test: &DistanceTensor) -> Result<crate::evaluation::DistanceMatrix, ExperimentError> {
    if model.is_uniform() {
        Ok(uniform_baseline_matrix(test).0)
    } else {
        Ok(ensemble_distance_matrix(&model.weights, test)?)
    }
}

/// Evaluates the configured method on every split's test individuals and
/// writes `eval_<method>/ranks.tsv` and `curve.tsv`.
pub fn run_eval(config: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<EvalOutcome, ExperimentError> {
    let ctx = Context::new(config, out, opts)?;
    let method = config.objective;
    let results = par::with_jobs(opts.jobs, || par::map_slice(&ctx.splits, |split| eval_split(&ctx, split, method)));
    let mut curves = Vec::new();
    let mut failures = Vec::new();
    for (split, r) in ctx.splits.iter().zip(results) {
        match r {
            Ok(c) => curves.push(c),
            Err(e) => {
                log::error!("split {}: {e}", split.index);
                failures.push(SplitFailure { split: split.index, message: e.to_string() });
            }
        }
    }
    if curves.is_empty() {
        let detail: Vec<String> = failures.iter().map(|f| f.to_string()).collect();
        return Err(ExperimentError::Mismatch(format!("no split could be evaluated: {}", detail.join("; "))));
    }
    let report = aggregate(method.name(), curves, &config.ranks)?;
    let dir = out.join(format!("eval_{}", method.name()));
    write_file(&dir.join("ranks.tsv"), &report.rank_table())?;
    write_file(&dir.join("curve.tsv"), &report.curve_table())?;
    Ok(EvalOutcome { report, failures })
}

/// Collects every `eval_*/curve.tsv` under `out` into one table of mean
/// rates at the configured ranks, written to `summary.tsv`.
pub fn run_report(config: &ExperimentConfig, out: &Path) -> Result<String, ExperimentError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(out)
        .map_err(io(out))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("eval_")))
        .collect();
    dirs.sort();
    let mut columns = Vec::new();
    for d in &dirs {
        let path = d.join("curve.tsv");
        let text = std::fs::read_to_string(&path).map_err(io(&path))?;
        columns.push(parse_curve_table(&text)?);
    }
    if columns.is_empty() {
        return Err(ExperimentError::Mismatch(format!("no evaluation results under {}", out.display())));
    }
    let len = columns.iter().map(|(_, rows)| rows.len()).min().unwrap_or(0);
    let mut table = String::from("rank");
    for (method, _) in &columns {
        let _ = write!(table, "\t{method}");
    }
    table.push('\n');
    for &r in config.ranks.iter().filter(|&&r| r <= len) {
        let _ = write!(table, "{r}");
        for (_, rows) in &columns {
            let _ = write!(table, "\t{}", fmt17(rows[r - 1].1));
        }
        table.push('\n');
    }
    write_file(&out.join("summary.tsv"), &table)?;
    Ok(table)
}
