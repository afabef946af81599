//! Stage orchestration over the resumable ledger.

mod config;
mod ledger;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use serde::{Deserialize, Serialize};

pub use config::{
    load_config, CorpusConfig, Endpoints, Limits, Paths, PipelineConfig, SeedDataConfig, Seeds,
    StageFlags, TemplatePaths, DEFAULT_FAILURE_ABORT, DEFAULT_MAX_TOKENS,
};
pub use ledger::{replay, Ledger, LedgerEntry, LedgerState};

use crate::analysis::{
    compute_mauve_over_seeds, length_stats, score_histogram, unique_trigrams, AnalysisReport,
    DatasetMetrics, Embedder,
};
use crate::corpus::{ingest_corpus, sample_documents, Estimator, IngestStats, StreamOptions};
use crate::dataset::{
    build_finetune_dataset, emit_direction_training, import_jsonl, load_seed_pairs,
    partition_score5, BuildOptions, Direction, ResponseField, SourceTag,
};
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::stages::{CandidatePair, PromptSet, PromptTemplate, StageContext, Status};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "analysis.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Backtranslate,
    Score,
    Filter,
    Rewrite,
    Distill,
    Build,
    Analyze,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Backtranslate => "backtranslate",
            Stage::Score => "score",
            Stage::Filter => "filter",
            Stage::Rewrite => "rewrite",
            Stage::Distill => "distill",
            Stage::Build => "build",
            Stage::Analyze => "analyze",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub processed: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestStats>,
    /// Exported file name → line count.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub datasets: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

impl StageSummary {
    fn new(stage: Stage) -> Self {
        Self {
            stage,
            processed: 0,
            succeeded: 0,
            failed: 0,
            skipped: 0,
            ingest: None,
            datasets: BTreeMap::new(),
            report: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub completed: bool,
    pub error: Option<String>,
    pub stages: Vec<StageSummary>,
    pub ingest: Option<IngestStats>,
    pub datasets: BTreeMap<String, usize>,
    pub analysis_report: Option<PathBuf>,
}

impl Manifest {
    fn record(&mut self, summary: StageSummary) {
        if let Some(stats) = summary.ingest {
            self.ingest = Some(stats);
        }
        self.datasets.extend(summary.datasets.clone());
        if let Some(report) = &summary.report {
            self.analysis_report = Some(report.clone());
        }
        self.stages.push(summary);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Malformed inputs and missing dataset fields become fatal.
    pub strict: bool,
    /// Continue a ledger written under a different config.
    pub force: bool,
    /// Allow `run`/`ingest` to continue a non-empty ledger.
    pub resume: bool,
    /// Fault injection, see [`Ledger::crash_after`].
    pub crash_after: Option<usize>,
}

/// One gateway per configured role.
#[derive(Debug, Clone, Default)]
pub struct Gateways {
    pub backward: Option<Arc<Gateway>>,
    pub forward: Option<Arc<Gateway>>,
    pub rewriter: Option<Arc<Gateway>>,
    pub tokenizer: Option<Arc<Gateway>>,
    pub embedder: Option<Arc<Gateway>>,
}

impl Gateways {
    pub fn from_config(endpoints: &Endpoints) -> Result<Self> {
        let build = |role: &str, config: &Option<_>| -> Result<Option<Arc<Gateway>>> {
            config
                .as_ref()
                .map(|c| Gateway::from_config(role, Clone::clone(c)).map(Arc::new))
                .transpose()
        };
        Ok(Self {
            backward: build("backward", &endpoints.backward)?,
            forward: build("forward", &endpoints.forward)?,
            rewriter: build("rewriter", &endpoints.rewriter)?,
            tokenizer: build("tokenizer", &endpoints.tokenizer)?,
            embedder: build("embedder", &endpoints.embedder)?,
        })
    }
}

fn role<'a>(gateway: &'a Option<Arc<Gateway>>, stage: Stage, name: &str) -> Result<&'a Gateway> {
    gateway.as_deref().ok_or_else(|| Error::MissingRole {
        stage: stage.to_string(),
        role: name.into(),
    })
}


pub struct Pipeline {
    config: PipelineConfig,
    gateways: Gateways,
    stages: StageContext,
    options: RunOptions,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, options: RunOptions) -> Result<Self> {
        let gateways = Gateways::from_config(&config.endpoints)?;
        Self::with_gateways(config, gateways, options)
    }

    pub fn with_gateways(config: PipelineConfig, gateways: Gateways, options: RunOptions) -> Result<Self> {
        config.validate()?;
        let mut prompts = PromptSet::default();
        let templates = &config.templates;
        if let Some(path) = &templates.backtranslation {
            prompts.backtranslation = PromptTemplate::from_file("backtranslation", path)?;
        }
        if let Some(path) = &templates.scoring {
            prompts.scoring = PromptTemplate::from_file("scoring", path)?;
        }
        if let Some(path) = &templates.rewrite {
            prompts.rewrite = PromptTemplate::from_file("rewrite", path)?;
        }
        let stages = StageContext {
            prompts,
            sampling: config.sampling,
        };
        Ok(Self {
            config,
            gateways,
            stages,
            options,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn gateways(&self) -> &Gateways {
        &self.gateways
    }

    /// Locks and opens the ledger. With `fresh` set, a non-empty ledger is
    /// only accepted when resuming.
    pub fn open_ledger(&self, fresh: bool) -> Result<Ledger> {
        let mut ledger = Ledger::open(&self.config.paths.ledger, &self.config.hash(), self.options.force)?;
        if fresh && !self.options.resume && !ledger.is_empty() {
            return Err(Error::Ledger(format!(
                "{} already holds {} records; pass --resume to continue it",
                ledger.path().display(),
                ledger.len()
            )));
        }
        if let Some(n) = self.options.crash_after {
            ledger.crash_after(n);
        }
        Ok(ledger)
    }

    /// Stages `run` executes, in order.
    pub fn planned_stages(&self) -> Vec<Stage> {
        let flags = self.config.stages;
        let mut stages = vec![Stage::Ingest, Stage::Backtranslate];
        if flags.filtering {
            stages.extend([Stage::Score, Stage::Filter]);
        }
        if flags.rewriting {
            stages.push(Stage::Rewrite);
        }
        if flags.distilling {
            stages.push(Stage::Distill);
        }
        stages.extend([Stage::Build, Stage::Analyze]);
        stages
    }

    pub fn run_all(&self) -> Result<Manifest> {
        let mut manifest = Manifest {
            config_hash: self.config.hash(),
            completed: false,
            error: None,
            stages: Vec::new(),
            ingest: None,
            datasets: BTreeMap::new(),
            analysis_report: None,
        };
        // A refused open (lock held, hash mismatch) leaves the manifest of
        // whichever run owns the ledger alone.
        let mut ledger = self.open_ledger(true)?;
        let outcome = self.run_planned(&mut ledger, &mut manifest);
        match &outcome {
            Ok(()) => manifest.completed = true,
            Err(e) => manifest.error = Some(e.to_string()),
        }
        self.write_manifest(&manifest)?;
        outcome.map(|_| manifest)
    }

    fn run_planned(&self, ledger: &mut Ledger, manifest: &mut Manifest) -> Result<()> {
        for stage in self.planned_stages() {
            tracing::info!(%stage, "starting stage");
            let summary = self.run_stage(stage, ledger)?;
            tracing::info!(%stage, processed = summary.processed, failed = summary.failed, skipped = summary.skipped, "stage finished");
            manifest.record(summary);
        }
        Ok(())
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.config.paths.output_dir.join(MANIFEST_FILE)
    }

    fn write_manifest(&self, manifest: &Manifest) -> Result<()> {
        let dir = &self.config.paths.output_dir;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = self.manifest_path();
        let text = serde_json::to_string_pretty(manifest)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn run_stage(&self, stage: Stage, ledger: &mut Ledger) -> Result<StageSummary> {
        match stage {
            Stage::Ingest => self.ingest(ledger),
            Stage::Backtranslate => self.backtranslate(ledger),
            Stage::Score => self.score(ledger),
            Stage::Filter => self.filter(ledger),
            Stage::Rewrite => self.rewrite(ledger),
            Stage::Distill => self.distill(ledger),
            Stage::Build => self.build(ledger),
            Stage::Analyze => self.analyze(ledger),
        }
    }

    fn estimator(&self, id: &str) -> Result<Estimator> {
        Estimator::from_id(id, self.gateways.tokenizer.clone())
    }

    fn ingest(&self, ledger: &mut Ledger) -> Result<StageSummary> {
        let corpus = &self.config.corpus;
        let options = StreamOptions {
            text_field: corpus.text_field.clone(),
            id_field: corpus.id_field.clone(),
            strict: self.options.strict,
            estimator: self.estimator(&corpus.estimator)?,
        };
        let (docs, stats) = ingest_corpus(&corpus.path, &corpus.source_label, &options, corpus.max_tokens)?;
        let mut seen = HashSet::new();
        let mut unique = Vec::with_capacity(docs.len());
        for doc in docs {
            if seen.insert(doc.id.clone()) {
                unique.push(doc);
            } else if self.options.strict {
                return Err(Error::Precondition(format!("duplicate document id `{}`", doc.id)));
            } else {
                tracing::warn!(id = %doc.id, "skipping document with duplicate id");
            }
        }
        let docs = match self.config.limits.max_pairs {
            Some(n) => sample_documents(unique, n, self.config.seeds.sample_seed),
            None => unique,
        };
        let mut summary = StageSummary::new(Stage::Ingest);
        for doc in docs {
            if ledger.get(&doc.id).is_some() {
                summary.skipped += 1;
                continue;
            }
            ledger.append(&CandidatePair::from_document(&doc))?;
            summary.processed += 1;
            summary.succeeded += 1;
        }
        summary.ingest = Some(stats);
        Ok(summary)
    }

    /// Runs `op` over `eligible` with at most the endpoint's concurrency in
    /// flight, persisting each result as it arrives.
    fn run_model_stage<F>(&self, stage: Stage, ledger: &mut Ledger, gateway: &Gateway, eligible: Vec<CandidatePair>, skipped: usize, op: F) -> Result<StageSummary>
    where
        F: Fn(CandidatePair) -> Result<CandidatePair> + Sync,
    {
        let mut summary = StageSummary::new(stage);
        summary.skipped = skipped;
        if eligible.is_empty() {
            return Ok(summary);
        }
        let threshold = self.config.limits.consecutive_failure_abort;
        let workers = gateway.max_concurrency().min(eligible.len());
        let next = AtomicUsize::new(0);
        let halt = AtomicBool::new(false);
        // Consecutive failures in completion order, tracked by the workers so
        // dispatch stops as soon as the endpoint looks dead.
        let streak = AtomicUsize::new(0);
        let tripped = AtomicBool::new(false);
        let mut fatal: Option<Error> = None;
        let mut interrupted: Option<Error> = None;
        std::thread::scope(|scope| {
            // Rendezvous channel: a worker only picks up new work once the
            // writer has taken its previous result.
            let (tx, rx) = mpsc::sync_channel(0);
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, halt, eligible, op) = (&next, &halt, &eligible, &op);
                let (streak, tripped) = (&streak, &tripped);
                scope.spawn(move || loop {
                    if halt.load(Ordering::SeqCst) {
                        break;
                    }
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    let Some(pair) = eligible.get(index) else {
                        break;
                    };
                    let result = op(pair.clone());
                    if let Ok(pair) = &result {
                        if !pair.is_failed() {
                            streak.store(0, Ordering::SeqCst);
                        } else if streak.fetch_add(1, Ordering::SeqCst) + 1 >= threshold {
                            tripped.store(true, Ordering::SeqCst);
                            halt.store(true, Ordering::SeqCst);
                        }
                    }
                    if tx.send(result).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            for result in rx {
                if fatal.is_some() {
                    continue;
                }
                let pair = match result {
                    Ok(pair) => pair,
                    Err(e) => {
                        halt.store(true, Ordering::SeqCst);
                        fatal = Some(e);
                        continue;
                    }
                };
                let appended = ledger.append(&pair);
                summary.processed += 1;
                if pair.is_failed() {
                    summary.failed += 1;
                } else {
                    summary.succeeded += 1;
                }
                match appended {
                    Ok(()) => {}
                    // Keep persisting what is already in flight.
                    Err(e @ Error::Interrupted(_)) => {
                        halt.store(true, Ordering::SeqCst);
                        interrupted = Some(e);
                    }
                    Err(e) => {
                        halt.store(true, Ordering::SeqCst);
                        fatal = Some(e);
                    }
                }
            }
        });
        if let Some(e) = fatal.or(interrupted) {
            return Err(e);
        }
        if tripped.load(Ordering::SeqCst) {
            return Err(Error::EndpointDown {
                stage: stage.to_string(),
                failures: streak.load(Ordering::SeqCst).max(threshold),
            });
        }
        Ok(summary)
    }

    fn backtranslate(&self, ledger: &mut Ledger) -> Result<StageSummary> {
        let gateway = role(&self.gateways.backward, Stage::Backtranslate, "backward")?;
        let (eligible, skipped) = partition_eligible(ledger, |p| p.instruction.is_some(), |p| p.status == Status::Ingested);
        self.run_model_stage(Stage::Backtranslate, ledger, gateway, eligible, skipped, |pair| {
            self.stages.backtranslate(pair, gateway)
        })
    }

    fn score(&self, ledger: &mut Ledger) -> Result<StageSummary> {
        let gateway = role(&self.gateways.forward, Stage::Score, "forward")?;
        let (eligible, skipped) = partition_eligible(ledger, |p| p.score_raw.is_some(), |p| p.status == Status::Backtranslated);
        self.run_model_stage(Stage::Score, ledger, gateway, eligible, skipped, |pair| {
            self.stages.score_pair(pair, gateway)
        })
    }

    fn filter(&self, ledger: &mut Ledger) -> Result<StageSummary> {
        let mut summary = StageSummary::new(Stage::Filter);
        let (scored, skipped) = partition_eligible(ledger, |p| p.status == Status::FilteredOut, |p| p.status == Status::Scored);
        summary.skipped = skipped;
        summary.processed = scored.len();
        summary.succeeded = scored.len();
        let (_, dropped) = partition_score5(scored);
        for pair in &dropped {
            ledger.append(pair)?;
        }
        Ok(summary)
    }

    /// Pairs allowed past filtering: any with an instruction when filtering
    /// is off, score-5 pairs otherwise.
    fn passes_filter(&self, pair: &CandidatePair) -> bool {
        pair.status != Status::FilteredOut
            && pair.instruction.is_some()
            && (!self.config.stages.filtering || pair.score == Some(5))
    }

    fn rewrite(&self, ledger: &mut Ledger) -> Result<StageSummary> {
        let gateway = role(&self.gateways.rewriter, Stage::Rewrite, "rewriter")?;
        let (eligible, skipped) = partition_eligible(
            ledger,
            |p| p.response_rewritten.is_some() || p.status == Status::RewriteFailed,
            |p| matches!(p.status, Status::Backtranslated | Status::Scored) && self.passes_filter(p),
        );
        self.run_model_stage(Stage::Rewrite, ledger, gateway, eligible, skipped, |pair| {
            self.stages.rewrite_response(pair, gateway)
        })
    }

    fn distill(&self, ledger: &mut Ledger) -> Result<StageSummary> {
        let gateway = role(&self.gateways.rewriter, Stage::Distill, "rewriter")?;
        let rewriting = self.config.stages.rewriting;
        let (eligible, skipped) = partition_eligible(
            ledger,
            |p| p.response_distilled.is_some(),
            |p| {
                self.passes_filter(p)
                    && (!rewriting || matches!(p.status, Status::Rewritten | Status::RewriteFailed))
            },
        );
        self.run_model_stage(Stage::Distill, ledger, gateway, eligible, skipped, |pair| {
            self.stages.distill_response(pair, gateway)
        })
    }

    /// Pairs that make it into the exported datasets, in `doc_id` order.
    pub fn selected_pairs(&self, ledger: &Ledger) -> Vec<CandidatePair> {
        ledger.state().pairs().filter(|p| self.passes_filter(p)).cloned().collect()
    }

    /// Response variants exported by `build`.
    pub fn dataset_fields(&self) -> Vec<ResponseField> {
        let mut fields = vec![ResponseField::Initial];
        if self.config.stages.rewriting {
            fields.push(ResponseField::Rewritten);
        }
        if self.config.stages.distilling {
            fields.push(ResponseField::Distilled);
        }
        fields
    }

    fn variant_name(&self, field: ResponseField) -> String {
        let mut parts = Vec::new();
        if self.config.stages.filtering {
            parts.push("filtering");
        }
        match field {
            ResponseField::Initial => {}
            ResponseField::Rewritten => parts.push("rewriting"),
            ResponseField::Distilled => parts.push("distilling"),
        }
        if parts.is_empty() {
            "backtranslation".into()
        } else {
            parts.join("+")
        }
    }

    pub fn dataset_file_name(field: ResponseField) -> String {
        format!("dataset_{}.jsonl", field.as_str())
    }

    fn build(&self, ledger: &mut Ledger) -> Result<StageSummary> {
        let mut summary = StageSummary::new(Stage::Build);
        let out_dir = &self.config.paths.output_dir;
        let seeds = match &self.config.seed_data {
            Some(seed_data) => load_seed_pairs(&seed_data.path, seed_data.limit)?,
            None => Vec::new(),
        };
        if !seeds.is_empty() {
            for (direction, name) in [(Direction::Forward, "seed_forward.jsonl"), (Direction::Backward, "seed_backward.jsonl")] {
                let count = emit_direction_training(&seeds, direction, &out_dir.join(name))?;
                summary.datasets.insert(name.to_string(), count);
            }
        }
        let selected = self.selected_pairs(ledger);
        for field in self.dataset_fields() {
            let options = BuildOptions {
                variant: self.variant_name(field),
                strict: self.options.strict,
            };
            let records = build_finetune_dataset(&selected, &seeds, field, &options)?;
            let name = Self::dataset_file_name(field);
            let count = crate::dataset::export_jsonl(&records, &out_dir.join(&name))?;
            summary.skipped += selected.len() + seeds.len() - count;
            summary.processed += 1;
            summary.succeeded += 1;
            summary.datasets.insert(name, count);
        }
        Ok(summary)
    }

    fn analyze(&self, ledger: &mut Ledger) -> Result<StageSummary> {
        let mut summary = StageSummary::new(Stage::Analyze);
        let analysis = &self.config.analysis;
        let mut echoed = analysis.clone();
        echoed.mauve.kmeans_seed = self.config.seeds.kmeans_seed;
        let estimator = self.estimator(&analysis.estimator)?;
        let seed = self.config.seeds.sample_seed;

        let scored: Vec<&CandidatePair> = ledger.state().pairs().filter(|p| p.score_raw.is_some()).collect();
        let score_histogram = if scored.is_empty() {
            None
        } else {
            Some(score_histogram(scored)?)
        };

        let out_dir = &self.config.paths.output_dir;
        let mut datasets = BTreeMap::new();
        for field in self.dataset_fields() {
            let name = Self::dataset_file_name(field);
            let path = out_dir.join(&name);
            if !path.exists() {
                continue;
            }
            let web: Vec<(String, String)> = import_jsonl(&path)?
                .into_iter()
                .filter(|r| r.source_tag == SourceTag::WebSearch)
                .map(|r| (strip_tag(&r.instruction, SourceTag::WebSearch), r.response))
                .collect();
            let instructions: Vec<String> = web.iter().map(|(i, _)| i.clone()).collect();
            let responses: Vec<String> = web.iter().map(|(_, r)| r.clone()).collect();
            datasets.insert(
                name,
                DatasetMetrics {
                    records: web.len(),
                    lengths: if web.is_empty() { None } else { Some(length_stats(&web, &estimator)?) },
                    unique_trigrams_instructions: unique_trigrams(&instructions, analysis.trigram_sample, seed),
                    unique_trigrams_responses: unique_trigrams(&responses, analysis.trigram_sample, seed),
                },
            );
        }

        let selected = self.selected_pairs(ledger);
        let embedder = Embedder::from_id(&analysis.mauve.embedder, self.gateways.embedder.clone())?;
        let seeds: Vec<u64> = (0..analysis.mauve_seeds as u64)
            .map(|i| self.config.seeds.kmeans_seed.wrapping_add(i))
            .collect();
        let fields = self.dataset_fields();
        let mut mauve = BTreeMap::new();
        for (i, &a) in fields.iter().enumerate() {
            for &b in &fields[i + 1..] {
                let both: Vec<(String, String)> = selected
                    .iter()
                    .filter_map(|p| Some((a.of(p)?.to_string(), b.of(p)?.to_string())))
                    .collect();
                let key = format!("{}_vs_{}", a.as_str(), b.as_str());
                if both.len() < 2 {
                    tracing::warn!(comparison = %key, pairs = both.len(), "too few pairs for MAUVE; skipping");
                    continue;
                }
                let (texts_a, texts_b): (Vec<String>, Vec<String>) = both.into_iter().unzip();
                let result = compute_mauve_over_seeds(&texts_a, &texts_b, &echoed.mauve, &embedder, &seeds)?;
                if analysis.frontier_csv {
                    let csv = out_dir.join(format!("frontier_{key}.csv"));
                    std::fs::write(&csv, result.curve.to_csv()).map_err(|e| Error::io(&csv, e))?;
                }
                mauve.insert(key, result);
            }
        }

        let report = AnalysisReport {
            config: echoed,
            score_histogram,
            datasets,
            mauve,
        };
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join(REPORT_FILE);
        let text = serde_json::to_string_pretty(&report)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        summary.processed = 1;
        summary.succeeded = 1;
        summary.report = Some(path);
        Ok(summary)
    }
}

fn strip_tag(instruction: &str, tag: SourceTag) -> String {
    instruction
        .strip_suffix(tag.sentence())
        .map(|s| s.strip_suffix('\n').unwrap_or(s))
        .unwrap_or(instruction)
        .to_string()
}

/// Splits ledger pairs into those still needing the stage and a count of
/// those already done.
fn partition_eligible(ledger: &Ledger, done: impl Fn(&CandidatePair) -> bool, ready: impl Fn(&CandidatePair) -> bool) -> (Vec<CandidatePair>, usize) {
    let mut eligible = Vec::new();
    let mut skipped = 0;
    for pair in ledger.state().pairs() {
        if done(pair) {
            skipped += 1;
        } else if ready(pair) {
            eligible.push(pair.clone());
        }
    }
    (eligible, skipped)
}

/// Ledger summary for the `status` command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusReport {
    pub ledger: PathBuf,
    pub config_hash: Option<String>,
    pub runs: usize,
    pub records: usize,
    pub by_status: BTreeMap<String, usize>,
    pub pending_failures: usize,
}

pub fn ledger_status(path: &Path) -> Result<StatusReport> {
    let state = replay(path)?;
    let mut by_status = BTreeMap::new();
    let mut pending_failures = 0;
    for pair in state.pairs() {
        *by_status.entry(pair.status.to_string()).or_insert(0) += 1;
        if pair.is_failed() {
            pending_failures += 1;
        }
    }
    Ok(StatusReport {
        ledger: path.to_path_buf(),
        config_hash: state.config_hash.clone(),
        runs: state.runs,
        records: state.entries.len(),
        by_status,
        pending_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_stripping() {
        assert_eq!(strip_tag("Q\nAnswer with knowledge from web search.", SourceTag::WebSearch), "Q");
        assert_eq!(strip_tag("untagged", SourceTag::WebSearch), "untagged");
    }
}
