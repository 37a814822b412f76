//! The `tag`, `train`, `eval`, `explain` and `synth` commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::{CommonsenseChoice, LlmChoice, RunConfig, UmlsChoice};
use crate::data::{explode_posts, load_dataset, majority_vote, Aggregation, DatasetRecord, Split};
use crate::encoding::{CommonsenseBackend, FixtureCommonsense, StubCommonsense, StubEncoder};
use crate::error::{Error, Result};
use crate::explain::{emit_report, ExplainSettings, Explainer, HttpLlm, LlmBackend, RecordedLlm, ReportFormat, StubLlm};
use crate::features::{DocumentFeatures, FeatureBuilder};
use crate::label::Label;
use crate::lexicon::{FixtureUmls, Lexicon, NoUmls, SimilarityIndex, UmlsBackend, SIMILARITY_THRESHOLD};
use crate::metrics::{confusion, per_class_prf, MetricReport};
use crate::network::{forward, load_checkpoint, predict_all, save_checkpoint, train_with, Example, KinnConfig, KinnParams};
use crate::tagging::{TaggedDocument, Tagger};

pub const TAGGED_FILE: &str = "tagged.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const RUN_FILE: &str = "run.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const EXPLAIN_DIR: &str = "explain";

/// Files a command wrote.
#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub written: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub documents: usize,
    pub seed: u64,
    pub metrics: MetricReport,
    pub per_class_f1: Vec<f64>,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    config: &'a RunConfig,
    split_counts: BTreeMap<Split, usize>,
    converged: bool,
}

/// Classification units paired with the index of their owning record.
type Units = Vec<(usize, DatasetRecord)>;

/// Loaded lexicon and backends for one configuration.
pub struct Pipeline {
    pub cfg: RunConfig,
    pub lexicon: Lexicon,
    encoder: StubEncoder,
    commonsense: Box<dyn CommonsenseBackend>,
    umls: Box<dyn UmlsBackend>,
    llm: Box<dyn LlmBackend>,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        let lexicon = Lexicon::load(&cfg.lexicon)?;
        let b = &cfg.backends;
        let fixture = |p: &Option<PathBuf>| p.clone().ok_or_else(|| Error::Config("missing fixture path".into()));
        let commonsense: Box<dyn CommonsenseBackend> = match b.commonsense {
            CommonsenseChoice::Stub => Box::new(StubCommonsense),
            CommonsenseChoice::Fixture => Box::new(FixtureCommonsense::load(&fixture(&b.commonsense_fixture)?)?),
        };
        let umls: Box<dyn UmlsBackend> = match b.umls {
            UmlsChoice::None => Box::new(NoUmls),
            UmlsChoice::Fixture => Box::new(FixtureUmls::load(&fixture(&b.umls_fixture)?)?),
        };
        let llm: Box<dyn LlmBackend> = match b.llm {
            LlmChoice::Stub => Box::new(StubLlm),
            LlmChoice::Recorded => Box::new(RecordedLlm::load(&fixture(&b.llm_fixture)?)?),
            LlmChoice::Http => Box::new(
                HttpLlm::new(
                    &cfg.llm.endpoint,
                    &cfg.llm.model,
                    Duration::from_secs(cfg.llm.timeout_secs),
                    cfg.llm.max_tokens,
                )
                .with_env_credential(),
            ),
        };
        Ok(Pipeline {
            encoder: StubEncoder::new(cfg.model.dim),
            cfg,
            lexicon,
            commonsense,
            umls,
            llm,
        })
    }

    fn out_path(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.cfg.out).map_err(|e| Error::io(&self.cfg.out, e))?;
        Ok(self.cfg.out.join(name))
    }

    /// Dataset records, with the index of the owning record. Under majority
    /// aggregation every post becomes its own record.
    fn records(&self) -> Result<(Vec<DatasetRecord>, Units)> {
        let m = &self.cfg.model;
        let records = load_dataset(&self.cfg.dataset, m.task, m.num_classes, self.cfg.seed)?;
        let units = match self.cfg.aggregation {
            Aggregation::Concat => records.iter().cloned().enumerate().collect(),
            Aggregation::Majority => explode_posts(&records),
        };
        Ok((records, units))
    }

    pub fn tag(&self, records: &[(usize, DatasetRecord)]) -> Result<Vec<TaggedDocument>> {
        let tagger = Tagger::new(&self.lexicon, &self.encoder, self.umls.as_ref())?;
        let docs: Vec<(&str, &str)> = records.iter().map(|(_, r)| (r.doc_id.as_str(), r.text.as_str())).collect();
        tagger.tag_all(&docs)
    }

    pub fn features(&self, docs: &[TaggedDocument], model: &KinnConfig) -> Result<Vec<DocumentFeatures>> {
        let builder = FeatureBuilder {
            encoder: &self.encoder,
            commonsense: self.commonsense.as_ref(),
            max_len: model.max_len,
            knowledge: self.cfg.knowledge,
        };
        builder.build_all(docs)
    }

    fn examples(&self, records: &[(usize, DatasetRecord)], model: &KinnConfig) -> Result<Vec<Example>> {
        let docs = self.tag(records)?;
        let features = self.features(&docs, model)?;
        Ok(features
            .into_iter()
            .zip(records)
            .map(|(f, (_, r))| Example {
                x_domain: f.x_domain,
                x_cs: f.x_cs,
                target: r.label.clone(),
            })
            .collect())
    }

    fn load_model(&self) -> Result<(KinnConfig, KinnParams)> {
        let path = self.cfg.out.join(CHECKPOINT_FILE);
        if !path.exists() {
            return Err(Error::Data(format!(
                "no checkpoint at {}; run `train` first",
                path.display()
            )));
        }
        let (model, params) = load_checkpoint(&path)?;
        if model.dim != self.cfg.model.dim {
            return Err(Error::Config(format!(
                "checkpoint dim {} differs from configured dim {}",
                model.dim, self.cfg.model.dim
            )));
        }
        Ok((model, params))
    }
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).map_err(|e| Error::Data(e.to_string()))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Tag every document of the dataset into `<out>/tagged.jsonl`.
pub fn run_tag(cfg: &RunConfig) -> Result<CommandOutput> {
    let p = Pipeline::new(cfg.clone())?;
    let (_, records) = p.records()?;
    let docs = p.tag(&records)?;
    let path = p.out_path(TAGGED_FILE)?;
    write_lines(&path, &docs)?;
    let spans: usize = docs.iter().map(|d| d.spans.len()).sum();
    log::info!("tagged {} documents, {spans} concept spans", docs.len());
    Ok(CommandOutput { written: vec![path] })
}

/// Train on the TRAIN split (logging DEV each epoch) and write the
/// checkpoint, the training log and a run record.
pub fn run_train(cfg: &RunConfig) -> Result<CommandOutput> {
    let p = Pipeline::new(cfg.clone())?;
    let (_, records) = p.records()?;
    let pick = |s: Split| records.iter().filter(|(_, r)| r.split == s).cloned().collect::<Vec<_>>();
    let (train_recs, dev_recs) = (pick(Split::Train), pick(Split::Dev));
    if train_recs.is_empty() {
        return Err(Error::Data("dataset has no TRAIN documents".into()));
    }
    let model = &cfg.model;
    let train = p.examples(&train_recs, model)?;
    let dev = p.examples(&dev_recs, model)?;
    let outcome = train_with(model, &train, &dev, KinnParams::init(model))?;

    let ck = p.out_path(CHECKPOINT_FILE)?;
    save_checkpoint(&ck, model, &outcome.params)?;
    let log_path = p.out_path(TRAIN_LOG_FILE)?;
    write_lines(&log_path, &outcome.log)?;
    let mut split_counts = BTreeMap::new();
    for (_, r) in &records {
        *split_counts.entry(r.split).or_insert(0) += 1;
    }
    let run_path = p.out_path(RUN_FILE)?;
    write_json(
        &run_path,
        &RunRecord {
            config: cfg,
            split_counts,
            converged: outcome.converged,
        },
    )?;
    Ok(CommandOutput { written: vec![ck, log_path, run_path] })
}

/// Evaluate the saved checkpoint on the TEST split.
pub fn evaluate_split(cfg: &RunConfig, split: Split) -> Result<EvalReport> {
    let p = Pipeline::new(cfg.clone())?;
    let (model, params) = p.load_model()?;
    let (records, units) = p.records()?;
    let chosen: Vec<(usize, DatasetRecord)> = units.into_iter().filter(|(_, r)| r.split == split).collect();
    if chosen.is_empty() {
        return Err(Error::Data(format!("dataset has no {split:?} documents")));
    }
    let examples = p.examples(&chosen, &model)?;
    let predictions = predict_all(&model, &params, &examples)?;

    // Group post-level predictions by owning record (identity under concat).
    let mut votes: BTreeMap<usize, Vec<Label>> = BTreeMap::new();
    for ((owner, _), pred) in chosen.iter().zip(predictions) {
        votes.entry(*owner).or_default().push(pred);
    }
    let mut truth = Vec::with_capacity(votes.len());
    let mut pred = Vec::with_capacity(votes.len());
    for (owner, v) in votes {
        truth.push(records[owner].label.clone());
        pred.push(majority_vote(&v).expect("at least one vote per record"));
    }
    let counts = confusion(&truth, &pred, model.task, model.num_classes)?;
    let metrics = crate::metrics::evaluate(&truth, &pred, model.task, model.num_classes)?;
    Ok(EvalReport {
        split,
        documents: truth.len(),
        seed: cfg.seed,
        metrics,
        per_class_f1: per_class_prf(&counts).into_iter().map(|(_, _, f)| f).collect(),
    })
}

/// Evaluate on TEST and write `<out>/metrics.json`.
pub fn run_eval(cfg: &RunConfig) -> Result<(EvalReport, CommandOutput)> {
    let report = evaluate_split(cfg, Split::Test)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let path = cfg.out.join(METRICS_FILE);
    write_json(&path, &report)?;
    Ok((report, CommandOutput { written: vec![path] }))
}

fn file_stem(doc_id: &str) -> String {
    doc_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Write JSON and HTML explanation reports for documents of the tagged corpus.
pub fn run_explain(cfg: &RunConfig, doc_ids: &[String]) -> Result<CommandOutput> {
    let p = Pipeline::new(cfg.clone())?;
    let tagged_path = cfg.out.join(TAGGED_FILE);
    let content = std::fs::read_to_string(&tagged_path).map_err(|e| Error::io(&tagged_path, e))?;
    let mut corpus = BTreeMap::new();
    for (i, line) in content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let doc: TaggedDocument =
            serde_json::from_str(line).map_err(|e| Error::parse(&tagged_path, i + 1, e.to_string()))?;
        corpus.insert(doc.doc_id.clone(), doc);
    }
    let mut docs = Vec::with_capacity(doc_ids.len());
    for id in doc_ids {
        match corpus.remove(id) {
            Some(d) => docs.push(d),
            None => return Err(Error::Data(format!("{id}: document not in tagged corpus"))),
        }
    }
    let (model, params) = p.load_model()?;
    let features = p.features(&docs, &model)?;
    let index = SimilarityIndex::build(&p.lexicon, &p.encoder)?;
    let explainer = Explainer {
        lexicon: &p.lexicon,
        index: &index,
        encoder: &p.encoder,
        llm: p.llm.as_ref(),
        settings: ExplainSettings {
            top_k: cfg.explain.top_k,
            block: cfg.explain.block,
            threshold: SIMILARITY_THRESHOLD,
        },
    };
    let dir = cfg.out.join(EXPLAIN_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written = Vec::new();
    for (doc, f) in docs.iter().zip(&features) {
        let trace = forward(&model, &params, f.x_domain.view(), f.x_cs.view())?;
        let report = explainer.explain(doc, &trace, &f.positions, model.task)?;
        let stem = file_stem(&doc.doc_id);
        for (format, ext) in [(ReportFormat::Json, "json"), (ReportFormat::Html, "html")] {
            let path = dir.join(format!("{stem}.{ext}"));
            emit_report(&report, format, &path)?;
            written.push(path);
        }
    }
    Ok(CommandOutput { written })
}

/// Write the synthetic lexicon and corpora into `dir`.
pub fn run_synth(dir: &Path, seed: u64) -> Result<CommandOutput> {
    Ok(CommandOutput {
        written: crate::synth::write_bundle(dir, seed)?,
    })
}
