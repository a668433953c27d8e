//! Pipeline commands behind the `biogen` binary: dataset preparation,
//! training, generation, language-model benchmarking, and evaluation
//! reports. Every output artifact embeds the configuration and seed that
//! produced it, and instances stay aligned across files by their stable id.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    linearize, prepare_dataset, read_instances, read_raw_instances, write_instances,
    BiographyInstance, DatasetConfig, FilterStats, SlotSchema, Vocabulary,
};
use crate::error::{Error, Result};
use crate::eval::{
    bleu_by_fact_count, bootstrap_ci, chi_square_one_way, corpus_bleu, fact_density,
    read_annotations, read_preferences, EvalReport, FactMentionAnnotation,
};
use crate::model::{
    generate, load_checkpoint, save_checkpoint, make_pairs, Hyperparams, ModelParams, TrainMode,
    Trainer,
};
use crate::ngram::{apply_scheme, train_lm, NGramModel, TemplatingScheme};
use crate::template::{render, TemplateRules};

/// Flat `key=value` config file; later command-line flags override these.
pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::data(path, lineno + 1, "expected key=value"))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

/// Dataset directory metadata, written as `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: DatasetConfig,
    pub copy_budget: usize,
    pub max_vocab: usize,
    pub counts: SplitCounts,
    pub stats: FilterStats,
    pub vocab_hash: String,
}

#[derive(Debug, Clone)]
pub struct PrepareOpts {
    pub raw: PathBuf,
    pub out_dir: PathBuf,
    pub cfg: DatasetConfig,
    pub copy_budget: usize,
    pub max_vocab: usize,
}

impl Default for PrepareOpts {
    fn default() -> Self {
        PrepareOpts {
            raw: PathBuf::new(),
            out_dir: PathBuf::new(),
            cfg: DatasetConfig::default(),
            copy_budget: 4,
            max_vocab: 100_000,
        }
    }
}

/// Ingest raw instances, filter/split, build the shared vocabulary from the
/// train split (delexicalized input and output sides), and write the
/// dataset directory: `train/dev/test.jsonl`, `slots.tsv`, `vocab.tsv`,
/// `manifest.json`.
pub fn cmd_prepare(opts: &PrepareOpts) -> Result<DatasetManifest> {
    let raw = read_raw_instances(&opts.raw)?;
    let dataset = prepare_dataset(raw, &opts.cfg)?;

    std::fs::create_dir_all(&opts.out_dir)
        .map_err(|e| Error::io(opts.out_dir.clone(), e))?;

    // Vocabulary over the train split in the form the model consumes:
    // delexicalized linearized inputs plus delexicalized sentences.
    let schema = SlotSchema::default();
    let mut sequences: Vec<Vec<String>> = Vec::with_capacity(dataset.train.len() * 2);
    for inst in &dataset.train {
        let delexed = crate::corpus::delexicalize_title(inst, opts.copy_budget);
        sequences.push(linearize(&delexed.record)?);
        sequences.push(delexed.sentence_tokens);
    }
    let vocab = Vocabulary::build(
        sequences.iter().map(|s| s.as_slice()),
        &schema,
        opts.max_vocab,
        opts.copy_budget,
    )?;

    let header = vec![
        format!("seed={}", opts.cfg.seed),
        format!("config={}", serde_json::to_string(&opts.cfg).unwrap()),
    ];
    write_instances(&opts.out_dir.join("train.jsonl"), &dataset.train)?;
    write_instances(&opts.out_dir.join("dev.jsonl"), &dataset.dev)?;
    write_instances(&opts.out_dir.join("test.jsonl"), &dataset.test)?;
    vocab.save_tsv(&opts.out_dir.join("vocab.tsv"), &header)?;

    let slots_path = opts.out_dir.join("slots.tsv");
    let mut slots_body = String::new();
    for line in &header {
        slots_body.push_str(&format!("# {line}\n"));
    }
    for (slot, count) in dataset.slot_table.entries() {
        slots_body.push_str(&format!("{slot}\t{count}\n"));
    }
    std::fs::write(&slots_path, slots_body).map_err(|e| Error::io(slots_path.clone(), e))?;

    let manifest = DatasetManifest {
        config: opts.cfg.clone(),
        copy_budget: opts.copy_budget,
        max_vocab: opts.max_vocab,
        counts: SplitCounts {
            train: dataset.train.len(),
            dev: dataset.dev.len(),
            test: dataset.test.len(),
        },
        stats: dataset.stats.clone(),
        vocab_hash: vocab.hash(),
    };
    let manifest_path = opts.out_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .map_err(|e| Error::io(manifest_path, e))?;
    Ok(manifest)
}

/// Load a prepared dataset directory.
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub vocab: Vocabulary,
    dir: PathBuf,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest_path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|e| Error::io(manifest_path.clone(), e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::data(&manifest_path, 1, format!("bad manifest: {e}")))?;
        let vocab = Vocabulary::load_tsv(&dir.join("vocab.tsv"))?;
        Ok(Dataset {
            manifest,
            vocab,
            dir: dir.to_path_buf(),
        })
    }

    pub fn split(&self, name: &str) -> Result<Vec<BiographyInstance>> {
        if !matches!(name, "train" | "dev" | "test") {
            return Err(Error::Invalid(format!("unknown split {name:?}")));
        }
        read_instances(&self.dir.join(format!("{name}.jsonl")))
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainOpts {
    pub dataset_dir: PathBuf,
    pub out: PathBuf,
    pub log: Option<PathBuf>,
    pub mode: TrainMode,
    pub hp: Hyperparams,
    pub steps: u64,
    pub eval_every: u64,
    pub patience: usize,
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub steps_run: u64,
    pub final_step: u64,
    pub forward_loss: f64,
    pub reconstruction_loss: f64,
    pub total: f64,
    pub stopped_early: bool,
}

/// Train until the step budget or dev-loss patience runs out; write a
/// checkpoint and a TSV training log.
pub fn cmd_train(opts: &TrainOpts) -> Result<TrainSummary> {
    let dataset = Dataset::load(&opts.dataset_dir)?;
    let train = dataset.split("train")?;
    let dev = dataset.split("dev")?;

    let mut hp = opts.hp.clone();
    hp.vocab_size = dataset.vocab.len();

    let (params, start_step) = match &opts.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.vocab_hash != dataset.manifest.vocab_hash {
                return Err(Error::Invalid(format!(
                    "checkpoint vocabulary hash {} does not match dataset {}",
                    ckpt.vocab_hash, dataset.manifest.vocab_hash
                )));
            }
            if ckpt.mode != opts.mode {
                return Err(Error::Invalid(format!(
                    "checkpoint was trained in mode {}, requested {}",
                    ckpt.mode, opts.mode
                )));
            }
            hp = ckpt.hp.clone();
            (ckpt.params, ckpt.step)
        }
        None => (ModelParams::init(&mode_hp(&hp, opts.mode)), 0),
    };

    let pairs = make_pairs(&train, &dataset.vocab)?;
    let dev_pairs = make_pairs(&dev, &dataset.vocab)?;
    let mut trainer = Trainer::new(params, &hp, opts.mode, pairs)?;
    trainer.step = start_step;

    let log_path = opts
        .log
        .clone()
        .unwrap_or_else(|| opts.out.with_extension("log.tsv"));
    let mut log = String::new();
    log.push_str(&format!("# seed={}\n", trainer.hp.seed));
    log.push_str(&format!(
        "# config={}\n",
        serde_json::to_string(&trainer.hp).unwrap()
    ));
    log.push_str(&format!("# mode={}\n", opts.mode));
    log.push_str("step\tforward_loss\treconstruction_loss\ttotal\twall_time\n");

    let started = Instant::now();
    let mut best_dev = f64::INFINITY;
    let mut bad_evals = 0usize;
    let mut stopped_early = false;
    let mut last = None;
    let mut steps_run = 0u64;
    while steps_run < opts.steps {
        let breakdown = trainer.step_once()?;
        steps_run += 1;
        log.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:.3}\n",
            trainer.step,
            breakdown.forward_loss,
            breakdown.reconstruction_loss,
            breakdown.total,
            started.elapsed().as_secs_f64()
        ));
        last = Some(breakdown);
        if opts.eval_every > 0 && steps_run % opts.eval_every == 0 && !dev_pairs.is_empty() {
            let dev_loss = trainer.evaluate(&dev_pairs)?.forward_loss;
            log.push_str(&format!(
                "# eval step={} dev_forward_loss={dev_loss}\n",
                trainer.step
            ));
            if dev_loss < best_dev {
                best_dev = dev_loss;
                bad_evals = 0;
            } else {
                bad_evals += 1;
                if bad_evals >= opts.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    std::fs::write(&log_path, log).map_err(|e| Error::io(log_path.clone(), e))?;
    save_checkpoint(
        &opts.out,
        &trainer.params,
        &trainer.hp,
        &dataset.manifest.vocab_hash,
        trainer.step,
        opts.mode,
    )?;
    let last = last.ok_or_else(|| Error::Invalid("step budget of 0".into()))?;
    Ok(TrainSummary {
        steps_run,
        final_step: trainer.step,
        forward_loss: last.forward_loss,
        reconstruction_loss: last.reconstruction_loss,
        total: last.total,
        stopped_early,
    })
}

fn mode_hp(hp: &Hyperparams, mode: TrainMode) -> Hyperparams {
    mode.effective_hp(hp)
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum GenerationSource {
    Baseline,
    Checkpoint(PathBuf),
}

#[derive(Debug, Clone)]
pub struct GenerateOpts {
    pub dataset_dir: PathBuf,
    pub split: String,
    pub source: GenerationSource,
    pub out: PathBuf,
}

/// Generate one sentence per instance of a split, aligned by id, written as
/// TSV `id \t sentence`.
pub fn cmd_generate(opts: &GenerateOpts) -> Result<usize> {
    let dataset = Dataset::load(&opts.dataset_dir)?;
    let instances = dataset.split(&opts.split)?;

    let (system, sentences): (&str, Vec<Vec<String>>) = match &opts.source {
        GenerationSource::Baseline => {
            let rules = TemplateRules::default();
            let mut out = Vec::with_capacity(instances.len());
            for inst in &instances {
                out.push(render(&inst.record, &rules)?);
            }
            ("base", out)
        }
        GenerationSource::Checkpoint(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.vocab_hash != dataset.manifest.vocab_hash {
                return Err(Error::Invalid(format!(
                    "checkpoint vocabulary hash {} does not match dataset {}",
                    ckpt.vocab_hash, dataset.manifest.vocab_hash
                )));
            }
            let mut out = Vec::with_capacity(instances.len());
            for inst in &instances {
                out.push(generate(&inst.record, &ckpt.params, &dataset.vocab, &ckpt.hp)?);
            }
            (
                match ckpt.mode {
                    TrainMode::S2s => "s2s",
                    TrainMode::S2sAe => "s2s_ae",
                },
                out,
            )
        }
    };

    let mut body = String::new();
    body.push_str(&format!("# system={system}\n"));
    body.push_str(&format!("# split={}\n", opts.split));
    body.push_str(&format!("# seed={}\n", dataset.manifest.config.seed));
    for (inst, tokens) in instances.iter().zip(&sentences) {
        body.push_str(&format!("{}\t{}\n", inst.id, tokens.join(" ")));
    }
    std::fs::write(&opts.out, body).map_err(|e| Error::io(opts.out.clone(), e))?;
    Ok(instances.len())
}

/// Read a hypotheses/references TSV written by [`cmd_generate`]:
/// `(header map, id -> tokens)`.
pub fn read_sentence_tsv(path: &Path) -> Result<(BTreeMap<String, String>, Vec<(u64, Vec<String>)>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mut header = BTreeMap::new();
    let mut rows = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.to_path_buf(), e))?;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                header.insert(k.to_string(), v.to_string());
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (id, sentence) = line
            .split_once('\t')
            .ok_or_else(|| Error::data(path, lineno + 1, "expected id<TAB>sentence"))?;
        let id: u64 = id
            .parse()
            .map_err(|_| Error::data(path, lineno + 1, "bad id"))?;
        let tokens: Vec<String> = if sentence.is_empty() {
            Vec::new()
        } else {
            sentence.split(' ').map(String::from).collect()
        };
        rows.push((id, tokens));
    }
    Ok((header, rows))
}

// ---------------------------------------------------------------------------
// lm-train / lm-ppl
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LmTrainOpts {
    pub dataset_dir: PathBuf,
    pub split: String,
    pub scheme: TemplatingScheme,
    pub order: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct LmSummary {
    pub sentences: usize,
    pub vocab: usize,
    pub fallback_orders: Vec<usize>,
}

pub fn cmd_lm_train(opts: &LmTrainOpts) -> Result<LmSummary> {
    let dataset = Dataset::load(&opts.dataset_dir)?;
    let instances = dataset.split(&opts.split)?;
    let sentences: Vec<Vec<String>> = instances
        .iter()
        .map(|inst| apply_scheme(inst, opts.scheme))
        .collect();
    let model = train_lm(&sentences, opts.order)?;
    model.save(
        &opts.out,
        &[
            format!("scheme={}", opts.scheme),
            format!("split={}", opts.split),
            format!("seed={}", dataset.manifest.config.seed),
        ],
    )?;
    Ok(LmSummary {
        sentences: sentences.len(),
        vocab: model.vocab_size(),
        fallback_orders: model.fallback_orders().to_vec(),
    })
}

#[derive(Debug, Clone)]
pub struct LmPplOpts {
    pub model: PathBuf,
    pub dataset_dir: PathBuf,
    pub split: String,
    pub scheme: TemplatingScheme,
}

pub fn cmd_lm_ppl(opts: &LmPplOpts) -> Result<f64> {
    let model = NGramModel::load(&opts.model)?;
    let dataset = Dataset::load(&opts.dataset_dir)?;
    let instances = dataset.split(&opts.split)?;
    let sentences: Vec<Vec<String>> = instances
        .iter()
        .map(|inst| apply_scheme(inst, opts.scheme))
        .collect();
    Ok(model.perplexity(&sentences))
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvalOpts {
    /// Hypotheses TSV from `generate`.
    pub hyps: PathBuf,
    /// References: a split `.jsonl` (enables fact sections) or another TSV.
    pub refs: PathBuf,
    pub annotations: Option<PathBuf>,
    /// System name for annotation lookup; defaults to the hypotheses header.
    pub system: Option<String>,
    /// Which annotated system plays the reference in content selection.
    pub reference_system: String,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub samples: usize,
    pub min_group: usize,
}

impl Default for EvalOpts {
    fn default() -> Self {
        EvalOpts {
            hyps: PathBuf::new(),
            refs: PathBuf::new(),
            annotations: None,
            system: None,
            reference_system: "wiki".into(),
            out: None,
            seed: 0,
            samples: 1000,
            min_group: 5,
        }
    }
}

/// BLEU with a bootstrap interval, and fact-level sections when annotations
/// and structured references are available. Reports are byte-identical
/// across reruns with the same seed and inputs.
pub fn cmd_eval(opts: &EvalOpts) -> Result<EvalReport> {
    let (header, hyp_rows) = read_sentence_tsv(&opts.hyps)?;
    let system = opts
        .system
        .clone()
        .or_else(|| header.get("system").cloned())
        .unwrap_or_else(|| "unknown".into());

    // References either from a prepared split (with records) or a TSV.
    let is_jsonl = opts.refs.extension().map(|e| e == "jsonl").unwrap_or(false);
    let mut ref_map: HashMap<u64, Vec<String>> = HashMap::new();
    let mut record_map: HashMap<u64, BiographyInstance> = HashMap::new();
    if is_jsonl {
        for inst in read_instances(&opts.refs)? {
            ref_map.insert(inst.id, inst.sentence_tokens.clone());
            record_map.insert(inst.id, inst);
        }
    } else {
        for (id, tokens) in read_sentence_tsv(&opts.refs)?.1 {
            ref_map.insert(id, tokens);
        }
    }

    if hyp_rows.len() != ref_map.len() {
        return Err(Error::Invalid(format!(
            "{} hypotheses against {} references",
            hyp_rows.len(),
            ref_map.len()
        )));
    }
    let mut hyps = Vec::with_capacity(hyp_rows.len());
    let mut refs = Vec::with_capacity(hyp_rows.len());
    let mut fact_items = Vec::new();
    for (id, tokens) in &hyp_rows {
        let reference = ref_map
            .get(id)
            .ok_or_else(|| Error::Invalid(format!("hypothesis id {id} has no reference")))?;
        hyps.push(tokens.clone());
        refs.push(reference.clone());
        if let Some(inst) = record_map.get(id) {
            fact_items.push((inst.record.fact_count(), tokens.clone(), reference.clone()));
        }
    }

    let bleu = corpus_bleu(&hyps, &refs)?;
    let ci = bootstrap_ci(&hyps, &refs, opts.samples, 0.95, opts.seed)?;
    let by_fact_count = if fact_items.is_empty() {
        Vec::new()
    } else {
        bleu_by_fact_count(&fact_items, opts.min_group, opts.samples, opts.seed)?
    };

    let mut report = EvalReport {
        system: system.clone(),
        instances: hyps.len(),
        bleu,
        bleu_ci: ci,
        bootstrap_samples: opts.samples,
        seed: opts.seed,
        content: None,
        hallucination: None,
        mean_facts_per_sentence: None,
        mean_sentence_length: None,
        by_fact_count,
    };
    report.normalize_interval();

    if let Some(ann_path) = &opts.annotations {
        let annotations = read_annotations(ann_path)?;
        let for_system: Vec<&FactMentionAnnotation> = annotations
            .iter()
            .filter(|a| a.system == system)
            .collect();
        let reference_expressed: HashMap<u64, BTreeSet<String>> = annotations
            .iter()
            .filter(|a| a.system == opts.reference_system)
            .map(|a| (a.id, a.expressed_slots()))
            .collect();

        // Micro-aggregated content selection against reference-expressed
        // facts, when the reference side is annotated too.
        let mut content_overlap = 0usize;
        let mut content_sys = 0usize;
        let mut content_gold = 0usize;
        let mut have_content = false;
        // Hallucination against the structured input.
        let mut halluc_overlap = 0usize;
        let mut halluc_sys = 0usize;
        let mut halluc_gold = 0usize;
        let mut have_halluc = false;

        let mut density_hyps = Vec::new();
        let mut density_anns = Vec::new();
        let hyp_by_id: HashMap<u64, &Vec<String>> =
            hyp_rows.iter().map(|(id, t)| (*id, t)).collect();

        for ann in &for_system {
            let expressed = ann.expressed_slots();
            if let Some(gold) = reference_expressed.get(&ann.id) {
                have_content = true;
                content_overlap += expressed.intersection(gold).count();
                content_sys += expressed.len();
                content_gold += gold.len();
            }
            if let Some(inst) = record_map.get(&ann.id) {
                have_halluc = true;
                let mut input_slots: BTreeSet<String> =
                    inst.record.facts.iter().map(|f| f.slot.to_string()).collect();
                input_slots.insert("TITLE".into());
                let correct: BTreeSet<&str> = ann
                    .expressed
                    .iter()
                    .filter(|e| e.correct)
                    .map(|e| e.slot.as_str())
                    .collect();
                halluc_overlap += correct
                    .iter()
                    .filter(|s| input_slots.contains(**s))
                    .count();
                halluc_sys += expressed.len();
                halluc_gold += input_slots.len();
            }
            if let Some(tokens) = hyp_by_id.get(&ann.id) {
                density_hyps.push((*tokens).clone());
                density_anns.push((*ann).clone());
            }
        }

        // Micro-aggregation over the sample: pooled overlap/system/gold
        // counts, with the same empty-side conventions as content_prf.
        let micro = |overlap: usize, sys: usize, gold: usize| {
            let p = if sys == 0 {
                if gold == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                overlap as f64 / sys as f64
            };
            let r = if gold == 0 {
                1.0
            } else {
                overlap as f64 / gold as f64
            };
            let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            crate::eval::Prf {
                precision: p,
                recall: r,
                f1,
            }
        };
        if have_content {
            report.content = Some(micro(content_overlap, content_sys, content_gold));
        }
        if have_halluc {
            report.hallucination = Some(micro(halluc_overlap, halluc_sys, halluc_gold));
        }
        if !density_anns.is_empty() {
            let (facts, len) = fact_density(&density_anns, &density_hyps)?;
            report.mean_facts_per_sentence = Some(facts);
            report.mean_sentence_length = Some(len);
        }
    }

    if let Some(out) = &opts.out {
        write_report(out, &report)?;
    }
    Ok(report)
}

fn write_report(prefix: &Path, report: &EvalReport) -> Result<()> {
    let json_path = prefix.with_extension("json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(report).expect("report serializes"),
    )
    .map_err(|e| Error::io(json_path, e))?;

    let tsv_path = prefix.with_extension("tsv");
    let mut tsv = String::new();
    tsv.push_str(&format!(
        "# system={} seed={} samples={}\n",
        report.system, report.seed, report.bootstrap_samples
    ));
    tsv.push_str("metric\tvalue\n");
    tsv.push_str(&format!("instances\t{}\n", report.instances));
    tsv.push_str(&format!("bleu\t{:.4}\n", report.bleu));
    tsv.push_str(&format!(
        "bleu_ci_95\t{:.4},{:.4}\n",
        report.bleu_ci.0, report.bleu_ci.1
    ));
    if let Some(prf) = &report.content {
        tsv.push_str(&format!(
            "content_p/r/f1\t{:.4},{:.4},{:.4}\n",
            prf.precision, prf.recall, prf.f1
        ));
    }
    if let Some(prf) = &report.hallucination {
        tsv.push_str(&format!(
            "hallucination_p/r/f1\t{:.4},{:.4},{:.4}\n",
            prf.precision, prf.recall, prf.f1
        ));
    }
    if let Some(v) = report.mean_facts_per_sentence {
        tsv.push_str(&format!("mean_facts_per_sentence\t{v:.4}\n"));
    }
    if let Some(v) = report.mean_sentence_length {
        tsv.push_str(&format!("mean_sentence_length\t{v:.4}\n"));
    }
    for row in &report.by_fact_count {
        tsv.push_str(&format!(
            "bleu_fact_count_{}\t{:.4} ({:.4},{:.4}) n={}{}\n",
            row.fact_count,
            row.bleu,
            row.ci_lo,
            row.ci_hi,
            row.instances,
            if row.small_group { " small" } else { "" }
        ));
    }
    std::fs::write(&tsv_path, tsv).map_err(|e| Error::io(tsv_path, e))
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ReportOpts {
    pub evals: Vec<PathBuf>,
    pub preferences: Option<PathBuf>,
    pub out: PathBuf,
}

/// Combine eval reports into one summary table, with preference-vote
/// statistics when a preference file is supplied.
pub fn cmd_report(opts: &ReportOpts) -> Result<()> {
    let mut out = String::new();
    out.push_str("# combined system report\n");
    out.push_str("system\tbleu\tci_lo\tci_hi\tcontent_f1\thallucination_p\tfacts/sent\ttokens/sent\n");
    for path in &opts.evals {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.clone(), e))?;
        let report: EvalReport = serde_json::from_str(&text)
            .map_err(|e| Error::data(path, 1, format!("bad eval report: {e}")))?;
        out.push_str(&format!(
            "{}\t{:.2}\t{:.2}\t{:.2}\t{}\t{}\t{}\t{}\n",
            report.system,
            report.bleu,
            report.bleu_ci.0,
            report.bleu_ci.1,
            report
                .content
                .map(|p| format!("{:.3}", p.f1))
                .unwrap_or_else(|| "-".into()),
            report
                .hallucination
                .map(|p| format!("{:.3}", p.precision))
                .unwrap_or_else(|| "-".into()),
            report
                .mean_facts_per_sentence
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".into()),
            report
                .mean_sentence_length
                .map(|v| format!("{v:.2}"))
                .unwrap_or_else(|| "-".into()),
        ));
    }

    if let Some(path) = &opts.preferences {
        let items = read_preferences(path)?;
        let mut by_pair: BTreeMap<(String, String), Vec<Vec<String>>> = BTreeMap::new();
        for item in &items {
            by_pair
                .entry((item.pair[0].clone(), item.pair[1].clone()))
                .or_default()
                .push(item.votes.clone());
        }
        out.push_str("\n# preferences: per-pair majorities, chi-square on majority counts\n");
        out.push_str("pair\twins_a\twins_b\tties\tagreement\tchi2\tp\n");
        for ((a, b), votes) in by_pair {
            let summary = crate::eval::aggregate_preferences(&votes)?;
            let wins_a = summary
                .majorities
                .iter()
                .filter(|m| m.as_deref() == Some(a.as_str()))
                .count() as u64;
            let wins_b = summary
                .majorities
                .iter()
                .filter(|m| m.as_deref() == Some(b.as_str()))
                .count() as u64;
            let (chi2, p) = if wins_a + wins_b > 0 {
                chi_square_one_way(&[wins_a, wins_b])?
            } else {
                (0.0, 1.0)
            };
            out.push_str(&format!(
                "{a} vs {b}\t{wins_a}\t{wins_b}\t{}\t{:.3}\t{chi2:.3}\t{p:.5}\n",
                summary.ties, summary.agreement
            ));
        }
    }

    std::fs::write(&opts.out, out).map_err(|e| Error::io(opts.out.clone(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prepared_dir() -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw.jsonl");
        std::fs::write(&raw, crate::synth::raw_corpus_jsonl(60, 5)).unwrap();
        let out = dir.path().join("data");
        let opts = PrepareOpts {
            raw,
            out_dir: out.clone(),
            cfg: DatasetConfig {
                seed: 5,
                ..DatasetConfig::default()
            },
            copy_budget: 4,
            max_vocab: 10_000,
        };
        cmd_prepare(&opts).unwrap();
        (dir, out)
    }

    #[test]
    fn prepare_writes_all_artifacts() {
        let (_tmp, out) = prepared_dir();
        for file in ["train.jsonl", "dev.jsonl", "test.jsonl", "slots.tsv", "vocab.tsv", "manifest.json"] {
            assert!(out.join(file).exists(), "{file} missing");
        }
        let dataset = Dataset::load(&out).unwrap();
        assert_eq!(dataset.manifest.counts.train, 48);
        assert_eq!(dataset.manifest.counts.dev, 6);
        assert_eq!(dataset.manifest.counts.test, 6);
        // Slot ordering: TITLE first (every instance), then by frequency.
        let train = dataset.split("train").unwrap();
        assert!(!train.is_empty());
    }

    #[test]
    fn generate_baseline_aligns_ids_and_is_deterministic() {
        let (_tmp, out) = prepared_dir();
        let hyp_path = out.join("base.tsv");
        let opts = GenerateOpts {
            dataset_dir: out.clone(),
            split: "dev".into(),
            source: GenerationSource::Baseline,
            out: hyp_path.clone(),
        };
        let n = cmd_generate(&opts).unwrap();
        let (header, rows) = read_sentence_tsv(&hyp_path).unwrap();
        assert_eq!(header.get("system").map(String::as_str), Some("base"));
        assert_eq!(rows.len(), n);
        let first = std::fs::read_to_string(&hyp_path).unwrap();
        cmd_generate(&opts).unwrap();
        assert_eq!(std::fs::read_to_string(&hyp_path).unwrap(), first);
    }

    #[test]
    fn eval_of_references_scores_100() {
        let (_tmp, out) = prepared_dir();
        // Write the references as a hypotheses file.
        let dataset = Dataset::load(&out).unwrap();
        let dev = dataset.split("dev").unwrap();
        let mut body = String::from("# system=wiki\n");
        for inst in &dev {
            body.push_str(&format!("{}\t{}\n", inst.id, inst.sentence_tokens.join(" ")));
        }
        let hyp_path = out.join("wiki.tsv");
        std::fs::write(&hyp_path, body).unwrap();
        let report = cmd_eval(&EvalOpts {
            hyps: hyp_path,
            refs: out.join("dev.jsonl"),
            samples: 50,
            ..EvalOpts::default()
        })
        .unwrap();
        assert!((report.bleu - 100.0).abs() < 1e-9);
        assert_eq!(report.bleu_ci, (100.0, 100.0));
        assert!(!report.by_fact_count.is_empty());
    }

    #[test]
    fn eval_reports_are_byte_identical_across_runs() {
        let (_tmp, out) = prepared_dir();
        cmd_generate(&GenerateOpts {
            dataset_dir: out.clone(),
            split: "dev".into(),
            source: GenerationSource::Baseline,
            out: out.join("base.tsv"),
        })
        .unwrap();
        let opts = EvalOpts {
            hyps: out.join("base.tsv"),
            refs: out.join("dev.jsonl"),
            out: Some(out.join("report")),
            samples: 100,
            seed: 9,
            ..EvalOpts::default()
        };
        cmd_eval(&opts).unwrap();
        let a = std::fs::read_to_string(out.join("report.json")).unwrap();
        let a_tsv = std::fs::read_to_string(out.join("report.tsv")).unwrap();
        cmd_eval(&opts).unwrap();
        assert_eq!(std::fs::read_to_string(out.join("report.json")).unwrap(), a);
        assert_eq!(std::fs::read_to_string(out.join("report.tsv")).unwrap(), a_tsv);
    }

    #[test]
    fn config_file_parses_flat_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "seed=7\n# comment\nmin_len = 3\n").unwrap();
        let map = load_config_file(&path).unwrap();
        assert_eq!(map.get("seed").map(String::as_str), Some("7"));
        assert_eq!(map.get("min_len").map(String::as_str), Some("3"));
        std::fs::write(&path, "broken line\n").unwrap();
        assert!(load_config_file(&path).is_err());
    }
}
