use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EvalReport, ExperimentConfig, HarnessError, ModelKind, Result, TaskSource};
use crate::corpus::{
    build_vocab, encode, generate_split, parse_babi, AnswerVocab, EncodingRegime, Story, TaskFamily, TaskSpec,
    Vocabulary, COMMA,
};
use crate::memnn::{FactMemory, MemnnConfig, MemnnR, MemnnS};
use crate::model::ModelError;
use crate::nmt::{Nmt, NmtConfig};
use crate::nn::{read_checkpoint, write_checkpoint, AdamConfig, ParamStore, TrainSettings};
use crate::ntm::{select_answers, Ntm, NtmConfig, NtmLoss};
use crate::tensor::Tensor;

/// Consecutive perfect training epochs after which training stops early.
const PERFECT_EPOCHS_TO_STOP: usize = 3;

/// Train and test stories of one task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub name: String,
    pub family: Option<TaskFamily>,
    pub train: Vec<Story>,
    pub test: Vec<Story>,
}

impl TaskData {
    /// Whether some answers are word lists rather than single words.
    pub fn multi_answer(&self) -> bool {
        self.family == Some(TaskFamily::ListsSets)
            || self.train.iter().chain(&self.test).any(|s| s.answers.len() > 1)
    }

    fn all(&self) -> Vec<Story> {
        self.train.iter().chain(&self.test).cloned().collect()
    }
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for one purpose ("data", "model", ...) of one task.
fn derive_seed(seed: u64, task: &str, purpose: &str) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ fnv1a(task) ^ fnv1a(purpose).rotate_left(17)
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Generates or reads the stories named by the configuration.
pub fn load_tasks(cfg: &ExperimentConfig) -> Result<Vec<TaskData>> {
    match &cfg.source {
        TaskSource::Generated(families) => families
            .iter()
            .map(|&family| {
                let mut spec = TaskSpec::default_for(family, derive_seed(cfg.seed, family.name(), "data"));
                if let Some(lo) = cfg.story_min {
                    spec.min_statements = lo;
                }
                if let Some(hi) = cfg.story_max {
                    spec.max_statements = hi;
                }
                let (train, test) = generate_split(&spec, cfg.train_stories, cfg.test_stories)?;
                Ok(TaskData {
                    name: family.name().to_string(),
                    family: Some(family),
                    train,
                    test,
                })
            })
            .collect(),
        TaskSource::Files { name, train, test } => {
            let train = parse_babi(&read_file(train)?)?;
            let test = parse_babi(&read_file(test)?)?;
            if train.is_empty() || test.is_empty() {
                return Err(HarnessError::Config(format!("task {name} has an empty split")));
            }
            Ok(vec![TaskData {
                name: name.clone(),
                family: None,
                train,
                test,
            }])
        }
    }
}

/// A trained model of one task.
#[derive(Clone, Debug)]
pub enum TaskModel {
    Nmt(Nmt),
    Ntm(Ntm),
    MemnnS(MemnnS),
    MemnnR(MemnnR),
    Pipeline { search: MemnnS, reader: Nmt },
    /// The model cannot answer this task (list answers for the memory network).
    NotApplicable,
}

impl TaskModel {
    fn stores(&self) -> Vec<(&'static str, &ParamStore)> {
        match self {
            TaskModel::Nmt(m) => vec![("", m.store())],
            TaskModel::Ntm(m) => vec![("", m.store())],
            TaskModel::MemnnS(m) => vec![("", m.store())],
            TaskModel::MemnnR(m) => vec![("", m.store())],
            TaskModel::Pipeline { search, reader } => vec![("search/", search.store()), ("read/", reader.store())],
            TaskModel::NotApplicable => Vec::new(),
        }
    }

    fn stores_mut(&mut self) -> Vec<(&'static str, &mut ParamStore)> {
        match self {
            TaskModel::Nmt(m) => vec![("", m.store_mut())],
            TaskModel::Ntm(m) => vec![("", m.store_mut())],
            TaskModel::MemnnS(m) => vec![("", m.store_mut())],
            TaskModel::MemnnR(m) => vec![("", m.store_mut())],
            TaskModel::Pipeline { search, reader } => {
                vec![("search/", search.store_mut()), ("read/", reader.store_mut())]
            }
            TaskModel::NotApplicable => Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedTask {
    pub name: String,
    pub vocab: Vocabulary,
    pub answers: AnswerVocab,
    pub model: TaskModel,
}

/// Mean training loss and training accuracy after one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub task: String,
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

impl CurvePoint {
    pub fn to_csv(points: &[CurvePoint]) -> String {
        let mut s = String::from("task,epoch,loss,train_accuracy\n");
        for p in points {
            let _ = writeln!(s, "{},{},{:.6},{:.1}", p.task, p.epoch, p.loss, p.train_accuracy);
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct TrainedExperiment {
    pub config: ExperimentConfig,
    pub tasks: Vec<TrainedTask>,
    pub curve: Vec<CurvePoint>,
}

fn nmt_config(cfg: &ExperimentConfig, vocab: &Vocabulary, seed: u64) -> NmtConfig {
    NmtConfig {
        vocab_size: vocab.len(),
        embed_dim: cfg.embed_dim,
        hidden_dim: cfg.hidden_dim,
        attention_dim: cfg.attention_dim,
        seed,
    }
}

fn memnn_config(cfg: &ExperimentConfig, vocab: &Vocabulary, seed: u64) -> MemnnConfig {
    MemnnConfig {
        vocab_size: vocab.len(),
        embed_dim: cfg.embed_dim,
        margin: cfg.margin,
        max_hops: cfg.max_hops,
        seed,
    }
}

fn answer_ids(vocab: &Vocabulary, answers: &AnswerVocab) -> Result<Vec<usize>> {
    answers
        .words()
        .iter()
        .map(|w| vocab.id(w).ok_or_else(|| HarnessError::Evaluation(format!("answer {w} missing from vocabulary"))))
        .collect()
}

/// Untrained model for a task, seeded from the configuration and task name.
fn fresh_model(cfg: &ExperimentConfig, task: &TaskData, vocab: &Vocabulary, answers: &AnswerVocab) -> Result<TaskModel> {
    let seed = |purpose: &str| derive_seed(cfg.seed, &task.name, purpose);
    let memnn_applies = !task.multi_answer();
    Ok(match cfg.model {
        ModelKind::Nmt => TaskModel::Nmt(Nmt::new(nmt_config(cfg, vocab, seed("model")))?),
        ModelKind::Ntm => TaskModel::Ntm(Ntm::new(NtmConfig {
            vocab_size: vocab.len(),
            answer_size: answers.len(),
            embed_dim: cfg.embed_dim,
            controller_dim: cfg.hidden_dim,
            memory_rows: cfg.memory_rows,
            memory_width: cfg.memory_width,
            loss: if task.multi_answer() { NtmLoss::Binary } else { NtmLoss::Softmax },
            threshold: cfg.answer_threshold,
            seed: seed("model"),
        })?),
        ModelKind::MemnnS if memnn_applies => TaskModel::MemnnS(MemnnS::new(memnn_config(cfg, vocab, seed("model")))?),
        ModelKind::MemnnR if memnn_applies => TaskModel::MemnnR(MemnnR::new(
            memnn_config(cfg, vocab, seed("model")),
            answer_ids(vocab, answers)?,
        )?),
        ModelKind::MemnnS | ModelKind::MemnnR => TaskModel::NotApplicable,
        ModelKind::PipelineSNmt => TaskModel::Pipeline {
            search: MemnnS::new(memnn_config(cfg, vocab, seed("search")))
                .map_err(|source| HarnessError::Stage { stage: "search", source })?,
            reader: Nmt::new(nmt_config(cfg, vocab, seed("read")))
                .map_err(|source| HarnessError::Stage { stage: "read", source })?,
        },
    })
}

fn settings(cfg: &ExperimentConfig) -> TrainSettings {
    TrainSettings {
        adam: AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        clip_norm: cfg.clip_norm,
    }
}

/// Runs up to `epochs` shuffled passes over `n` samples. `step` trains on
/// one sample and reports its loss and whether it was already answered
/// exactly. Stops after enough consecutive perfect epochs.
fn fit<F>(task: &str, epochs: usize, n: usize, seed: u64, mut step: F) -> std::result::Result<Vec<CurvePoint>, ModelError>
where
    F: FnMut(usize) -> std::result::Result<(f64, bool), ModelError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::new();
    let mut perfect = 0;
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut correct) = (0.0, 0usize);
        for &i in &order {
            let (l, ok) = step(i)?;
            loss += l;
            correct += usize::from(ok);
        }
        let acc = 100.0 * correct as f64 / n as f64;
        curve.push(CurvePoint {
            task: task.to_string(),
            epoch,
            loss: loss / n as f64,
            train_accuracy: acc,
        });
        perfect = if correct == n { perfect + 1 } else { 0 };
        if perfect >= PERFECT_EPOCHS_TO_STOP {
            break;
        }
    }
    Ok(curve)
}

struct SearchSample {
    question: Vec<usize>,
    memory: FactMemory,
    gold: Vec<u32>,
}

fn search_samples(stories: &[Story], vocab: &Vocabulary) -> Result<Vec<SearchSample>> {
    stories
        .iter()
        .map(|s| {
            Ok(SearchSample {
                question: vocab.encode_tokens(&s.question)?,
                memory: FactMemory::from_story(s, vocab)?,
                gold: s.supporting_ids.clone(),
            })
        })
        .collect()
}

fn support_tokens(story: &Story, vocab: &Vocabulary) -> Result<Vec<Vec<usize>>> {
    story
        .supporting_ids
        .iter()
        .map(|&id| {
            let st = story
                .statement(id)
                .ok_or_else(|| HarnessError::Evaluation(format!("supporting fact {id} missing")))?;
            Ok(vocab.encode_tokens(&st.tokens)?)
        })
        .collect()
}

fn train_nmt(
    model: &mut Nmt,
    name: &str,
    stories: &[Story],
    vocab: &Vocabulary,
    regime: EncodingRegime,
    epochs: usize,
    seed: u64,
    settings: &TrainSettings,
) -> Result<std::result::Result<Vec<CurvePoint>, ModelError>> {
    let samples = stories
        .iter()
        .map(|s| encode(s, regime, None, vocab))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(fit(name, epochs, samples.len(), seed, |i| {
        model.train_step(&samples[i].input, &samples[i].target, settings)
    }))
}

fn train_search(
    model: &mut MemnnS,
    name: &str,
    stories: &[Story],
    vocab: &Vocabulary,
    epochs: usize,
    seed: u64,
    settings: &TrainSettings,
) -> Result<std::result::Result<Vec<CurvePoint>, ModelError>> {
    let samples = search_samples(stories, vocab)?;
    Ok(fit(name, epochs, samples.len(), seed, |i| {
        let s = &samples[i];
        let loss = model.train_step(&s.question, &s.memory, &s.gold, settings)?;
        Ok((loss, loss == 0.0))
    }))
}

fn train_task(cfg: &ExperimentConfig, task: &TaskData) -> Result<(TrainedTask, Vec<CurvePoint>)> {
    let all = task.all();
    let vocab = build_vocab(&all)?;
    let answers = AnswerVocab::from_stories(&all);
    let mut model = fresh_model(cfg, task, &vocab, &answers)?;
    let settings = settings(cfg);
    let order_seed = derive_seed(cfg.seed, &task.name, "order");
    let name = task.name.as_str();
    let curve = match &mut model {
        TaskModel::Nmt(m) => {
            let regime = cfg.reader_regime().expect("nmt runs on an encoding regime");
            train_nmt(m, name, &task.train, &vocab, regime, cfg.epochs, order_seed, &settings)??
        }
        TaskModel::Ntm(m) => {
            let regime = cfg.reader_regime().expect("ntm runs on an encoding regime");
            let mut samples = Vec::with_capacity(task.train.len());
            for s in &task.train {
                let input = encode(s, regime, None, &vocab)?.input;
                let gold: Vec<usize> = s.answers.iter().filter_map(|a| answers.index(a)).collect();
                samples.push((input, gold));
            }
            let (top_n, tau) = (cfg.top_n, cfg.answer_threshold);
            fit(name, cfg.epochs, samples.len(), order_seed, |i| {
                let (input, gold) = &samples[i];
                let (loss, dist) = m.train_step(input, gold, &settings)?;
                let predicted = select_answers(&dist, top_n, tau);
                let gold_set: BTreeSet<usize> = gold.iter().copied().collect();
                Ok((loss, predicted.into_iter().collect::<BTreeSet<_>>() == gold_set))
            })?
        }
        TaskModel::MemnnS(m) => train_search(m, name, &task.train, &vocab, cfg.epochs, order_seed, &settings)??,
        TaskModel::MemnnR(m) => {
            let mut samples = Vec::with_capacity(task.train.len());
            for s in &task.train {
                let index = answers
                    .index(&s.answers[0])
                    .ok_or_else(|| HarnessError::Evaluation(format!("answer {} missing", s.answers[0])))?;
                samples.push((vocab.encode_tokens(&s.question)?, support_tokens(s, &vocab)?, index));
            }
            fit(name, cfg.epochs, samples.len(), order_seed, |i| {
                let (q, facts, a) = &samples[i];
                let loss = m.train_step(q, facts, *a, &settings)?;
                Ok((loss, loss == 0.0))
            })?
        }
        TaskModel::Pipeline { search, reader } => {
            let search_name = format!("{name}/search");
            let mut curve = train_search(
                search,
                &search_name,
                &task.train,
                &vocab,
                cfg.search_epochs,
                derive_seed(cfg.seed, &task.name, "search-order"),
                &settings,
            )?
            .map_err(|source| HarnessError::Stage { stage: "search", source })?;
            let read_name = format!("{name}/read");
            curve.extend(
                train_nmt(
                    reader,
                    &read_name,
                    &task.train,
                    &vocab,
                    EncodingRegime::MarkedPassage,
                    cfg.epochs,
                    order_seed,
                    &settings,
                )?
                .map_err(|source| HarnessError::Stage { stage: "read", source })?,
            );
            curve
        }
        TaskModel::NotApplicable => Vec::new(),
    };
    Ok((
        TrainedTask {
            name: task.name.clone(),
            vocab,
            answers,
            model,
        },
        curve,
    ))
}

/// Trains one model per task.
pub fn train_experiment(cfg: &ExperimentConfig, data: &[TaskData]) -> Result<TrainedExperiment> {
    cfg.validate()?;
    let mut tasks = Vec::with_capacity(data.len());
    let mut curve = Vec::new();
    for task in data {
        let (t, c) = train_task(cfg, task)?;
        tasks.push(t);
        curve.extend(c);
    }
    Ok(TrainedExperiment {
        config: cfg.clone(),
        tasks,
        curve,
    })
}

impl TrainedExperiment {
    /// Every parameter, named `<task>/<parameter>`.
    pub fn records(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for t in &self.tasks {
            for (sub, store) in t.model.stores() {
                for (name, value) in store.records() {
                    out.push((format!("{}/{sub}{name}", t.name), value));
                }
            }
        }
        out
    }

    /// Rebuilds the models for `data` and overwrites their parameters.
    pub fn from_records(cfg: &ExperimentConfig, data: &[TaskData], records: &[(String, Tensor)]) -> Result<Self> {
        cfg.validate()?;
        let mut tasks = Vec::with_capacity(data.len());
        let mut used = 0;
        for task in data {
            let all = task.all();
            let vocab = build_vocab(&all)?;
            let answers = AnswerVocab::from_stories(&all);
            let mut model = fresh_model(cfg, task, &vocab, &answers)?;
            for (sub, store) in model.stores_mut() {
                let prefix = format!("{}/{sub}", task.name);
                let mine: Vec<(String, Tensor)> = records
                    .iter()
                    .filter_map(|(n, t)| {
                        n.strip_prefix(&prefix)
                            .filter(|rest| sub != "" || !rest.contains('/'))
                            .map(|rest| (rest.to_string(), t.clone()))
                    })
                    .collect();
                used += mine.len();
                store.load(&mine)?;
            }
            tasks.push(TrainedTask {
                name: task.name.clone(),
                vocab,
                answers,
                model,
            });
        }
        if used != records.len() {
            return Err(HarnessError::Config(format!(
                "checkpoint holds {} tensors that match no task",
                records.len() - used
            )));
        }
        Ok(TrainedExperiment {
            config: cfg.clone(),
            tasks,
            curve: Vec::new(),
        })
    }

    /// Scores every task on its test split.
    pub fn evaluate(&self, data: &[TaskData]) -> Result<EvalReport> {
        let mut report = EvalReport::new(self.config.model.name(), &self.config.regime.to_string(), self.config.seed);
        for (task, d) in self.tasks.iter().zip(data) {
            if task.name != d.name {
                return Err(HarnessError::Evaluation(format!("model for {} given data for {}", task.name, d.name)));
            }
            report.rows.push((task.name.clone(), evaluate(task, &d.test, &self.config)?));
        }
        Ok(report)
    }
}

/// Percentage of stories whose predicted answer set equals the gold set.
pub fn answer_accuracy(predicted: &[BTreeSet<String>], gold: &[Story]) -> Result<f64> {
    if gold.is_empty() {
        return Err(HarnessError::Evaluation("empty test set".into()));
    }
    if predicted.len() != gold.len() {
        return Err(HarnessError::Evaluation(format!(
            "{} predictions for {} stories",
            predicted.len(),
            gold.len()
        )));
    }
    let correct = predicted.iter().zip(gold).filter(|(p, g)| **p == g.answer_set()).count();
    Ok(100.0 * correct as f64 / gold.len() as f64)
}

fn decode_words(tokens: &[usize], vocab: &Vocabulary) -> BTreeSet<String> {
    tokens
        .split(|&t| t == COMMA)
        .filter(|w| !w.is_empty())
        .map(|w| {
            w.iter()
                .map(|&t| vocab.token(t).unwrap_or("<unk>"))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

fn nmt_predictions(
    reader: &Nmt,
    stories: &[Story],
    vocab: &Vocabulary,
    regime: EncodingRegime,
    marks: Option<&[BTreeSet<u32>]>,
    max_len: usize,
) -> Result<Vec<BTreeSet<String>>> {
    stories
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let sample = encode(s, regime, marks.map(|m| &m[i]), vocab)?;
            Ok(decode_words(&reader.generate(&sample.input, max_len)?, vocab))
        })
        .collect()
}

/// Which marks the pipeline's reader sees at test time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarkSource {
    /// Facts found by the searcher.
    Predicted,
    /// Gold supporting facts.
    Gold,
}

/// Accuracy of the search-then-read pipeline.
pub fn evaluate_pipeline(
    search: &MemnnS,
    reader: &Nmt,
    vocab: &Vocabulary,
    stories: &[Story],
    max_hops: usize,
    max_answer_len: usize,
    source: MarkSource,
) -> Result<f64> {
    let predicted = match source {
        MarkSource::Gold => nmt_predictions(reader, stories, vocab, EncodingRegime::MarkedPassage, None, max_answer_len)?,
        MarkSource::Predicted => {
            let marks = search_samples(stories, vocab)?
                .iter()
                .map(|s| {
                    let found = search
                        .search_facts(&s.question, &s.memory, max_hops)
                        .map_err(|source| HarnessError::Stage { stage: "search", source })?;
                    Ok(found.ids.into_iter().collect())
                })
                .collect::<Result<Vec<BTreeSet<u32>>>>()?;
            nmt_predictions(
                reader,
                stories,
                vocab,
                EncodingRegime::PredictedMarked,
                Some(&marks),
                max_answer_len,
            )?
        }
    };
    answer_accuracy(&predicted, stories)
}

/// Percentage of stories whose predicted supporting-fact set equals the gold set.
pub fn support_accuracy(predicted: &[BTreeSet<u32>], gold: &[Story]) -> Result<f64> {
    if gold.is_empty() {
        return Err(HarnessError::Evaluation("empty test set".into()));
    }
    if predicted.len() != gold.len() {
        return Err(HarnessError::Evaluation(format!(
            "{} predictions for {} stories",
            predicted.len(),
            gold.len()
        )));
    }
    let correct = predicted.iter().zip(gold).filter(|(p, g)| **p == g.support_set()).count();
    Ok(100.0 * correct as f64 / gold.len() as f64)
}

/// Percentage of stories whose searched fact set equals the gold set.
pub fn evaluate_support(search: &MemnnS, vocab: &Vocabulary, stories: &[Story], max_hops: usize) -> Result<f64> {
    let predicted = search_samples(stories, vocab)?
        .iter()
        .map(|s| Ok(search.search_facts(&s.question, &s.memory, max_hops)?.ids.into_iter().collect()))
        .collect::<Result<Vec<BTreeSet<u32>>>>()?;
    support_accuracy(&predicted, stories)
}

/// Test accuracy of one trained task; `None` when the model does not apply.
pub fn evaluate(task: &TrainedTask, stories: &[Story], cfg: &ExperimentConfig) -> Result<Option<f64>> {
    let vocab = &task.vocab;
    let acc = match &task.model {
        TaskModel::Nmt(m) => {
            let regime = cfg.reader_regime().expect("nmt runs on an encoding regime");
            answer_accuracy(&nmt_predictions(m, stories, vocab, regime, None, cfg.max_answer_len)?, stories)?
        }
        TaskModel::Ntm(m) => {
            let regime = cfg.reader_regime().expect("ntm runs on an encoding regime");
            let predicted = stories
                .iter()
                .map(|s| {
                    let input = encode(s, regime, None, vocab)?.input;
                    Ok(m.answer(&input, cfg.top_n)?
                        .into_iter()
                        .map(|i| task.answers.word(i).to_string())
                        .collect())
                })
                .collect::<Result<Vec<BTreeSet<String>>>>()?;
            answer_accuracy(&predicted, stories)?
        }
        TaskModel::MemnnS(m) => evaluate_support(m, vocab, stories, cfg.max_hops)?,
        TaskModel::MemnnR(m) => {
            let predicted = stories
                .iter()
                .map(|s| {
                    let q = vocab.encode_tokens(&s.question)?;
                    let a = m.respond(&q, &support_tokens(s, vocab)?)?;
                    Ok(BTreeSet::from([task.answers.word(a).to_string()]))
                })
                .collect::<Result<Vec<_>>>()?;
            answer_accuracy(&predicted, stories)?
        }
        TaskModel::Pipeline { search, reader } => evaluate_pipeline(
            search,
            reader,
            vocab,
            stories,
            cfg.max_hops,
            cfg.max_answer_len,
            MarkSource::Predicted,
        )?,
        TaskModel::NotApplicable => return Ok(None),
    };
    Ok(Some(acc))
}

/// Loads (or generates) the data, trains, and evaluates on the test split.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(EvalReport, Vec<CurvePoint>)> {
    let start = Instant::now();
    cfg.validate()?;
    let data = load_tasks(cfg)?;
    let trained = train_experiment(cfg, &data)?;
    let mut report = trained.evaluate(&data)?;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((report, trained.curve))
}

pub fn write_checkpoint_file(path: &Path, records: &[(String, Tensor)]) -> Result<()> {
    let io_err = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    write_checkpoint(BufWriter::new(file), records)?;
    Ok(())
}

pub fn read_checkpoint_file(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let file = fs::File::open(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(read_checkpoint(BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EncodingRegime;
    use crate::harness::Regime;

    fn tiny(model: ModelKind, regime: Regime, families: Vec<TaskFamily>) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(model, regime, TaskSource::Generated(families));
        c.train_stories = 30;
        c.test_stories = 10;
        c.epochs = 1;
        c.embed_dim = 6;
        c.hidden_dim = 6;
        c.attention_dim = 4;
        c.memory_rows = 8;
        c.memory_width = 4;
        c
    }

    #[test]
    fn accuracy_rules() {
        let gold = parse_babi("1 a.\n2 b?\tx,y\t1\n").unwrap();
        let stories: Vec<Story> = (0..10).map(|_| gold[0].clone()).collect();
        let right: BTreeSet<String> = ["y".to_string(), "x".to_string()].into();
        let wrong: BTreeSet<String> = ["x".to_string()].into();
        let all: Vec<_> = (0..10).map(|_| right.clone()).collect();
        assert_eq!(answer_accuracy(&all, &stories).unwrap(), 100.0);
        let half: Vec<_> = (0..10).map(|i| if i < 5 { right.clone() } else { wrong.clone() }).collect();
        assert_eq!(answer_accuracy(&half, &stories).unwrap(), 50.0);
        assert!(answer_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn memnn_on_lists_is_not_applicable() {
        let cfg = tiny(ModelKind::MemnnR, Regime::FactResponse, vec![TaskFamily::ListsSets, TaskFamily::OneFact]);
        let (report, _) = run_experiment(&cfg).unwrap();
        assert_eq!(report.rows[0], ("lists_sets".to_string(), None));
        assert!(report.rows[1].1.is_some());
    }

    #[test]
    fn checkpoint_records_rebuild_the_same_predictions() {
        for (model, regime) in [
            (ModelKind::Nmt, Regime::Encoding(EncodingRegime::RawPassage)),
            (ModelKind::Ntm, Regime::Encoding(EncodingRegime::FactsOnly)),
            (ModelKind::PipelineSNmt, Regime::Encoding(EncodingRegime::PredictedMarked)),
        ] {
            let cfg = tiny(model, regime, vec![TaskFamily::OneFact]);
            let data = load_tasks(&cfg).unwrap();
            let trained = train_experiment(&cfg, &data).unwrap();
            let rebuilt = TrainedExperiment::from_records(&cfg, &data, &trained.records()).unwrap();
            assert_eq!(trained.evaluate(&data).unwrap(), rebuilt.evaluate(&data).unwrap());
        }
    }

    #[test]
    fn stray_records_are_rejected() {
        let cfg = tiny(ModelKind::MemnnS, Regime::FactSearch, vec![TaskFamily::OneFact]);
        let data = load_tasks(&cfg).unwrap();
        let trained = train_experiment(&cfg, &data).unwrap();
        let mut records = trained.records();
        records.push(("two_facts/u_o".into(), Tensor::zeros(&[1])));
        assert!(TrainedExperiment::from_records(&cfg, &data, &records).is_err());
    }

    #[test]
    fn zero_epochs_leaves_the_model_untrained() {
        let mut cfg = tiny(ModelKind::Nmt, Regime::Encoding(EncodingRegime::FactsOnly), vec![TaskFamily::OneFact]);
        cfg.epochs = 0;
        let (report, curve) = run_experiment(&cfg).unwrap();
        assert!(curve.is_empty());
        assert!(report.rows[0].1.unwrap() <= 50.0);
    }
}
