use std::collections::BTreeSet;

use memqa_core::corpus::{generate_task, parse_babi, EncodingRegime, Story, TaskFamily, TaskSpec};
use memqa_core::harness::{
    answer_accuracy, emit_table, evaluate_pipeline, evaluate_support, load_tasks, read_checkpoint_file,
    run_experiment, support_accuracy, train_experiment, write_checkpoint_file, EvalReport, ExperimentConfig,
    HarnessError, MarkSource, ModelKind, Regime, TaskModel, TaskSource, TrainedExperiment,
};
use memqa_core::memnn::{MemnnConfig, MemnnS};
use proptest::prelude::*;

fn small(model: ModelKind, regime: Regime, families: &[TaskFamily]) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(model, regime, TaskSource::Generated(families.to_vec()));
    c.train_stories = 40;
    c.test_stories = 20;
    c.epochs = 2;
    c.embed_dim = 8;
    c.hidden_dim = 8;
    c.attention_dim = 6;
    c.memory_rows = 8;
    c.memory_width = 6;
    c
}

fn stories(text: &str, copies: usize) -> Vec<Story> {
    let one = parse_babi(text).unwrap();
    (0..copies).flat_map(|_| one.clone()).collect()
}

fn set(words: &[&str]) -> BTreeSet<String> {
    words.iter().map(|w| w.to_string()).collect()
}

#[test]
fn answers_compare_as_sets() {
    let gold = stories("1 Mary got the milk.\n2 Mary took the apple.\n3 What is Mary carrying?\tmilk,apple\t1 2\n", 10);
    let right = vec![set(&["apple", "milk"]); 10];
    assert_eq!(answer_accuracy(&right, &gold).unwrap(), 100.0);
    let mut half = right.clone();
    for p in half.iter_mut().take(5) {
        *p = set(&["milk"]);
    }
    assert_eq!(answer_accuracy(&half, &gold).unwrap(), 50.0);
    assert!(matches!(answer_accuracy(&[], &[]), Err(HarnessError::Evaluation(_))));
}

#[test]
fn supports_compare_as_sets() {
    let text = "1 a.\n2 b.\n3 c.\n4 d.\n5 e.\n6 f.\n7 q?\tx\t2 5\n";
    let gold = stories(text, 1);
    assert_eq!(support_accuracy(&[BTreeSet::from([5, 2])], &gold).unwrap(), 100.0);
    assert_eq!(support_accuracy(&[BTreeSet::from([2, 5, 6])], &gold).unwrap(), 0.0);
    assert_eq!(support_accuracy(&[BTreeSet::from([2])], &gold).unwrap(), 0.0);
    assert!(support_accuracy(&[], &[]).is_err());
}

#[test]
fn invalid_pairs_fail_before_training() {
    for (model, regime) in [
        (ModelKind::Ntm, Regime::Encoding(EncodingRegime::RawPassage)),
        (ModelKind::MemnnS, Regime::FactResponse),
        (ModelKind::Nmt, Regime::FactSearch),
        (ModelKind::PipelineSNmt, Regime::Encoding(EncodingRegime::MarkedPassage)),
    ] {
        let cfg = small(model, regime, &[TaskFamily::OneFact]);
        assert!(matches!(run_experiment(&cfg), Err(HarnessError::Config(_))), "{model} {regime}");
    }
}

#[test]
fn train_and_eval_are_deterministic() {
    for (model, regime) in [
        (ModelKind::Nmt, Regime::Encoding(EncodingRegime::MarkedPassage)),
        (ModelKind::Ntm, Regime::Encoding(EncodingRegime::FactsOnly)),
        (ModelKind::MemnnS, Regime::FactSearch),
        (ModelKind::MemnnR, Regime::FactResponse),
        (ModelKind::PipelineSNmt, Regime::Encoding(EncodingRegime::PredictedMarked)),
    ] {
        let cfg = small(model, regime, &[TaskFamily::OneFact, TaskFamily::YesNo]);
        let (a, curve_a) = run_experiment(&cfg).unwrap();
        let (b, curve_b) = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv(), "{model}");
        assert_eq!(curve_a, curve_b);
        assert_eq!(a.regime, regime.to_string());
    }
}

#[test]
fn checkpoint_files_round_trip() {
    let cfg = small(ModelKind::Ntm, Regime::Encoding(EncodingRegime::MarkedPassage), &[TaskFamily::TwoFacts]);
    let data = load_tasks(&cfg).unwrap();
    let trained = train_experiment(&cfg, &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    write_checkpoint_file(&path, &trained.records()).unwrap();
    let restored = TrainedExperiment::from_records(&cfg, &data, &read_checkpoint_file(&path).unwrap()).unwrap();
    assert_eq!(trained.evaluate(&data).unwrap().to_csv(), restored.evaluate(&data).unwrap().to_csv());
    assert!(matches!(
        read_checkpoint_file(&dir.path().join("missing")),
        Err(HarnessError::Io { .. })
    ));
}

#[test]
fn gold_marks_reduce_the_pipeline_to_marked_reading() {
    let cfg = small(ModelKind::PipelineSNmt, Regime::Encoding(EncodingRegime::PredictedMarked), &[TaskFamily::OneFact]);
    let data = load_tasks(&cfg).unwrap();
    let trained = train_experiment(&cfg, &data).unwrap();
    let task = &trained.tasks[0];
    let TaskModel::Pipeline { search, reader } = &task.model else {
        panic!("expected a pipeline");
    };
    let with_gold = evaluate_pipeline(search, reader, &task.vocab, &data[0].test, 3, 4, MarkSource::Gold).unwrap();

    let mut marked = cfg.clone();
    marked.model = ModelKind::Nmt;
    marked.regime = Regime::Encoding(EncodingRegime::MarkedPassage);
    // A marked-passage NMT run carrying the pipeline reader's parameters.
    let records: Vec<_> = trained
        .records()
        .into_iter()
        .filter_map(|(n, t)| n.strip_prefix("one_fact/read/").map(|r| (format!("one_fact/{r}"), t)))
        .collect();
    let rebuilt = TrainedExperiment::from_records(&marked, &data, &records).unwrap();
    let report = rebuilt.evaluate(&data).unwrap();
    assert_eq!(report.accuracy("one_fact"), Some(with_gold));
}

/// Probability that a uniformly random pair of statements is the gold pair.
fn pairing_chance(stories: &[Story]) -> f64 {
    let total: f64 = stories
        .iter()
        .map(|s| {
            let n = s.statements.len() as f64;
            2.0 / (n * (n - 1.0))
        })
        .sum();
    100.0 * total / stories.len() as f64
}

#[test]
fn untrained_search_is_near_pairing_chance() {
    let test = generate_task(&TaskSpec::default_for(TaskFamily::TwoFacts, 8), 300).unwrap();
    let vocab = memqa_core::corpus::build_vocab(&test).unwrap();
    let chance = pairing_chance(&test);
    let seeds = 5;
    let mut total = 0.0;
    for seed in 0..seeds {
        let m = MemnnS::new(MemnnConfig {
            seed,
            ..MemnnConfig::new(vocab.len())
        })
        .unwrap();
        total += evaluate_support(&m, &vocab, &test, 3).unwrap();
    }
    let mean = total / seeds as f64;
    // An untrained scorer has no reason to prefer the gold pair; allow for
    // the fixed biases an arbitrary init has towards some positions.
    assert!(mean <= 3.0 * chance + 5.0, "untrained {mean:.1}% vs chance {chance:.1}%");
}

#[test]
fn emit_table_reproduces_published_means() {
    let col_i = [
        98.2, 41.3, 33.4, 97.8, 90.3, 84.6, 82.4, 70.8, 89.3, 73.5, 99.8, 99.4, 99.7, 44.4, 42.9, 42.7, 64.6, 90.9,
        9.3, 91.6,
    ];
    let mut r = EvalReport::new("nmt", "raw_passage", 1);
    r.rows = col_i.iter().enumerate().map(|(i, &a)| (format!("qa{}", i + 1), Some(a))).collect();
    let table = emit_table(&[("i".into(), r)]).unwrap();
    assert!(table.csv.ends_with("mean,72.3\n"), "{}", table.csv);
}

fn column() -> impl Strategy<Value = Vec<Option<f64>>> {
    proptest::collection::vec(proptest::option::weighted(0.8, 0.0..=100.0f64), 1..12)
}

proptest! {
    #[test]
    fn table_means_recompute_from_cells(a in column(), b in column()) {
        let report = |cells: &[Option<f64>]| {
            let mut r = EvalReport::new("m", "r", 1);
            r.rows = cells.iter().enumerate().map(|(i, c)| (format!("t{i}"), *c)).collect();
            r
        };
        let table = emit_table(&[("a".into(), report(&a)), ("b".into(), report(&b))]).unwrap();
        let rows: Vec<Vec<&str>> = table.csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
        let (body, mean_row) = rows.split_at(rows.len() - 1);
        for col in 1..=2 {
            let cells: Vec<f64> = body.iter().filter_map(|r| r[col].parse().ok()).collect();
            if cells.is_empty() {
                prop_assert_eq!(mean_row[0][col], "N/A");
            } else {
                let recomputed = cells.iter().sum::<f64>() / cells.len() as f64;
                prop_assert_eq!(mean_row[0][col], format!("{recomputed:.1}"));
            }
        }
        let csv = report(&a).to_csv();
        prop_assert_eq!(EvalReport::from_csv(&csv, "a").unwrap().to_csv(), csv);
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = ExperimentConfig::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
        seen += 1;
    }
    assert!(seen >= 5);
}
