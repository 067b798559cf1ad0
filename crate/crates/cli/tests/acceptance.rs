//! Acceptance suite: one test per release criterion, each printing a single
//! `criterion N: pass/fail` line (visible with `--nocapture`).
//!
//! Criteria 1-9 run at desk scale on synthetic data. Criteria 10-12 need
//! licensed corpora, so they are `#[ignore]`d and look for the corpus
//! locations in environment variables (see each test).

use std::collections::HashSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use rstkit_cli::commands;
use rstkit_cli::config::RunConfig;
use rstkit_core::corpus::{load_harmonized_corpus, load_raw_corpus, write_harmonized_corpus, AccessLog};
use rstkit_core::crosslingual::{coverage_report, BilingualDictionary, EmbeddingTable};
use rstkit_core::decode;
use rstkit_core::evaluate::{right_branching, score, split_corpus};
use rstkit_core::features::FeatureExtractor;
use rstkit_core::harmonize::{binarize, harmonize_document, HarmonizeError, LabelMapping};
use rstkit_core::ingest::{lift_relations, RawLeaf, RawNode, RawRole};
use rstkit_core::model::{
    gradient_check, oracle_examples, train, training_accuracy, Hyperparams, ModelParams, Trainer,
};
use rstkit_core::synth::{
    random_raw_tree, random_tree, random_tree_with_labels, toy_corpus, toy_document,
    WELL_FORMED_PATTERNS,
};
use rstkit_core::transition::{oracle, replay, Configuration};
use rstkit_core::tree::{NucPattern, RelationClass, RstNode, RstTree};

/// Run one criterion body and print its verdict whether it passes or not.
fn criterion(n: usize, desc: &str, body: impl FnOnce()) {
    let result = catch_unwind(AssertUnwindSafe(body));
    println!(
        "criterion {n}: {} — {desc}",
        if result.is_ok() { "pass" } else { "fail" }
    );
    if let Err(cause) = result {
        std::panic::resume_unwind(cause);
    }
}

#[test]
fn c01_oracle_round_trip() {
    criterion(1, "oracle/replay round-trip over 200 random labeled trees", || {
        let labels: Vec<(NucPattern, RelationClass)> = WELL_FORMED_PATTERNS
            .iter()
            .flat_map(|&p| RelationClass::ALL.iter().map(move |&r| (p, r)))
            .collect();
        assert_eq!(labels.len(), 54);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = Instant::now();
        for _ in 0..200 {
            let n = rng.random_range(2..=60);
            let tree = random_tree_with_labels(&mut rng, n, &labels);
            let actions = oracle(&tree).expect("gold trees have an action sequence");
            assert_eq!(actions.len(), 2 * n - 1);
            assert_eq!(replay(&actions, n).expect("oracle sequences replay"), tree);
        }
        let elapsed = start.elapsed();
        assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    });
}

fn raw_leaf(role: RawRole, relation: Option<&str>, edu: usize) -> RawNode {
    RawNode::leaf(
        role,
        relation.map(str::to_string),
        RawLeaf {
            source_id: (edu + 1).to_string(),
            order: edu + 1,
            edu,
            text: format!("unit {edu}"),
        },
    )
}

fn assert_well_formed_patterns<R>(node: &RstNode<R>) {
    if let RstNode::Internal {
        left,
        right,
        pattern,
        ..
    } = node
    {
        assert!(pattern.is_well_formed(), "binarization created {pattern:?}");
        assert_well_formed_patterns(left);
        assert_well_formed_patterns(right);
    }
}

#[test]
fn c02_binarization() {
    criterion(2, "binarizing 200 random n-ary trees plus the exact 4-child shape", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let start = Instant::now();
        for _ in 0..200 {
            let n = rng.random_range(1..=40);
            let mut raw = random_raw_tree(&mut rng, n);
            lift_relations(&mut raw).expect("generated trees lift");
            let tree = harmonize_document(&raw, LabelMapping::builtin())
                .expect("generated trees harmonize");
            assert!(tree.validate().is_empty());
            assert_eq!(tree.root.leaves(), (0..n).collect::<Vec<_>>());
            assert_well_formed_patterns(&tree.root);
        }
        let elapsed = start.elapsed();
        assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");

        // The documented 4-child case: S1-Ri, N2, S3-Rj, S4-Rk must become
        // SN-Ri(S1, NS-Rk(NS-Rj(N2, S3), S4)), node for node.
        let raw = RawNode::internal(
            RawRole::Unset,
            None,
            vec![
                raw_leaf(RawRole::Satellite, Some("attribution"), 0),
                raw_leaf(RawRole::Nucleus, None, 1),
                raw_leaf(RawRole::Satellite, Some("cause"), 2),
                raw_leaf(RawRole::Satellite, Some("condition"), 3),
            ],
        );
        let expected = RstNode::internal(
            RstNode::leaf(0),
            RstNode::internal(
                RstNode::internal(
                    RstNode::leaf(1),
                    RstNode::leaf(2),
                    NucPattern::NS,
                    "cause".to_string(),
                ),
                RstNode::leaf(3),
                NucPattern::NS,
                "condition".to_string(),
            ),
            NucPattern::SN,
            "attribution".to_string(),
        );
        assert_eq!(binarize(&raw).unwrap(), expected);
    });
}

#[test]
fn c03_label_mapping() {
    criterion(3, "relation names map onto all 18 classes with suffix stripping", || {
        let m = LabelMapping::builtin();
        // One documented name per class.
        let documented = [
            ("attribution", RelationClass::Attribution),
            ("preparation", RelationClass::Background),
            ("volitional-cause", RelationClass::Cause),
            ("comparison", RelationClass::Comparison),
            ("condition", RelationClass::Condition),
            ("antithesis", RelationClass::Contrast),
            ("parenthetical", RelationClass::Elaboration),
            ("purpose", RelationClass::Enablement),
            ("interpretation", RelationClass::Evaluation),
            ("motivation", RelationClass::Explanation),
            ("list", RelationClass::Joint),
            ("means", RelationClass::MannerMeans),
            ("same-unit", RelationClass::SameUnit),
            ("restatement", RelationClass::Summary),
            ("sequence", RelationClass::Temporal),
            ("textual-organization", RelationClass::TextualOrganization),
            ("topic-shift", RelationClass::TopicChange),
            ("rhetorical-question", RelationClass::TopicComment),
        ];
        for (name, class) in documented {
            assert_eq!(m.map(name).unwrap(), class, "{name}");
        }

        // Every row of the shipped table maps to its stated class, and the
        // rows jointly cover the full 18-class inventory.
        let table = fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../core/data/label_map.tsv"
        ))
        .expect("the mapping table ships with the library");
        let mut covered = HashSet::new();
        for line in table.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
            let (name, class) = line.split_once('\t').expect("table rows are two columns");
            let mapped = m.map(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(mapped.name(), class.trim(), "{name}");
            covered.insert(mapped);
        }
        assert_eq!(covered.len(), RelationClass::ALL.len());

        // Suffixed variants map identically to their base names.
        assert_eq!(m.map("elaboration-e").unwrap(), RelationClass::Elaboration);
        assert_eq!(m.map("attribution-s").unwrap(), RelationClass::Attribution);
        assert_eq!(m.map("cause-mn").unwrap(), RelationClass::Cause);
        assert_eq!(m.map("same-unit-s").unwrap(), RelationClass::SameUnit);

        // Unknown names fail loudly, naming the relation.
        match m.map("no-such-relation") {
            Err(HarmonizeError::UnmappedRelation { name, .. }) => {
                assert_eq!(name, "no-such-relation");
            }
            other => panic!("expected an unmapped-relation error, got {other:?}"),
        }
    });
}

#[test]
fn c04_metric_oracle() {
    criterion(4, "scoring identity, metric nesting, and the frozen hand examples", || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = rng.random_range(1..=30);
            let tree = random_tree(&mut rng, n);
            let s = score(std::slice::from_ref(&tree), std::slice::from_ref(&tree)).unwrap();
            assert_eq!((s.span, s.nuc, s.rel), (100.0, 100.0, 100.0));
        }
        for _ in 0..100 {
            let n = rng.random_range(2..=30);
            let gold = random_tree(&mut rng, n);
            let pred = random_tree(&mut rng, n);
            let s = score(&[pred], &[gold]).unwrap();
            assert!(s.rel <= s.nuc && s.nuc <= s.span, "{s}");
        }

        // Hand examples over the two-internal-node gold tree
        // NS-Attribution(NN-Comparison(1, 2), 3).
        let gold = RstTree::new(RstNode::internal(
            RstNode::internal(
                RstNode::leaf(0),
                RstNode::leaf(1),
                NucPattern::NN,
                RelationClass::Comparison,
            ),
            RstNode::leaf(2),
            NucPattern::NS,
            RelationClass::Attribution,
        ));
        let check = |pred: &RstTree, expected: (f64, f64, f64)| {
            let s = score(std::slice::from_ref(pred), std::slice::from_ref(&gold)).unwrap();
            assert_eq!((s.span, s.nuc, s.rel), expected);
        };

        // Same tree with Comparison swapped for Joint: only the relation
        // layer loses one of two constituents.
        let relabeled = RstTree::new(RstNode::internal(
            RstNode::internal(
                RstNode::leaf(0),
                RstNode::leaf(1),
                NucPattern::NN,
                RelationClass::Joint,
            ),
            RstNode::leaf(2),
            NucPattern::NS,
            RelationClass::Attribution,
        ));
        check(&relabeled, (100.0, 100.0, 50.0));

        // A right-branching NS-Elaboration chain shares only the root span
        // with the left-branching gold.
        check(
            &right_branching(3, NucPattern::NS, RelationClass::Elaboration),
            (50.0, 50.0, 0.0),
        );

        // The left-branching NS-Elaboration chain matches both spans but
        // only the root's nuclearity and neither relation.
        let left_chain = RstTree::new(RstNode::internal(
            RstNode::internal(
                RstNode::leaf(0),
                RstNode::leaf(1),
                NucPattern::NS,
                RelationClass::Elaboration,
            ),
            RstNode::leaf(2),
            NucPattern::NS,
            RelationClass::Elaboration,
        ));
        check(&left_chain, (100.0, 50.0, 0.0));
    });
}

#[test]
fn c05_gradient_check() {
    criterion(5, "analytic gradients match finite differences within 1e-4", || {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 977 + 5);
            let docs = toy_corpus(&mut rng, 2, 3 + (seed as usize) % 3);
            let examples = oracle_examples(&docs).unwrap();
            let hp = Hyperparams {
                seed,
                ..Hyperparams::default()
            };
            let mut model = Trainer::new(examples.clone(), hp).unwrap().model().clone();
            let batch = &examples[..examples.len().min(6)];
            let worst = gradient_check(&mut model, batch, 1e-5, 4, seed).unwrap();
            assert!(worst < 1e-4, "seed {seed}: worst relative error {worst:e}");
        }
    });
}

#[test]
fn c06_overfit() {
    criterion(6, "training memorizes five small documents and re-parses them exactly", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let docs = toy_corpus(&mut rng, 5, 4);
        let examples = oracle_examples(&docs).unwrap();
        // Inference uses the averaged parameters, which trail the current
        // ones early in training, so at exactly 20 epochs the bar is only
        // cleared for some corpus/init seeds; this fixture is the
        // documented one.
        let hp = Hyperparams {
            learning_rate: 0.02,
            decay: 0.0,
            epochs: 20,
            beam: 1,
            seed: 16,
        };
        let model = train(examples.clone(), hp).unwrap();
        let accuracy = training_accuracy(&model, &examples);
        assert!(accuracy >= 0.99, "oracle-action accuracy {accuracy}");
        for doc in &docs {
            let parsed = decode::parse(doc, &model, 1).unwrap();
            assert_eq!(&parsed.tree, doc.gold.as_ref().unwrap(), "{}", doc.id);
        }
        let elapsed = start.elapsed();
        assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    });
}

#[test]
fn c07_beam_monotonicity() {
    criterion(7, "a width-32 beam never scores below greedy, and beam one is greedy", || {
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xACCE55);
            let train_docs = toy_corpus(&mut rng, 2, 3);
            let examples = oracle_examples(&train_docs).unwrap();
            let hp = Hyperparams {
                seed,
                ..Hyperparams::default()
            };
            let model = Trainer::new(examples, hp).unwrap().model().clone();
            let n = rng.random_range(5..=15);
            let doc = toy_document("probe", n, &mut rng);

            let narrow = decode::parse(&doc, &model, 1).unwrap();
            let wide = decode::parse(&doc, &model, 32).unwrap();
            assert!(
                wide.log_prob >= narrow.log_prob - 1e-9,
                "seed {seed}: beam 32 {} < beam 1 {}",
                wide.log_prob,
                narrow.log_prob
            );

            // Beam one must equal an independently computed greedy argmax.
            let extractor = FeatureExtractor::for_language(&doc.language);
            let mut config = Configuration::initial(n).unwrap();
            let mut greedy = Vec::new();
            while !config.is_terminal() {
                let probs = model.forward(&extractor.config_symbols(&config, &doc));
                let best = model
                    .actions()
                    .iter()
                    .zip(&probs)
                    .filter(|(a, _)| config.is_legal(a))
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .expect("legal actions exist")
                    .0;
                greedy.push(*best);
                config = config.apply(best).unwrap();
            }
            assert_eq!(narrow.actions, greedy, "seed {seed}");
        }
    });
}

fn toy_corpus_on_disk(dir: &Path, lang: &str, n_docs: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs: Vec<_> = (0..n_docs)
        .map(|i| {
            let mut doc = toy_document(&format!("{lang}-{i:03}"), 3 + i % 3, &mut rng);
            doc.language = lang.to_string();
            doc
        })
        .collect();
    write_harmonized_corpus(dir, &docs).expect("corpus writes")
}

#[test]
fn c08_train_determinism() {
    criterion(8, "identical train runs give identical models and dev score tables", || {
        let tmp = TempDir::new().unwrap();
        let make = |name: &str| {
            let dir = tmp.path().join(name);
            fs::create_dir(&dir).unwrap();
            dir
        };
        let de = toy_corpus_on_disk(&make("de"), "de", 2, 81);
        let pt = toy_corpus_on_disk(&make("pt"), "pt", 2, 82);
        let eu = toy_corpus_on_disk(&make("eu"), "eu", 39, 83);
        let config_text = format!(
            "mode = cross-plus-dev\nseed = 7\ntarget = eu\nsources = de,pt\n\
             manifest.de = {}\nmanifest.pt = {}\nmanifest.eu = {}\n\
             learning_rates = 0.02\ndecays = 0\nmax_epochs = 2\nbeams = 1\n\
             model = model.bin\noutput = scores\n",
            de.display(),
            pt.display(),
            eu.display()
        );

        let run = |name: &str| -> (PathBuf, Vec<u8>) {
            let dir = make(name);
            let config = RunConfig::from_text(&config_text, &[], &dir).unwrap();
            let mut out = Vec::new();
            commands::train(&config, &mut out).expect("training succeeds");
            (dir, out)
        };
        let (dir_a, out_a) = run("a");
        let (dir_b, out_b) = run("b");

        let model_a = fs::read(dir_a.join("model.bin")).unwrap();
        let model_b = fs::read(dir_b.join("model.bin")).unwrap();
        assert_eq!(model_a, model_b, "model files differ");
        // The trailing 32 bytes are the container checksum; spelled out so a
        // checksum mismatch is reported even if the assert above changes.
        assert_eq!(model_a[model_a.len() - 32..], model_b[model_b.len() - 32..]);
        assert_eq!(
            fs::read(dir_a.join("scores/dev_scores.tsv")).unwrap(),
            fs::read(dir_b.join("scores/dev_scores.tsv")).unwrap(),
            "dev score tables differ"
        );
        // Logs agree on everything except the model path they name.
        let stable = |bytes: &[u8]| -> Vec<String> {
            String::from_utf8(bytes.to_vec())
                .unwrap()
                .lines()
                .filter(|l| !l.starts_with("model "))
                .map(str::to_string)
                .collect()
        };
        assert_eq!(stable(&out_a), stable(&out_b));
    });
}

#[test]
fn c09_crosslingual_lexicon() {
    criterion(9, "dictionary backoff, OOV embedding average, and coverage columns", || {
        let dict =
            BilingualDictionary::from_tsv("katze\tcat\nlaufen\trun\nlauf\trun\n").unwrap();
        // Direct token hit; lemma backoff; stem backoff; keep the original.
        assert_eq!(dict.translate("katze", "katze", None), "cat");
        assert_eq!(dict.translate("katzen", "katze", None), "cat");
        assert_eq!(dict.translate("laufend", "laufende", Some("lauf")), "run");
        assert_eq!(dict.translate("xyzzy", "xyzzq", Some("xyz")), "xyzzy");

        let table = EmbeddingTable::load("2 3\napple 1 2 3\npear 3 4 5\n").unwrap();
        assert_eq!(table.embed("apple"), &[1.0, 2.0, 3.0]);
        // Out-of-vocabulary words share the average of all rows.
        assert_eq!(table.embed("kumquat"), &[2.0, 3.0, 4.0]);
        assert_eq!(table.embed("kumquat"), table.embed("zzz"));
        assert_eq!(table.embed("kumquat"), table.average());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let docs = toy_corpus(&mut rng, 2, 3);
        let empty = BilingualDictionary::from_tsv("").unwrap();
        let report = coverage_report(&docs, &empty);
        assert!(report.word_types > 0);
        assert_eq!(report.unknown_types, report.word_types);
        let full_text: String = docs
            .iter()
            .flat_map(|d| d.tokens.iter())
            .map(|t| format!("{}\tx\n", t.form))
            .collect();
        let full = BilingualDictionary::from_tsv(&full_text).unwrap();
        let report = coverage_report(&docs, &full);
        assert_eq!(report.unknown_types, 0);

        // The report prints the three documented columns.
        let header = report.to_string();
        let header = header.lines().next().unwrap().to_string();
        for column in ["Size dict.", "# words", "# unk. words"] {
            assert!(header.contains(column), "header: {header}");
        }
    });
}

// The remaining criteria check published corpus-scale numbers, so they only
// run when the (licensed) corpora are available locally.

fn env_path(var: &str) -> Option<PathBuf> {
    std::env::var_os(var).map(PathBuf::from)
}

#[test]
#[ignore = "needs licensed corpora; set RSTKIT_ENDT_RAW_MANIFEST and/or RSTKIT_EUDT_RAW_MANIFEST"]
fn c10_full_corpus_harmonization_counts() {
    criterion(10, "harmonizing the licensed corpora reproduces the published counts", || {
        let en = env_path("RSTKIT_ENDT_RAW_MANIFEST");
        let eu = env_path("RSTKIT_EUDT_RAW_MANIFEST");
        assert!(
            en.is_some() || eu.is_some(),
            "set RSTKIT_ENDT_RAW_MANIFEST (raw En-DT manifest) and/or \
             RSTKIT_EUDT_RAW_MANIFEST (raw Eu-DT manifest)"
        );
        if let Some(manifest) = en {
            let mut log = AccessLog::new();
            let outcome =
                load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log).unwrap();
            assert_eq!(outcome.stats.trees, 385);
            assert_eq!(outcome.stats.edus, 21_789);
            assert_eq!(outcome.stats.cdus, 21_404);
        }
        if let Some(manifest) = eu {
            let mut log = AccessLog::new();
            let outcome =
                load_raw_corpus(&manifest, LabelMapping::builtin(), &mut log).unwrap();
            assert_eq!(outcome.stats.trees, 85);
            assert_eq!(outcome.stats.skipped.len(), 3);
        }
    });
}

#[test]
#[ignore = "needs the licensed En-DT; set RSTKIT_ENDT_MANIFEST to its harmonized manifest"]
fn c11_mfs_baseline_on_the_full_corpus() {
    criterion(11, "the most-frequent-structure baseline lands near the published scores", || {
        let manifest = env_path("RSTKIT_ENDT_MANIFEST")
            .expect("set RSTKIT_ENDT_MANIFEST to the harmonized En-DT manifest");
        let mut out = Vec::new();
        let scores = commands::baseline(&manifest, 0, None, &mut out).unwrap();
        assert!((scores.span - 58.2).abs() <= 2.0, "span {}", scores.span);
        assert!((scores.nuc - 33.4).abs() <= 2.0, "nuc {}", scores.nuc);
        assert!((scores.rel - 22.1).abs() <= 2.0, "rel {}", scores.rel);
    });
}

#[test]
#[ignore = "full grid training takes hours; set RSTKIT_ENDT_MANIFEST to the harmonized En-DT manifest"]
fn c12_full_monolingual_training() {
    criterion(12, "full monolingual grid training clears the score floors", || {
        let manifest = env_path("RSTKIT_ENDT_MANIFEST")
            .expect("set RSTKIT_ENDT_MANIFEST to the harmonized En-DT manifest");
        let tmp = TempDir::new().unwrap();
        let model_path = tmp.path().join("model.bin");
        let config = RunConfig::from_text(
            &format!(
                "mode = mono\nseed = 0\ntarget = en\nmanifest.en = {}\nmodel = {}\n",
                manifest.display(),
                model_path.display()
            ),
            &[],
            tmp.path(),
        )
        .unwrap();
        let mut out = Vec::new();
        commands::train(&config, &mut out).unwrap();

        // Score the held-out test split with the selected model.
        let mut log = AccessLog::new();
        let docs = load_harmonized_corpus(&manifest, &mut log).unwrap().documents;
        let split = split_corpus(&docs, 0).unwrap();
        let model = ModelParams::load(&model_path).unwrap();
        let beam = model.hyperparams().beam;
        let mut predicted = Vec::new();
        let mut gold = Vec::new();
        for &i in &split.test {
            predicted.push(decode::parse(&docs[i], &model, beam).unwrap().tree);
            gold.push(docs[i].gold.clone().unwrap());
        }
        let scores = score(&predicted, &gold).unwrap();
        assert!(scores.span >= 80.0, "span {}", scores.span);
        assert!(scores.nuc >= 65.0, "nuc {}", scores.nuc);
        assert!(scores.rel >= 52.0, "rel {}", scores.rel);
    });
}
