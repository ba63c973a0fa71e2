use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const VOCAB: usize = 100;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bisent2vec"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64)).unwrap()
}

/// Markov-chain corpus with the second side renamed through a random
/// bijection; writes corpus files and the gold dictionary.
struct Cipher {
    dir: TempDir,
    perm: Vec<usize>,
}

impl Cipher {
    fn new(pairs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..VOCAB).collect();
        perm.shuffle(&mut rng);
        let dist = zipf(VOCAB);
        let successors: Vec<Vec<usize>> = (0..VOCAB)
            .map(|_| {
                let mut o: Vec<usize> = (0..VOCAB).collect();
                o.shuffle(&mut rng);
                o
            })
            .collect();
        let (mut a, mut b) = (String::new(), String::new());
        for _ in 0..pairs {
            let len = rng.gen_range(5..=12);
            let mut ids = vec![dist.sample(&mut rng)];
            while ids.len() < len {
                ids.push(successors[*ids.last().unwrap()][dist.sample(&mut rng)]);
            }
            let l1: Vec<String> = ids.iter().map(|i| format!("w{i}")).collect();
            let l2: Vec<String> = ids.iter().map(|&i| format!("v{}", perm[i])).collect();
            a += &(l1.join(" ") + "\n");
            b += &(l2.join(" ") + "\n");
        }
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("corpus.l1"), a).unwrap();
        fs::write(dir.path().join("corpus.l2"), b).unwrap();
        let dict: String = (0..VOCAB).map(|i| format!("w{i} v{}\n", perm[i])).collect();
        fs::write(dir.path().join("dict.txt"), dict).unwrap();
        Cipher { dir, perm }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train_args(&self, out: &Path) -> Vec<String> {
        [
            "train", "--l1", s(&self.path("corpus.l1")), "--l2", s(&self.path("corpus.l2")),
            "--dim", "50", "--epochs", "5", "--lr", "0.2", "--negatives", "10",
            "--t", "1e-4", "--threads", "1", "--seed", "3", "--out", s(out),
        ]
        .iter()
        .map(|a| a.to_string())
        .collect()
    }
}

struct Trained {
    cipher: Cipher,
    out: PathBuf,
}

/// One full cipher model shared by the tests that only read it.
fn trained() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| {
        let cipher = Cipher::new(5000, 7);
        let out = cipher.path("run");
        let args = cipher.train_args(&out);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
        Trained { cipher, out }
    })
}

fn records(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn read_vectors(path: &Path) -> std::collections::HashMap<String, Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split_whitespace();
            let w = it.next().unwrap().to_string();
            (w, it.map(|x| x.parse().unwrap()).collect())
        })
        .collect()
}

#[test]
fn train_writes_artifacts_and_is_deterministic() {
    let c = Cipher::new(400, 1);
    let (a, b) = (c.path("a"), c.path("b"));
    for out in [&a, &b] {
        ok(&[
            "train", "--l1", s(&c.path("corpus.l1")), "--l2", s(&c.path("corpus.l2")),
            "--dim", "8", "--epochs", "2", "--threads", "1", "--out", s(out),
        ]);
    }
    for f in ["model.bin", "vectors.l1.txt", "vectors.l2.txt", "config.toml", "train.log"] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    assert_eq!(fs::read(a.join("model.bin")).unwrap(), fs::read(b.join("model.bin")).unwrap());
    let vecs = read_vectors(&a.join("vectors.l1.txt"));
    assert!(!vecs.is_empty());
    assert!(vecs.values().all(|v| v.len() == 8));
}

#[test]
fn usage_errors_exit_with_2() {
    let c = Cipher::new(10, 1);
    let out = c.path("o");
    let r = run(&["train", "--l1", s(&c.path("corpus.l1")), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("--l2"));

    let r = run(&[
        "train", "--l1", s(&c.path("corpus.l1")), "--l2", s(&c.path("corpus.l2")),
        "--ngrams", "3", "--out", s(&out),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert_eq!(run(&["eval-wt", "--criterion", "foo"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn max_pairs_limits_training_data() {
    let c = Cipher::new(1000, 2);
    let out = c.path("o");
    ok(&[
        "train", "--l1", s(&c.path("corpus.l1")), "--l2", s(&c.path("corpus.l2")),
        "--dim", "4", "--epochs", "1", "--max-pairs", "300", "--out", s(&out),
    ]);
    let log = fs::read_to_string(out.join("train.log")).unwrap();
    assert!(log.contains("pairs per epoch 300\n"), "{log}");
    let cfg = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(cfg.contains("max_pairs = 300"), "{cfg}");
}

#[test]
fn config_snapshot_reproduces_model() {
    let c = Cipher::new(500, 4);
    let first = c.path("first");
    ok(&[
        "train", "--l1", s(&c.path("corpus.l1")), "--l2", s(&c.path("corpus.l2")),
        "--dim", "6", "--epochs", "2", "--ngrams", "2", "--buckets", "1000",
        "--seed", "11", "--min-count", "2", "--out", s(&first),
    ]);
    let second = c.path("second");
    ok(&["train", "--config", s(&first.join("config.toml")), "--out", s(&second)]);
    assert_eq!(
        fs::read(first.join("model.bin")).unwrap(),
        fs::read(second.join("model.bin")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(first.join("config.toml")).unwrap(),
        fs::read_to_string(second.join("config.toml")).unwrap()
    );

    // flags override the file
    let third = c.path("third");
    ok(&[
        "train", "--config", s(&first.join("config.toml")), "--seed", "12", "--out", s(&third),
    ]);
    assert_ne!(
        fs::read(first.join("model.bin")).unwrap(),
        fs::read(third.join("model.bin")).unwrap()
    );
}

#[test]
fn eval_wt_recovers_cipher_dictionary() {
    let t = trained();
    let report = t.out.join("wt.jsonl");
    let stdout = ok(&[
        "eval-wt", "--model", s(&t.out.join("model.bin")),
        "--dict", s(&t.cipher.path("dict.txt")), "--criterion", "csls",
        "--out", s(&report),
    ]);
    assert!(stdout.contains("word-translation-p@1"), "{stdout}");
    let recs = records(&report);
    assert_eq!(recs.len(), 2);
    for r in &recs {
        assert_eq!(r["criterion"], "csls");
        let p = r["value"].as_f64().unwrap();
        assert!(p >= 0.9, "{r}");
    }
}

#[test]
fn eval_ws_matches_closed_form() {
    let t = trained();
    let ds = t.cipher.path("sim.txt");
    let rows = [("w0", "w1", 1.0), ("w2", "w3", 4.0), ("w4", "w5", 2.5)];
    fs::write(
        &ds,
        rows.iter().map(|(a, b, x)| format!("{a} {b} {x}\n")).collect::<String>(),
    )
    .unwrap();
    let report = t.out.join("ws.jsonl");
    ok(&["eval-ws", "--model", s(&t.out.join("model.bin")), s(&ds), "--out", s(&report)]);
    let got = records(&report)[0]["value"].as_f64().unwrap();

    let vecs = read_vectors(&t.out.join("vectors.l1.txt"));
    let cos = |a: &str, b: &str| {
        let (x, y) = (&vecs[a], &vecs[b]);
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let n = |v: &Vec<f64>| v.iter().map(|p| p * p).sum::<f64>().sqrt();
        dot / (n(x) * n(y))
    };
    let xs: Vec<f64> = rows.iter().map(|r| cos(r.0, r.1)).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(&xs), mean(&ys));
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sx = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>().sqrt();
    let sy = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>().sqrt();
    let want = cov / (sx * sy);
    // text vectors carry 6 decimals
    assert!((got - want).abs() < 1e-4, "got {got}, want {want}");
}

#[test]
fn eval_sr_reports_both_directions() {
    let t = trained();
    let held = Cipher::new(150, 8);
    // held's own bijection is unrelated; rename through the trained one
    let l1 = fs::read_to_string(held.path("corpus.l1")).unwrap();
    let l2: String = l1
        .lines()
        .map(|line| {
            line.split_whitespace()
                .map(|w| format!("v{}", t.cipher.perm[w[1..].parse::<usize>().unwrap()]))
                .collect::<Vec<_>>()
                .join(" ")
                + "\n"
        })
        .collect();
    fs::write(held.path("test.l2"), l2).unwrap();
    let report = held.path("sr.jsonl");
    ok(&[
        "eval-sr", "--model", s(&t.out.join("model.bin")),
        "--l1", s(&held.path("corpus.l1")), "--l2", s(&held.path("test.l2")),
        "--out", s(&report),
    ]);
    let recs = records(&report);
    assert_eq!(recs.len(), 4);
    let dirs: Vec<&str> = recs.iter().map(|r| r["direction"].as_str().unwrap()).collect();
    assert!(dirs.contains(&"l1-l2") && dirs.contains(&"l2-l1"));
    for r in &recs {
        assert!(r["value"].as_f64().unwrap() > 0.5, "{r}");
    }
}

fn topic_docs(path: &Path, perm: Option<&[usize]>, per_class: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..per_class {
        for label in 0..4 {
            text += &format!("{label}\n");
            let pool: Vec<usize> = (label..VOCAB).step_by(4).collect();
            for _ in 0..4 {
                let words: Vec<String> = (0..rng.gen_range(5..=12))
                    .map(|_| {
                        let w = *pool.choose(&mut rng).unwrap();
                        match perm {
                            Some(p) => format!("v{}", p[w]),
                            None => format!("w{w}"),
                        }
                    })
                    .collect();
                text += &(words.join(" ") + "\n");
            }
            text += "\n";
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn classifier_roundtrip_across_languages() {
    let t = trained();
    let dir = TempDir::new().unwrap();
    let (train_docs, test_docs) = (dir.path().join("train.docs"), dir.path().join("test.docs"));
    topic_docs(&train_docs, None, 50, 21);
    topic_docs(&test_docs, Some(&t.cipher.perm), 50, 22);
    let clf = dir.path().join("clf.json");
    let model = t.out.join("model.bin");
    let stdout = ok(&[
        "classify-train", "--model", s(&model), "--docs", s(&train_docs), "--out", s(&clf),
    ]);
    assert!(stdout.contains("training accuracy "), "{stdout}");

    let report = dir.path().join("clf.jsonl");
    let stdout = ok(&[
        "classify-eval", "--model", s(&model), "--classifier", s(&clf),
        "--docs", s(&test_docs), "--out", s(&report),
    ]);
    let line = stdout.lines().find(|l| l.starts_with("accuracy ")).unwrap();
    let printed = line.trim_start_matches("accuracy ");
    assert_eq!(printed.split('.').nth(1).map(str::len), Some(4), "{line}");
    let acc = records(&report)[0]["value"].as_f64().unwrap();
    assert_eq!(printed, format!("{acc:.4}"));
    assert!(acc >= 0.8, "{acc}");
}

#[test]
fn malformed_inputs_name_the_line() {
    let t = trained();
    let dir = TempDir::new().unwrap();
    let model = t.out.join("model.bin");

    let dict = dir.path().join("bad.dict");
    fs::write(&dict, "w1 v1\nw2 v2\nlonely\n").unwrap();
    let r = run(&["eval-wt", "--model", s(&model), "--dict", s(&dict)]);
    assert_eq!(r.status.code(), Some(1));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("bad.dict:3"), "{err}");

    let sim = dir.path().join("bad.sim");
    fs::write(&sim, "w1 w2 1.0\nw3 w4 lots\n").unwrap();
    let r = run(&["eval-ws", "--model", s(&model), s(&sim)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("bad.sim:2"));

    let docs = dir.path().join("bad.docs");
    fs::write(&docs, "0\nw1 w2\n\nx\nw3\n").unwrap();
    let r = run(&[
        "classify-train", "--model", s(&model), "--docs", s(&docs),
        "--out", s(&dir.path().join("c.json")),
    ]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("bad.docs:4"));

    let r = run(&["eval-wt", "--model", s(&dir.path().join("nope.bin")), "--dict", s(&dict)]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn export_writes_both_languages() {
    let t = trained();
    let dir = TempDir::new().unwrap();
    ok(&["export", "--model", s(&t.out.join("model.bin")), "--out", s(dir.path())]);
    for lang in ["l1", "l2"] {
        let exported = fs::read_to_string(dir.path().join(format!("vectors.{lang}.txt"))).unwrap();
        let trained = fs::read_to_string(t.out.join(format!("vectors.{lang}.txt"))).unwrap();
        assert_eq!(exported, trained);
    }
}
