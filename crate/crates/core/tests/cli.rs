use std::fs;
use std::path::Path;

use dgib::cli::run;

fn dgib(args: &[&str]) -> i32 {
    run(std::iter::once("dgib").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) {
    let code = dgib(&[
        "synth",
        "--out",
        s(dir),
        "--seed",
        "4",
        "--positives",
        "16",
        "--negatives",
        "16",
        "--entities",
        "600",
        "--genes",
        "50",
    ]);
    assert_eq!(code, 0);
}

fn pipeline(root: &Path, data: &Path) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let kg = data.join("kg.tsv");
    let pairs = data.join("pairs.tsv");
    let folds = root.join("folds");
    assert_eq!(
        dgib(&[
            "split",
            "--pairs",
            s(&pairs),
            "--folds",
            "4",
            "--seed",
            "1",
            "--out",
            s(&folds)
        ]),
        0
    );
    let (train, test) = (folds.join("fold0/train.tsv"), folds.join("fold0/test.tsv"));
    let model = root.join("model.ckpt");
    let log = root.join("log.csv");
    assert_eq!(
        dgib(&[
            "train",
            "--kg",
            s(&kg),
            "--pairs",
            s(&train),
            "--eval-pairs",
            s(&test),
            "--seed",
            "3",
            "--epochs",
            "2",
            "--out",
            s(&model),
            "--log",
            s(&log),
        ]),
        0
    );
    let header = fs::read_to_string(&log).unwrap();
    assert!(header.starts_with("epoch,split,ce,kl,dpp,total\n"));
    assert_eq!(header.lines().count(), 5);
    let pred = root.join("pred.tsv");
    let common = [
        "--kg",
        s(&kg),
        "--train-pairs",
        s(&train),
        "--pairs",
        s(&test),
        "--model",
        s(&model),
    ];
    let mut args = vec!["predict"];
    args.extend(common);
    args.extend(["--out", s(&pred)]);
    assert_eq!(dgib(&args), 0);
    let expl = root.join("expl.json");
    let em = root.join("expl.csv");
    let mut args = vec!["explain"];
    args.extend(common);
    args.extend(["--out", s(&expl), "--metrics", s(&em)]);
    assert_eq!(dgib(&args), 0);
    assert!(fs::read_to_string(&em)
        .unwrap()
        .starts_with("pair,infidelity,sparseness,dpp\n"));
    let metrics = root.join("metrics.csv");
    assert_eq!(
        dgib(&[
            "eval",
            "--predictions",
            s(&pred),
            "--pairs",
            s(&test),
            "--cutoffs",
            "5,10",
            "--fold",
            "0",
            "--out",
            s(&metrics)
        ]),
        0
    );
    let m = fs::read_to_string(&metrics).unwrap();
    assert_eq!(m.lines().count(), 1 + 2 * 4);
    (
        fs::read(&model).unwrap(),
        fs::read(&pred).unwrap(),
        fs::read(&expl).unwrap(),
    )
}

#[test]
fn pipeline_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let a = pipeline(&dir.path().join("a"), &data);
    let b = pipeline(&dir.path().join("b"), &data);
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    let json: serde_json::Value = serde_json::from_slice(&a.2).unwrap();
    let first = &json[0];
    assert_eq!(first["explanations"].as_array().unwrap().len(), 3);
    for line in String::from_utf8(a.1).unwrap().lines() {
        let c: f64 = line.split('\t').nth(2).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&c));
    }
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    synth(&dir.path().join("x"));
    synth(&dir.path().join("y"));
    for f in ["kg.tsv", "pairs.tsv", "ground_truth.json"] {
        assert_eq!(
            fs::read(dir.path().join("x").join(f)).unwrap(),
            fs::read(dir.path().join("y").join(f)).unwrap()
        );
    }
}

#[test]
fn ingest_and_krange_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let (kg, pairs) = (data.join("kg.tsv"), data.join("pairs.tsv"));
    let summary = dir.path().join("summary.json");
    let census = dir.path().join("census.csv");
    assert_eq!(
        dgib(&[
            "ingest",
            "--kg",
            s(&kg),
            "--pairs",
            s(&pairs),
            "--out",
            s(&summary),
            "--census",
            s(&census)
        ]),
        0
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(v["pairs"], 32);
    assert_eq!(v["positives"], 16);
    assert_eq!(fs::read_to_string(&census).unwrap().lines().count(), 33);
    let (per_pair, hist) = (dir.path().join("kr.csv"), dir.path().join("hist.csv"));
    assert_eq!(
        dgib(&[
            "krange",
            "--kg",
            s(&kg),
            "--pairs",
            s(&pairs),
            "--out",
            s(&per_pair),
            "--histogram",
            s(&hist)
        ]),
        0
    );
    assert_eq!(fs::read_to_string(&per_pair).unwrap().lines().count(), 17);
    let total: usize = fs::read_to_string(&hist)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 16);
}

#[test]
fn failures_map_to_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data);
    let kg = data.join("kg.tsv");
    let pairs = data.join("pairs.tsv");
    let out = dir.path().join("out");
    assert_eq!(
        dgib(&[
            "train",
            "--kg",
            "/missing/kg.tsv",
            "--pairs",
            s(&pairs),
            "--seed",
            "0",
            "--out",
            s(&out)
        ]),
        3
    );
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "A\tB\n").unwrap();
    assert_eq!(
        dgib(&[
            "train",
            "--kg",
            s(&bad),
            "--pairs",
            s(&pairs),
            "--seed",
            "0",
            "--out",
            s(&out)
        ]),
        4
    );
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(
        dgib(&[
            "train",
            "--kg",
            s(&kg),
            "--pairs",
            s(&pairs),
            "--config",
            s(&cfg),
            "--seed",
            "0",
            "--out",
            s(&out)
        ]),
        5
    );
    let model = dir.path().join("m.ckpt");
    assert_eq!(
        dgib(&[
            "train",
            "--kg",
            s(&kg),
            "--pairs",
            s(&pairs),
            "--seed",
            "0",
            "--epochs",
            "1",
            "--out",
            s(&model)
        ]),
        0
    );
    fs::write(&cfg, "K = 2\n").unwrap();
    let pred = dir.path().join("p.tsv");
    let base = [
        "predict",
        "--kg",
        s(&kg),
        "--train-pairs",
        s(&pairs),
        "--model",
        s(&model),
        "--out",
        s(&pred),
    ];
    let mut args = base.to_vec();
    args.extend(["--pairs", s(&pairs), "--config", s(&cfg)]);
    assert_eq!(dgib(&args), 6);
    let stranger = dir.path().join("stranger.tsv");
    fs::write(&stranger, "NOT_A_GENE\tALSO_NOT\t1\n").unwrap();
    let mut args = base.to_vec();
    args.extend(["--pairs", s(&stranger)]);
    assert_eq!(dgib(&args), 8);
    let junk = dir.path().join("junk.ckpt");
    fs::write(&junk, b"not a checkpoint").unwrap();
    let mut args = vec![
        "predict",
        "--kg",
        s(&kg),
        "--train-pairs",
        s(&pairs),
        "--model",
        s(&junk),
        "--out",
        s(&pred),
    ];
    args.extend(["--pairs", s(&pairs)]);
    assert_eq!(dgib(&args), 7);
    assert_eq!(
        dgib(&[
            "split",
            "--pairs",
            s(&pairs),
            "--folds",
            "1",
            "--seed",
            "0",
            "--out",
            s(&out)
        ]),
        5
    );
    assert_eq!(dgib(&["no-such-command"]), 2);
    assert!(!pred.exists());
}
