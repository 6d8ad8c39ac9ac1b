use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn trn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trn"))
        .args(args)
        .env("TRN_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &[&str] = &[
    "--train-videos",
    "4",
    "--test-videos",
    "2",
    "--video-len",
    "12",
    "--appearance-dim",
    "4",
    "--motion-dim",
    "3",
];

fn synth(dir: &Path, seed: &str) -> PathBuf {
    let mut args = vec!["synth", "--out", s(dir), "--seed", seed];
    args.extend_from_slice(TINY);
    ok(&trn(&args));
    dir.join("manifest.json")
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn train(manifest: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![
        "train",
        "--manifest",
        s(manifest),
        "--out",
        s(out),
        "--epochs",
        "1",
        "--hidden-size",
        "6",
        "--decoder-steps",
        "2",
        "--seq-len",
        "6",
    ];
    args.extend_from_slice(extra);
    ok(&trn(&args));
}

#[test]
fn synth_is_deterministic_and_has_background_class() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "3");
    synth(&b, "3");
    let files = dir_bytes(&a);
    assert!(files.iter().any(|(n, _)| n.ends_with(".trnf")));
    assert!(files.iter().any(|(n, _)| n == "annotations.tsv"));
    assert_eq!(files, dir_bytes(&b));

    let classmap = fs::read_to_string(a.join("classmap.tsv")).unwrap();
    assert_eq!(classmap.lines().filter(|l| !l.trim().is_empty()).count(), 4);
}

#[test]
fn synth_spec_file_is_overridden_by_flags() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"num_actions": 5, "train_videos": 2, "test_videos": 1, "video_len": 8, "seed": 1}"#,
    )
    .unwrap();
    let out = tmp.path().join("d");
    ok(&trn(&[
        "synth",
        "--spec",
        s(&spec),
        "--out",
        s(&out),
        "--num-actions",
        "2",
    ]));
    let classmap = fs::read_to_string(out.join("classmap.tsv")).unwrap();
    assert_eq!(classmap.lines().filter(|l| !l.trim().is_empty()).count(), 3);
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert_eq!(manifest.matches("\"split\"").count(), 3);
}

#[test]
fn train_writes_loadable_checkpoint_and_reproducible_metrics() {
    let tmp = TempDir::new().unwrap();
    let manifest = synth(&tmp.path().join("data"), "0");
    let (c1, c2) = (tmp.path().join("a.trnc"), tmp.path().join("b.trnc"));
    train(&manifest, &c1, &["--seed", "7"]);
    train(&manifest, &c2, &["--seed", "7"]);

    let ckpt = trn_core::training::read_checkpoint(&c1).unwrap();
    assert_eq!(ckpt.model.hidden_size, 6);
    assert_eq!(ckpt.model.decoder_steps, 2);
    assert_eq!(ckpt.model.num_actions, 3);
    assert_eq!(ckpt.train.seed, 7);
    assert_eq!(ckpt.train.learning_rate, 5e-4);
    assert!(ckpt.adam.is_some());

    let m1 = fs::read_to_string(tmp.path().join("a.trnc.metrics.jsonl")).unwrap();
    let m2 = fs::read_to_string(tmp.path().join("b.trnc.metrics.jsonl")).unwrap();
    assert_eq!(m1.lines().count(), 1);
    assert_eq!(m1, m2);
    assert_eq!(fs::read(&c1).unwrap(), fs::read(&c2).unwrap());
}

#[test]
fn train_config_file_precedence() {
    let tmp = TempDir::new().unwrap();
    let manifest = synth(&tmp.path().join("data"), "0");
    let config = tmp.path().join("run.json");
    fs::write(
        &config,
        r#"{"model": {"fusion": "FUSED_TWO_STREAM", "hidden_size": 9}, "train": {"learning_rate": 0.01, "batch_size": 3}}"#,
    )
    .unwrap();
    let out = tmp.path().join("c.trnc");
    train(
        &manifest,
        &out,
        &["--config", s(&config), "--batch-size", "1"],
    );
    let ckpt = trn_core::training::read_checkpoint(&out).unwrap();
    assert_eq!(ckpt.model.fusion, trn_core::FusionVariant::FusedTwoStream);
    // --hidden-size from the helper overrides the file.
    assert_eq!(ckpt.model.hidden_size, 6);
    assert_eq!(ckpt.train.learning_rate, 0.01);
    assert_eq!(ckpt.train.batch_size, 1);
}

#[test]
fn stream_matches_batch_and_eval_prints_both_horizons() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let manifest = synth(&data, "0");
    let ckpt = tmp.path().join("m.trnc");
    train(&manifest, &ckpt, &[]);

    let streamed = tmp.path().join("stream.jsonl");
    let batched = tmp.path().join("batch.jsonl");
    ok(&trn(&[
        "stream",
        "--ckpt",
        s(&ckpt),
        "--manifest",
        s(&manifest),
        "--out",
        s(&streamed),
    ]));
    ok(&trn(&[
        "infer",
        "--batch",
        "--ckpt",
        s(&ckpt),
        "--manifest",
        s(&manifest),
        "--out",
        s(&batched),
    ]));
    let text = fs::read_to_string(&streamed).unwrap();
    assert_eq!(text, fs::read_to_string(&batched).unwrap());
    // header + 2 test videos of 12 chunks
    assert_eq!(text.lines().count(), 1 + 2 * 12);
    let dump = trn_core::eval::PredictionDump::parse(&text).unwrap();
    assert!(dump
        .videos
        .iter()
        .all(|v| v.outputs.iter().all(|o| o.anticipated.len() == 2)));

    let report = ok(&trn(&[
        "eval",
        "--dump",
        s(&streamed),
        "--gt",
        s(&data.join("annotations.tsv")),
        "--classmap",
        s(&data.join("classmap.tsv")),
    ]));
    assert!(
        report.contains("0.20s") && report.contains("0.40s"),
        "{report}"
    );
    assert!(
        report.contains("0.25s") && report.contains("0.50s"),
        "{report}"
    );
}

#[test]
fn stream_from_feature_files() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let manifest = synth(&data, "0");
    let ckpt = tmp.path().join("m.trnc");
    train(&manifest, &ckpt, &[]);

    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    let video = &m["videos"][0];
    let id = video["id"].as_str().unwrap();
    let feature = |k: &str| data.join(video["streams"][k]["path"].as_str().unwrap());
    let app = format!("appearance={}", s(&feature("appearance")));
    let mot = format!("motion={}", s(&feature("motion")));
    let out = tmp.path().join("one.jsonl");
    ok(&trn(&[
        "stream",
        "--ckpt",
        s(&ckpt),
        "--features",
        &app,
        "--features",
        &mot,
        "--out",
        s(&out),
    ]));
    let dump = trn_core::eval::PredictionDump::read(&out).unwrap();
    assert_eq!(dump.videos.len(), 1);
    assert_eq!(dump.videos[0].id, id);
    assert_eq!(dump.videos[0].outputs.len(), 12);

    // A missing stream is a validation failure.
    let out2 = tmp.path().join("two.jsonl");
    let r = trn(&[
        "stream",
        "--ckpt",
        s(&ckpt),
        "--features",
        &app,
        "--out",
        s(&out2),
    ]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn perfect_dump_scores_100() {
    let tmp = TempDir::new().unwrap();
    let classmap = tmp.path().join("classmap.tsv");
    let gt = tmp.path().join("gt.tsv");
    let dump = tmp.path().join("dump.jsonl");
    fs::write(&classmap, "0\tBackground\n1\tJump\n2\tRun\n").unwrap();
    // chunks of 0.2 s: labels 0 0 1 1 1 0 2 2 0 0
    fs::write(&gt, "v\tJump\t0.4\t1.0\nv\tRun\t1.2\t1.6\n").unwrap();
    let labels = [0, 0, 1, 1, 1, 0, 2, 2, 0, 0];
    let one_hot = |c: usize| {
        (0..3)
            .map(|i| if i == c { 1.0 } else { 0.0 })
            .collect::<Vec<f64>>()
    };
    let mut text =
        String::from("{\"chunk_size\":6,\"fps\":30.0,\"decoder_steps\":2,\"classes\":3}\n");
    for t in 0..labels.len() {
        let ant: Vec<Vec<f64>> = (1..=2)
            .map(|i| one_hot(labels.get(t + i).copied().unwrap_or(0)))
            .collect();
        text.push_str(&format!(
            "{{\"video\":\"v\",\"chunk\":{t},\"present\":{:?},\"anticipated\":{:?}}}\n",
            one_hot(labels[t]),
            ant
        ));
    }
    fs::write(&dump, text).unwrap();
    let report = ok(&trn(&[
        "eval",
        "--dump",
        s(&dump),
        "--gt",
        s(&gt),
        "--classmap",
        s(&classmap),
        "--label",
        "oracle",
    ]));
    let row = report.lines().find(|l| l.starts_with("oracle")).unwrap();
    let cells: Vec<&str> = row.split_whitespace().skip(1).collect();
    assert_eq!(cells, vec!["100.00"; 4], "{report}");
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    let out = trn(&["gradcheck", "--seed", "3"]);
    let text = ok(&out);
    assert!(text.trim_end().ends_with("PASS"), "{text}");
    let err: f64 = text.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(err < 1e-4);

    for fusion in ["ONE_STREAM", "TWO_STREAM"] {
        ok(&trn(&[
            "gradcheck",
            "--fusion",
            fusion,
            "--hidden-size",
            "3",
        ]));
    }

    let bad = trn(&["gradcheck", "--seed", "3", "--corrupt-gradient"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

#[test]
fn help_lists_defaults() {
    let text = ok(&trn(&["train", "--help"]));
    for d in [
        "[default: 0.0005]",
        "[default: 2]",
        "[default: 64]",
        "[default: 8]",
        "[default: 20]",
    ] {
        assert!(text.contains(d), "missing {d} in\n{text}");
    }
    assert!(!ok(&trn(&["gradcheck", "--help"])).contains("corrupt"));
    assert!(ok(&trn(&["synth", "--help"])).contains("[default: 0.5]"));
}

#[test]
fn exit_codes() {
    let unknown = trn(&["eval", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(1));

    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.tsv");
    let r = trn(&[
        "eval",
        "--dump",
        s(&missing),
        "--gt",
        s(&missing),
        "--classmap",
        s(&missing),
    ]);
    assert_eq!(r.status.code(), Some(2));

    let ckpt = trn(&[
        "stream",
        "--ckpt",
        s(&missing),
        "--manifest",
        s(&missing),
        "--out",
        s(&missing),
    ]);
    assert_eq!(ckpt.status.code(), Some(2));

    let bad_spec = tmp.path().join("spec.json");
    fs::write(&bad_spec, r#"{"num_actions": 0}"#).unwrap();
    let r = trn(&["synth", "--spec", s(&bad_spec), "--out", s(tmp.path())]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn report_prints_reference_rows() {
    let text = ok(&trn(&["report"]));
    assert!(text.contains("Table I ") && text.contains("Table III"));
    assert!(text.contains("55.25") && text.contains("39.35"));
    assert!(text.contains("25.93") && text.contains("25.77"));
    assert_eq!(trn(&["report", "--table", "IV"]).status.code(), Some(1));
}
