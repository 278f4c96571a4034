//! End-to-end behaviour of the `afk` binary on tiny corpora.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use afk_core::dsp::csvio::read_csv;
use afk_core::nn::checkpoint;
use afk_core::AttackArtifact;

const AFK: &str = env!("CARGO_BIN_EXE_afk");
const SMALL: [&str; 4] = ["--classes", "3", "--per-class", "6"];

fn run(args: &[&str]) -> Output {
    Command::new(AFK).args(args).output().expect("spawn afk")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "afk {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn err(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "afk {} should fail", args.join(" "));
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_model(dir: &Path, arch: &str) -> String {
    let out = dir.join(format!("train_{arch}"));
    ok(&[
        &["train", "--epochs", "1", "--model", arch, "--out", s(&out)][..],
        &SMALL,
    ]
    .concat());
    let target = dir.join(format!("{arch}.afk"));
    fs::copy(out.join("model.afk"), &target).unwrap();
    target.to_str().unwrap().to_string()
}

fn tiny_attack(dir: &Path, model: &str, domain: &str, name: &str) -> String {
    let out = dir.join(name);
    ok(&[
        &[
            "attack",
            "--model",
            model,
            "--domain",
            domain,
            "--max-iter",
            "2",
            "--batch-size",
            "4",
            "--target-foolrate",
            "1.0",
            "--out",
            s(&out),
        ][..],
        &SMALL,
    ]
    .concat());
    out.join("attack.afa").to_str().unwrap().to_string()
}

#[test]
fn help_lists_every_subcommand() {
    let help = ok(&["--help"]);
    for c in [
        "train",
        "attack",
        "evaluate",
        "analyze",
        "synth-data",
        "ingest-data",
    ] {
        assert!(help.contains(c), "{c} missing from help");
    }
}

#[test]
fn synth_data_writes_clips_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("corpus");
    ok(&[
        "synth-data",
        "--classes",
        "2",
        "--per-class",
        "5",
        "--out",
        s(&out),
    ]);
    let (header, rows) = read_csv(out.join("index.csv")).unwrap();
    assert_eq!(header, ["file", "class", "split"]);
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| out.join(&r[0]).exists()));
    assert!(rows.iter().any(|r| r[2] == "test"));
}

#[test]
fn ingest_normalizes_rate_and_length() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&[
        "synth-data",
        "--classes",
        "2",
        "--per-class",
        "3",
        "--out",
        s(&corpus),
    ]);
    let out = dir.path().join("norm");
    ok(&[
        "ingest-data",
        "--root",
        s(&corpus),
        "--target-rate",
        "4000",
        "--clip-secs",
        "0.5",
        "--out",
        s(&out),
    ]);
    let (_, rows) = read_csv(out.join("index.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    let w = afk_core::dsp::wav::read_wav(out.join(&rows[0][0])).unwrap();
    assert_eq!((w.sample_rate(), w.len()), (4000, 2000));
}

#[test]
fn zero_epochs_still_writes_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m");
    ok(&[&["train", "--epochs", "0", "--out", s(&out)][..], &SMALL].concat());
    let model = checkpoint::load(out.join("model.afk")).unwrap();
    assert_eq!(afk_core::Classifier::num_classes(&model), 3);
    let (_, rows) = read_csv(out.join("metrics.csv")).unwrap();
    assert!(rows.is_empty());
}

#[test]
fn zero_iteration_attack_is_silent() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), "audionet-mini");
    let out = dir.path().join("a");
    ok(&[
        &[
            "attack",
            "--model",
            &model,
            "--max-iter",
            "0",
            "--out",
            s(&out),
        ][..],
        &SMALL,
    ]
    .concat());
    let a = AttackArtifact::load(out.join("attack.afa")).unwrap();
    assert_eq!(a.iterations, 0);
    assert!(a.u.iter().all(|&v| v == 0.0));
    for f in [
        "history.csv",
        "updates.csv",
        "attack.wav",
        "summary.csv",
        "classes.csv",
        "manifest.cfg",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# tiny\ncommand = synth-data\nclasses = 2\nper-class = 9\n",
    )
    .unwrap();
    let out = dir.path().join("c");
    ok(&[
        "synth-data",
        "--config",
        s(&cfg),
        "--per-class",
        "2",
        "--out",
        s(&out),
    ]);
    let (_, rows) = read_csv(out.join("index.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    let manifest = fs::read_to_string(out.join("manifest.cfg")).unwrap();
    assert!(manifest.contains("per-class = 2"));
}

#[test]
fn unknown_keys_and_wrong_command_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "command = train\nlearning-rate = 3\n").unwrap();
    assert!(err(&["train", "--config", s(&cfg), "--out", "x"]).contains("learning-rate"));
    fs::write(&cfg, "command = attack\n").unwrap();
    assert!(err(&["train", "--config", s(&cfg), "--out", "x"]).contains("attack"));
    err(&["train", "--no-such-flag", "1"]);
}

#[test]
fn missing_inputs_are_listed_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e");
    let msg = err(&[
        "evaluate",
        "--sweep",
        "shift",
        "--models",
        "/nope/a.afk",
        "--attacks",
        "/nope/b.afa",
        "--out",
        s(&out),
    ]);
    assert!(
        msg.contains("/nope/a.afk") && msg.contains("/nope/b.afa"),
        "{msg}"
    );
}

#[test]
fn shift_sweep_has_grid_plus_one_rows() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), "audionet-mini");
    let afa = tiny_attack(dir.path(), &model, "freq", "a");
    let out = dir.path().join("shift");
    ok(&[
        &[
            "evaluate",
            "--sweep",
            "shift",
            "--grid",
            "8",
            "--models",
            &model,
            "--attacks",
            &afa,
            "--out",
            s(&out),
        ][..],
        &SMALL,
    ]
    .concat());
    let (header, rows) = read_csv(out.join("shift.csv")).unwrap();
    assert_eq!(
        header,
        [
            "shift_samples",
            "shift_ms",
            "fool_rate_mean",
            "fool_rate_std"
        ]
    );
    assert_eq!(rows.len(), 9);
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[8][0], "8000");
}

#[test]
fn transfer_table_covers_every_pair() {
    let dir = tempfile::tempdir().unwrap();
    let m1 = tiny_model(dir.path(), "audionet-mini");
    let m2 = tiny_model(dir.path(), "speccrnn-mini");
    let attacks = [
        tiny_attack(dir.path(), &m1, "freq", "a1"),
        tiny_attack(dir.path(), &m1, "wav", "a2"),
        tiny_attack(dir.path(), &m2, "freq", "a3"),
        tiny_attack(dir.path(), &m2, "wav", "a4"),
    ];
    let out = dir.path().join("t");
    let mut args = vec![
        "evaluate",
        "--sweep",
        "transfer",
        "--models",
        &m1,
        &m2,
        "--attacks",
    ];
    args.extend(attacks.iter().map(String::as_str));
    args.extend(["--out", s(&out)]);
    args.extend(SMALL);
    ok(&args);
    let (_, rows) = read_csv(out.join("transfer.csv")).unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0][..3], ["audionet-mini", "freq", "audionet-mini"]);
    assert_eq!(rows[7][..3], ["speccrnn-mini", "wav", "speccrnn-mini"]);
}

#[test]
fn sphere_rejects_unequal_norms() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), "audionet-mini");
    let a = tiny_attack(dir.path(), &model, "freq", "a");
    let zero = dir.path().join("z");
    ok(&[
        &[
            "attack",
            "--model",
            &model,
            "--max-iter",
            "0",
            "--out",
            s(&zero),
        ][..],
        &SMALL,
    ]
    .concat());
    let z = zero.join("attack.afa");
    let out = dir.path().join("sphere");
    let msg = err(&[
        &[
            "analyze",
            "--sphere",
            &a,
            &a,
            s(&z),
            "--model",
            &model,
            "--out",
            s(&out),
        ][..],
        &SMALL,
    ]
    .concat());
    assert!(msg.contains("sphere"), "{msg}");
}

#[test]
fn manifest_rerun_reproduces_attack_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), "audionet-mini");
    tiny_attack(dir.path(), &model, "wav", "first");
    let again = dir.path().join("again");
    let manifest = dir.path().join("first/manifest.cfg");
    ok(&["attack", "--config", s(&manifest), "--out", s(&again)]);
    for f in [
        "attack.afa",
        "history.csv",
        "updates.csv",
        "attack.wav",
        "summary.csv",
    ] {
        assert_eq!(
            fs::read(dir.path().join("first").join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn analyze_writes_angles_convergence_and_composition() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(dir.path(), "audionet-mini");
    tiny_attack(dir.path(), &model, "freq", "a");
    let p = |f: &str| dir.path().join("a").join(f).to_str().unwrap().to_string();
    let out = dir.path().join("an");
    let (up, hist, afa) = (p("updates.csv"), p("history.csv"), p("attack.afa"));
    ok(&[
        "analyze",
        "--angles",
        &up,
        "--convergence",
        &hist,
        "--composition",
        &afa,
        "--out",
        s(&out),
    ]);
    let (h, rows) = read_csv(out.join("angles.csv")).unwrap();
    assert_eq!(h, ["run_id", "iteration", "theta_deg"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], "2");
    let (_, conv) = read_csv(out.join("convergence.csv")).unwrap();
    assert_eq!(conv.len(), 2);
    let (_, comp) = read_csv(out.join("composition.csv")).unwrap();
    assert_eq!(comp.iter().filter(|r| !r[2].is_empty()).count(), 5);
}
