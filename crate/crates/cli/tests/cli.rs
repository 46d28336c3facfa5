//! Exit-code and output contracts of the command line front end.

use std::fs;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cdctc"))
}

#[test]
fn oracle_check_passes_and_exits_zero() {
    let out = bin()
        .args(["oracle-check", "--cases", "10", "--frames", "4"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("PASS"), "{text}");
}

#[test]
fn grad_check_reports_max_relative_error_for_every_loss() {
    for loss in ["ctc", "ctc-g", "ctc-gb"] {
        let out = bin().args(["grad-check", "--loss", loss]).output().unwrap();
        let text = String::from_utf8_lossy(&out.stdout);
        assert_eq!(out.status.code(), Some(0), "{loss}: {text}");
        assert!(
            text.contains("max relative error"),
            "{loss} output: {text}"
        );
        assert!(text.contains("PASS"), "{loss} output: {text}");
    }
}

#[test]
fn build_graph_emits_the_nine_state_bichar_graph() {
    let dir = tempfile::tempdir().unwrap();
    let letters = dir.path().join("letters.txt");
    fs::write(&letters, "a\nb\n").unwrap();
    let graph = dir.path().join("graph.txt");
    let out = bin()
        .args([
            "build-graph",
            "--topology",
            "bichar",
            "--alphabet",
            letters.to_str().unwrap(),
            "--out",
            graph.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("states 9 "), "{text}");
    assert!(!fs::read_to_string(&graph).unwrap().is_empty());
}

#[test]
fn usage_errors_exit_two() {
    // Unknown flag: clap usage error.
    let out = bin().args(["synth", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Invalid topology and loss combination in a config file.
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.txt");
    fs::write(&config, "topology = ci\nloss = ctc-gb\n").unwrap();
    let out = bin()
        .args([
            "synth",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ctc-gb"), "{err}");

    // Unreadable checkpoint path: runtime failure, not usage.
    let out = bin()
        .args([
            "decode",
            "--config",
            config.to_str().unwrap(),
            "--ckpt",
            "/nonexistent.ckpt",
            "--data",
            "/nonexistent.txt",
            "--out",
            dir.path().join("d").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_ne!(out.status.code(), Some(0));
}
