//! Config-file handling at the CLI boundary: partial config files parse,
//! flags override them, and the echoed config proves what ran.

mod common;

use std::process::Command;

use common::{planted_fixture, write_fixture_files};

fn run(args: &[&str]) -> serde_json::Value {
    let out = Command::new(env!("CARGO_BIN_EXE_ctsearch"))
        .args(args)
        .env_remove("CT_LM_URL")
        .env_remove("CT_VALUE_URL")
        .output()
        .expect("spawn ctsearch");
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON output")
}

#[test]
fn partial_config_file_applies_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = planted_fixture(2);
    let (corpus_path, _) = write_fixture_files(&fixture, dir.path());

    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        r#"{"search": {"granularity": 3, "simulations": 12, "seed": 9}, "doc_select": "direct_path"}"#,
    )
    .unwrap();

    let q = &fixture.examples[0].question;
    let subject = fixture.examples[0].subject.as_deref().unwrap();
    let out = run(&[
        "--config",
        config_path.to_str().unwrap(),
        "search",
        "--corpus",
        corpus_path.to_str().unwrap(),
        "--question",
        q,
        "--subject",
        subject,
        "--gold",
        &fixture.examples[0].golden_answers[0],
        "--simulations",
        "5",
    ]);

    // File value applies where no flag was given; the flag wins elsewhere;
    // untouched fields keep their defaults.
    assert_eq!(out["config"]["granularity"], 3);
    assert_eq!(out["config"]["simulations"], 5);
    assert_eq!(out["config"]["seed"], 9);
    assert_eq!(out["config"]["expansions"], 2);
    let evidence = out["evidence"].as_array().unwrap();
    assert!(!evidence.is_empty());
    assert_eq!(evidence[0]["strategy"], "direct_path");
}
