use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aporo_cli::fixture::{fixture_config, write_fixture};
use aporo_cli::{Config, Pipeline, Stage};
use aporo_core::annotate::Decision;
use aporo_core::Label;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn aporo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aporo"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shipped_config_validates_cleanly() {
    let path = repo_root().join("configs/default.toml");
    let (config, warnings) = Config::load(&path).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    let defaults = Config {
        base_dir: config.base_dir.clone(),
        ..Config::default()
    };
    assert_eq!(config, defaults);
    let out = aporo(&["validate-config", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn missing_key_warns_and_uses_default() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "[bench]\nseeds = [1]\n").unwrap();
    let out = aporo(&["validate-config", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("`seed` not set; using default 42"));
    let printed = String::from_utf8(out.stdout).unwrap();
    assert!(printed.contains("seed = 42"));
    assert!(printed.contains("seeds = [1]"));
}

#[test]
fn config_errors_exit_3_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "seed = 1\n[topics]\nmin_dff = 0.1\n").unwrap();
    let out = aporo(&["validate-config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("unknown key `topics.min_dff`"), "{}", stderr(&out));

    std::fs::write(&path, "[sample]\nn_months = \"three\"\n").unwrap();
    let out = aporo(&["run", "sample", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("`sample.n_months`: expected integer, found string"));

    let out = aporo(&["validate-config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, Config::default_toml()).unwrap();
    for stage in ["ingest", "sample", "annotate-serve", "train", "report"] {
        let out = aporo(&["run", stage, "--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{stage}: {}", stderr(&out));
        assert!(stderr(&out).contains("missing input"));
    }
    let out = aporo(&["run", "nonsense", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn shipped_fixture_matches_generator() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path()).unwrap();
    for name in ["posts.jsonl", "gold.csv", "config.toml"] {
        let fresh = std::fs::read(dir.path().join(name)).unwrap();
        let shipped = std::fs::read(repo_root().join("fixtures/e2e").join(name)).unwrap();
        assert!(fresh == shipped, "{name} differs from the generator; rerun `aporo fixture --out fixtures/e2e`");
    }
    let (config, warnings) = Config::load(&repo_root().join("fixtures/e2e/config.toml")).unwrap();
    assert!(warnings.is_empty());
    let mut expected = fixture_config();
    expected.base_dir = config.base_dir.clone();
    assert_eq!(config, expected);
}

#[test]
fn annotation_log_feeds_the_export() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path()).unwrap();
    let mut config = fixture_config();
    config.base_dir = dir.path().to_path_buf();
    config.annotate.gold = String::new();
    let pipeline = Pipeline::new(config);
    for stage in [Stage::Ingest, Stage::Geolocate, Stage::Topics, Stage::Sample] {
        pipeline.run(stage).unwrap();
    }
    let err = pipeline.run(Stage::Annotate).unwrap_err();
    assert_eq!(err.exit_code(), 2);

    // two annotators disagree on the first item only
    let ids: Vec<String> = {
        let store = pipeline.open_store().unwrap();
        store.items().map(|i| i.id.clone()).collect()
    };
    {
        let mut store = pipeline.open_store().unwrap();
        for (k, id) in ids.iter().enumerate() {
            for ann in ["annotator-1", "annotator-2"] {
                let label = if k == 0 && ann == "annotator-2" { Label::Direct } else { Label::None };
                store.record_label(id, ann, Some(label), false, 1, None, chrono::Utc::now()).unwrap();
            }
        }
    }
    assert!(pipeline.run(Stage::Annotate).is_err(), "export must wait for adjudication");
    {
        let mut store = pipeline.open_store().unwrap();
        assert_eq!(store.disagreement_queue().len(), 1);
        store.adjudicate(&ids[0], Decision::Remove, "off topic").unwrap();
    }
    let manifest = pipeline.run(Stage::Annotate).unwrap();
    assert!(manifest.notes[0].contains("annotation log"));
    let rows = aporo_core::annotate::load_dataset(&pipeline.work.join("annotate/dataset.csv")).unwrap();
    assert_eq!(rows.len(), ids.len() - 1);
}
