#![allow(dead_code)]

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scr::cli::RunConfig;
use scr::synthetic::{flat_corpus, ring_lexicon, write_csv, SyntheticSpec};
use scr::trainer::TrainStrategy;

/// Writes a generated corpus, its lexicon and `run.toml` into `dir`.
pub fn fixture(dir: &Path, n: usize, strategy: TrainStrategy) -> PathBuf {
    let spec = SyntheticSpec::default();
    write_csv(File::create(dir.join("corpus.csv")).unwrap(), &flat_corpus(n, &spec)).unwrap();
    let lexicon = ring_lexicon(spec.markers_per_class, spec.lexicon_width);
    fs::write(dir.join("lexicon.tsv"), lexicon.to_tsv()).unwrap();
    let mut cfg = RunConfig::default();
    cfg.out_dir = "run".into();
    cfg.data.input = Some("corpus.csv".into());
    cfg.data.lexicon = Some("lexicon.tsv".into());
    cfg.regime.labels_per_class = 30;
    cfg.train.strategy = strategy;
    cfg.train.lr = 3e-3;
    cfg.train.max_epochs = 40;
    cfg.train.patience = 5;
    cfg.encoder.embed = 16;
    cfg.encoder.hidden = 16;
    let path = dir.join("run.toml");
    write_config(&path, &cfg);
    path
}

pub fn write_config(path: &Path, cfg: &RunConfig) {
    fs::write(path, cfg.to_toml()).unwrap();
}

/// Loads the config at `path`, applies `f` and writes it back. Paths come
/// back absolute, which keeps them valid.
pub fn edit_config(path: &Path, f: impl FnOnce(&mut RunConfig)) {
    let mut cfg = RunConfig::load(path).unwrap();
    f(&mut cfg);
    write_config(path, &cfg);
}

pub fn scr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scr"))
        .args(args)
        .output()
        .expect("spawn scr")
}

/// Runs `scr` and panics with its stderr unless it succeeds.
pub fn scr_ok(args: &[&str]) -> Output {
    let out = scr(args);
    assert!(
        out.status.success(),
        "scr {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
