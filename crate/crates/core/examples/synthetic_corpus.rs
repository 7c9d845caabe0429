//! Writes a generated three-class corpus, its synonym lexicon and a run
//! config into a directory, ready for the `scr` binary:
//!
//! ```text
//! cargo run --example synthetic_corpus -- /tmp/demo 1500
//! scr prepare --config /tmp/demo/run.toml
//! scr augment --config /tmp/demo/run.toml --strategy ee --offline-mock
//! scr train   --config /tmp/demo/run.toml --offline-mock
//! scr eval    --config /tmp/demo/run.toml --split test
//! scr report  --log-dir /tmp/demo/run
//! ```

use std::fs::{self, File};
use std::path::PathBuf;

use anyhow::Result;
use scr::cli::RunConfig;
use scr::synthetic::{flat_corpus, ring_lexicon, write_csv, SyntheticSpec};
use scr::trainer::TrainStrategy;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic-demo".into()));
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1500);
    fs::create_dir_all(&dir)?;

    let spec = SyntheticSpec::default();
    write_csv(File::create(dir.join("corpus.csv"))?, &flat_corpus(n, &spec))?;
    let lexicon = ring_lexicon(spec.markers_per_class, spec.lexicon_width);
    fs::write(dir.join("lexicon.tsv"), lexicon.to_tsv())?;

    let mut cfg = RunConfig::default();
    cfg.out_dir = "run".into();
    cfg.data.input = Some("corpus.csv".into());
    cfg.data.lexicon = Some("lexicon.tsv".into());
    cfg.regime.labels_per_class = 30;
    cfg.train.strategy = TrainStrategy::Ee;
    cfg.train.lr = 3e-3;
    cfg.encoder.embed = 32;
    cfg.encoder.hidden = 32;
    fs::write(dir.join("run.toml"), cfg.to_toml())?;
    println!("wrote {n} examples, lexicon and run.toml to {}", dir.display());
    Ok(())
}
