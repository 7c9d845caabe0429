//! Trains the full objective on a small generated corpus and prints the
//! epoch log and test metrics.
//!
//! cargo run --release --example train_synthetic -- [lr]

use scr::augmentor::MockSource;
use scr::encoder::{ModelDims, ModelParams, Vocab};
use scr::seed::{self, stream};
use scr::synthetic::{generate, SyntheticSpec};
use scr::trainer::{evaluate, fit_with, CandidateTable, TrainData, TrainStrategy};
use scr::{LabelSpace, TrainConfig};

fn main() -> anyhow::Result<()> {
    let lr: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1e-3);
    let spec = SyntheticSpec {
        unlabeled: 1500,
        ..Default::default()
    };
    let corpus = generate(&spec);
    let cfg = TrainConfig {
        lr,
        strategy: TrainStrategy::Ee,
        max_epochs: 60,
        ..Default::default()
    };
    let vocab = Vocab::build(corpus.labeled.texts().chain(corpus.unlabeled.texts()), 10_000, 1);
    let mock = MockSource::new(corpus.lexicon.clone(), seed::derive(cfg.master_seed, stream::MOCK));
    let table = CandidateTable::from_source(&corpus.unlabeled, scr::augmentor::Strategy::Ee, 5, &mock)?;
    let dims = ModelDims {
        vocab: vocab.len(),
        embed: 32,
        hidden: 32,
        classes: 3,
    };
    let init = ModelParams::<f32>::init(dims, seed::derive(cfg.master_seed, stream::INIT))?;
    let data = TrainData {
        labeled: &corpus.labeled,
        unlabeled: &corpus.unlabeled,
        val: &corpus.val,
        vocab: &vocab,
        lexicon: &corpus.lexicon,
        candidates: Some(&table),
    };

    println!("epoch  L_sup    L_con    L_sh     train  val    pseudo  conf/shrunk/dropped");
    let res = fit_with(init, &data, &cfg, &mut |r| {
        let pseudo = r.pseudo_acc.map_or("-".into(), |p| format!("{p:.3}"));
        println!(
            "{:>5}  {:.4}  {:.4}  {:.4}  {:.3}  {:.3}  {pseudo:>6}  {}/{}/{}",
            r.epoch, r.l_sup, r.l_con, r.l_sh, r.train_acc, r.val_acc, r.n_confident, r.n_shrunk, r.n_dropped
        );
    })?;
    let m = evaluate(&res.best, &corpus.test, &vocab)?;
    println!(
        "\nbest epoch {} (val {:.3}); test accuracy {:.4}, macro-F1 {:.4}",
        res.best_epoch, res.best_val_acc, m.accuracy, m.macro_f1
    );
    m.write_confusion_csv(std::io::stdout(), &LabelSpace::sentiment3())?;
    Ok(())
}
