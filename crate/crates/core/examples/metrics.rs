//! Accuracy, macro-F1, the confusion matrix and a token-frequency table.
//!
//! cargo run --example metrics

use scr::metrics::{token_frequency_report, write_token_report_csv, MetricsBundle};
use scr::LabelSpace;

fn main() -> anyhow::Result<()> {
    let labels = LabelSpace::sentiment3();
    let gold = [0, 0, 0, 1, 1, 1, 1, 2, 2, 2];
    let pred = [0, 0, 1, 1, 1, 1, 2, 2, 2, 0];
    let m = MetricsBundle::compute(&pred, &gold, labels.len())?;
    m.write_csv(std::io::stdout(), &labels)?;
    println!();
    m.write_confusion_csv(std::io::stdout(), &labels)?;

    let texts = [
        "Profit rose sharply as sales rose in all markets.",
        "The company said sales were flat in the quarter.",
        "Operating loss widened as sales fell.",
    ];
    println!();
    write_token_report_csv(std::io::stdout(), &token_frequency_report(texts, 5))?;
    Ok(())
}
