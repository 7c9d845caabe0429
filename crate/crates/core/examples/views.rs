//! Weak and strong views of one sentence: synonym replacement, the two
//! prompt strategies, reply parsing and the offline rewriter.
//!
//! cargo run --example views -- "Operating profit rose to EUR 13.1 mn from EUR 8.7 mn."

use scr::augmentor::{
    build_prompt, mock_augment, parse_candidates, select_augmentation, weak_augment, Strategy,
    SynonymLexicon,
};
use scr::seed;

fn main() -> anyhow::Result<()> {
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "Operating profit rose to EUR 13.1 mn from EUR 8.7 mn in the period.".into());
    let lexicon = SynonymLexicon::builtin();

    println!("source: {text}\n");
    println!("weak views (p = 0.3):");
    for s in 0..3 {
        println!("  {}", weak_augment(&text, &lexicon, 0.3, s));
    }

    for strategy in [Strategy::Ee, Strategy::Ce] {
        let p = build_prompt(strategy, &text, 3);
        println!("\n[{strategy}] system: {}\n[{strategy}] user:\n{}", p.system, p.user);
    }

    // A model reply with a preamble. Numbered items win over dash items, so
    // the stray dash line is ignored.
    let reply = "Sure! Here are the rewrites:\n1. Operating profit climbed to EUR 13.1 mn from EUR 8.7 mn.\n\
                 2) The operating profit increased from EUR 8.7 mn to EUR 13.1 mn.\n\
                 - Operating profit grew to EUR 13.1 mn, up from EUR 8.7 mn.";
    println!("\nparsed reply:");
    for c in parse_candidates(reply) {
        println!("  {c}");
    }

    let candidates = mock_augment(&text, 5, 7, &lexicon);
    println!("\noffline rewrites:");
    for c in &candidates {
        println!("  {c}");
    }
    println!("\nstrong view drawn per epoch:");
    for epoch in 0..4u64 {
        let pick = select_augmentation(&candidates, seed::derive_path(7, &[seed::stream::SELECT, epoch, 0]))?;
        println!("  epoch {epoch}: {pick}");
    }
    Ok(())
}
