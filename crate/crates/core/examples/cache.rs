//! The candidate cache: first lookups fetch, later ones are free, and the
//! file survives restarts.
//!
//! cargo run --example cache

use scr::augmentor::{get_or_fetch, AugmentCache, MockSource, Strategy, SynonymLexicon};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("cache.jsonl");
    let source = MockSource::new(SynonymLexicon::builtin(), 42);
    let texts = [
        "Net sales increased by 5% to EUR 120 mn.",
        "The company expects demand to remain weak.",
        "Net  sales increased by 5% to EUR 120 mn. ",
    ];

    let mut cache = AugmentCache::open(&path)?;
    for t in texts {
        let before = cache.len();
        let rec = get_or_fetch(t, Strategy::Ee, 3, &mut cache, &source)?;
        let how = if cache.len() > before { "fetched" } else { "cached" };
        println!("{how:>7} {} -> {:?}", &rec.key[..12], rec.candidates);
    }

    // A fresh handle sees the same records.
    let reopened = AugmentCache::open(&path)?;
    println!("\n{} records on disk:", reopened.len());
    print!("{}", std::fs::read_to_string(&path)?);
    Ok(())
}
