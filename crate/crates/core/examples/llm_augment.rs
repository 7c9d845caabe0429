//! Queries an OpenAI-compatible endpoint for rewrites of one sentence.
//! Needs `SCR_API_KEY`; the endpoint and model come from the arguments.
//!
//! cargo run --example llm_augment -- http://127.0.0.1:8000/v1/chat/completions llama-2-7b-chat ee "text"

use scr::augmentor::{AugmenterConfig, CandidateSource, CountingTransport, LlmSource, Strategy, UreqTransport};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let defaults = AugmenterConfig::default();
    let cfg = AugmenterConfig {
        endpoint_url: args.next().unwrap_or(defaults.endpoint_url),
        model_id: args.next().unwrap_or(defaults.model_id),
        ..AugmenterConfig::default()
    };
    let strategy: Strategy = args.next().as_deref().unwrap_or("ee").parse().map_err(anyhow::Error::msg)?;
    let text = args
        .next()
        .unwrap_or_else(|| "Finnish Talentum reports its operating profit increased to EUR 20.5 mn.".into());

    let source = LlmSource::from_env(cfg, CountingTransport::new(UreqTransport))?;
    let candidates = source.fetch(&text, strategy, source.config().k)?;
    for (i, c) in candidates.iter().enumerate() {
        println!("{}. {c}", i + 1);
    }
    eprintln!("{} request(s)", source.transport().calls());
    Ok(())
}
