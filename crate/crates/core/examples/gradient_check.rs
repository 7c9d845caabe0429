//! Analytic gradients of the encoder plus cross-entropy against central
//! finite differences in f64.
//!
//! cargo run --example gradient_check

use scr::encoder::{backward, forward, forward_trace, log_softmax, ModelDims, ModelParams, TENSOR_NAMES};

fn main() -> anyhow::Result<()> {
    let dims = ModelDims {
        vocab: 50,
        embed: 8,
        hidden: 16,
        classes: 3,
    };
    let ids = [3, 17, 17, 42, 8];
    let target = 2;
    for seed in 0..3 {
        let p = ModelParams::<f64>::init(dims, seed)?;
        let loss = |q: &ModelParams<f64>| -log_softmax(&forward_trace(q, &ids).unwrap().logits)[target];
        let (probs, trace) = forward(&p, &ids)?;
        let mut dl = probs.clone();
        dl[target] -= 1.0;
        let grads = backward(&p, &trace, &dl)?;

        let eps = 1e-4;
        let mut worst = [0.0f64; 5];
        let mut offset = 0;
        for (k, (_, t)) in grads.tensors().into_iter().enumerate() {
            for (j, analytic) in t.iter().enumerate() {
                let mut plus = p.clone();
                *plus.entry_mut(offset + j) += eps;
                let mut minus = p.clone();
                *minus.entry_mut(offset + j) -= eps;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                worst[k] = worst[k].max(rel);
            }
            offset += t.len();
        }
        print!("seed {seed}:");
        for (name, w) in TENSOR_NAMES.iter().zip(worst) {
            print!("  {name} {w:.1e}");
        }
        println!();
    }
    Ok(())
}
