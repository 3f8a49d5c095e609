//! Generates a planted dataset and writes it in the on-disk layout the
//! pipeline reads.
//!
//! ```text
//! cargo run --example synth_dataset -- [strength] [out_dir]
//! ```

use std::path::PathBuf;

use prefill_router::synth::{generate, SynthSpec};

fn main() -> prefill_router::Result<()> {
    let mut args = std::env::args().skip(1);
    let strength: f64 = args.next().map(|s| s.parse().expect("strength")).unwrap_or(2.0);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pfrouter_synth"));

    let mut spec = SynthSpec::planted(strength);
    spec.n_queries = 1500;
    let data = generate(&spec)?;
    data.write(&dir)?;

    println!("wrote {} queries to {}", data.labels.len(), dir.display());
    println!(
        "signal at {} layer {} ({})",
        data.metadata.signal_encoder_id, data.metadata.signal_layer, data.metadata.signal_pooling
    );
    for t in &data.metadata.targets {
        println!(
            "{:<8} base rate {:.3} (target {:.2})  bias {:+.3}  Bayes AUC {:.4}",
            t.model_id, t.realized_base_rate, t.target_base_rate, t.bias, t.bayes_auc
        );
    }
    for (regime, n) in data.labels.regime_counts() {
        println!("{:<14} {n}", regime.as_str());
    }
    Ok(())
}
