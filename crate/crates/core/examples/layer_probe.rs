//! Probes every upper-half layer of a synthetic encoder and picks the
//! routing layer per target by Fisher separability.
//!
//! ```text
//! cargo run --release --example layer_probe -- [strength]
//! ```

use prefill_router::geometry::{probe_layers, render_diagnostics, select_layers, SelectionCriterion};
use prefill_router::ingest::{stratified_split, SplitFractions};
use prefill_router::synth::{generate, SynthSpec};

fn main() -> prefill_router::Result<()> {
    let strength: f64 = std::env::args().nth(1).map(|s| s.parse().expect("strength")).unwrap_or(3.0);
    let mut spec = SynthSpec::planted(strength);
    spec.n_queries = 2000;
    let data = generate(&spec)?;

    let split = stratified_split(&data.labels, SplitFractions::train_test(0.8, 0.2), 0)?;
    let store = &data.stores[0];
    let diags = probe_layers(store, &data.labels, &data.pool, &split, 32)?;
    print!("{}", render_diagnostics(&diags));

    let sel = select_layers(&diags, SelectionCriterion::FisherJ, None)?;
    for c in &sel.choices {
        println!("{:<8} → layer {} {} (J = {:.4})", c.model_id, c.layer, c.pooling, c.score);
    }
    println!("planted layer {}", spec.signal_layer);
    Ok(())
}
