//! Full pipeline on a generated dataset: synth → probe → select → PCA →
//! train → sweep → report.
//!
//! ```text
//! cargo run --release --example end_to_end -- [strength] [out_dir]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use prefill_router::pipeline::{run_pipeline, RunConfig};
use prefill_router::report::report_render;
use prefill_router::synth::{generate, SynthSpec};

fn main() -> prefill_router::Result<()> {
    let mut args = std::env::args().skip(1);
    let strength: f64 = args.next().map(|s| s.parse().expect("strength")).unwrap_or(4.0);
    let root = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pfrouter_end_to_end"));

    let spec = SynthSpec::planted(strength);
    let data = generate(&spec)?;
    data.write(&root.join("data"))?;
    println!("mean Bayes AUC {:.4}", data.metadata.mean_bayes_auc());

    let encoders = [("enc0".to_string(), root.join("data/activations/enc0"))].into();
    let cfg = RunConfig::new(
        root.join("run"),
        root.join("data/labels.csv"),
        root.join("data/pool.toml"),
        encoders,
    );
    let start = Instant::now();
    let out = run_pipeline(&cfg)?;
    for c in &out.selection.choices {
        println!("{:<8} layer {} {} (J = {:.4})", c.model_id, c.layer, c.pooling, c.score);
    }
    print!("{}", report_render(&out.report));
    println!("pipeline took {:.1?}", start.elapsed());
    Ok(())
}
