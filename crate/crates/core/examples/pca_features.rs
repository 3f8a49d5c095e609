//! Fits one PCA per target on its selected layer and assembles the
//! concatenated feature matrix the router is trained on.
//!
//! ```text
//! cargo run --release --example pca_features
//! ```

use std::collections::BTreeMap;

use prefill_router::features::{build_features, fit_pca, PcaModel};
use prefill_router::geometry::{probe_layers, select_layers, SelectionCriterion};
use prefill_router::ingest::{stratified_split, SplitFractions};
use prefill_router::synth::{generate, SynthSpec};

fn main() -> prefill_router::Result<()> {
    let mut spec = SynthSpec::planted(3.0);
    spec.n_queries = 1500;
    let (stores, labels, pool, _) = generate(&spec)?.into_parts();
    let split = stratified_split(&labels, SplitFractions::train_test(0.8, 0.2), 0)?;

    let diags = probe_layers(&stores["enc0"], &labels, &pool, &split, 32)?;
    let selection = select_layers(&diags, SelectionCriterion::FisherJ, None)?;

    let mut pcas: BTreeMap<String, PcaModel> = BTreeMap::new();
    for c in &selection.choices {
        let x = stores[&c.encoder_id].rows(c.key(), &split.train_ids)?;
        let total: f64 = {
            let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
            (&x - &mean).mapv(|v| v * v).sum() / (x.nrows() - 1) as f64
        };
        let pca = fit_pca(x.view(), 16, 0)?;
        println!(
            "{:<8} layer {} {}: 16 components keep {:.1}% of variance",
            c.model_id,
            c.layer,
            c.pooling,
            100.0 * pca.explained_variance().sum() / total
        );
        pcas.insert(c.model_id.clone(), pca);
    }

    let targets = pool.model_ids();
    let train = build_features(&stores, &selection, &pcas, &targets, &split.train_ids)?;
    let test = build_features(&stores, &selection, &pcas, &targets, &split.test_ids)?;
    println!("train {:?}  test {:?}", train.data.dim(), test.data.dim());
    for s in &train.segments {
        println!("  {:<8} columns {}..{}", s.model_id, s.offset, s.offset + s.len);
    }
    Ok(())
}
