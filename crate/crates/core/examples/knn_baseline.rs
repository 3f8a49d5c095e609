//! Exact kNN correctness baselines on the same PCA features the trunk uses,
//! for a few k and both weighting modes.
//!
//! ```text
//! cargo run --release --example knn_baseline
//! ```

use std::collections::BTreeMap;

use prefill_router::evaluation::roc_auc;
use prefill_router::features::{build_features, fit_pca};
use prefill_router::geometry::{probe_layers, select_layers, SelectionCriterion};
use prefill_router::ingest::{stratified_split, SplitFractions};
use prefill_router::predictors::{knn_predict, KnnIndex, KnnMode};
use prefill_router::synth::{generate, SynthSpec};

fn main() -> prefill_router::Result<()> {
    let mut spec = SynthSpec::planted(3.0);
    spec.n_queries = 2000;
    let (stores, labels, pool, _) = generate(&spec)?.into_parts();
    let split = stratified_split(&labels, SplitFractions::train_test(0.8, 0.2), 0)?;
    let targets = pool.model_ids();

    let diags = probe_layers(&stores["enc0"], &labels, &pool, &split, 32)?;
    let selection = select_layers(&diags, SelectionCriterion::FisherJ, None)?;
    let mut pcas = BTreeMap::new();
    for c in &selection.choices {
        let x = stores[&c.encoder_id].rows(c.key(), &split.train_ids)?;
        pcas.insert(c.model_id.clone(), fit_pca(x.view(), 16, 0)?);
    }
    let train = build_features(&stores, &selection, &pcas, &targets, &split.train_ids)?;
    let test = build_features(&stores, &selection, &pcas, &targets, &split.test_ids)?;

    let index = KnnIndex::new(
        train.data.clone(),
        labels.label_matrix(&split.train_ids, &targets)?,
        targets.clone(),
    )?;
    let truth = labels.label_matrix(&split.test_ids, &targets)?;
    for mode in [KnnMode::Majority, KnnMode::InverseDistance] {
        for k in [5, 25, 100] {
            let p = knn_predict(&index, test.data.view(), &test.query_ids, k, mode)?;
            let aucs = (0..targets.len())
                .map(|t| {
                    let y: Vec<bool> = truth.column(t).iter().map(|&v| v > 0.5).collect();
                    roc_auc(&p.probs.column(t).to_vec(), &y)
                })
                .collect::<prefill_router::Result<Vec<_>>>()?;
            let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
            println!("{mode:?} k={k:<4} mean AUC {mean:.4}  {aucs:.3?}");
        }
    }
    Ok(())
}
