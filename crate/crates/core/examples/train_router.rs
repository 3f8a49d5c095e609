//! Trains the shared-trunk ensemble on PCA features and reports held-out
//! AUC and Brier per target.
//!
//! ```text
//! cargo run --release --example train_router
//! ```

use std::collections::BTreeMap;

use prefill_router::evaluation::{brier, roc_auc};
use prefill_router::features::{build_features, fit_pca};
use prefill_router::geometry::{probe_layers, select_layers, SelectionCriterion};
use prefill_router::ingest::{stratified_split, SplitFractions};
use prefill_router::predictors::{predict, train_shared_trunk, TrunkNetConfig};
use prefill_router::synth::{generate, SynthSpec};

fn main() -> prefill_router::Result<()> {
    let spec = SynthSpec::planted(3.0);
    let data = generate(&spec)?;
    let bayes: BTreeMap<String, f64> = data
        .metadata
        .targets
        .iter()
        .map(|t| (t.model_id.clone(), t.bayes_auc))
        .collect();
    let (stores, labels, pool, _) = data.into_parts();
    let split = stratified_split(&labels, SplitFractions::train_test(0.8, 0.2), 0)?;
    let targets = pool.model_ids();

    let diags = probe_layers(&stores["enc0"], &labels, &pool, &split, 32)?;
    let selection = select_layers(&diags, SelectionCriterion::FisherJ, None)?;
    // full rank: the planted direction carries no extra variance, so a
    // truncated PCA would discard part of it
    let mut pcas = BTreeMap::new();
    for c in &selection.choices {
        let x = stores[&c.encoder_id].rows(c.key(), &split.train_ids)?;
        pcas.insert(c.model_id.clone(), fit_pca(x.view(), 64, 0)?);
    }
    let train = build_features(&stores, &selection, &pcas, &targets, &split.train_ids)?;
    let test = build_features(&stores, &selection, &pcas, &targets, &split.test_ids)?;

    let cfg = TrunkNetConfig {
        trunk_hidden_sizes: vec![64, 32],
        max_epochs: 80,
        ..Default::default()
    };
    let y = labels.label_matrix(&split.train_ids, &targets)?;
    let ens = train_shared_trunk(train.data.view(), y.view(), &targets, &cfg, 0)?;
    for (i, m) in ens.members.iter().enumerate() {
        let mark = if ens.selected.contains(&i) { "*" } else { " " };
        println!("{mark} seed {:>20}  val loss {:.4}  best epoch {}", m.seed, m.val_loss, m.best_epoch);
    }

    let p = predict(&ens, &test)?;
    for (k, t) in targets.iter().enumerate() {
        let y: Vec<bool> = split
            .test_ids
            .iter()
            .map(|id| labels.is_correct(id, t))
            .collect::<prefill_router::Result<_>>()?;
        let s = p.probs.column(k).to_vec();
        println!(
            "{t:<8} AUC {:.4} (Bayes {:.4})  Brier {:.4}",
            roc_auc(&s, &y)?,
            bayes[t],
            brier(&s, &y)
        );
    }
    Ok(())
}
