use factprobe::corpus::{
    generate_leakage_corpus, stratified_split, ClaimRecord, EvidenceSnippet, LeakageSpec, SplitBundle, SplitRatios,
};
use factprobe::forest::ForestConfig;
use factprobe::neural::{Module, TrainConfig};
use factprobe::probes::{
    fit_probe, Checkpoint, ContextualModel, Family, FeatureAssets, FeatureSettings, Hyper, InputRegime, Probe,
    RecurrentModel, TransformerArch,
};
use factprobe::seed;
use proptest::prelude::*;
use rand::Rng;

fn arch() -> TransformerArch {
    TransformerArch {
        heads: 2,
        layers: 1,
        ff_multiplier: 2,
        max_positions: 131,
    }
}

fn neural(hidden: usize, epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 5e-3,
        batch_size: 16,
        lstm_layers: 1,
        dropout: 0.1,
        hidden_dim: hidden,
        patience: 2,
        max_epochs: epochs,
        seed: 9,
    }
}

fn small_forest() -> ForestConfig {
    ForestConfig {
        n_trees: 20,
        min_samples_leaf: 1,
        min_samples_split: 2,
        ..ForestConfig::best()
    }
}

fn corpus(n: usize, leakage: f64, decay: f64) -> (SplitBundle, factprobe::corpus::LabelScheme) {
    let spec = LeakageSpec {
        n,
        leakage,
        rank_decay: decay,
        ..Default::default()
    };
    let records = generate_leakage_corpus(&spec, 5).unwrap();
    (
        stratified_split(&records, 3, SplitRatios::default()).unwrap(),
        spec.scheme(),
    )
}

fn assets(splits: &SplitBundle) -> FeatureAssets {
    FeatureAssets::build(
        &splits.train,
        &FeatureSettings {
            embedding_dim: 8,
            ..Default::default()
        },
    )
    .unwrap()
}

fn hyper(family: Family, epochs: usize) -> Hyper {
    match family {
        Family::Forest => Hyper::Forest(small_forest()),
        _ => Hyper::Neural(neural(8, epochs)),
    }
}

fn random_text<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(0..15);
    (0..n)
        .map(|_| format!("w{}", rng.gen_range(0..3000)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn replace_claim<R: Rng>(r: &ClaimRecord, rng: &mut R) -> ClaimRecord {
    ClaimRecord {
        claim_text: random_text(rng),
        ..r.clone()
    }
}

fn replace_evidence<R: Rng>(r: &ClaimRecord, rng: &mut R) -> ClaimRecord {
    let snippets = (1..=10u8)
        .map(|k| {
            if rng.gen_bool(0.3) {
                EvidenceSnippet::pad(k)
            } else {
                EvidenceSnippet::new(k, random_text(rng), "x.org")
            }
        })
        .collect();
    ClaimRecord { snippets, ..r.clone() }
}

fn bits(p: &Probe, r: &ClaimRecord) -> Vec<u64> {
    p.predict(r)
        .unwrap()
        .probabilities
        .iter()
        .map(|v| v.to_bits())
        .collect()
}

fn trained_pair(family: Family) -> (Probe, Probe, Vec<ClaimRecord>) {
    let (splits, scheme) = corpus(200, 0.8, 0.8);
    let a = assets(&splits);
    let fit = |regime| {
        fit_probe(family, regime, &splits, &scheme, &a, &arch(), &hyper(family, 2))
            .unwrap()
            .0
    };
    (fit(InputRegime::ClaimOnly), fit(InputRegime::EvidenceOnly), splits.test)
}

fn isolation(family: Family) {
    let (claim_probe, evidence_probe, test) = trained_pair(family);
    let mut rng = seed::rng(77);
    for r in test.iter().take(40) {
        assert_eq!(
            bits(&claim_probe, r),
            bits(&claim_probe, &replace_evidence(r, &mut rng))
        );
        assert_eq!(
            bits(&evidence_probe, r),
            bits(&evidence_probe, &replace_claim(r, &mut rng))
        );
    }
}

#[test]
fn forest_regime_isolation() {
    isolation(Family::Forest);
}

#[test]
fn recurrent_regime_isolation() {
    isolation(Family::Recurrent);
}

#[test]
fn contextual_regime_isolation() {
    isolation(Family::Contextual);
}

fn zero_params<M: Module>(m: &mut M) {
    m.zero_();
}

#[test]
fn zero_parameters_give_uniform_distribution() {
    let (splits, scheme) = corpus(100, 0.8, 0.8);
    let a = assets(&splits);
    let r = &splits.test[0];
    let mut rec = RecurrentModel::new(&a, InputRegime::ClaimPlusEvidence, scheme.len(), &neural(4, 1));
    zero_params(&mut rec.params);
    let mut ctx = ContextualModel::new(&a, InputRegime::ClaimPlusEvidence, scheme.len(), &arch(), &neural(4, 1));
    zero_params(&mut ctx.params);
    for p in [rec.predict(r).unwrap(), ctx.predict(r).unwrap()] {
        for v in &p.probabilities {
            assert!((v - 0.2).abs() < 1e-12);
        }
        assert_eq!(p.argmax, 0);
    }
}

#[test]
fn claim_conditioning_changes_snippet_encoding() {
    let (splits, scheme) = corpus(100, 0.8, 0.8);
    let a = assets(&splits);
    let r = &splits.test[0];
    let pair = ContextualModel::new(&a, InputRegime::ClaimPlusEvidence, scheme.len(), &arch(), &neural(8, 1));
    let alone = ContextualModel {
        regime: InputRegime::EvidenceOnly,
        ..pair.clone()
    };
    let with_claim = pair.encode_cls(&pair.input(r).snippets[0]).unwrap();
    let without = pair.encode_cls(&alone.input(r).snippets[0]).unwrap();
    assert_ne!(with_claim, without);
}

#[test]
fn missing_evidence_is_flagged_and_constant() {
    let (splits, scheme) = corpus(200, 0.8, 0.8);
    let a = assets(&splits);
    let strip = |r: &ClaimRecord| ClaimRecord {
        snippets: (1..=10).map(EvidenceSnippet::pad).collect(),
        ..r.clone()
    };
    for family in Family::ALL {
        let (p, _) = fit_probe(
            family,
            InputRegime::EvidenceOnly,
            &splits,
            &scheme,
            &a,
            &arch(),
            &hyper(family, 1),
        )
        .unwrap();
        let d0 = p.predict(&strip(&splits.test[0])).unwrap();
        let d1 = p.predict(&strip(&splits.test[1])).unwrap();
        assert!(d0.evidence_missing);
        assert_eq!(d0, d1);
        assert!(!p.predict(&splits.test[0]).unwrap().evidence_missing);
    }
}

#[test]
fn patience_zero_runs_one_epoch() {
    let (splits, scheme) = corpus(120, 0.8, 0.8);
    let a = assets(&splits);
    let config = TrainConfig {
        patience: 0,
        ..neural(4, 50)
    };
    for family in [Family::Recurrent, Family::Contextual] {
        let (p, _) = fit_probe(
            family,
            InputRegime::EvidenceOnly,
            &splits,
            &scheme,
            &a,
            &arch(),
            &Hyper::Neural(config.clone()),
        )
        .unwrap();
        assert_eq!(p.history.unwrap().epochs.len(), 1);
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let (splits, scheme) = corpus(150, 0.8, 0.8);
    let a = assets(&splits);
    for family in Family::ALL {
        let run = || {
            fit_probe(
                family,
                InputRegime::ClaimPlusEvidence,
                &splits,
                &scheme,
                &a,
                &arch(),
                &hyper(family, 3),
            )
            .unwrap()
        };
        let (p1, f1) = run();
        let (p2, f2) = run();
        assert_eq!(p1, p2);
        assert_eq!(f1, f2);
        if let Some(h) = &p1.history {
            let bits: Vec<u64> = h.epochs.iter().map(|e| e.train_loss.to_bits()).collect();
            let bits2: Vec<u64> = p2
                .history
                .as_ref()
                .unwrap()
                .epochs
                .iter()
                .map(|e| e.train_loss.to_bits())
                .collect();
            assert_eq!(bits, bits2);
        }
    }
}

#[test]
fn full_leakage_is_learned_by_the_recurrent_probe() {
    let (splits, scheme) = corpus(500, 1.0, 1.0);
    let a = assets(&splits);
    let config = TrainConfig {
        learning_rate: 1e-2,
        patience: 20,
        ..neural(16, 20)
    };
    let (p, fit) = fit_probe(
        Family::Recurrent,
        InputRegime::EvidenceOnly,
        &splits,
        &scheme,
        &a,
        &arch(),
        &Hyper::Neural(config),
    )
    .unwrap();
    let h = p.history.unwrap();
    assert!(h.epochs.len() <= 20);
    assert!(fit.val_macro_f1 >= 0.95, "validation macro F1 {}", fit.val_macro_f1);
}

#[test]
fn checkpoints_round_trip_bitwise() {
    let (splits, scheme) = corpus(120, 0.8, 0.8);
    let a = assets(&splits);
    let dir = tempfile::tempdir().unwrap();
    for family in Family::ALL {
        let (p, _) = fit_probe(
            family,
            InputRegime::ClaimPlusEvidence,
            &splits,
            &scheme,
            &a,
            &arch(),
            &hyper(family, 1),
        )
        .unwrap();
        let path = dir.path().join(format!("{family}.json"));
        Checkpoint::new(p.clone()).save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.family, family);
        assert_eq!(back.probe, p);
        for r in &splits.test {
            assert_eq!(bits(&p, r), bits(&back.probe, r));
        }
    }
}

#[test]
fn tampered_checkpoint_is_rejected() {
    let (splits, scheme) = corpus(120, 0.8, 0.8);
    let a = assets(&splits);
    let (p, _) = fit_probe(
        Family::Forest,
        InputRegime::ClaimOnly,
        &splits,
        &scheme,
        &a,
        &arch(),
        &hyper(Family::Forest, 1),
    )
    .unwrap();
    let mut c = Checkpoint::new(p);
    c.regime = InputRegime::EvidenceOnly;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    c.save(&path).unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn distributions_are_valid(idx in 0usize..30, family in 0usize..3, regime in 0usize..3) {
        let (splits, scheme) = corpus(100, 0.8, 0.8);
        let a = assets(&splits);
        let family = Family::ALL[family];
        let (p, _) = fit_probe(family, InputRegime::ALL[regime], &splits, &scheme, &a, &arch(), &hyper(family, 1)).unwrap();
        let d = p.predict(&splits.test[idx % splits.test.len()]).unwrap();
        prop_assert_eq!(d.probabilities.len(), scheme.len());
        prop_assert!(d.probabilities.iter().all(|v| *v >= 0.0));
        prop_assert!((d.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
