use morphorank_core::models::{CostModel, Model, ModelCheckpoint, Ranker, S1Model, S1Variant, SemanticModel, SemanticNorm};
use morphorank_core::synth::{planted_corpus, random_batch, PlantedConfig};
use morphorank_core::training::{item_gradient, train_family, Adam, AdamConfig, Bases, TrainConfig};

#[test]
fn small_step_linear_utility_descends_monotonically() {
    let cost = CostModel::new(&[16], 1);
    let sem = SemanticModel::new(&[32, 16], SemanticNorm::Feature, 2);
    let mut model = Model::S1(S1Model::new(S1Variant::Linear, cost, sem, &[], 3));
    let batch = random_batch(40, 5);
    let negatives: Vec<usize> = (1..batch.len()).collect();
    let mut adam = Adam::new(
        AdamConfig {
            lr: 1e-4,
            ..AdamConfig::default()
        },
        model.params().len(),
    );
    let mut prev = f64::INFINITY;
    for step in 0..300 {
        let mut grad = vec![0.0; model.params().len()];
        let loss = item_gradient(&model, &batch, &negatives, &mut grad);
        assert!(loss <= prev, "step {step}: {loss} > {prev}");
        prev = loss;
        adam.step(model.params_mut().values_mut(), &grad).unwrap();
    }
}

#[test]
fn saved_checkpoint_scores_identically_after_reload() {
    let corpus = planted_corpus(&PlantedConfig {
        n_concepts: 40,
        ..PlantedConfig::default()
    });
    let cfg = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let (train, val) = corpus.batches.split_at(30);
    let (ck, report) = train_family(morphorank_core::models::Family::Semantic, train, val, Bases::none(), &cfg, 4).unwrap();
    assert_eq!(report.epochs.len(), 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("semantic.ckpt");
    ck.save(&path).unwrap();
    let back = ModelCheckpoint::load(&path).unwrap();
    assert_eq!(back.digest(), ck.digest());
    let (a, b) = (ck.to_model().unwrap(), back.to_model().unwrap());
    for batch in val {
        let (x, y) = (a.score(batch), b.score(batch));
        assert!(x.iter().zip(&y).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
