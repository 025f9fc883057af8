use cyclerep::harness::{embed_test, eval_embeddings, prepare_bench, test_labels, ExperimentConfig};
use cyclerep::head::HeadParams;
use cyclerep::rngpub::derive_seed_pub;

#[test]
fn probe() {
    let mut cfg = ExperimentConfig::default();
    cfg.seeds = vec![1];
    let bench = prepare_bench(&cfg, 1).unwrap();
    let mut head = cfg.train.head.clone();
    head.in_channels = cfg.dataset.encoder_channels;
    // same init path as the trainer, but zero training iterations
    let mut params = HeadParams::init(&head, derive_seed_pub(derive_seed_pub(1, 33), 1)).unwrap();
    let clips: Vec<_> = bench.train_features.iter().take(4)
        .map(|s| cyclerep::train::clip_from_features(s, 0, 100, 2).unwrap()).collect();
    cyclerep::head::calibrate(&mut params, &clips, &head).unwrap();
    let embs = embed_test(&cfg, &bench, &params).unwrap();
    let report = eval_embeddings(&cfg, &embs, &test_labels(&bench)).unwrap();
    println!("UNTRAINED calibrated head: AP {:.4} F1 {:.4} oracle {:.4}", report.ap, report.f1, report.oracle_f1);
}
