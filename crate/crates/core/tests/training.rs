mod common;

use common::{flat, per_instance_grad, RefAdamW};

use mgtd::augment::{augment_corpus, NoiseParaphraser};
use mgtd::config::TrainConfig;
use mgtd::corpus::{Document, Label};
use mgtd::model::{Model, Params};
use mgtd::synthetic;
use mgtd::trainer::{fit, steps_per_epoch, AdamW, Trainer};
use mgtd::{build_instance, ContrastiveInstance, Error};

fn instances(n: usize, seed: u64) -> Vec<ContrastiveInstance> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Machine } else { Label::Human };
            let d = Document::new(format!("i{i}"), common::random_text(&mut rng, 10), label);
            build_instance(&d, common::random_text(&mut rng, 10)).unwrap()
        })
        .collect()
}

#[test]
fn trainer_matches_reference_optimizer_with_trailing_group() {
    // 11 instances, micro-batch 3, accumulation 2: micro-batches of 3,3,3,2
    // grouped as [3,3] and [3,2].
    let data = instances(11, 1);
    let cfg = TrainConfig {
        micro_batch: 3,
        accumulation_steps: 2,
        shuffle: false,
        dropout_p: 0.0,
        learning_rate: 1e-2,
        weight_decay: 0.05,
        ..common::small_train_config()
    };
    let mut trainer = Trainer::new(&cfg).unwrap();
    let mut model = Model::new(cfg.model_config(), cfg.seed).unwrap();
    let mut p = flat(&model.params);
    let mut opt = RefAdamW::new(p.len());

    let stats = trainer.train_epoch(&data, 1).unwrap();
    assert_eq!(stats.optimizer_steps, 2);
    assert_eq!(steps_per_epoch(11, 3, 2), 2);

    for group in [&data[0..6], &data[6..11]] {
        let micro: Vec<&[ContrastiveInstance]> = group.chunks(3).collect();
        let mut g = vec![0.0; p.len()];
        for mb in &micro {
            for inst in mb.iter() {
                let gi = per_instance_grad(&model, inst, &cfg);
                let scale = 1.0 / (micro.len() * mb.len()) as f64;
                g.iter_mut().zip(gi).for_each(|(a, b)| *a += b * scale);
            }
        }
        opt.step(&mut p, &g, cfg.learning_rate, cfg.weight_decay);
        let mut it = p.iter();
        for s in model.params.slices_mut() {
            s.iter_mut().for_each(|x| *x = *it.next().unwrap());
        }
    }
    let got = flat(&trainer.model.params);
    // The trainer stores f32-representable parameters; the reference does not.
    let worst = got.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "max deviation {worst:e}");
}

#[test]
fn adamw_single_step_matches_hand_computation() {
    let cfg = TrainConfig { embed_dim: 2, hidden_dim: 2, vocab_buckets: 2, ..Default::default() };
    let mut params = Params::init(&cfg.model_config(), 3);
    let before = flat(&params);
    let mut grads = params.zeros_like();
    grads.fill(0.5);
    let mut opt = AdamW::new(&params, 0.1, 0.01);
    opt.step(&mut params, &grads);
    // First step: mhat = g, vhat = g^2, so the update is lr * g / (|g| + eps).
    for (a, b) in flat(&params).iter().zip(before) {
        let want = b * (1.0 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((a - want).abs() < 1e-6, "{a} vs {want}");
    }
}

#[test]
fn same_seed_same_run_different_seed_different_run() {
    let docs = synthetic::generate(120, 2);
    let (train, val) = synthetic::split_holdout(&docs, 0.25, 2);
    let inst = augment_corpus(&train, &NoiseParaphraser::new(2)).unwrap();
    let cfg = TrainConfig { max_epochs: 3, learning_rate: 1e-3, ..common::small_train_config() };
    let a = fit(&inst, &val, &cfg).unwrap();
    let b = fit(&inst, &val, &cfg).unwrap();
    assert!(a.record.same_outcome(&b.record));
    assert_eq!(a.steps, b.steps);
    assert_eq!(flat(&a.model.params), flat(&b.model.params));

    let c = fit(&inst, &val, &TrainConfig { seed: 9, ..cfg }).unwrap();
    assert_ne!(flat(&a.model.params), flat(&c.model.params));
}

#[test]
fn worker_count_does_not_change_results() {
    let docs = synthetic::generate(80, 3);
    let (train, val) = synthetic::split_holdout(&docs, 0.25, 3);
    let inst = augment_corpus(&train, &NoiseParaphraser::new(3)).unwrap();
    let cfg = TrainConfig { max_epochs: 2, ..common::small_train_config() };
    let one = fit(&inst, &val, &cfg).unwrap();
    let four = fit(&inst, &val, &TrainConfig { workers: 4, ..cfg }).unwrap();
    assert_eq!(one.record.epochs, four.record.epochs);
}

#[test]
fn epoch_records_and_step_counts() {
    let docs = synthetic::generate(100, 4);
    let (train, val) = synthetic::split_holdout(&docs, 0.2, 4);
    let inst = augment_corpus(&train, &NoiseParaphraser::new(4)).unwrap();
    let cfg = TrainConfig { max_epochs: 4, patience: 2, learning_rate: 1e-3, ..common::small_train_config() };
    let out = fit(&inst, &val, &cfg).unwrap();
    let rec = &out.record;
    assert_eq!(rec.epochs.len(), rec.stopped_epoch);
    assert!(rec.best_epoch >= 1 && rec.best_epoch <= rec.stopped_epoch);
    assert_eq!(out.steps.len(), rec.stopped_epoch * steps_per_epoch(80, 2, 8));
    assert_eq!(out.steps.last().unwrap().step, out.steps.len());
    let json = serde_json::to_value(&rec.epochs[0]).unwrap();
    for key in ["epoch", "train_loss", "L_con", "L_cls_pos", "L_cls_neg", "val_accuracy", "val_macro_f1", "val_micro_f1", "val_loss"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    let best = &rec.epochs[rec.best_epoch - 1];
    assert!(rec.epochs.iter().all(|e| e.val_accuracy <= best.val_accuracy));
}

#[test]
fn diverging_run_reports_step_and_ids() {
    let data = instances(4, 5);
    let cfg = TrainConfig { learning_rate: 1e300, ..common::small_train_config() };
    let mut t = Trainer::new(&cfg).unwrap();
    let mut err = None;
    for epoch in 1..=5 {
        if let Err(e) = t.train_epoch(&data, epoch) {
            err = Some(e);
            break;
        }
    }
    match err {
        Some(Error::NonFiniteLoss { step, ids, .. }) => {
            assert!(step >= 2);
            assert_eq!(ids.len(), 2);
        }
        Some(other) => panic!("unexpected {other}"),
        None => panic!("training did not diverge"),
    }
}
