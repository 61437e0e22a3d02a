mod common;

use common::*;
use dsp_core::dal::{
    evaluate, train_dal, train_dal_from, DalConfig, DalModel, DalSample, DomainBranch, GrlConfig, LabeledImage,
};
use dsp_core::label::SoftDomainLabel;
use dsp_core::synth::{gen_dataset, DatasetConfig};
use dsp_core::Image;
use rand::Rng;

fn fixture(seed: u64, per_domain: usize) -> (Vec<DalSample>, Vec<LabeledImage>) {
    let data = gen_dataset(&DatasetConfig {
        images_per_domain: per_domain,
        heldout_images: 40,
        size: 16,
        contrast: 0.3,
        seed,
        ..Default::default()
    })
    .unwrap();
    let train = data
        .train
        .iter()
        .map(|s| DalSample {
            image: s.image.clone(),
            class: s.class,
            pseudo: Some(SoftDomainLabel::one_hot(s.domain, 4).unwrap()),
        })
        .collect();
    let heldout = data
        .heldout
        .iter()
        .map(|s| LabeledImage {
            image: s.image.clone(),
            class: s.class,
        })
        .collect();
    (train, heldout)
}

fn cfg(seed: u64, epochs: usize) -> DalConfig {
    DalConfig {
        seed,
        epochs,
        bank_channels: 8,
        embed_dim: 16,
        ..Default::default()
    }
}

fn adv(lambda: f64) -> DomainBranch {
    DomainBranch::Adversarial(GrlConfig::new(lambda).unwrap())
}

#[test]
fn zero_lambda_is_bitwise_detached() {
    let (train, held) = fixture(1, 30);
    let c = cfg(4, 4);
    let a = train_dal(&train, &c, adv(0.0), Some(&held)).unwrap();
    let b = train_dal(&train, &c, DomainBranch::Detached, Some(&held)).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.trace, b.trace);
    let off = train_dal(&train, &c, DomainBranch::Off, Some(&held)).unwrap();
    assert_eq!(off.model.backbone, a.model.backbone);
    assert_eq!(off.model.task, a.model.task);
}

#[test]
fn training_is_deterministic() {
    let (train, held) = fixture(2, 20);
    let c = cfg(9, 3);
    let a = train_dal(&train, &c, adv(0.7), Some(&held)).unwrap();
    let b = train_dal(&train, &c, adv(0.7), Some(&held)).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.trace, b.trace);
    for m in &a.trace {
        assert!(m.task_loss.is_finite() && m.dal_loss.is_finite());
        assert!((0.0..=1.0).contains(&m.disc_acc));
    }
}

#[test]
fn swapping_domain_coordinates_leaves_the_task_trajectory() {
    let (mut train, held) = fixture(3, 20);
    let mut r = rng(3);
    for s in &mut train {
        s.pseudo = Some(random_label(&mut r, 4));
    }
    let c = cfg(5, 3);
    let model = DalModel::init(3, 4, &c, 3).unwrap();
    let mut swapped_model = model.clone();
    swapped_model.disc.permute_outputs(&[0, 2, 1, 3]).unwrap();
    let swapped: Vec<DalSample> = train
        .iter()
        .map(|s| DalSample {
            pseudo: s.pseudo.as_ref().map(|l| l.swapped(1, 2)),
            ..s.clone()
        })
        .collect();
    let a = train_dal_from(model, &train, &c, adv(0.7), Some(&held)).unwrap();
    let b = train_dal_from(swapped_model, &swapped, &c, adv(0.7), Some(&held)).unwrap();
    let close = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() < 1e-9);
    assert!(close(&a.model.task.flat_params(), &b.model.task.flat_params()));
    let (da, db) = (&a.model.backbone.dense, &b.model.backbone.dense);
    assert!(close(&da.weight, &db.weight) && close(&da.bias, &db.bias));
    let mut back = b.model.disc.clone();
    back.permute_outputs(&[0, 2, 1, 3]).unwrap();
    assert!(close(&a.model.disc.flat_params(), &back.flat_params()));
    for (x, y) in a.trace.iter().zip(&b.trace) {
        assert!((x.task_loss - y.task_loss).abs() < 1e-9);
        assert!((x.dal_loss - y.dal_loss).abs() < 1e-9);
    }
}

#[test]
fn reversal_lowers_discriminator_accuracy() {
    for seed in 0..5 {
        let (train, _) = fixture(seed, 60);
        let c = cfg(seed, 15);
        let plain = train_dal(&train, &c, adv(0.0), None).unwrap();
        let reversed = train_dal(&train, &c, adv(0.7), None).unwrap();
        let a0 = plain.trace.last().unwrap().disc_acc;
        let a7 = reversed.trace.last().unwrap().disc_acc;
        assert!(a0 > 0.25, "seed {seed}: lambda 0 accuracy {a0} at chance");
        assert!(a7 < a0, "seed {seed}: reversal did not lower accuracy ({a7} vs {a0})");
    }
}

#[test]
fn untrained_model_is_at_chance() {
    let mut accs = Vec::new();
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let held: Vec<LabeledImage> = (0..200)
            .map(|i| LabeledImage {
                image: Image::new(8, 8, 3, (0..192).map(|_| r.random::<f64>()).collect()).unwrap(),
                class: i % 4,
            })
            .collect();
        let model = DalModel::init(
            4,
            2,
            &DalConfig {
                seed,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        accs.push(evaluate(&model, &held).unwrap());
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((0.15..=0.35).contains(&mean), "mean {mean}");
    assert!(accs.iter().all(|a| (0.15..=0.35).contains(a)), "{accs:?}");
}

#[test]
fn bad_inputs_are_rejected() {
    let (mut train, held) = fixture(4, 5);
    let c = cfg(0, 1);
    assert!(evaluate(&DalModel::init(3, 4, &c, 3).unwrap(), &[]).is_err());
    train[3].pseudo = Some(SoftDomainLabel::uniform(5).unwrap());
    assert!(train_dal(&train, &c, adv(0.7), Some(&held)).is_err());
    train[3].pseudo = None;
    assert!(train_dal(&train, &c, adv(0.7), Some(&held)).is_err());
    assert!(train_dal(&train, &c, DomainBranch::Off, Some(&held)).is_ok());
    assert!(train_dal(&[], &c, DomainBranch::Off, None).is_err());
}

#[test]
fn learning_rate_schedule() {
    let c = DalConfig {
        epochs: 11,
        final_lr_ratio: 0.1,
        ..Default::default()
    };
    assert_eq!(c.lr_at(0), c.learning_rate);
    assert!((c.lr_at(10) - 0.1 * c.learning_rate).abs() < 1e-15);
    assert!((c.lr_at(5) - 0.55 * c.learning_rate).abs() < 1e-15);
    assert!(DalConfig {
        final_lr_ratio: 1.5,
        ..c
    }
    .validate()
    .is_err());
}
