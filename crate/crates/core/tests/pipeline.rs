mod common;

use viewfill::dualnet::encode_checkpoint;
use viewfill::pipeline::{
    composite, copy_cloud_baseline, infer, precompute_geometry, precompute_geometry_with, train_scene, GeometryOptions,
    InferConfig, PerturbKind, Perturbation, Sampler, TrainConfig, Variant,
};
use viewfill::scene::{generate_scene, preset, SceneBundle};
use viewfill::{Error, MaskImage};

fn scene(name: &str, seed: u64) -> SceneBundle {
    generate_scene(&preset(name).unwrap(), seed).unwrap()
}

fn short(iterations: usize) -> TrainConfig {
    TrainConfig { iterations, batch: 2, ..TrainConfig::default() }
}

#[test]
fn zero_weight_batches_do_nothing() {
    for seed in 0..3 {
        common::zero_weight_contract(seed).unwrap();
    }
}

#[test]
fn training_replays_bit_for_bit() {
    let s = scene("boxes3", 1);
    let products = precompute_geometry(&s).unwrap();
    for v in Variant::ALL {
        let cfg = v.apply(&short(4));
        let a = train_scene(&s, &products, &cfg).unwrap();
        let b = train_scene(&s, &products, &cfg).unwrap();
        assert_eq!(a.losses, b.losses, "{}", v.name());
        assert_eq!(encode_checkpoint(&a.model), encode_checkpoint(&b.model), "{}", v.name());
    }
}

#[test]
fn loss_falls_over_200_steps() {
    let s = scene("boxes3", 2);
    let products = precompute_geometry(&s).unwrap();
    let out = train_scene(&s, &products, &TrainConfig { iterations: 200, ..TrainConfig::default() }).unwrap();
    // small timesteps make single-batch losses heavy-tailed; compare medians
    let median = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (head, tail) = (median(&out.losses[..50]), median(&out.losses[150..]));
    assert!(tail < 0.7 * head, "loss {head} -> {tail}");
    assert_eq!(out.updates, 200);
}

#[test]
fn inference_keeps_known_pixels_and_handles_degenerate_inputs() {
    let s = scene("boxes3", 3);
    let products = precompute_geometry(&s).unwrap();
    let model = train_scene(&s, &products, &short(3)).unwrap().model;

    let out = infer(&s, &products, &model, &InferConfig { steps: 5, ..InferConfig::default() }).unwrap();
    assert_eq!(out, composite(&out, &s));
    let raw = infer(&s, &products, &model, &InferConfig { steps: 5, composite: false, ..InferConfig::default() }).unwrap();
    assert_eq!(composite(&raw, &s), out);

    let one = InferConfig { steps: 1, sampler: Sampler::Ancestral, ..InferConfig::default() };
    assert!(infer(&s, &products, &model, &one).unwrap().data().iter().all(|v| (0.0..=1.0).contains(v)));

    // nothing to complete
    let mut whole = s.clone();
    whole.target.completion = MaskImage::zeros(64, 64);
    let p = precompute_geometry(&whole).unwrap();
    assert_eq!(infer(&whole, &p, &model, &InferConfig { steps: 3, ..InferConfig::default() }).unwrap(), whole.target.view.image);

    // no cloud at all
    let sparse = Perturbation { kind: PerturbKind::Sparse, level: 1.0, sigma_fraction: 0.0, seed: 0 };
    let p = precompute_geometry_with(&s, &GeometryOptions { perturbation: Some(sparse), ..GeometryOptions::default() }).unwrap();
    assert!(p.target_cloud.coverage.is_all_zero());
    infer(&s, &p, &model, &InferConfig { steps: 3, ..InferConfig::default() }).unwrap();

    assert!(matches!(infer(&s, &products, &model, &InferConfig { steps: 0, ..InferConfig::default() }), Err(Error::Config(_))));
}

#[test]
fn level_zero_perturbation_is_the_clean_geometry() {
    let s = scene("dynamic2", 4);
    let clean = precompute_geometry(&s).unwrap();
    for kind in [PerturbKind::Noise, PerturbKind::Sparse, PerturbKind::MaskError, PerturbKind::MaskRemoval] {
        let p = Perturbation { kind, level: 0.0, sigma_fraction: 0.02, seed: 9 };
        let opts = GeometryOptions { perturbation: Some(p), ..GeometryOptions::default() };
        assert_eq!(precompute_geometry_with(&s, &opts).unwrap(), clean, "{}", kind.name());
    }
}

#[test]
fn copy_cloud_baseline_pastes_the_projection() {
    let s = scene("colocated", 5);
    let products = precompute_geometry(&s).unwrap();
    let out = copy_cloud_baseline(&s, &products).unwrap();
    let reference = &s.references[0].view.image;
    for i in 0..64 * 64 {
        if !s.target.completion.get_at(i) {
            assert_eq!(out.pixel_at(i), s.target.view.image.pixel_at(i));
        } else if products.target_cloud.coverage.get_at(i) {
            assert_eq!(out.pixel_at(i), reference.pixel_at(i));
        }
    }
}
