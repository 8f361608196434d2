//! Temporary training-dynamics probe. Not part of the deliverable.

use std::time::Instant;

use evsc_core::decoder::{fused_width, register_role_params, RoleVocab};
use evsc_core::encoder::register_model_params;
use evsc_core::harness::{
    evaluate_verb, freeze_videos, greedy_exact_fraction, prepare_clips, role_targets,
    split_dataset, subset_acc1, teacher_forced_set_loss, train_role, train_verb, ExperimentConfig,
    FeatureSource,
};
use evsc_core::scene::{generate_dataset, VerbOntology};
use evsc_core::tensor::ParamStore;

fn main() {
    let t0 = Instant::now();
    let mut config = ExperimentConfig::default();
    config.validate().unwrap();
    let clips = generate_dataset(&config.dataset.to_generator(), config.seed).unwrap();
    println!("generate: {} clips in {:.1}s", clips.len(), t0.elapsed().as_secs_f64());

    let split = split_dataset(clips, 2000, 400).unwrap();
    let cfg = config.model.to_model_config().unwrap();
    let t1 = Instant::now();
    let train = prepare_clips(&cfg, &split.train, &FeatureSource::Rendered).unwrap();
    let val = prepare_clips(&cfg, &split.val, &FeatureSource::Rendered).unwrap();
    println!("prepare: {:.1}s", t1.elapsed().as_secs_f64());

    for variant in [
        "ose-pixel/disp+ome+oie",
        "ose-pixel+ome",
        "ose-pixel/disp+ome",
    ] {
        let mut vc = config.clone();
        vc.model.variant = variant.to_string();
        let t = Instant::now();
        let model = train_verb(&vc, &train).unwrap();
        let eval = evaluate_verb(&model.store, &model.model_cfg, &val).unwrap();
        let disp = subset_acc1(&eval, &["fall", "rise"]).unwrap();
        let inter = subset_acc1(&eval, &["talk-static-oscillate", "chew-interaction-oscillate"]).unwrap();
        println!(
            "{variant}: train {:.1}s acc1={:.4} disp={:.4} inter={:.4} first-loss={:.3} last-loss={:.4}",
            t.elapsed().as_secs_f64(),
            eval.acc1,
            disp,
            inter,
            model.epoch_losses[0],
            model.epoch_losses.last().unwrap()
        );
    }

    // Role overfit on ten videos with an untrained encoder.
    let t2 = Instant::now();
    let mut enc_store = ParamStore::new(config.seed);
    register_model_params(&mut enc_store, &cfg, 32, 8, 24).unwrap();
    let videos = freeze_videos(&enc_store, &cfg, &split.train[..50], &FeatureSource::Rendered).unwrap();
    let trained = train_role(&config, &videos, config.seed).unwrap();
    let set_loss = teacher_forced_set_loss(&trained.store, &trained.role_cfg, &videos).unwrap();
    let exact = greedy_exact_fraction(&trained.store, &trained.role_cfg, &videos).unwrap();
    println!(
        "role overfit: {:.1}s first={:.3} last-step={:.4} set-loss={:.4} exact={:.3}",
        t2.elapsed().as_secs_f64(),
        trained.step_losses[0],
        trained.step_losses.last().unwrap(),
        set_loss,
        exact
    );
    println!("total: {:.1}s", t0.elapsed().as_secs_f64());
}
