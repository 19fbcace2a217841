//! Train the default desk-scale configuration, then compare the trained
//! student against the untrained (student = teacher) baseline on held-out
//! scenes: cross-modal retrieval plus alignment/discernibility
//! diagnostics.

use omnialign_core::evalkit::{diagnostics, directed_pair_average, EvalConfig};
use omnialign_core::model::init_stack;
use omnialign_core::optim::{embed_dataset_eval, train, DataSource, TrainConfig};
use omnialign_core::synth::generate_scene;

fn main() -> omnialign_core::Result<()> {
    let cfg = TrainConfig::default();
    let (scene_cfg, n_train) = match &cfg.data {
        DataSource::Synthetic { scene, n_scenes } => (scene.clone(), *n_scenes),
        DataSource::Directory(_) => unreachable!("default config is synthetic"),
    };
    let held_out: Vec<_> = (0..64)
        .map(|i| generate_scene(&scene_cfg, (n_train + i) as u64))
        .collect::<omnialign_core::Result<_>>()?;

    let report = |label: &str, stack: &omnialign_core::model::EncoderStack| {
        let emb = embed_dataset_eval(stack, &held_out)?;
        let retrieval = directed_pair_average(&emb.pooled, &EvalConfig::default())?;
        let diag = diagnostics(&emb.pooled, 123)?;
        println!("== {label}");
        println!("{}", retrieval.to_text());
        println!("{}", diag.to_text());
        Ok::<_, omnialign_core::Error>(())
    };

    let baseline = init_stack(&cfg.model)?;
    report("untrained baseline (student = teacher)", &baseline)?;

    println!("training {} steps ...", cfg.steps);
    let out = train(&cfg)?;
    report("trained student", &out.stack)?;
    Ok(())
}
