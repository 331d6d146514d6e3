use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use viewfill::dualnet::{check_config, load_checkpoint, save_checkpoint};
use viewfill::masking::{build_training_sample, SampleSource};
use viewfill::metrics::EvalReport;
use viewfill::pipeline::{
    copy_cloud_baseline, infer, loss_trace_csv, precompute_geometry, robustness_csv, robustness_run,
    train_scene_with, PerturbKind,
};
use viewfill::scene::{generate_scene, load_scene, preset, save_scene, SceneBundle};

use crate::config::FileConfig;
use crate::{Cli, Command, EvalArgs, GenArgs, InferArgs, MaskDebugArgs, RobustArgs, SceneOut, TrainArgs};

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(viewfill::Error::Config("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("setting up the thread pool")?;
    }
    let file = FileConfig::load(cli.config.as_deref())?;
    let verbose = cli.verbose > 0;
    match cli.command {
        Command::Gen(a) => gen(&file, a),
        Command::Project(a) => project(a),
        Command::MaskDebug(a) => mask_debug(&file, a),
        Command::Train(a) => train(&file, a, verbose),
        Command::Infer(a) => infer_cmd(&file, a, cli.config.is_some()),
        Command::Eval(a) => eval(a),
        Command::Robust(a) => robust(&file, a),
    }
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| viewfill::Error::Ingestion { file: path.into(), message: e.to_string() })?;
    Ok(())
}

fn scene_name(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn gen(file: &FileConfig, a: GenArgs) -> Result<()> {
    let cfg = match (&a.preset, &file.scene) {
        (Some(name), _) => preset(name)?,
        (None, Some(cfg)) => cfg.clone(),
        (None, None) => preset("boxes3")?,
    };
    let scene = generate_scene(&cfg, a.seed)?;
    save_scene(&scene, &a.out)?;
    let (w, h) = scene.resolution();
    println!("scene written to {}", a.out.display());
    println!("  {w}x{h}, {} references, seed {}", scene.references.len(), a.seed);
    println!("  completion mask: {} px", scene.target.completion.count_ones());
    let dynamic: usize = scene.references.iter().map(|r| r.dynamic.count_ones()).sum();
    println!("  dynamic pixels over references: {dynamic}");
    Ok(())
}

fn project(a: SceneOut) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let products = precompute_geometry(&scene)?;
    out_dir(&a.out)?;
    products.target_cloud.image.save_png(a.out.join("p_tar.png"))?;
    products.target_cloud.coverage.save_png(a.out.join("p_tar_coverage.png"))?;
    for (i, (p, r)) in products.reference_clouds.iter().zip(&products.informative).enumerate() {
        p.image.save_png(a.out.join(format!("p_ref_{i}.png")))?;
        r.save_png(a.out.join(format!("informative_{i}.png")))?;
    }
    copy_cloud_baseline(&scene, &products)?.save_png(a.out.join("baseline.png"))?;
    let hole = &scene.target.completion;
    let covered = hole.intersection(&products.target_cloud.coverage)?.count_ones();
    println!("projections written to {}", a.out.display());
    println!("  target coverage: {} px, {covered} of {} hole px", products.target_cloud.coverage.count_ones(), hole.count_ones());
    for (i, r) in products.informative.iter().enumerate() {
        println!("  reference {i}: {} informative px", r.count_ones());
    }
    Ok(())
}

fn mask_debug(file: &FileConfig, a: MaskDebugArgs) -> Result<()> {
    let scene = load_scene(&a.io.scene)?;
    let products = precompute_geometry(&scene)?;
    let cfg = file.train_config(a.variant.as_deref())?;
    cfg.validate()?;
    out_dir(&a.io.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut text = String::new();
    for k in 0..a.count {
        let s = build_training_sample(&scene, &products, &cfg.sampling, &mut rng)?;
        let dir = &a.io.out;
        s.condition.save_png(dir.join(format!("sample_{k}_condition.png")))?;
        s.cloud.save_png(dir.join(format!("sample_{k}_cloud.png")))?;
        s.hidden.save_png(dir.join(format!("sample_{k}_hidden.png")))?;
        s.weight.save_png(dir.join(format!("sample_{k}_weight.png")))?;
        s.truth.save_png(dir.join(format!("sample_{k}_truth.png")))?;
        let source = match s.source {
            SampleSource::Reference(i) => format!("reference {i}"),
            SampleSource::Target => "target".into(),
        };
        text += &format!(
            "sample {k}: {source}, hidden {} px, weight {} px\n",
            s.hidden.count_ones(),
            s.weight.count_ones()
        );
    }
    fs::write(a.io.out.join("samples.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn train(file: &FileConfig, a: TrainArgs, verbose: bool) -> Result<()> {
    let mut cfg = file.train_config(a.variant.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
        cfg.model.init_seed = seed;
    }
    if let Some(steps) = a.steps {
        cfg.iterations = steps;
    }
    if cfg.dump_dir.is_none() {
        cfg.dump_dir = Some(a.io.out.join("nan_dump"));
    }
    cfg.validate()?;
    let scene = load_scene(&a.io.scene)?;
    let products = precompute_geometry(&scene)?;
    out_dir(&a.io.out)?;
    let last = cfg.iterations;
    let outcome = train_scene_with(&scene, &products, &cfg, |step, model| {
        let name = if step == last { "checkpoint.gckp".to_string() } else { format!("checkpoint_{step:06}.gckp") };
        if verbose {
            eprintln!("step {step}: writing {name}");
        }
        save_checkpoint(model, &a.io.out.join(name))
    })?;
    fs::write(a.io.out.join("loss.csv"), loss_trace_csv(&outcome.losses))?;
    let n = outcome.losses.len();
    let window = n.clamp(1, 50);
    // per-step losses are heavy-tailed (small timesteps dominate), so summarise with medians
    let median = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    println!("trained {} steps ({} updates, {} parameters)", n, outcome.updates, outcome.model.parameter_count());
    println!("  median loss {:.4} -> {:.4}", median(&outcome.losses[..window]), median(&outcome.losses[n - window..]));
    println!("  checkpoint: {}", a.io.out.join("checkpoint.gckp").display());
    Ok(())
}

fn check_scene_fits(scene: &SceneBundle, width: usize, height: usize) -> Result<()> {
    if scene.resolution() != (width, height) {
        return Err(viewfill::Error::Validation(format!(
            "checkpoint field width/height is {width}x{height} but the scene is {:?}",
            scene.resolution()
        ))
        .into());
    }
    Ok(())
}

fn infer_cmd(file: &FileConfig, a: InferArgs, check: bool) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    if check {
        check_config(&model.config, &file.train_config(None)?.model)?;
    }
    let mut cfg = file.infer.clone();
    if let Some(seed) = a.sampler.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = a.sampler.steps {
        cfg.steps = steps;
    }
    if let Some(c) = a.sampler.composite() {
        cfg.composite = c;
    }
    let scene = load_scene(&a.io.scene)?;
    check_scene_fits(&scene, model.config.width, model.config.height)?;
    let products = precompute_geometry(&scene)?;
    let image = infer(&scene, &products, &model, &cfg)?;
    out_dir(&a.io.out)?;
    let path = a.io.out.join("completed.png");
    image.save_png(&path)?;
    println!("completed target written to {}", path.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let image = viewfill::Image::load_png(&a.image)?;
    let report = EvalReport::evaluate(
        &image,
        &scene.target.view.image,
        &scene.target.completion,
        &scene_name(&a.scene),
        a.seed,
    )?;
    println!("{report}");
    if let Some(out) = &a.out {
        out_dir(out)?;
        fs::write(out.join("eval.csv"), report.to_csv())?;
    }
    Ok(())
}

fn robust(file: &FileConfig, a: RobustArgs) -> Result<()> {
    let train_cfg = file.train_config(a.variant.as_deref())?;
    let mut infer_cfg = file.infer.clone();
    if let Some(steps) = a.steps {
        infer_cfg.steps = steps;
    }
    let mut spec = file.robust.clone();
    if let Some(levels) = a.levels {
        spec.levels = levels;
    }
    if let Some(seeds) = a.seeds {
        spec.seeds = seeds;
    }
    if let Some(kind) = &a.kind {
        spec.kind = PerturbKind::parse(kind)?;
    }
    let model = match &a.checkpoint {
        Some(path) => {
            spec.retrain = false;
            Some(load_checkpoint(path)?)
        }
        None => None,
    };
    let scene = load_scene(&a.io.scene)?;
    let rows = robustness_run(&scene, model.as_ref(), &train_cfg, &infer_cfg, &spec)?;
    out_dir(&a.io.out)?;
    let csv = robustness_csv(&rows);
    fs::write(a.io.out.join("robust.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}
