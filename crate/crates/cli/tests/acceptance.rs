//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 1-5 and 8-10 are exact properties and fail the run when red.
//! Criteria 6 and 7 are empirical orderings of trained models; their lines
//! are reported as measured but do not change the exit status.
//! `ACCEPTANCE_SCENES` shortens the ablation protocol (default 5 scenes).

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::Command;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viewfill::dualnet::{build_attention_mask, joint_self_attention, AttentionMode};
use viewfill::geometry::{back_project, project, BACKGROUND};
use viewfill::masking::{conditional_cloud_mask, conditional_reference_mask};
use viewfill::metrics::{psnr, ssim};
use viewfill::pipeline::{robustness_run, InferConfig, RobustnessSpec, TrainConfig, Variant};
use viewfill::scene::{generate_scene, preset};
use viewfill::{Image, MaskImage};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn from_check(r: Result<String, String>) -> Outcome {
    match r {
        Ok(d) => outcome(true, d),
        Err(d) => outcome(false, d),
    }
}

fn geometry_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let cam = random_camera(32, 32, &mut rng);
        let depth = random_depth(32, 32, &mut rng);
        let img = random_image(32, 32, &mut rng);
        let p = project(&back_project(&depth, &cam, &img).unwrap(), &cam);
        for i in 0..32 * 32 {
            if depth.valid[i] {
                let err = (p.depth[i] - f64::from(depth.values[i])).abs();
                worst = worst.max(err);
                if err > 1e-5 || p.image.pixel_at(i) != img.pixel_at(i) {
                    return outcome(false, format!("case {case} pixel {i}: depth error {err:e}"));
                }
            } else if p.coverage.get_at(i) {
                return outcome(false, format!("case {case} pixel {i}: invalid depth rendered"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(secs < 30.0, format!("100 pairs, worst depth error {worst:.1e}, {secs:.2} s"))
}

fn occlusion_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..50 {
        let cam = random_camera(32, 32, &mut rng);
        let n = rng.random_range(200..1500);
        let cloud = random_cloud(&cam, n, &mut rng);
        let p = project(&cloud, &cam);
        let (depth, winner) = zbuffer_oracle(&cloud, &cam);
        for i in 0..32 * 32 {
            let colour = winner[i].map_or(BACKGROUND, |k| cloud.colors[k]);
            if p.depth[i] != depth[i] || p.image.pixel_at(i) != colour || p.coverage.get_at(i) != winner[i].is_some() {
                return outcome(false, format!("case {case} pixel {i} disagrees with the oracle"));
            }
        }
    }
    outcome(true, "50 clouds, every pixel identical")
}

fn masking_identities() -> Outcome {
    from_check((|| {
        let mut rng = ChaCha8Rng::seed_from_u64(303);
        for case in 0..1000 {
            let (w, h) = (rng.random_range(1..24), rng.random_range(1..24));
            let x = random_image(w, h, &mut rng);
            let r = random_mask(w, h, rng.random(), &mut rng);
            let m = random_mask(w, h, rng.random(), &mut rng);
            let v: f32 = rng.random();
            let (zeros, ones) = (MaskImage::zeros(w, h), MaskImage::ones(w, h));
            let fail = |what: &str| Err(format!("case {case}: {what}"));
            if conditional_reference_mask(&x, &zeros, &m).unwrap() != x {
                return fail("reference r=0 is not the identity");
            }
            if conditional_reference_mask(&x, &ones, &m).unwrap() != reference_mask_oracle(&x, &ones, &m) {
                return fail("reference r=1 is not x*m");
            }
            if conditional_reference_mask(&x, &r, &m).unwrap() != reference_mask_oracle(&x, &r, &m) {
                return fail("reference pixelwise formula");
            }
            if conditional_cloud_mask(&x, &ones, &m, v).unwrap() != x {
                return fail("cloud r=1 is not the identity");
            }
            if conditional_cloud_mask(&x, &zeros, &m, v).unwrap() != cloud_mask_oracle(&x, &zeros, &m, v) {
                return fail("cloud r=0 is not the fill blend");
            }
            if conditional_cloud_mask(&x, &r, &m, v).unwrap() != cloud_mask_oracle(&x, &r, &m, v) {
                return fail("cloud pixelwise formula");
            }
        }
        Ok("identities and pixelwise oracles exact on 1000 cases".into())
    })())
}

fn attention_correctness() -> Outcome {
    from_check((|| {
        for l in 1..=128 {
            check_mask_rules(&build_attention_mask(l), l)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let mut worst = 0.0f64;
        let mut worst_iso = 0.0f64;
        for case in 0..60 {
            let l = if case < 4 { [1, 2, 63, 64][case] } else { rng.random_range(1..=64) };
            let heads = rng.random_range(1..=4);
            let d = 4 * heads;
            let (ht, hp) = (random_tokens(l, d, &mut rng), random_tokens(l, d, &mut rng));
            let layer = random_layer(d, heads, &mut rng);
            let bias = if case % 2 == 0 { 0.0 } else { 8.0 };
            let mask = AttentionMode::Masked.mask(l).with_link_bias(l, bias);
            let (t, p) = joint_self_attention(ht.view(), hp.view(), &mask, &layer).unwrap();
            let (to, po) = attention_loop_oracle(&ht, &hp, &mask, &layer);
            for (a, b) in t.iter().chain(p.iter()).zip(to.iter().chain(po.iter())) {
                worst = worst.max((a - b).abs());
            }
            let moved = &ht + &random_tokens(l, d, &mut rng);
            let (_, p2) = joint_self_attention(moved.view(), hp.view(), &mask, &layer).unwrap();
            for (a, b) in p.iter().zip(p2.iter()) {
                worst_iso = worst_iso.max((a - b).abs());
            }
        }
        let detail = format!("rules hold for L in 1..=128, oracle error {worst:.1e}, isolation error {worst_iso:.1e}");
        if worst <= 1e-5 && worst_iso <= 1e-6 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })())
}

fn gradient() -> Outcome {
    let (frac, total, bad) = gradient_check(tiny_config(AttentionMode::Masked, false));
    let detail = format!("{:.1}% of {total} parameters within 1e-3, {} outside both tolerances", 100.0 * frac, bad.len());
    outcome(frac >= 0.95 && bad.is_empty(), detail)
}

struct Ablation {
    clean: [f64; 4],
    drop_b: f64,
    drop_d: f64,
    scenes: usize,
}

fn ablation(scenes: u64) -> Ablation {
    let base = TrainConfig { iterations: 300, ..TrainConfig::default() };
    let icfg = InferConfig { steps: 20, ..InferConfig::default() };
    let (mut clean, mut drop_b, mut drop_d) = ([0.0; 4], 0.0, 0.0);
    let start = Instant::now();
    for s in 0..scenes {
        let scene = generate_scene(&preset("boxes3").unwrap(), s).unwrap();
        let mut line = format!("  scene {s}:");
        for (k, v) in Variant::ALL.into_iter().enumerate() {
            let noisy = matches!(v, Variant::NoMaskedAttention | Variant::Full);
            let levels = if noisy { vec![0.0, 0.5] } else { vec![0.0] };
            let spec = RobustnessSpec { levels, seeds: vec![0, 1, 2], sigma_fraction: 0.02, ..RobustnessSpec::default() };
            let rows = robustness_run(&scene, None, &v.apply(&base), &icfg, &spec).unwrap();
            let mean = |level: f64, f: fn(&viewfill::pipeline::RobustnessRow) -> f64| {
                let sel: Vec<f64> = rows.iter().filter(|r| r.level == level).map(f).collect();
                sel.iter().sum::<f64>() / sel.len() as f64
            };
            let p = mean(0.0, |r| r.psnr);
            clean[k] += p;
            line += &format!(" {} {p:.2}", v.name());
            if noisy {
                let d = mean(0.5, |r| r.delta_psnr.unwrap());
                line += &format!(" ({d:+.2} noisy)");
                if v == Variant::Full {
                    drop_d += d;
                } else {
                    drop_b += d;
                }
            }
        }
        println!("{line} [{:.0} s]", start.elapsed().as_secs_f64());
    }
    let n = scenes as f64;
    Ablation { clean: clean.map(|c| c / n), drop_b: drop_b / n, drop_d: drop_d / n, scenes: scenes as usize }
}

fn ablation_ordering(a: &Ablation) -> Outcome {
    let [na, nb, nc, nd] = a.clean;
    let tam = nd > nc + 0.3;
    let dual = [nb, nc, nd].iter().all(|&x| x > na + 0.3);
    let detail = format!(
        "{} scenes x 3 seeds, masked PSNR: no-cloud-branch {na:.2}, no-cm-jsa {nb:.2}, no-tam {nc:.2}, full {nd:.2}; \
         full - no-tam {:+.2} [{}], dual - no-cloud-branch min {:+.2} [{}]",
        a.scenes,
        nd - nc,
        if tam { "ok" } else { "short" },
        nb.min(nc).min(nd) - na,
        if dual { "ok" } else { "short" },
    );
    outcome(tam && dual, detail)
}

fn robustness_ordering(a: &Ablation) -> Outcome {
    // drops are reported as positive numbers: clean minus noisy
    let (db, dd) = (-a.drop_b, -a.drop_d);
    outcome(dd <= db, format!("PSNR drop at 50% noise: full {dd:.2} dB, no-cm-jsa {db:.2} dB"))
}

fn zero_weight() -> Outcome {
    from_check((0..3).try_for_each(zero_weight_contract).map(|_| "loss 0 and no update on 3 zero-weight batches".into()))
}

fn determinism() -> Outcome {
    from_check((|| {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let bin = env!("CARGO_BIN_EXE_viewfill");
        let run = |args: &[&str]| -> Result<(), String> {
            let out = Command::new(bin).arg("--threads").arg("1").args(args).output().map_err(|e| e.to_string())?;
            if out.status.success() {
                Ok(())
            } else {
                Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
            }
        };
        let scene = tmp.path().join("scene");
        let scene = scene.to_str().unwrap();
        run(&["gen", "--preset", "boxes3", "--seed", "7", "-o", scene])?;
        let mut outputs = Vec::new();
        for k in 0..2 {
            let dir = tmp.path().join(format!("run{k}"));
            let (train, done) = (dir.join("train"), dir.join("done"));
            run(&["train", "--scene", scene, "-o", train.to_str().unwrap(), "--steps", "25", "--seed", "3"])?;
            let ckpt = train.join("checkpoint.gckp");
            run(&["infer", "--scene", scene, "--checkpoint", ckpt.to_str().unwrap(), "-o", done.to_str().unwrap()])?;
            let read = |p: std::path::PathBuf| std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
            outputs.push((read(ckpt)?, read(done.join("completed.png"))?));
        }
        if outputs[0].0 != outputs[1].0 {
            return Err("checkpoints differ".into());
        }
        if outputs[0].1 != outputs[1].1 {
            return Err("completed PNGs differ".into());
        }
        Ok(format!("checkpoint ({} bytes) and completed.png identical across two runs", outputs[0].0.len()))
    })())
}

fn metric_oracles() -> Outcome {
    let a = Image::filled(32, 32, [0.4; 3]);
    let b = Image::filled(32, 32, [0.5; 3]);
    let offset = psnr(&a, &b, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let (mut worst_p, mut worst_s, mut worst_self) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let (w, h) = (rng.random_range(11..40), rng.random_range(11..40));
        let x = random_image(w, h, &mut rng);
        let mix: f32 = rng.random();
        let y = Image::from_fn(w, h, |i, j| {
            let p = x.pixel(i, j);
            [0, 1, 2].map(|c| p[c] * mix + rng.random::<f32>() * (1.0 - mix))
        });
        let region = random_mask(w, h, 0.5, &mut rng);
        let r = (region.count_ones() > 0).then_some(&region);
        worst_p = worst_p.max((psnr(&x, &y, r).unwrap() - psnr_oracle(&x, &y, r)).abs());
        worst_s = worst_s.max((ssim(&x, &y).unwrap() - ssim_oracle(&x, &y)).abs());
        worst_self = worst_self.max((ssim(&x, &x).unwrap() - 1.0).abs());
    }
    let pass = format!("{offset:.2}") == "20.00" && worst_p < 1e-9 && worst_s < 1e-9 && worst_self < 1e-9;
    outcome(
        pass,
        format!(
            "offset 0.1 -> {offset:.2} dB, SSIM(a,a) error {worst_self:.1e}, oracle errors PSNR {worst_p:.1e} SSIM {worst_s:.1e}"
        ),
    )
}

fn main() {
    let scenes = std::env::var("ACCEPTANCE_SCENES").ok().and_then(|v| v.parse().ok()).unwrap_or(5u64);
    let mut results: Vec<(usize, bool, Outcome)> = vec![
        (1, true, geometry_round_trip()),
        (2, true, occlusion_oracle()),
        (3, true, masking_identities()),
        (4, true, attention_correctness()),
        (5, true, gradient()),
    ];
    println!("ablation protocol ({scenes} scenes, 3 seeds, 300 steps, 20 sampler steps):");
    let ab = ablation(scenes);
    results.push((6, false, ablation_ordering(&ab)));
    results.push((7, false, robustness_ordering(&ab)));
    results.push((8, true, zero_weight()));
    results.push((9, true, determinism()));
    results.push((10, true, metric_oracles()));

    let mut hard_failures = 0;
    for (n, exact, o) in &results {
        println!("criterion {n:>2}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if *exact && !o.pass {
            hard_failures += 1;
        }
    }
    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("{passed}/{} criteria pass", results.len());
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
