use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use viewfill::scene::load_scene;
use viewfill::{Image, MaskImage};

fn viewfill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viewfill")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = viewfill(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, preset: &str, seed: &str) {
    ok(&["gen", "--preset", preset, "--seed", seed, "-o", p(dir)]);
}

#[test]
fn gen_writes_a_loadable_scene_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, "planar3", "7");
    gen(&b, "planar3", "7");
    load_scene(&a).unwrap();
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 10);
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn unknown_preset_exits_2_and_lists_presets() {
    let tmp = tempfile::tempdir().unwrap();
    let out = viewfill(&["gen", "--preset", "nope", "-o", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("boxes3") && err.contains("planar3"), "{err}");
}

#[test]
fn missing_scene_is_an_io_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = viewfill(&["project", "--scene", p(&tmp.path().join("none")), "-o", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[train]\nbogus = 1\n").unwrap();
    let out = viewfill(&["--config", p(&cfg), "gen", "-o", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn colocated_projection_reproduces_the_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = tmp.path().join("scene");
    gen(&scene_dir, "colocated", "3");
    let out = tmp.path().join("proj");
    ok(&["project", "--scene", p(&scene_dir), "-o", p(&out)]);
    let p_tar = Image::load_png(out.join("p_tar.png")).unwrap();
    let cov = MaskImage::load_png(out.join("p_tar_coverage.png")).unwrap();
    let reference = Image::load_png(scene_dir.join("ref_0.png")).unwrap();
    assert!(cov.count_ones() > 0);
    for i in 0..cov.data().len() {
        if cov.get_at(i) {
            assert_eq!(p_tar.pixel_at(i), reference.pixel_at(i));
        }
    }
}

#[test]
fn disjoint_projection_is_all_background() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = tmp.path().join("scene");
    gen(&scene_dir, "disjoint", "3");
    let out = tmp.path().join("proj");
    ok(&["project", "--scene", p(&scene_dir), "-o", p(&out)]);
    let p_tar = Image::load_png(out.join("p_tar.png")).unwrap();
    assert!(p_tar.data().iter().all(|&v| v == 1.0));
}

#[test]
fn mask_debug_writes_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = tmp.path().join("scene");
    gen(&scene_dir, "boxes3", "1");
    let out = tmp.path().join("masks");
    let text = ok(&["mask-debug", "--scene", p(&scene_dir), "-o", p(&out), "--count", "3"]);
    assert_eq!(text.lines().count(), 3);
    assert!(out.join("sample_2_hidden.png").exists());
}

#[test]
fn eval_of_ground_truth_hits_the_cap() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = tmp.path().join("scene");
    gen(&scene_dir, "boxes3", "1");
    let out = tmp.path().join("eval");
    let text = ok(&["eval", "--scene", p(&scene_dir), "--image", p(&scene_dir.join("target_gt.png")), "-o", p(&out)]);
    assert!(text.contains("PSNR masked  99.000"), "{text}");
    assert!(text.contains("SSIM full    1.0000"), "{text}");
    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn train_infer_and_checkpoint_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = tmp.path().join("scene");
    gen(&scene_dir, "boxes3", "2");
    let run = tmp.path().join("run");
    let text = ok(&["train", "--scene", p(&scene_dir), "-o", p(&run), "--steps", "3", "--seed", "1"]);
    assert!(text.contains("trained 3 steps"));
    let loss = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 4);
    let ckpt = run.join("checkpoint.gckp");

    let done = tmp.path().join("done");
    ok(&["infer", "--scene", p(&scene_dir), "--checkpoint", p(&ckpt), "-o", p(&done), "--steps", "2"]);
    let img = Image::load_png(done.join("completed.png")).unwrap();
    let scene = load_scene(&scene_dir).unwrap();
    for i in 0..scene.target.completion.data().len() {
        if !scene.target.completion.get_at(i) {
            assert_eq!(img.pixel_at(i), scene.target.view.image.pixel_at(i));
        }
    }

    let cfg = tmp.path().join("wide.toml");
    fs::write(&cfg, "[train.model]\ndim = 48\n").unwrap();
    let out = viewfill(&["--config", p(&cfg), "infer", "--scene", p(&scene_dir), "--checkpoint", p(&ckpt), "-o", p(&done)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dim"));
}

#[test]
fn robust_csv_has_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = tmp.path().join("scene");
    gen(&scene_dir, "boxes3", "4");
    let cfg = tmp.path().join("fast.toml");
    fs::write(&cfg, "[train]\niterations = 2\n[infer]\nsteps = 2\n").unwrap();
    let out = tmp.path().join("robust");
    ok(&["--config", p(&cfg), "robust", "--scene", p(&scene_dir), "-o", p(&out), "--levels", "0,0.5", "--seeds", "0,1,2"]);
    let csv = fs::read_to_string(out.join("robust.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "kind,level,seed,psnr,ssim,delta_psnr");
    assert_eq!(lines.count(), 6);
}
