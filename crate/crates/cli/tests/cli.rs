use std::path::Path;
use std::process::{Command, Output};

fn glowlab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_glowlab"));
    c.args(args).env("RUST_LOG", "warn");
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = glowlab(args, &[]);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn fails(args: &[&str]) -> String {
    let out = glowlab(args, &[]);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &str = r#"
[dataset]
frames = 2
val_frames = 1
size = 8
spp = 4
max_depth = 3

[render]
spp = 4
max_depth = 3

[train]
batch_size = 32
steps = 3
warmup_steps = 2
snapshot_every = 2

[train.cache]
kind = "dynamic"
hidden_layers = 1
hidden_width = 8

[train.cache.encoding]
position_bands = 1
direction_bands = 1
light_bands = 1

[sweep]
samples = 11
spp = 16
max_depth = 3

[ablate]
steps = 2
"#;

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn render_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "2", "1"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}"));
        let args = ["render", "--scene", "cornell-desk", "--mode", "path", "--spp", "8", "--size", "12", "--seed", "3", "--out", &s(&out)];
        let o = glowlab(&args, &[("GLOWLAB_THREADS", threads)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(out.join("render.pfm")).unwrap());
        assert!(out.join("render.png").exists());
        assert!(out.join("config.toml").exists());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn bad_invocations_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(&dir.path().join("x"));
    fails(&["frobnicate"]);
    fails(&["render", "--bogus", "1"]);
    fails(&["render", "--mode", "sideways"]);
    assert!(fails(&["render", "--config", "/no/such/file.toml", "--out", &out]).contains("file.toml"));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nlearning_rate = 3\n").unwrap();
    assert!(fails(&["render", "--config", &s(&bad), "--out", &out]).contains("invalid config"));
    assert!(fails(&["render", "--mode", "cache", "--out", &out]).contains("--cache"));
    assert!(fails(&["render", "--scene", "nowhere", "--out", &out]).contains("nowhere"));
    let o = glowlab(&["render", "--spp", "1"], &[("GLOWLAB_THREADS", "zero")]);
    assert!(!o.status.success());
}

#[test]
fn dataset_optimize_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let data = dir.path().join("data");
    ok(&["make-dataset", "--config", &cfg, "--scene", "cornell-desk", "--out", &s(&data)]);
    assert!(data.join("manifest.json").exists());
    assert!(data.join("images/frame_000.pfm").exists());
    assert!(data.join("images/frame_002.png").exists());

    let opt = dir.path().join("opt");
    ok(&["optimize-material", "--config", &cfg, "--data", &s(&data), "--mode", "direct", "--out", &s(&opt)]);
    let blob = opt.join("materials.bin");
    assert_eq!(std::fs::read(&blob).unwrap().len(), 60 * 16);
    let log = std::fs::read_to_string(opt.join("loss.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);

    let ev = dir.path().join("eval");
    let o = ok(&["eval", "--config", &cfg, "--data", &s(&data), "--materials", &s(&blob), "--out", &s(&ev)]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("albedo_si_mse"));
    let first = std::fs::read(ev.join("metrics.json")).unwrap();
    ok(&["eval", "--config", &cfg, "--data", &s(&data), "--materials", &s(&blob), "--out", &s(&ev)]);
    assert_eq!(first, std::fs::read(ev.join("metrics.json")).unwrap());

    // tamper with one frame: eval must refuse
    let frame = data.join("images/frame_001.pfm");
    let mut bytes = std::fs::read(&frame).unwrap();
    let n = bytes.len();
    bytes[n - 2] ^= 0x40;
    std::fs::write(&frame, bytes).unwrap();
    let err = fails(&["eval", "--config", &cfg, "--data", &s(&data), "--materials", &s(&blob), "--out", &s(&ev)]);
    assert!(err.contains("integrity"), "{err}");
}

#[test]
fn train_cache_then_render_with_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let tc = dir.path().join("tc");
    ok(&["train-cache", "--config", &cfg, "--scene", "cornell-desk", "--steps", "4", "--out", &s(&tc)]);
    let ckpt = tc.join("cache.ckpt");
    assert!(ckpt.exists());
    assert_eq!(std::fs::read_to_string(tc.join("loss.jsonl")).unwrap().lines().count(), 4);
    let r = dir.path().join("r");
    ok(&["render", "--config", &cfg, "--mode", "cache", "--cache", &s(&ckpt), "--size", "8", "--out", &s(&r)]);
    assert!(r.join("render.pfm").exists());
    assert!(fails(&["render", "--config", &cfg, "--mode", "naive_cache", "--cache", &s(&ckpt), "--out", &s(&r)])
        .contains("cache"));
    // same seed, same checkpoint bytes
    let tc2 = dir.path().join("tc2");
    ok(&["train-cache", "--config", &cfg, "--scene", "cornell-desk", "--steps", "4", "--out", &s(&tc2)]);
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(tc2.join("cache.ckpt")).unwrap());
}

#[test]
fn shadow_sweep_reports_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sw");
    let o = ok(&["shadow-sweep", "--config", &cfg, "--samples", "21", "--out", &s(&out)]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("direct jump"), "{text}");
    assert!(text.contains("indirect max step"));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    assert!(fails(&["shadow-sweep", "--config", &cfg, "--scene", "plane", "--out", &s(&out)]).contains("cornell"));
}

#[test]
fn ablate_reports_four_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("ab");
    let o = ok(&["ablate", "--config", &cfg, "--out", &s(&out)]);
    let table = String::from_utf8_lossy(&o.stdout);
    for mode in ["path", "cache", "naive_cache", "direct"] {
        assert!(table.lines().any(|l| l.starts_with(mode)), "{table}");
    }
    assert!(table.contains("albedo ordering:"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);
}
