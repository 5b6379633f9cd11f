use std::path::Path;
use std::process::{Command, Output};

fn ndsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ndsm")).args(args).env_remove("RUST_LOG").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, style: &str, tiles: &str, size: &str) -> String {
    let o = ndsm(&["synth", "--style", style, "--tiles", tiles, "--size", size, "--out", dir.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("manifest.tsv").to_string_lossy().into_owned()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(code(&ndsm(&["--help"])), 0);
    assert_eq!(code(&ndsm(&["train", "--help"])), 0);
    assert_eq!(code(&ndsm(&["synth", "--bogus"])), 1);
    assert_eq!(code(&ndsm(&[])), 1);
    assert_eq!(code(&ndsm(&["train", "--arch", "resnet", "--mode", "fused", "--manifest", "m", "--out", "o"])), 1);
}

#[test]
fn missing_data_exits_with_data_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ndsm(&["train", "--arch", "svm", "--mode", "fused", "--manifest", "/nonexistent/manifest.tsv", "--out", tmp.path().join("m").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = ndsm(&["synth", "--style", "C", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "A", "3", "64");
    synth(&b, "A", "3", "64");
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.len() > 3);
    assert_eq!(ta, tb);
    assert!(a.join("synth.tsv").exists());
}

#[test]
fn svm_training_logs_kept_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("a"), "A", "2", "64");
    let model = tmp.path().join("svm.bin");
    let o = ndsm(&["train", "--arch", "svm", "--mode", "spectral", "--manifest", &m, "--out", model.to_str().unwrap(), "--downselect-factor", "50"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // One training tile of 64 x 64 pixels.
    assert!(stderr(&o).contains("samples kept: 82 of 4096"), "{}", stderr(&o));
    let report = tmp.path().join("rep");
    let o = ndsm(&["eval", "--model", model.to_str().unwrap(), "--manifest", &m, "--report", report.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(report.join("metrics.csv").exists());
}

#[test]
fn divergent_training_exits_with_numeric_code() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("a"), "A", "2", "64");
    let out = tmp.path().join("net.bin");
    let o = ndsm(&[
        "train", "--arch", "segnet-lite", "--mode", "fused", "--manifest", &m, "--out", out.to_str().unwrap(),
        "--epochs", "1", "--steps-per-epoch", "3", "--batch-size", "1", "--lr", "1e30", "--momentum", "0",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn synth_train_eval_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let m = synth(&tmp.path().join("a"), "A", "4", "64");
    let model = tmp.path().join("net.bin");
    let o = ndsm(&[
        "train", "--arch", "segnet-lite", "--mode", "fused", "--manifest", &m, "--out", model.to_str().unwrap(),
        "--epochs", "5", "--steps-per-epoch", "2", "--batch-size", "2", "--lr", "0.05",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(model.exists());

    let labels = tmp.path().join("pred.rseg");
    let o = ndsm(&["predict", "--model", model.to_str().unwrap(), "--manifest", &m, "--tile", "a-4-003", "--out", labels.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let pred = ndsm_core::data::read_labels(&labels).unwrap();
    assert_eq!(pred.dims(), (64, 64));

    let report = tmp.path().join("rep");
    let o = ndsm(&["eval", "--model", model.to_str().unwrap(), "--manifest", &m, "--report", report.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(report.join("metrics.csv")).unwrap();
    let classes: std::collections::BTreeSet<&str> = csv
        .lines()
        .skip(2)
        .filter(|l| l.split(',').nth(5) == Some("recall"))
        .map(|l| l.split(',').nth(4).unwrap())
        .collect();
    assert_eq!(classes.len(), 6, "{csv}");
    assert!(csv.lines().any(|l| l.contains("total_balanced_accuracy")));
}

#[test]
fn cross_city_from_config() {
    let tmp = tempfile::tempdir().unwrap();
    synth(&tmp.path().join("a"), "A", "3", "64");
    synth(&tmp.path().join("b"), "B", "2", "64");
    let cfg = tmp.path().join("xc.tsv");
    std::fs::write(
        &cfg,
        "id\txc\nclassifier\tsvm\nmodes\tfused,surface\ntrain_manifest\ta/manifest.tsv\nout_of_sample_manifest\tb/manifest.tsv\n\
         output_dir\tout\ndownselect_factor\t40\neval_pixels\t500\n",
    )
    .unwrap();
    let o = ndsm(&["cross-city", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let names: Vec<String> = tree(&tmp.path().join("out/xc")).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["config.tsv", "log.txt", "metrics.csv", "sweep.csv"]);
}
