use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use wtc_core::container::{load_container, save_container};
use wtc_core::sparse::{to_sbsr, BlockSparse};
use wtc_core::{DenseTensor, LayerKind};

fn wtc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wtc")).args(args).output().expect("spawn wtc")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = wtc(args);
    assert!(out.status.success(), "wtc {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, file: &str, extra: &[&str]) -> PathBuf {
    let path = dir.path().join(file);
    let mut args = vec!["synth", "--output", s(&path)];
    args.extend(extra);
    ok(&args);
    path
}

/// Header plus data rows of a CSV report.
fn csv_rows(bytes: &[u8]) -> (Vec<String>, Vec<Vec<String>>) {
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let mut lines = text.lines().map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>());
    let header = lines.next().expect("header row");
    (header, lines.collect())
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir, "a.wtc", &["--seed", "7"]);
    let b = synth(&dir, "b.wtc", &["--seed", "7"]);
    let c = synth(&dir, "c.wtc", &["--seed", "8"]);
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn single_unique_pattern_survives_quantization() {
    let dir = TempDir::new().unwrap();
    let raw = synth(&dir, "raw.wtc", &["--unique", "1", "--sparsity", "0.5", "--rows", "32", "--cols", "32"]);
    let q = dir.path().join("q.wtc");
    ok(&["quantize", "--input", s(&raw), "--output", s(&q), "--rounding", "nearest", "--scale", "0.00390625"]);
    let t = &load_container(&q).unwrap()[0];
    let sb = to_sbsr(&t.to_q16_matrix().unwrap(), 1, 4).unwrap();
    assert_eq!(sb.num_unique(), 1);
    assert_eq!(sb.num_blocks(), 128);
}

#[test]
fn lenet_preset_shapes() {
    let dir = TempDir::new().unwrap();
    let p = synth(&dir, "lenet.wtc", &["--lenet-shapes"]);
    let shapes: Vec<(String, Vec<usize>)> =
        load_container(&p).unwrap().iter().map(|t| (t.name().to_string(), t.shape().to_vec())).collect();
    let want = [
        ("conv1", vec![20, 1, 5, 5]),
        ("conv2", vec![50, 20, 5, 5]),
        ("ip1", vec![500, 800]),
        ("ip2", vec![10, 500]),
    ];
    assert_eq!(shapes, want.map(|(n, s)| (n.to_string(), s)));
}

#[test]
fn pack_unpack_round_trips_every_format() {
    let dir = TempDir::new().unwrap();
    let raw = synth(&dir, "raw.wtc", &["--lenet-shapes", "--sparsity", "0.7"]);
    let q = dir.path().join("q.wtc");
    ok(&["quantize", "--input", s(&raw), "--output", s(&q), "--target-sparsity", "0.8"]);
    let mut decoded = Vec::new();
    for format in ["bsr", "sbsr", "ehuff", "vhuff"] {
        let packed = dir.path().join(format!("{format}.wtc"));
        let back = dir.path().join(format!("{format}.raw.wtc"));
        ok(&["pack", "--input", s(&q), "--output", s(&packed), "--format", format]);
        ok(&["unpack", "--input", s(&packed), "--output", s(&back)]);
        decoded.push(load_container(&back).unwrap());
    }
    let want = load_container(&q).unwrap();
    for d in &decoded {
        assert_eq!(d, &want);
    }
}

#[test]
fn all_zero_tensor_packs() {
    let dir = TempDir::new().unwrap();
    let zero = DenseTensor::q16("z", vec![6, 10], LayerKind::FullyConnected, vec![0; 60], 0.25).unwrap();
    let input = dir.path().join("zero.wtc");
    save_container(std::slice::from_ref(&zero), &input).unwrap();
    for format in ["sbsr", "vhuff"] {
        let packed = dir.path().join(format!("{format}.wtc"));
        let back = dir.path().join(format!("{format}.raw.wtc"));
        ok(&["pack", "--input", s(&input), "--output", s(&packed), "--format", format]);
        ok(&["unpack", "--input", s(&packed), "--output", s(&back)]);
        assert_eq!(load_container(&back).unwrap(), vec![zero.clone()]);
    }
}

#[test]
fn missing_input_names_the_path() {
    let out = wtc(&["analyze", "--input", "/nonexistent/model.wtc"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/model.wtc"), "{err}");
}

#[test]
fn garbage_input_is_an_error() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("junk.wtc");
    std::fs::write(&p, b"not a container").unwrap();
    let out = wtc(&["sweep", "--input", s(&p)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("junk.wtc"));
}

#[test]
fn fc_only_without_fc_layers_is_empty() {
    let dir = TempDir::new().unwrap();
    let p = synth(&dir, "conv.wtc", &["--layer", "c:conv:4x3x3x3"]);
    let (header, rows) = csv_rows(&ok(&["analyze", "--input", s(&p), "--fc-only"]));
    assert!(header.contains(&"layer".to_string()));
    assert!(rows.is_empty());
    let json = ok(&["sweep", "--input", s(&p), "--fc-only", "--report", "json"]);
    assert_eq!(String::from_utf8(json).unwrap().trim(), "[]");
}

#[test]
fn single_width_is_the_best_width() {
    let dir = TempDir::new().unwrap();
    let p = synth(&dir, "fc.wtc", &["--rows", "16", "--cols", "40"]);
    let (header, rows) = csv_rows(&ok(&["sweep", "--input", s(&p), "--widths", "5", "--target-sparsity", "0.5"]));
    let col = header.iter().position(|h| h == "best_width").unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][col], "5");
}

#[test]
fn sweep_lists_every_width() {
    let dir = TempDir::new().unwrap();
    let p = synth(&dir, "fc.wtc", &["--rows", "16", "--cols", "40"]);
    let (header, rows) = csv_rows(&ok(&["sweep", "--input", s(&p), "--widths", "1,2,4,8"]));
    let col = header.iter().position(|h| h == "width").unwrap();
    let widths: Vec<&str> = rows.iter().map(|r| r[col].as_str()).collect();
    assert_eq!(widths, ["1", "2", "4", "8"]);
}

#[test]
fn prune_flags_are_exclusive() {
    let dir = TempDir::new().unwrap();
    let p = synth(&dir, "fc.wtc", &[]);
    let out = wtc(&["analyze", "--input", s(&p), "--threshold", "0.1", "--target-sparsity", "0.5"]);
    assert!(!out.status.success());
}

#[test]
fn sparsity_batch_repeats_layers() {
    let dir = TempDir::new().unwrap();
    let p = synth(&dir, "lenet.wtc", &["--lenet-shapes"]);
    let (_, rows) = csv_rows(&ok(&["analyze", "--input", s(&p), "--sparsities"]));
    assert_eq!(rows.len(), 12);
    let (_, rows) = csv_rows(&ok(&["analyze", "--input", s(&p), "--sparsities", "0.5", "0.9"]));
    assert_eq!(rows.len(), 8);
}

#[test]
fn sequential_and_parallel_reports_agree() {
    let dir = TempDir::new().unwrap();
    let p = synth(&dir, "lenet.wtc", &["--lenet-shapes"]);
    for cmd in ["analyze", "sweep", "compare-huffman", "compare-rounding"] {
        let par = ok(&[cmd, "--input", s(&p), "--target-sparsity", "0.6"]);
        let seq = ok(&["--sequential", cmd, "--input", s(&p), "--target-sparsity", "0.6"]);
        assert_eq!(par, seq, "{cmd}");
        assert!(!par.is_empty());
    }
}

#[test]
fn compare_rounding_reports_both_modes() {
    let dir = TempDir::new().unwrap();
    let p = synth(&dir, "fc.wtc", &["--rows", "32", "--cols", "32"]);
    let (header, rows) = csv_rows(&ok(&["compare-rounding", "--input", s(&p), "--target-sparsity", "0.5"]));
    assert_eq!(rows.len(), 1);
    assert!(header.iter().any(|h| h.contains("truncate")));
    assert!(header.iter().any(|h| h.contains("nearest")));
}
