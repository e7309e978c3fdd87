use std::path::Path;
use std::process::{Command, Output};

fn fecg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fecg"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let o = fecg(args, dir);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
        .parse()
        .unwrap()
}

const TINY: &str = "[arch]\nngf = 4\nn_blocks = 2\nndf = 4\n[train]\nepochs = 2\nbatch_size = 8\n";

#[test]
fn synth_is_byte_identical_per_seed() {
    let d = tempfile::tempdir().unwrap();
    ok(&["synth", "--seed", "7", "--duration", "60", "--out", "a"], d.path());
    ok(&["synth", "--seed", "7", "--duration", "60", "--out", "b"], d.path());
    ok(&["synth", "--seed", "8", "--duration", "60", "--out", "c"], d.path());
    for f in ["abdominal.bin", "fetal.bin", "fetal_peaks.txt", "maternal_peaks.txt", "synth.toml"] {
        let a = std::fs::read(d.path().join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(d.path().join("b").join(f)).unwrap(), "{f}");
    }
    assert_ne!(
        std::fs::read(d.path().join("a/abdominal.bin")).unwrap(),
        std::fs::read(d.path().join("c/abdominal.bin")).unwrap()
    );
}

#[test]
fn eval_of_truth_against_itself() {
    let d = tempfile::tempdir().unwrap();
    ok(&["synth", "--seed", "1", "--duration", "20"], d.path());
    ok(&["preprocess", "--mecg", "abdominal.bin", "--fecg", "fetal.bin"], d.path());
    ok(&["eval", "--truth", "fecg.seg", "--pred", "fecg.seg", "--input", "mecg.seg"], d.path());
    let csv = std::fs::read_to_string(d.path().join("eval.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "segment,MAE,RMSE,PCC,SpecCorr,SpecRMSE");
    assert_eq!(csv.lines().last().unwrap(), "mean,0,0,1,1,0");
}

#[test]
fn end_to_end_smoke() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("tiny.toml"), TINY).unwrap();
    ok(&["synth", "--seed", "3", "--duration", "30", "--out", "data"], p);
    let s = ok(
        &["preprocess", "--mecg", "data/abdominal.bin", "--fecg", "data/fetal.bin", "--out", "seg"],
        p,
    );
    assert_eq!(value(&s, "channels"), 4.0);
    let t = ok(
        &["--config", "tiny.toml", "train", "--mecg", "seg/mecg.seg", "--fecg", "seg/fecg.seg", "--groups", "seg/groups.txt", "--out", "model"],
        p,
    );
    assert!(value(&t, "val_segments") > 0.0);
    let epochs = std::fs::read_to_string(p.join("model/epochs.csv")).unwrap();
    assert_eq!(epochs.lines().count(), 3);
    assert!(std::fs::read_to_string(p.join("model/fold.txt")).unwrap().starts_with("unit=segment\n"));
    ok(&["--config", "tiny.toml", "extract", "--model", "model/model.ckpt", "--mecg", "data/abdominal.bin", "--out", "ext"], p);
    assert!(p.join("ext/extracted.bin").exists());
    // Fetal annotations follow the extraction; only the trimmed edges lose beats.
    let q = ok(&["qrs", "--record", "ext/extracted.bin", "--out", "ext"], p);
    let carried = value(&q, "tp") + value(&q, "fn");
    let all = std::fs::read_to_string(p.join("data/fetal_peaks.txt")).unwrap().lines().count() as f64 - 1.0;
    assert!(carried <= all && carried >= all - 8.0, "{carried} of {all}");
    let e = ok(&["eval", "--truth", "seg/fecg.seg", "--pred", "ext/extracted.seg", "--input", "seg/mecg.seg"], p);
    assert!(value(&e, "mae").is_finite());
    ok(&["plot", "--truth", "seg/fecg.seg", "--extracted", "ext/extracted.seg", "--segment", "3"], p);
    let svg = std::fs::read_to_string(p.join("plot.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn qrs_and_hrv_on_the_fetal_reference() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(&["synth", "--seed", "4", "--duration", "60", "--rate", "512", "--format", "csv"], p);
    let q = ok(&["qrs", "--record", "fetal.csv"], p);
    assert!(value(&q, "f1") >= 0.99);
    let h = ok(&["hrv", "--peaks", "peaks.txt", "--truth", "fetal_peaks.txt"], p);
    assert!(value(&h, "mean_rr_ms_error_pct") < 0.5);
    assert!((value(&h, "mean_hr_bpm") - 130.0).abs() < 5.0);
    let h2 = ok(&["hrv", "--peaks", "fetal.csv"], p);
    assert_eq!(value(&h2, "mean_rr_ms"), value(&std::fs::read_to_string(p.join("hrv.txt")).unwrap(), "mean_rr_ms"));
}

#[test]
fn dry_run_prints_parameter_budget() {
    let d = tempfile::tempdir().unwrap();
    let s = ok(&["train", "--dry-run"], d.path());
    let g = value(&s, "generator_params");
    let dp = value(&s, "discriminator_params");
    assert!((g - 337_000.0).abs() <= 0.25 * 337_000.0, "{g}");
    assert!((dp - 44_000.0).abs() <= 0.25 * 44_000.0, "{dp}");
}

fn failure(args: &[&str], dir: &Path) -> (i32, String) {
    let o = fecg(args, dir);
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    (o.status.code().unwrap(), err)
}

#[test]
fn errors_have_distinct_codes_and_one_line() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let (c, e) = failure(&["synth", "--bogus"], p);
    assert_eq!(c, 2);
    assert!(e.starts_with("error: kind=usage code=2 message=\""));
    let (c, e) = failure(&["qrs", "--record", "absent.bin"], p);
    assert_eq!(c, 3);
    assert!(e.contains("kind=missing_file"));
    std::fs::write(p.join("bad.toml"), "[train]\nepochs = \"many\"\n").unwrap();
    let (c, e) = failure(&["--config", "bad.toml", "synth"], p);
    assert_eq!(c, 4);
    assert!(e.contains("kind=config"));
    let (c, _) = failure(&["--config", "absent.toml", "synth"], p);
    assert_eq!(c, 3);
    std::fs::write(p.join("junk.bin"), b"FREC\x01\x00\x00\x00xx").unwrap();
    let (c, e) = failure(&["qrs", "--record", "junk.bin"], p);
    assert_eq!(c, 1);
    assert!(e.contains("kind=corrupt"));
    assert!(fecg(&["--help"], p).status.success());
}

#[test]
fn failed_plot_leaves_no_file() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("empty.csv"), "# rate=512 channels=a\n").unwrap();
    ok(&["synth", "--seed", "2", "--duration", "4", "--rate", "512", "--format", "csv"], p);
    let (c, _) = failure(&["plot", "--truth", "empty.csv", "--extracted", "fetal.csv"], p);
    assert_eq!(c, 1);
    let (c, _) = failure(&["plot", "--truth", "fetal.csv", "--extracted", "abdominal.csv", "--channel", "9"], p);
    assert_eq!(c, 1);
    assert!(!p.join("plot.svg").exists());
    assert!(std::fs::read_dir(p).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().starts_with('.')));
}

#[test]
fn thread_cap_is_validated() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fecg"))
        .args(["synth", "--duration", "2"])
        .env("FECG_THREADS", "zero")
        .current_dir(d.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
    let o = Command::new(env!("CARGO_BIN_EXE_fecg"))
        .args(["synth", "--duration", "2"])
        .env("FECG_THREADS", "1")
        .current_dir(d.path())
        .output()
        .unwrap();
    assert!(o.status.success());
}
