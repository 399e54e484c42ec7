//! End-to-end checks of the `mvsense` binary: help snapshots, exit codes,
//! run manifests and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mvsense"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SUBCOMMANDS: [&str; 13] = [
    "gen",
    "encode",
    "decode",
    "extract-mv",
    "render",
    "activity",
    "bench",
    "ssim-curve",
    "train",
    "eval",
    "fuse-eval",
    "cost",
    "report",
];

#[test]
fn help_snapshots() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots");
    let mut checks = vec![("top".to_string(), run(&["--help"]))];
    for sub in SUBCOMMANDS {
        checks.push((sub.to_string(), run(&[sub, "--help"])));
    }
    for (name, out) in checks {
        assert!(out.status.success(), "--help failed for {name}");
        let expected = std::fs::read_to_string(dir.join(format!("{name}.txt")))
            .unwrap_or_else(|_| panic!("missing snapshot for {name}"));
        assert_eq!(stdout(&out), expected, "help snapshot drift for {name}");
    }
}

#[test]
fn top_help_lists_every_subcommand() {
    let help = stdout(&run(&["--help"]));
    for sub in SUBCOMMANDS {
        assert!(help.contains(sub), "{sub} missing from top-level help");
    }
}

#[test]
fn exit_codes_by_error_class() {
    // Usage error: unknown flag.
    let out = run(&["cost", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    // Data error: missing input file.
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.mvb");
    let raw = tmp.path().join("out.rgb");
    let out = run(&[
        "decode",
        missing.to_str().unwrap(),
        raw.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    // Config error: render interval above decode interval.
    let out = run(&[
        "render",
        missing.to_str().unwrap(),
        tmp.path().join("d").to_str().unwrap(),
        "--x",
        "5",
        "--r",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

fn gen_corpus(dir: &Path, seed: &str) {
    let out = run(&[
        "gen",
        dir.to_str().unwrap(),
        "--classes",
        "6",
        "--per-class",
        "1",
        "--width",
        "64",
        "--height",
        "64",
        "--frames",
        "8",
        "--q",
        "1",
        "--seed",
        seed,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_is_reproducible_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen_corpus(&a, "11");
    gen_corpus(&b, "11");

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("run-manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["subcommand"], "gen");
    assert_eq!(manifest["seed"], 11);
    assert!(manifest["outputs"].as_array().unwrap().len() >= 7);

    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        // The run manifest embeds absolute output paths, which differ
        // between the two directories by construction.
        if name == "run-manifest.json" {
            continue;
        }
        let (fa, fb) = (
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
        );
        assert_eq!(fa, fb, "{name:?} differs between identical runs");
    }
}

#[test]
fn static_scene_extracts_all_zero_mvf() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c");
    gen_corpus(&corpus, "5");
    // Class 5 is the static-gradient class.
    let mvf = tmp.path().join("flows.mvf");
    let out = run(&[
        "extract-mv",
        corpus.join("c05_v000.mvb").to_str().unwrap(),
        "--out",
        mvf.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("residual bytes read 0"));
    let data = std::fs::read(&mvf).unwrap();
    assert_eq!(&data[0..4], b"MVF1");
    // Every vector after the per-field 4-byte size prefix is (0, 0).
    let count = u32::from_le_bytes(data[4..8].try_into().unwrap()) as usize;
    assert!(count > 0);
    let mut off = 8;
    for _ in 0..count {
        let cols = u16::from_le_bytes(data[off..off + 2].try_into().unwrap()) as usize;
        let rows = u16::from_le_bytes(data[off + 2..off + 4].try_into().unwrap()) as usize;
        off += 4;
        for _ in 0..cols * rows {
            assert_eq!(&data[off..off + 4], &[0, 0, 0, 0]);
            off += 4;
        }
    }
    assert_eq!(off, data.len());
}

#[test]
fn cost_preset_matches_published_table() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("cost.csv");
    let out = run(&["cost", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let expected = "framework,C_flow,C_decode,C_t,C_s,C_tot\n\
                    Proposed X=10,0.003,0.053,0.055,0.139,0.250\n\
                    Proposed X=50,0.003,0.031,0.055,0.139,0.228\n\
                    TSCNN (fusion),9.133,0.375,0.920,0.676,11.103\n\
                    EMV + RGB-CNN,0.006,0.375,0.111,0.676,1.167\n";
    assert_eq!(text, expected);
}

#[test]
fn config_file_sits_between_flags_and_presets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("settings.cfg");
    std::fs::write(&cfg, "q = 2\ngop = 4\n").unwrap();
    let dir = tmp.path().join("c");
    // Flag --q 3 beats the file's q = 2; the file's gop = 4 beats the preset.
    let out = run(&[
        "gen",
        dir.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--classes",
        "2",
        "--per-class",
        "1",
        "--width",
        "32",
        "--height",
        "32",
        "--frames",
        "4",
        "--q",
        "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("run-manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["codec"]["q"], 3);
    assert_eq!(manifest["config"]["codec"]["gop_length"], 4);
    // A malformed config line is a config error (exit 4).
    std::fs::write(&cfg, "no equals sign\n").unwrap();
    let out = run(&["cost", "--config", cfg.to_str().unwrap(), "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn render_degenerate_settings_reproduce_full_decode() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("c");
    gen_corpus(&corpus, "3");
    let input = corpus.join("c00_v000.mvb");
    let full = tmp.path().join("full");
    let sel = tmp.path().join("sel");
    for (dir, x) in [(&full, "1"), (&sel, "1")] {
        let out = run(&[
            "render",
            input.to_str().unwrap(),
            dir.to_str().unwrap(),
            "--x",
            x,
            "--r",
            "1",
            "--a",
            "0",
        ]);
        assert!(out.status.success());
    }
    for i in 0..8 {
        let name = format!("frame_{i:05}.ppm");
        assert_eq!(
            std::fs::read(full.join(&name)).unwrap(),
            std::fs::read(sel.join(&name)).unwrap()
        );
    }
}
