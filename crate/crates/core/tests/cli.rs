use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lpcvoxel::acoustic::{SynthesizerConfig, SynthesizerWeights};
use lpcvoxel::cli::units_to_track;
use lpcvoxel::dsp::AudioBuffer;
use lpcvoxel::io;
use lpcvoxel::prosody::{Position, ProsodyUnit};
use lpcvoxel::vocoder::VocoderWeights;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpcvoxel"))
        .args(args)
        .output()
        .unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        let cfg = SynthesizerConfig {
            vocab: 6,
            ..SynthesizerConfig::small()
        };
        io::write_synthesizer(&SynthesizerWeights::random(&cfg, 3), &f.path("syn.bin")).unwrap();
        let mut voc = VocoderWeights::random(4);
        voc.apply_block_sparsity(0.9).unwrap();
        io::write_vocoder(&voc, &f.path("voc.bin")).unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn units(&self, name: &str, durations: &[f64]) -> PathBuf {
        let units: Vec<ProsodyUnit> = durations
            .iter()
            .enumerate()
            .map(|(i, &d)| ProsodyUnit {
                label_id: (i % 6) as u32,
                position: Position::Middle,
                duration_ms: d,
                log_pitch_initial: 7.0,
                log_pitch_final: 7.1,
                log_energy: 0.0,
            })
            .collect();
        let p = self.path(name);
        io::write_units(&units, &p).unwrap();
        p
    }

    fn synthesize(&self, units: &Path, out: &str, extra: &[&str]) -> Output {
        let out = self.path(out);
        let syn = self.path("syn.bin");
        let voc = self.path("voc.bin");
        let mut args = vec![
            "synthesize",
            "--units",
            s(units),
            "--acoustic",
            s(&syn),
            "--vocoder",
            s(&voc),
        ];
        args.extend(["--out", s(&out), "--seed", "5"]);
        args.extend(extra);
        run(&args)
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["enhance", "--in", "x"]), 1);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["bench", "--seconds", "0.5"]), 1);
}

#[test]
fn missing_and_malformed_files_exit_two() {
    let f = Fixture::new();
    let missing = f.path("missing.lpcf");
    let out = f.path("o.lpcf");
    let o = run(&["enhance", "--in", s(&missing), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("input") && err.contains("missing.lpcf"),
        "{err}"
    );

    let bad = f.path("bad.txt");
    std::fs::write(&bad, "1 middle ten 7 7 0\n").unwrap();
    assert_eq!(f.synthesize(&bad, "o.wav", &[]).status.code(), Some(2));
}

#[test]
fn thirty_ms_gives_480_samples() {
    let f = Fixture::new();
    let u = f.units("u.txt", &[30.0]);
    let o = f.synthesize(&u, "o.wav", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(io::read_wav(&f.path("o.wav")).unwrap().len(), 480);
}

#[test]
fn enhancement_switch_changes_output() {
    let f = Fixture::new();
    let u = f.units("u.txt", &[100.0, 150.0]);
    assert!(f.synthesize(&u, "a.wav", &[]).status.success());
    assert!(f
        .synthesize(&u, "b.wav", &["--no-enhance"])
        .status
        .success());
    assert_ne!(
        std::fs::read(f.path("a.wav")).unwrap(),
        std::fs::read(f.path("b.wav")).unwrap()
    );
}

#[test]
fn enhance_is_not_idempotent() {
    let f = Fixture::new();
    let u = f.units("u.txt", &[80.0, 80.0]);
    let (syn, feat) = (f.path("syn.bin"), f.path("f.lpcf"));
    assert_eq!(
        code(&[
            "mlpg",
            "--units",
            s(&u),
            "--acoustic",
            s(&syn),
            "--out",
            s(&feat)
        ]),
        0
    );
    let (once, twice) = (f.path("e1.lpcf"), f.path("e2.lpcf"));
    assert_eq!(code(&["enhance", "--in", s(&feat), "--out", s(&once)]), 0);
    assert_eq!(code(&["enhance", "--in", s(&once), "--out", s(&twice)]), 0);
    let (a, b) = (
        std::fs::read(&once).unwrap(),
        std::fs::read(&twice).unwrap(),
    );
    assert_eq!(a.len(), b.len());
    assert_ne!(a, b);
}

#[test]
fn mlpg_matches_library() {
    let f = Fixture::new();
    let u = f.units("u.txt", &[60.0, 90.0, 40.0]);
    let (syn, out) = (f.path("syn.bin"), f.path("f.lpcf"));
    assert_eq!(
        code(&[
            "mlpg",
            "--units",
            s(&u),
            "--acoustic",
            s(&syn),
            "--out",
            s(&out)
        ]),
        0
    );
    let units = io::read_units(&u).unwrap();
    let w = io::read_synthesizer(&syn, true).unwrap();
    let track = units_to_track(&units, &w).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), io::encode_features(&track));
}

#[test]
fn analyze_one_second() {
    let f = Fixture::new();
    let x: Vec<f64> = (0..16000)
        .map(|i| 0.3 * (i as f64 * 0.05).sin() + 0.1 * (i as f64 * 0.31).sin())
        .collect();
    let wav = f.path("in.wav");
    io::write_wav(&AudioBuffer::new(x).unwrap(), &wav).unwrap();
    let (feat, exc) = (f.path("a.lpcf"), f.path("e.bin"));
    assert_eq!(
        code(&[
            "analyze",
            "--in",
            s(&wav),
            "--out",
            s(&feat),
            "--excitation",
            s(&exc)
        ]),
        0
    );
    assert_eq!(io::read_features(&feat).unwrap().len(), 100);
    assert_eq!(std::fs::read(&exc).unwrap().len(), 16000);

    let voc = f.path("voc.bin");
    let out = f.path("v.wav");
    assert_eq!(
        code(&[
            "vocode",
            "--features",
            s(&feat),
            "--vocoder",
            s(&voc),
            "--out",
            s(&out)
        ]),
        0
    );
    assert_eq!(io::read_wav(&out).unwrap().len(), 16000);
}

#[test]
fn train_then_adapt_with_zero_patience() {
    let f = Fixture::new();
    let u = f.units("u.txt", &[100.0, 100.0]);
    let syn = f.path("syn.bin");
    let feat = f.path("f.lpcf");
    assert_eq!(
        code(&[
            "mlpg",
            "--units",
            s(&u),
            "--acoustic",
            s(&syn),
            "--out",
            s(&feat)
        ]),
        0
    );
    std::fs::write(f.path("manifest.txt"), "# units features\nu.txt f.lpcf\n").unwrap();
    let manifest = f.path("manifest.txt");
    let (trained, hist) = (f.path("t.bin"), f.path("h.csv"));
    let o = run(&[
        "train",
        "--data",
        s(&manifest),
        "--init",
        s(&syn),
        "--out",
        s(&trained),
        "--epochs",
        "3",
        "--history",
        s(&hist),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&hist).unwrap().lines().count(), 5);

    let adapted = f.path("a.bin");
    let args = [
        "adapt",
        "--data",
        s(&manifest),
        "--base",
        s(&trained),
        "--out",
        s(&adapted),
        "--patience",
        "0",
    ];
    assert_eq!(code(&args), 0);
    assert_eq!(
        io::read_tensors(&trained).unwrap(),
        io::read_tensors(&adapted).unwrap()
    );
}

#[test]
fn frame_count_mismatch_is_a_format_error() {
    let f = Fixture::new();
    let u = f.units("u.txt", &[100.0]);
    let long = f.units("long.txt", &[200.0]);
    let (syn, feat) = (f.path("syn.bin"), f.path("f.lpcf"));
    assert_eq!(
        code(&[
            "mlpg",
            "--units",
            s(&long),
            "--acoustic",
            s(&syn),
            "--out",
            s(&feat)
        ]),
        0
    );
    std::fs::write(f.path("m.txt"), format!("{} {}\n", s(&u), s(&feat))).unwrap();
    let (m, out) = (f.path("m.txt"), f.path("t.bin"));
    assert_eq!(
        code(&["train", "--data", s(&m), "--out", s(&out), "--epochs", "1"]),
        2
    );
}

#[test]
fn init_writes_loadable_weights() {
    let f = Fixture::new();
    let out = f.path("v.bin");
    assert_eq!(
        code(&[
            "init",
            "--kind",
            "vocoder",
            "--out",
            s(&out),
            "--sparsity",
            "0.5"
        ]),
        0
    );
    let w = io::read_vocoder(&out, true).unwrap();
    assert!((w.sparsity() - 0.5).abs() < 0.01);
    assert_eq!(
        code(&[
            "init",
            "--kind",
            "vocoder",
            "--out",
            s(&out),
            "--sparsity",
            "1.5"
        ]),
        1
    );
}

#[test]
fn bench_prints_rtf() {
    let o = run(&["bench", "--seconds", "1", "--sparsity", "0.9"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    let rtf: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("RTF="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(rtf > 0.0);
}
