use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crossrsa_core::features::save_features;
use crossrsa_core::results::read_results;
use crossrsa_core::{
    average_repetitions, save_neural_dataset, FeatureMatrix, NeuralDataset, Provenance, ResultRecord, Species,
};
use crossrsa_core::neuro::NeuroFormat;
use ndarray::Array3;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crossrsa"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 12 stimuli, 9 neurons, 3 repetitions with a deterministic pattern.
fn dataset() -> NeuralDataset {
    let responses = Array3::from_shape_fn((12, 9, 3), |(st, n, r)| {
        ((st * 7 + n * 3) % 11) as f64 + (st as f64 * 0.37 + n as f64).sin() + 0.1 * r as f64
    });
    NeuralDataset::new(
        Species::Macaque,
        "IT",
        (0..12).map(|i| format!("stim{i:02}")).collect(),
        (0..9).map(|i| format!("unit{i}")).collect(),
        responses,
    )
    .unwrap()
}

#[test]
fn score_of_the_neural_features_themselves_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset();
    let neuro = dir.path().join("neuro.txt");
    save_neural_dataset(&data, &neuro, NeuroFormat::Text).unwrap();
    let avg = average_repetitions(&data).unwrap();
    let fm = FeatureMatrix::new(
        avg.stimulus_ids().to_vec(),
        avg.features().clone(),
        Provenance { condition: "BP".into(), seed: Some(3), layer: "FC1".into() },
    )
    .unwrap();
    let feat = dir.path().join("bp.feat");
    save_features(&fm, &feat).unwrap();
    let out = dir.path().join("results.jsonl");
    let o = run(&["score", "--data", s(&neuro), "--features", s(&feat), "--n-boot", "200", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = read_results(&out).unwrap();
    let ResultRecord::Rsa(r) = &recs[0] else { panic!("expected an rsa record") };
    assert!((r.rho - 1.0).abs() < 1e-12, "rho = {}", r.rho);
    assert_eq!((r.region.as_str(), r.stimulus_set.as_str(), r.seed), ("IT", "neuro", Some(3)));
    let ci = r.ci.as_ref().unwrap();
    assert!((ci.lower - 1.0).abs() < 1e-12 && (ci.upper - 1.0).abs() < 1e-12);

    // a ceiling record appends to the same file
    let o = run(&["ceiling", "--data", s(&neuro), "--n-splits", "10", "--out", s(&out), "--append"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let recs = read_results(&out).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(matches!(recs[1], ResultRecord::Ceiling(_)));
}

#[test]
fn compare_on_reference_values() {
    let o = run(&["compare", "--data", s(&fixture("reference_rhos.jsonl"))]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let ranking: Vec<(String, f64, f64)> = text
        .lines()
        .skip_while(|l| *l != "# ranking")
        .skip(2)
        .take_while(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[2].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect();
    let taus: Vec<String> = ranking.iter().map(|r| format!("{:.2}", r.1)).collect();
    let ps: Vec<String> = ranking.iter().map(|r| format!("{:.2}", r.2)).collect();
    assert_eq!(ranking.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(), ["V1", "V2", "V4", "IT"]);
    assert_eq!(taus, ["0.40", "-0.20", "0.20", "0.00"]);
    assert_eq!(ps, ["0.48", "0.82", "0.82", "1.00"]);
    assert!(text.contains("human,V1,0.064,"));
    assert!(text.contains("macaque,V1,0.147,"));
    assert!(text.contains("V1,STDP,-0.017,0.121,-0.138"));
}

#[test]
fn stimulus_control_table() {
    let o = run(&["stimcontrol", "--data", s(&fixture("reference_stimcontrol.jsonl")), "--format", "jsonl"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let taus: Vec<f64> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["tau"].as_f64().unwrap())
        .collect();
    assert_eq!(taus.len(), 4);
    for (t, want) in taus.iter().zip([0.4, -0.2, 0.2, -0.4]) {
        assert!((t - want).abs() < 1e-12);
    }
}

#[test]
fn report_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&[
            "report",
            "--data",
            s(&fixture("reference_rhos.jsonl")),
            "--control",
            s(&fixture("reference_stimcontrol.jsonl")),
            "--out",
            s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<String> =
        std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 12, "{names:?}");
    for n in &names {
        let x = std::fs::read(a.join(n)).unwrap();
        assert_eq!(x, std::fs::read(b.join(n)).unwrap(), "{n} differs");
        let text = String::from_utf8(x).unwrap();
        assert!(!text.contains(s(dir.path())), "{n} leaks a path");
    }
}

#[test]
fn exit_codes_by_failure_class() {
    assert_eq!(run(&["compare"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--rule", "backprop", "--out", "x"]).status.code(), Some(2));
    assert_eq!(run(&["compare", "--data", "/nonexistent/results.jsonl"]).status.code(), Some(3));

    // constant responses give an undefined correlation distance
    let dir = tempfile::tempdir().unwrap();
    let flat = NeuralDataset::new(
        Species::Macaque,
        "V1",
        (0..6).map(|i| format!("s{i}")).collect(),
        (0..4).map(|i| format!("n{i}")).collect(),
        Array3::from_elem((6, 4, 2), 1.0),
    )
    .unwrap();
    let neuro = dir.path().join("flat.bin");
    save_neural_dataset(&flat, &neuro, NeuroFormat::Binary).unwrap();
    let o = run(&["ceiling", "--data", s(&neuro), "--out", s(&dir.path().join("c.jsonl"))]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_fills_gaps_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, format!("[compare]\ndata = [{:?}]\nformat = \"jsonl\"\nregion = \"V2\"\n", fixture("reference_rhos.jsonl"))).unwrap();
    let o = run(&["--config", s(&cfg), "compare", "--format", "csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("# ranking"));
    assert!(text.contains("human,V2,"));

    std::fs::write(&cfg, "[compare]\nbogus = 1\n").unwrap();
    assert_eq!(run(&["--config", s(&cfg), "compare"]).status.code(), Some(2));
}

#[test]
fn random_checkpoints_extract_and_synthesize() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("ck");
    let o = run(&["train", "--rule", "random", "--seeds", "0..1", "--out", s(&ck)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ck.join("random-seed0.ckpt").exists() && ck.join("random-seed1.ckpt").exists());

    // three tiny solid-colour stimuli
    let stim = dir.path().join("stim");
    std::fs::create_dir_all(&stim).unwrap();
    let mut entries = Vec::new();
    for (i, rgb) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.5], [0.2, 0.2, 0.9], [0.7, 0.7, 0.1]].iter().enumerate() {
        let mut chw = Vec::new();
        for c in 0..3 {
            for y in 0..8 {
                for x in 0..8 {
                    chw.push(rgb[c] * (((x + y + i) % 3) as f64) / 2.0);
                }
            }
        }
        let img = crossrsa_core::RasterImage::new(8, 8, chw).unwrap();
        let name = format!("s{i}.png");
        img.save_png(&stim.join(&name)).unwrap();
        entries.push((format!("s{i}"), PathBuf::from(name)));
    }
    let manifest = stim.join("stimuli.txt");
    std::fs::write(&manifest, crossrsa_core::features::write_manifest("tiny", &entries)).unwrap();

    let feats = dir.path().join("feat");
    let o = run(&[
        "extract", "--ckpt", s(&ck.join("random-seed0.ckpt")), "--data", s(&manifest), "--layer", "Conv1",
        "--target", "16", "--out", s(&feats),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let feat = feats.join("random-seed0-Conv1.feat");
    assert!(feat.exists());

    let neuro = dir.path().join("synthetic.bin");
    let o = run(&["synth", "--data", s(&feat), "--neurons", "20", "--reps", "2", "--out", s(&neuro)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = crossrsa_core::load_neural_dataset(&neuro).unwrap();
    assert_eq!((data.n_stimuli(), data.n_neurons(), data.n_repetitions()), (4, 20, 2));
}
