use std::sync::OnceLock;

use cyltomo::experiment::*;
use cyltomo::inversion::{History, SemiDiscreteField};
use cyltomo::io;
use cyltomo::observations::add_noise;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// A coarse configuration that runs in about a second.
fn small() -> ExperimentConfig {
    ExperimentConfig {
        forward_h: 1.0 / 20.0,
        inverse_h: 1.0 / 10.0,
        n_phi: 16,
        max_iters: 6,
        ..ExperimentConfig::default()
    }
}

fn forward_data() -> &'static ForwardData {
    static F: OnceLock<ForwardData> = OnceLock::new();
    F.get_or_init(|| forward(&small()).unwrap())
}

fn input(fwd: &ForwardData) -> InverseInput<'_> {
    InverseInput { data: &fwd.data, cart: &fwd.cart, truth: Some(&fwd.truth), u_ref: Some(&fwd.u_ref) }
}

#[test]
fn boundary_dump_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let data = add_noise(&forward_data().data, 0.03, 7);
    io::write_boundary(&dir.path().join("b"), &data).unwrap();
    assert_eq!(io::read_boundary(&dir.path().join("b")).unwrap(), data);
    let (header, values) = io::read_dump(&dir.path().join("b")).unwrap();
    assert_eq!(header.dtype, "f64");
    assert_eq!(header.byte_order, "little-endian");
    assert_eq!(values.len(), data.p.len() + data.p0.len() + data.pb.len());
    let raw = std::fs::read(dir.path().join("b.bin")).unwrap();
    assert_eq!(f64::from_le_bytes(raw[..8].try_into().unwrap()), data.p[0]);
}

#[test]
fn field_and_table_dumps_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fwd = forward_data();
    io::write_refractive(&dir.path().join("n"), "refractive_index", &fwd.truth, json!({ "note": 1 })).unwrap();
    assert_eq!(io::read_refractive(&dir.path().join("n")).unwrap(), fwd.truth);
    io::write_table(&dir.path().join("t/source_000"), &fwd.tables[3], 0.1).unwrap();
    assert_eq!(io::read_table(&dir.path().join("t/source_000")).unwrap(), fwd.tables[3]);
}

#[test]
fn coefficient_and_checkpoint_dumps_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut v = SemiDiscreteField::zeros(&forward_data().grid, 4);
    v.values.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0) * 1e3);
    io::write_semidiscrete(&dir.path().join("v"), "coefficients", &v, json!({})).unwrap();
    assert_eq!(io::read_semidiscrete(&dir.path().join("v")).unwrap(), v);
    let history = History {
        j: vec![3.0, 2.0 / 3.0],
        grad_norm: vec![1.0, 0.1],
        step: vec![0.0, 0.1],
        clamped_fraction: vec![0.0, 0.0],
        ..History::default()
    };
    let config = small().to_json();
    io::write_checkpoint(&dir.path().join("c"), &v, &history, config.clone()).unwrap();
    assert_eq!(io::read_checkpoint(&dir.path().join("c")).unwrap(), (v, history, config));
}

#[test]
fn truncated_dumps_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    io::write_refractive(&dir.path().join("n"), "n", &forward_data().truth, json!({})).unwrap();
    let bin = dir.path().join("n.bin");
    let mut raw = std::fs::read(&bin).unwrap();
    raw.truncate(raw.len() - 8);
    std::fs::write(&bin, raw).unwrap();
    assert!(matches!(io::read_refractive(&dir.path().join("n")), Err(io::DumpError::Format(_))));
    assert!(matches!(io::read_refractive(&dir.path().join("missing")), Err(io::DumpError::Io { .. })));
}

#[test]
fn identical_configurations_give_identical_results() {
    let fwd = forward_data();
    let a = invert(&small(), input(fwd), None).unwrap();
    let b = invert(&small(), input(fwd), None).unwrap();
    assert_eq!(a.metrics.deterministic_json(), b.metrics.deterministic_json());
    assert_eq!(a.coefficients, b.coefficients);
    assert_eq!(a.history, b.history);
}

#[test]
fn resuming_a_checkpoint_continues_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let fwd = forward_data();
    let first =
        ExperimentConfig { max_iters: 4, checkpoint_every: 2, output_dir: Some(dir.path().to_path_buf()), ..small() };
    invert(&first, input(fwd), None).unwrap();
    let (v, h, saved) = io::read_checkpoint(&dir.path().join("checkpoint")).unwrap();
    assert_eq!(h.iterations(), 4);
    assert_eq!(saved, first.to_json());
    let resumed = invert(&small(), input(fwd), Some((v, h))).unwrap();
    let direct = invert(&small(), input(fwd), None).unwrap();
    assert_eq!(resumed.coefficients, direct.coefficients);
    assert_eq!(resumed.history, direct.history);
}

#[test]
fn run_writes_the_documented_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig { output_dir: Some(dir.path().to_path_buf()), ..small() };
    let out = run_experiment(&config).unwrap();
    for name in [
        "config.json",
        "metrics.json",
        "history.csv",
        "slice_axial.csv",
        "slice_transverse.csv",
        "n_computed.bin",
        "n_computed.json",
        "n_true.bin",
        "coefficients.bin",
        "boundary_data.bin",
    ] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let metrics: Metrics =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics.deterministic_json(), out.metrics.deterministic_json());
    let history = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert!(history.starts_with("# config: "));
    assert_eq!(history.lines().count(), 2 + out.history.j.len());
    assert_eq!(out.metrics.iterations, out.history.iterations());
    assert_eq!(out.metrics.contrast_correct, 1.5);
}

#[test]
fn single_value_sweep_matches_a_direct_inversion() {
    let config = small();
    let rows = sweep(&config, SweepParameter::Lambda, &[config.lambda]).unwrap();
    let direct = invert(&config, input(forward_data()), None).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].contrast, direct.metrics.contrast_computed);
    assert_eq!(rows[0].relative_l2_error, direct.metrics.rel_l2_error);
    let csv = sweep_csv(&config, SweepParameter::Lambda, &rows);
    assert_eq!(csv.lines().nth(1), Some("lambda,relative_l2_error,contrast,iterations,converged,final_grad_norm"));
}

#[test]
fn invalid_configurations_are_config_errors() {
    let cases = [
        ExperimentConfig { inverse_h: 0.5, ..small() },
        ExperimentConfig { n_phi: 2, ..small() },
        ExperimentConfig { n_basis: 0, ..small() },
        ExperimentConfig { lambda: -1.0, ..small() },
        ExperimentConfig { delta: 1.5, ..small() },
        ExperimentConfig { gamma: 2.0, ..small() },
    ];
    for c in cases {
        let e = c.validate().unwrap_err();
        assert_eq!(e.exit_code(), 2, "{e}");
    }
    assert_eq!(sweep(&small(), SweepParameter::N, &[2.5]).unwrap_err().exit_code(), 2);
    assert_eq!(sweep(&small(), SweepParameter::N, &[]).unwrap_err().exit_code(), 2);
    let unknown = serde_json::from_str::<ExperimentConfig>(r#"{"lambda": 3, "bogus": 1}"#);
    assert!(unknown.is_err());
    let partial: ExperimentConfig = serde_json::from_str(r#"{"N": 8, "delta": 0.03}"#).unwrap();
    assert_eq!((partial.n_basis, partial.delta, partial.lambda), (8, 0.03, 3.0));
}

#[test]
fn verification_checks_pass() {
    let d = verify(&ExperimentConfig::default());
    for c in &d.checks {
        assert!(c.passed, "{}: {}", c.property, c.measured);
    }
    assert!(d.all_passed());
    assert!(d.checks.len() >= 6);
}
