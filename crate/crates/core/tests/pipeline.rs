use csqpt::channel::{random_channel, unitary_channel, KrausSet};
use csqpt::fock::FockDim;
use csqpt::gates::{compose_unitary, ideal_logical_x, x_gate_sequence, BinomialCode};
use csqpt::metrics::{avg_gate_fidelity, process_fidelity_choi};
use csqpt::reconstruct::{reconstruct, ReconstructionConfig, ReconstructionResult};
use csqpt::tomography::{
    normalize_dataset, simulate_dataset, ProbeGrid, TomographyDataset, WignerGrid,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn dim(d: usize) -> FockDim {
    FockDim::new(d).unwrap()
}

#[test]
fn small_x_gate_round_trip() {
    let d = dim(12);
    let truth = unitary_channel(&compose_unitary(&x_gate_sequence(), d).unwrap()).unwrap();
    let probes = ProbeGrid::square(3, 1.0).unwrap();
    let grid = WignerGrid::square(11, 2.2).unwrap();
    let ds = simulate_dataset(&truth, &probes, &grid, 0, 1).unwrap();
    let cfg = ReconstructionConfig {
        rank: 2,
        dim: d,
        max_iters: 2000,
        ..Default::default()
    };
    let (kraus, report) = reconstruct(&ds, &cfg).unwrap();
    assert!(kraus.cptp_defect() <= 1e-6);
    assert!(report.history.windows(2).all(|w| w[1] < w[0]));
    let f = process_fidelity_choi(&kraus, &truth, Some(3)).unwrap();
    assert!(f >= 0.99, "subspace fidelity {f}");

    let code = BinomialCode::new(d).unwrap();
    let rec = avg_gate_fidelity(&kraus, &ideal_logical_x(&code), &code).unwrap();
    let exact = avg_gate_fidelity(&truth, &ideal_logical_x(&code), &code).unwrap();
    assert!(
        (rec.f_avg - exact.f_avg).abs() < 0.02,
        "{} vs {}",
        rec.f_avg,
        exact.f_avg
    );
}

#[test]
fn artifacts_survive_disk_round_trips() {
    let tmp = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truth = random_channel(dim(6), 2, &mut rng).unwrap();
    let ds = simulate_dataset(
        &truth,
        &ProbeGrid::square(2, 0.8).unwrap(),
        &WignerGrid::square(5, 1.5).unwrap(),
        300,
        9,
    )
    .unwrap();
    let ds_path = tmp.path().join("ds.json");
    ds.save(&ds_path).unwrap();
    let back = TomographyDataset::load(&ds_path).unwrap();
    assert_eq!(back.values, ds.values);
    assert_eq!(back.to_json().unwrap(), ds.to_json().unwrap());

    let cfg = ReconstructionConfig {
        rank: 2,
        dim: dim(6),
        max_iters: 50,
        ..Default::default()
    };
    let (kraus, report) = reconstruct(&back, &cfg).unwrap();
    let res = ReconstructionResult {
        config: cfg,
        kraus,
        report,
    };
    let res_path = tmp.path().join("res.json");
    res.save(&res_path).unwrap();
    let loaded = ReconstructionResult::load(&res_path).unwrap();
    assert_eq!(loaded.kraus.stacked(), res.kraus.stacked());
    assert_eq!(loaded.report, res.report);

    let k_path = tmp.path().join("k.json");
    std::fs::write(&k_path, truth.to_json().unwrap()).unwrap();
    let k = KrausSet::from_json(&std::fs::read_to_string(&k_path).unwrap()).unwrap();
    assert_eq!(k.stacked(), truth.stacked());
}

#[test]
fn unnormalized_data_is_rescaled_before_fitting() {
    let truth = KrausSet::identity(dim(8));
    let mut ds = simulate_dataset(
        &truth,
        &ProbeGrid::square(2, 0.6).unwrap(),
        &WignerGrid::default(),
        0,
        0,
    )
    .unwrap();
    let exact = ds.values.clone();
    ds.values.mapv_inplace(|w| 0.7 * w);
    ds.normalized = false;
    let cfg = ReconstructionConfig {
        rank: 1,
        dim: dim(8),
        ..Default::default()
    };
    assert!(reconstruct(&ds, &cfg).is_err());
    let fixed = normalize_dataset(&ds).unwrap();
    let worst = (&fixed.values - &exact)
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(worst < 1e-3, "normalization error {worst}");
}
