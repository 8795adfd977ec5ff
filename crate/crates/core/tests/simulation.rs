use sdlab::sde::{make_increments, simulate, DriftSpec, InitialLaw, SimConfig, TrajectoryDataset};
use sdlab::stats::{mean, variance};

fn ou(paths: usize, seed: u64) -> TrajectoryDataset {
    simulate(
        &DriftSpec::ou(1, 1.0),
        &SimConfig {
            paths,
            steps: 256,
            delta: 1.0 / 256.0,
            sigma: 1.0,
            initial: InitialLaw::Point { value: vec![0.0] },
            seed,
        },
    )
    .unwrap()
}

#[test]
fn ou_terminal_moments() {
    let ds = ou(5000, 11);
    let y: Vec<f64> = (0..ds.paths).map(|i| ds.state(i, ds.steps)[0]).collect();
    let (m, v) = (mean(&y), variance(&y));
    let se = (v / y.len() as f64).sqrt();
    let target = (1.0 - (-2.0f64).exp()) / 2.0;
    assert!((target - 0.43233).abs() < 1e-5);
    assert!(m.abs() < 3.0 * se, "mean {m}, se {se}");
    assert!((v - target).abs() < 0.05 * target, "variance {v}");
}

#[test]
fn increments_match_the_euler_law_on_average() {
    // E[Z | Y] = −YΔ under the OU drift: regress Z on Y.
    let ds = ou(2000, 12);
    let p = make_increments(&ds);
    let (sy, sz): (f64, f64) = p.y.iter().zip(&p.z).fold((0.0, 0.0), |(a, b), (y, z)| (a + y * y, b + y * z));
    let slope = sz / sy / ds.delta;
    assert!((slope + 1.0).abs() < 0.2, "slope {slope}");
    let zv = variance(&p.z) / ds.delta;
    assert!((zv - 1.0).abs() < 0.02, "increment variance / Δ = {zv}");
}

#[test]
fn datasets_survive_a_file_roundtrip() {
    let ds = ou(7, 13);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ou.sdds");
    ds.save(&path).unwrap();
    let back = TrajectoryDataset::load(&path).unwrap();
    assert_eq!(back, ds);
}
