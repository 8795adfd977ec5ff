use sdlab::autodiff::Tensor;
use sdlab::nets::{gradient_check, randomize_params, ArchKind, ArchSpec, NetInput, Network};
use sdlab::rng;

fn random(rows: usize, cols: usize, seed: u64, scale: f64) -> Tensor {
    let mut v = vec![0.0; rows * cols];
    rng::fill_normal(&mut rng::stream(seed, 0), &mut v);
    Tensor::new(vec![rows, cols], v.into_iter().map(|x| scale * x).collect()).unwrap()
}

#[test]
fn every_architecture_matches_finite_differences() {
    for kind in ArchKind::ALL {
        for d in [1, 4, 8] {
            let mut net = Network::build(&ArchSpec::desk(kind, d)).unwrap();
            randomize_params(&mut net, 0.3, d as u64);
            let b = 3;
            let (y, x, t) = (random(b, d, 1, 1.0), random(b, d, 2, 1.0), random(b, d, 3, 1.0));
            let tau = Tensor::new(vec![b, 1], vec![0.1, 0.5, 1.0]).unwrap();
            let inp = if kind.is_denoiser() {
                NetInput::denoising(&tau, &x, &y)
            } else {
                NetInput::regression(&y)
            };
            let err = gradient_check(&net, &inp, &t, 6, 9).unwrap();
            assert!(err < 1e-4, "{kind:?} D={d}: relative error {err:.2e}");
        }
    }
}

#[test]
fn fourier_features_are_differentiated() {
    for kind in [ArchKind::Dn, ArchKind::FcPlusConvMlpsm] {
        let spec = ArchSpec {
            fourier_features: 4,
            gate_init: 0.7,
            ..ArchSpec::desk(kind, 4)
        };
        let mut net = Network::build(&spec).unwrap();
        randomize_params(&mut net, 0.3, 4);
        let (y, x, t) = (random(2, 4, 4, 1.0), random(2, 4, 5, 1.0), random(2, 4, 6, 1.0));
        let tau = Tensor::new(vec![2, 1], vec![0.2, 0.8]).unwrap();
        let err = gradient_check(&net, &NetInput::denoising(&tau, &x, &y), &t, 6, 10).unwrap();
        assert!(err < 1e-4, "{kind:?}: {err:.2e}");
    }
}
