use proptest::prelude::*;

use super::*;

/// Central-difference check of every parameter and input gradient of `loss`.
fn check_gradients(g: &Graph, inputs: &[(&str, Tensor)], loss: NodeId, tol: f64) {
    let bind: Vec<(&str, &Tensor)> = inputs.iter().map(|(n, t)| (*n, t)).collect();
    let eval = g.forward(&bind, loss).unwrap();
    let grads = g.backward(&eval, loss).unwrap();
    let h = 1e-6;
    let f = |g: &Graph, inputs: &[(&str, Tensor)]| {
        let bind: Vec<(&str, &Tensor)> = inputs.iter().map(|(n, t)| (*n, t)).collect();
        g.forward(&bind, loss).unwrap().output().item().unwrap()
    };
    for p in 0..g.params().len() {
        for k in 0..g.params().tensor(p).numel() {
            let mut gp = g.clone();
            gp.params_mut().tensors_mut()[p].data_mut()[k] += h;
            let up = f(&gp, inputs);
            gp.params_mut().tensors_mut()[p].data_mut()[k] -= 2.0 * h;
            let down = f(&gp, inputs);
            let fd = (up - down) / (2.0 * h);
            let an = grads.params[p].data()[k];
            assert!(
                (fd - an).abs() <= tol * (1.0 + fd.abs()),
                "param {} [{k}]: fd {fd} vs analytic {an}",
                g.params().name(p)
            );
        }
    }
    for (idx, (name, t)) in inputs.iter().enumerate() {
        let Some(gi) = grads.input(name) else { continue };
        for k in 0..t.numel() {
            let mut ins = inputs.to_vec();
            ins[idx].1.data_mut()[k] += h;
            let up = f(g, &ins);
            ins[idx].1.data_mut()[k] -= 2.0 * h;
            let down = f(g, &ins);
            let fd = (up - down) / (2.0 * h);
            let an = gi.data()[k];
            assert!(
                (fd - an).abs() <= tol * (1.0 + fd.abs()),
                "input {name} [{k}]: fd {fd} vs analytic {an}"
            );
        }
    }
}

fn tensor(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn elu_at_minus_one() {
    let mut g = Graph::new();
    let x = g.input("x");
    let y = g.elu(x);
    let xv = Tensor::scalar(-1.0);
    let out = g.forward(&[("x", &xv)], y).unwrap();
    assert!((out.output().item().unwrap() - (-0.632_120_558_828_557_7)).abs() < 1e-12);
}

#[test]
fn sin_gradient_is_cos() {
    let mut g = Graph::new();
    let x = g.input("x");
    let s = g.sin(x);
    let l = g.sum(s);
    let xv = Tensor::vector(vec![0.0, 1.0]);
    let e = g.forward(&[("x", &xv)], l).unwrap();
    let gr = g.backward(&e, l).unwrap();
    let d = gr.input("x").unwrap().data();
    assert!((d[0] - 1.0).abs() < 1e-15);
    assert!((d[1] - 1f64.cos()).abs() < 1e-15);
}

#[test]
fn half_squared_norm_gradient() {
    let mut g = Graph::new();
    let x = g.param("x", Tensor::vector(vec![2.0, -3.0])).unwrap();
    let sq = g.powi(x, 2);
    let s = g.sum(sq);
    let l = g.scale(s, 0.5);
    let e = g.forward(&[], l).unwrap();
    assert_eq!(g.backward(&e, l).unwrap().params[0].data(), &[2.0, -3.0]);
}

#[test]
fn sin_of_product_gradient_wrt_weight() {
    let mut g = Graph::new();
    let w = g.param("w", Tensor::scalar(0.0)).unwrap();
    let x = g.input("x");
    let p = g.mul(w, x);
    let l = g.sin(p);
    let xv = Tensor::scalar(1.0);
    let e = g.forward(&[("x", &xv)], l).unwrap();
    assert_eq!(g.backward(&e, l).unwrap().params[0].data(), &[1.0]);
}

#[test]
fn unreached_params_get_zero_gradient() {
    let mut g = Graph::new();
    let x = g.input("x");
    let _w = g.param("w", Tensor::vector(vec![1.0, 2.0])).unwrap();
    let l = g.sum(x);
    let xv = Tensor::vector(vec![1.0]);
    let e = g.forward(&[("x", &xv)], l).unwrap();
    assert_eq!(g.backward(&e, l).unwrap().params[0].data(), &[0.0, 0.0]);
}

#[test]
fn adam_zero_gradient_is_fixed_point() {
    let mut ps = ParamStore::new();
    ps.insert("w", Tensor::vector(vec![0.3, -1.2])).unwrap();
    let before = ps.get("w").unwrap().clone();
    let mut opt = Adam::new(&ps, AdamConfig::default());
    opt.step(&mut ps, &[Tensor::zeros(&[2])], None).unwrap();
    assert_eq!(ps.get("w").unwrap(), &before);
    assert_eq!(opt.steps(), 1);
}

#[test]
fn forward_is_bit_identical() {
    let mut g = Graph::new();
    let x = g.input("x");
    let h = g.linear(x, "l", tensor(&[2, 3], &[0.1, -0.7, 0.3, 1.1, 0.2, -0.4]), Tensor::vector(vec![0.01, 0.0, -0.3])).unwrap();
    let y = g.elu(h);
    let xv = tensor(&[2, 2], &[0.5, -1.0, 2.0, 0.25]);
    let a = g.forward(&[("x", &xv)], y).unwrap().into_output();
    let b = g.forward(&[("x", &xv)], y).unwrap().into_output();
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn identity_kernel_conv() {
    let x = tensor(&[1, 1, 4], &[1.0, -2.0, 3.5, 0.0]);
    let w = tensor(&[1, 1, 1], &[1.0]);
    let y = conv1d_forward(&x, &w, None, &Conv1dSpec::same(1, PadMode::Zeros)).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn conv_rejects_bad_geometry() {
    let x = tensor(&[1, 1, 2], &[1.0, 2.0]);
    let w = tensor(&[1, 1, 5], &[1.0; 5]);
    let valid = Conv1dSpec { stride: 1, pad_left: 0, pad_right: 0, mode: PadMode::Zeros };
    assert!(conv1d_forward(&x, &w, None, &valid).is_err());
    let zero_stride = Conv1dSpec { stride: 0, ..Conv1dSpec::same(5, PadMode::Zeros) };
    assert!(conv1d_forward(&x, &w, None, &zero_stride).is_err());
}

#[test]
fn conv_is_cross_correlation() {
    let x = tensor(&[1, 1, 3], &[1.0, 2.0, 3.0]);
    let w = tensor(&[1, 1, 3], &[1.0, 0.0, -1.0]);
    let spec = Conv1dSpec {
        stride: 1,
        pad_left: 1,
        pad_right: 1,
        mode: PadMode::Zeros,
    };
    let y = conv1d_forward(&x, &w, None, &spec).unwrap();
    assert_eq!(y.data(), &[-2.0, -2.0, 2.0]);
}

#[test]
fn circular_conv_wraps() {
    let x = tensor(&[1, 1, 3], &[1.0, 2.0, 3.0]);
    let w = tensor(&[1, 1, 3], &[1.0, 0.0, -1.0]);
    let y = conv1d_forward(&x, &w, None, &Conv1dSpec::same(3, PadMode::Circular)).unwrap();
    assert_eq!(y.data(), &[1.0, -2.0, 1.0]);
}

#[test]
fn unbound_input_is_reported() {
    let mut g = Graph::new();
    let x = g.input("x");
    let y = g.input("y");
    let s = g.add(x, y);
    let xv = Tensor::scalar(1.0);
    match g.forward(&[("x", &xv)], s) {
        Err(crate::Error::UnboundInput(n)) => assert_eq!(n, "y"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unused_inputs_need_no_binding() {
    let mut g = Graph::new();
    let x = g.input("x");
    let _unused = g.input("t");
    let y = g.scale(x, 2.0);
    let xv = Tensor::scalar(1.5);
    assert_eq!(g.forward(&[("x", &xv)], y).unwrap().output().item().unwrap(), 3.0);
}

#[test]
fn backward_needs_scalar() {
    let mut g = Graph::new();
    let x = g.input("x");
    let y = g.scale(x, 2.0);
    let xv = Tensor::vector(vec![1.0, 2.0]);
    let e = g.forward(&[("x", &xv)], y).unwrap();
    assert!(matches!(g.backward(&e, y), Err(crate::Error::Shape(_))));
}

#[test]
fn matmul_shape_mismatch() {
    let mut g = Graph::new();
    let x = g.input("x");
    let w = g.param("w", Tensor::zeros(&[3, 2])).unwrap();
    let y = g.matmul(x, w);
    let xv = Tensor::zeros(&[4, 2]);
    assert!(matches!(g.forward(&[("x", &xv)], y), Err(crate::Error::Shape(_))));
}

#[test]
fn duplicate_param_names_rejected() {
    let mut g = Graph::new();
    g.param("w", Tensor::scalar(1.0)).unwrap();
    assert!(g.param("w", Tensor::scalar(2.0)).is_err());
}

#[test]
fn mse_divides_by_batch() {
    let mut g = Graph::new();
    let p = g.input("p");
    let t = g.input("t");
    let l = g.mse(p, t);
    let pv = tensor(&[2, 2], &[1.0, 1.0, 0.0, 0.0]);
    let tv = Tensor::zeros(&[2, 2]);
    let v = g.forward(&[("p", &pv), ("t", &tv)], l).unwrap().output().item().unwrap();
    assert_eq!(v, 1.0);
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mlp_gradients_match_finite_differences(
        x in values(6), w1 in values(12), b1 in values(4), w2 in values(8), t in values(4),
    ) {
        let mut g = Graph::new();
        let xi = g.input("x");
        let ti = g.input("t");
        let h = g.linear(xi, "l1", tensor(&[3, 4], &w1), Tensor::vector(b1.clone())).unwrap();
        let a = g.elu(h);
        let th = g.tanh(a);
        let o = g.linear(th, "l2", tensor(&[4, 2], &w2), Tensor::zeros(&[2])).unwrap();
        let loss = g.mse(o, ti);
        check_gradients(&g, &[("x", tensor(&[2, 3], &x)), ("t", tensor(&[2, 2], &t))], loss, 1e-5);
    }

    #[test]
    fn elementwise_gradients_match(x in values(4), y in values(4), c in -2.0f64..2.0) {
        let mut g = Graph::new();
        let xi = g.input("x");
        let yi = g.input("y");
        let s = g.param("s", Tensor::scalar(c)).unwrap();
        let a = g.mul(xi, yi);
        let b = g.sin(a);
        let cc = g.cos(xi);
        let d = g.sub(b, cc);
        let e = g.powi(d, 3);
        let f = g.scale_by(e, s);
        let r = g.relu(yi);
        let sum = g.add(f, r);
        let l = g.mean(sum);
        check_gradients(&g, &[("x", tensor(&[2, 2], &x)), ("y", tensor(&[2, 2], &y))], l, 1e-5);
    }

    #[test]
    fn conv_gradients_match(
        x in values(2 * 2 * 5), w in values(3 * 2 * 3), b in values(3), circular in any::<bool>(),
    ) {
        let mode = if circular { PadMode::Circular } else { PadMode::Zeros };
        let mut g = Graph::new();
        let xi = g.input("x");
        let wi = g.param("w", tensor(&[3, 2, 3], &w)).unwrap();
        let bi = g.param("b", Tensor::vector(b.clone())).unwrap();
        let y = g.conv1d(xi, wi, Some(bi), Conv1dSpec { stride: 1, pad_left: 2, pad_right: 0, mode });
        let z = g.elu(y);
        let sq = g.powi(z, 2);
        let l = g.batch_mean(sq);
        check_gradients(&g, &[("x", tensor(&[2, 2, 5], &x))], l, 1e-5);
    }

    #[test]
    fn concat_reshape_outer_gradients_match(x in values(4), y in values(2), k in values(3)) {
        let mut g = Graph::new();
        let xi = g.input("x");
        let yi = g.input("y");
        let kv = g.param("k", Tensor::vector(k.clone())).unwrap();
        let c = g.concat(&[xi, yi]);
        let r = g.reshape(c, &[3, 1]);
        let back = g.reshape(r, &[3]);
        let o = g.outer(back, kv);
        let s = g.sin(o);
        let l = g.sum(s);
        check_gradients(&g, &[("x", tensor(&[2, 2], &x)), ("y", tensor(&[2, 1], &y))], l, 1e-5);
    }
}
