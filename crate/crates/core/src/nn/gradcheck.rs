//! Central finite-difference checks of every layer's backward pass.

use ndarray::{Array4, ArrayD};
use rand::Rng as _;

use super::*;

fn random4(rng: &mut Rng, dim: (usize, usize, usize, usize)) -> Array4<f64> {
    Array4::from_shape_simple_fn(dim, || rng.random_range(-1.0..1.0))
}

/// Loss = <net(x), probe>; returns (analytic dx, analytic param grads).
fn analytic(net: &Sequential<f64>, x: &Array4<f64>, probe: &Array4<f64>) -> (Array4<f64>, Vec<ArrayD<f64>>) {
    let (y, tape) = net.forward_tape(x).unwrap();
    assert_eq!(y.dim(), probe.dim());
    net.backward(&tape, probe).unwrap()
}

fn loss(net: &Sequential<f64>, x: &Array4<f64>, probe: &Array4<f64>) -> f64 {
    (net.forward(x).unwrap() * probe).sum()
}

fn check(specs: &[LayerSpec], in_dim: (usize, usize, usize, usize), seed: u64) {
    let mut rng = seeded(seed);
    let (net, _) = Sequential::<f64>::build(specs, in_dim.1, &mut rng).unwrap();
    // keep inputs away from ReLU / max-pool kinks
    let x = random4(&mut rng, in_dim).mapv(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
    let y = net.forward(&x).unwrap();
    let probe = random4(&mut rng, y.dim());
    let (dx, grads) = analytic(&net, &x, &probe);
    let h = 1e-6;
    for idx in [0, x.len() / 3, x.len() - 1] {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.as_slice_mut().unwrap()[idx] += h;
        xm.as_slice_mut().unwrap()[idx] -= h;
        let fd = (loss(&net, &xp, &probe) - loss(&net, &xm, &probe)) / (2.0 * h);
        let an = dx.as_slice().unwrap()[idx];
        assert!((fd - an).abs() <= 1e-5 * (1.0 + fd.abs()), "dx[{idx}]: fd {fd} vs {an} for {specs:?}");
    }
    let n_params = net.params("").len();
    assert_eq!(grads.len(), n_params);
    for p in 0..n_params {
        let len = grads[p].len();
        for idx in [0, len / 2, len - 1] {
            let mut plus = net.clone();
            let mut minus = net.clone();
            plus.params_mut()[p].as_slice_mut().unwrap()[idx] += h;
            minus.params_mut()[p].as_slice_mut().unwrap()[idx] -= h;
            let fd = (loss(&plus, &x, &probe) - loss(&minus, &x, &probe)) / (2.0 * h);
            let an = grads[p].as_slice().unwrap()[idx];
            assert!((fd - an).abs() <= 1e-5 * (1.0 + fd.abs()), "param {p}[{idx}]: fd {fd} vs {an} for {specs:?}");
        }
    }
}

#[test]
fn conv_gradients() {
    check(&[LayerSpec::Conv { filters: 3, kernel: 3, stride: 1, padding: 1 }], (2, 2, 6, 5), 1);
    check(&[LayerSpec::Conv { filters: 4, kernel: 4, stride: 2, padding: 1 }], (1, 3, 8, 8), 2);
}

#[test]
fn dilated_conv_gradients() {
    check(&[LayerSpec::DilatedConv { filters: 2, kernel: 3, dilation: 2, stride: 1, padding: 2 }], (2, 2, 7, 7), 3);
}

#[test]
fn transposed_conv_gradients() {
    check(&[LayerSpec::TransposedConv { filters: 3, kernel: 4, stride: 2, padding: 1, output_padding: 0 }], (2, 2, 4, 5), 4);
    check(&[LayerSpec::TransposedConv { filters: 2, kernel: 3, stride: 2, padding: 1, output_padding: 1 }], (1, 3, 3, 3), 5);
}

#[test]
fn pool_upsample_relu_residual_gradients() {
    check(
        &[
            LayerSpec::Conv { filters: 3, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::Relu,
            LayerSpec::Maxpool { size: 2 },
            LayerSpec::Residual { hidden: 2, kernel: 3 },
            LayerSpec::Upsample { scale: 2 },
            LayerSpec::Conv { filters: 2, kernel: 1, stride: 1, padding: 0 },
        ],
        (2, 2, 8, 6),
        6,
    );
}

#[test]
fn transposed_conv_is_adjoint_of_conv() {
    // with shared weights and no bias, <conv(x), y> = <x, convT(y)>
    let mut rng = seeded(9);
    let conv = Conv2d::<f64>::init(3, 4, 4, 2, 1, 1, &mut rng);
    let convt = ConvTranspose2d { weight: conv.weight.clone(), bias: ndarray::Array1::zeros(3), stride: 2, pad: 1, output_pad: 0 };
    let x = random4(&mut rng, (1, 3, 8, 8));
    let cx = conv.forward(&x).unwrap() - conv.bias.view().into_shape_with_order((1, 4, 1, 1)).unwrap();
    let y = random4(&mut rng, cx.dim());
    let ty = convt.forward(&y).unwrap();
    let lhs = (&cx * &y).sum();
    let rhs = (&x * &ty).sum();
    assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
}

#[test]
fn upsample_keeps_corners_and_constants() {
    let x = Array4::from_shape_fn((1, 1, 3, 4), |(_, _, i, j)| (i * 4 + j) as f64);
    let y = upsample_forward(&x, 2);
    assert_eq!(y.dim(), (1, 1, 6, 8));
    assert_eq!(y[[0, 0, 0, 0]], 0.0);
    assert_eq!(y[[0, 0, 5, 7]], 11.0);
    let c = upsample_forward(&Array4::from_elem((1, 2, 4, 4), 0.7_f64), 2);
    assert!(c.iter().all(|v| (v - 0.7).abs() < 1e-12));
}

#[test]
fn shape_trace_reports_failure() {
    let mut rng = seeded(0);
    let (net, _) = Sequential::<f32>::build(&[LayerSpec::Conv { filters: 2, kernel: 5, stride: 1, padding: 0 }], 1, &mut rng).unwrap();
    assert!(net.shape_trace((1, 3, 3)).is_err());
    assert_eq!(net.shape_trace((1, 9, 9)).unwrap()[0].1, (2, 5, 5));
}

#[test]
fn single_1x1_conv_has_16_params() {
    let mut rng = seeded(0);
    let (net, _) = Sequential::<f32>::build(&[LayerSpec::Conv { filters: 4, kernel: 1, stride: 1, padding: 0 }], 3, &mut rng).unwrap();
    assert_eq!(net.param_count(), 16);
    assert_eq!(Sequential::<f32>::default().param_count(), 0);
}
