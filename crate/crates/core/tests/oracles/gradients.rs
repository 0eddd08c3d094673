//! Backward passes against central finite differences in double precision.
//!
//! Every check projects the layer output onto a fixed random direction `r`,
//! so the scalar `L = Σ r·y` has gradient `backward(dout = r)`. A coordinate
//! passes when `|a - n| / max(|a|, |n|) < 1e-4` or both are below 1e-9.
//! For piecewise-linear maps (every layer, the whole network) coordinates
//! whose forward and backward one-sided differences disagree sit on a kink
//! (ReLU at 0, a pooling tie) and are skipped; the losses use explicit bands
//! around their kinks instead. The number skipped is bounded per check.

use deskew::nn::network::InputShape;
use deskew::nn::ops;
use deskew::nn::{loss, LayerSpec, LossKind, Network, NetworkConfig, Tensor};
use deskew::seeded_rng;
use rand::Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;
const TRIALS: u64 = 20;

fn randn(rng: &mut impl Rng, shape: Vec<usize>, scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| scale * (rng.random::<f64>() * 2.0 - 1.0))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

#[derive(Default, Debug)]
struct Stats {
    checked: usize,
    skipped: usize,
    worst: f64,
}

/// Compares `analytic` with central differences of `f` around `x`.
/// `exclude(i)` marks coordinates inside a known nondifferentiable band.
fn check(
    what: &str,
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
    exclude: impl Fn(usize) -> bool,
    kink_guard: bool,
    stats: &mut Stats,
) {
    assert_eq!(x.shape(), analytic.shape(), "{what}: gradient shape");
    let f0 = f(x);
    let mut xp = x.clone();
    for i in 0..x.len() {
        if exclude(i) {
            stats.skipped += 1;
            continue;
        }
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + H;
        let fp = f(&xp);
        xp.data_mut()[i] = orig - H;
        let fm = f(&xp);
        xp.data_mut()[i] = orig;
        let (fwd, bwd) = ((fp - f0) / H, (f0 - fm) / H);
        if kink_guard && (fwd - bwd).abs() > 1e-3 * (fwd.abs() + bwd.abs()).max(1e-6) {
            stats.skipped += 1;
            continue;
        }
        let n = (fp - fm) / (2.0 * H);
        let a = analytic.data()[i];
        let diff = (a - n).abs();
        let rel = if a.abs().max(n.abs()) < 1e-9 {
            0.0
        } else {
            diff / a.abs().max(n.abs())
        };
        assert!(
            rel < TOL || diff < 1e-9,
            "{what}: coordinate {i}: analytic {a} vs numeric {n} (rel {rel:e})"
        );
        stats.checked += 1;
        stats.worst = stats.worst.max(rel);
    }
}

fn assert_coverage(what: &str, s: &Stats) {
    assert!(s.checked > 0, "{what}: nothing checked");
    let total = s.checked + s.skipped;
    assert!(
        s.skipped * 10 <= total,
        "{what}: skipped {} of {total} coordinates",
        s.skipped
    );
}

pub fn conv2d() {
    let mut s = Stats::default();
    for t in 0..TRIALS {
        let mut rng = seeded_rng(100 + t);
        let n = rng.random_range(1..=2);
        let c = rng.random_range(1..=3);
        let o = rng.random_range(1..=3);
        let k = [1, 3, 5][rng.random_range(0..3)];
        let (h, w) = (rng.random_range(3..=6), rng.random_range(3..=6));
        let x = randn(&mut rng, vec![n, c, h, w], 1.0);
        let wt = randn(&mut rng, vec![o, c, k, k], 0.5);
        let b = randn(&mut rng, vec![o], 0.5);
        let r = randn(&mut rng, vec![n, o, h, w], 1.0);
        let (dx, dw, db) = ops::conv2d_backward(&x, &wt, &b, &r).unwrap();
        let none = |_| false;
        check(
            "conv dx",
            &x,
            &dx,
            |x| dot(&ops::conv2d_forward(x, &wt, &b).unwrap(), &r),
            none,
            true,
            &mut s,
        );
        check(
            "conv dw",
            &wt,
            &dw,
            |w| dot(&ops::conv2d_forward(&x, w, &b).unwrap(), &r),
            none,
            true,
            &mut s,
        );
        check(
            "conv db",
            &b,
            &db,
            |b| dot(&ops::conv2d_forward(&x, &wt, b).unwrap(), &r),
            none,
            true,
            &mut s,
        );
    }
    assert_eq!(s.skipped, 0);
    assert_coverage("conv", &s);
}

pub fn fully_connected() {
    let mut s = Stats::default();
    for t in 0..TRIALS {
        let mut rng = seeded_rng(200 + t);
        let (n, f, o) = (
            rng.random_range(1..=3),
            rng.random_range(1..=12),
            rng.random_range(1..=8),
        );
        let x = randn(&mut rng, vec![n, f], 1.0);
        let w = randn(&mut rng, vec![o, f], 0.5);
        let b = randn(&mut rng, vec![o], 0.5);
        let r = randn(&mut rng, vec![n, o], 1.0);
        let (dx, dw, db) = ops::fc_backward(&x, &w, &b, &r).unwrap();
        let none = |_| false;
        check(
            "fc dx",
            &x,
            &dx,
            |x| dot(&ops::fc_forward(x, &w, &b).unwrap(), &r),
            none,
            true,
            &mut s,
        );
        check(
            "fc dw",
            &w,
            &dw,
            |w| dot(&ops::fc_forward(&x, w, &b).unwrap(), &r),
            none,
            true,
            &mut s,
        );
        check(
            "fc db",
            &b,
            &db,
            |b| dot(&ops::fc_forward(&x, &w, b).unwrap(), &r),
            none,
            true,
            &mut s,
        );
    }
    assert_eq!(s.skipped, 0);
    assert_coverage("fc", &s);
}

pub fn relu() {
    let mut s = Stats::default();
    for t in 0..TRIALS {
        let mut rng = seeded_rng(300 + t);
        let x = randn(&mut rng, vec![2, 3, 4, 4], 1.0);
        let r = randn(&mut rng, vec![2, 3, 4, 4], 1.0);
        let dx = ops::relu_backward(&x, &r).unwrap();
        let near_zero = |i: usize| x.data()[i].abs() < 1e-3;
        check(
            "relu",
            &x,
            &dx,
            |x| dot(&ops::relu_forward(x), &r),
            near_zero,
            true,
            &mut s,
        );
    }
    assert_coverage("relu", &s);
}

pub fn maxpool() {
    let mut s = Stats::default();
    for t in 0..TRIALS {
        let mut rng = seeded_rng(400 + t);
        let (h, w) = (2 * rng.random_range(1..=3), 2 * rng.random_range(1..=3));
        let x = randn(&mut rng, vec![2, 2, h, w], 1.0);
        let (y, arg) = ops::maxpool2_forward(&x).unwrap();
        let r = randn(&mut rng, y.shape().to_vec(), 1.0);
        let dx = ops::maxpool2_backward(&r, &arg, x.shape()).unwrap();
        check(
            "maxpool",
            &x,
            &dx,
            |x| dot(&ops::maxpool2_forward(x).unwrap().0, &r),
            |_| false,
            true,
            &mut s,
        );
    }
    assert_coverage("maxpool", &s);
}

pub fn dropout_with_fixed_mask() {
    let mut s = Stats::default();
    for t in 0..TRIALS {
        let mut rng = seeded_rng(500 + t);
        let x = randn(&mut rng, vec![3, 10], 1.0);
        let r = randn(&mut rng, vec![3, 10], 1.0);
        let seed = 9000 + t;
        let fwd =
            |x: &Tensor<f64>| ops::dropout_forward(x, 0.5, &mut seeded_rng(seed), true).unwrap();
        let (_, mask) = fwd(&x);
        let dx = ops::dropout_backward(&r, mask.as_deref()).unwrap();
        check(
            "dropout",
            &x,
            &dx,
            |x| dot(&fwd(x).0, &r),
            |_| false,
            true,
            &mut s,
        );
    }
    assert_eq!(s.skipped, 0);
    assert_coverage("dropout", &s);
}

fn loss_check(kind: LossKind, seed0: u64, exclude: impl Fn(f64) -> bool) -> Stats {
    let mut s = Stats::default();
    for t in 0..TRIALS {
        let mut rng = seeded_rng(seed0 + t);
        let n = rng.random_range(1..=4);
        let pred = randn(&mut rng, vec![n, 8], 3.0);
        let target = randn(&mut rng, vec![n, 8], 3.0);
        let (_, g) = loss(&pred, &target, kind).unwrap();
        let residual = |i: usize| pred.data()[i] - target.data()[i];
        check(
            &kind.name(),
            &pred,
            &g,
            |p| loss(p, &target, kind).unwrap().0,
            |i| exclude(residual(i)),
            false,
            &mut s,
        );
    }
    assert_coverage(&kind.name(), &s);
    s
}

pub fn l1_loss() {
    loss_check(LossKind::L1, 600, |r| r.abs() < 1e-3);
}

pub fn l2_loss() {
    let s = loss_check(LossKind::L2, 700, |_| false);
    assert_eq!(s.skipped, 0);
}

pub fn berhu_loss() {
    for continuous in [false, true] {
        let c = 2.0;
        loss_check(LossKind::BerHu { c, continuous }, 800, |r| {
            r.abs() < 1e-3 || (r.abs() - c).abs() < 1e-3
        });
    }
}

fn tiny_net_config(with_dropout: bool) -> NetworkConfig {
    let mut layers = vec![
        LayerSpec::Conv {
            in_channels: 1,
            out_channels: 3,
            kernel: 3,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool,
        LayerSpec::Conv {
            in_channels: 3,
            out_channels: 2,
            kernel: 1,
        },
        LayerSpec::Relu,
    ];
    if with_dropout {
        layers.push(LayerSpec::Dropout { p: 0.5 });
    }
    layers.extend([
        LayerSpec::Flatten,
        LayerSpec::FullyConnected {
            in_features: 2 * 2 * 3,
            out_features: 8,
        },
        LayerSpec::CornerScale {
            width: 6,
            height: 4,
        },
    ]);
    NetworkConfig {
        layers,
        width_multiplier: 1.0,
        input: InputShape {
            channels: 1,
            height: 4,
            width: 6,
        },
    }
}

pub fn whole_network() {
    let mut s = Stats::default();
    for t in 0..TRIALS {
        let cfg = tiny_net_config(t % 2 == 0);
        let mut rng = seeded_rng(1000 + t);
        let net: Network<f64> = Network::new(cfg, &mut rng).unwrap();
        let x = randn(&mut rng, vec![2, 1, 4, 6], 1.0);
        let r = randn(&mut rng, vec![2, 8], 1.0);
        let dseed = 77 + t;
        let trace = net.forward_train(&x, &mut seeded_rng(dseed)).unwrap();
        let (grads, dx) = net.backward(&trace, &r).unwrap();

        let out = |net: &Network<f64>, x: &Tensor<f64>| {
            dot(
                net.forward_train(x, &mut seeded_rng(dseed))
                    .unwrap()
                    .output(),
                &r,
            )
        };
        check("net dx", &x, &dx, |x| out(&net, x), |_| false, true, &mut s);
        for (k, g) in grads.iter().enumerate() {
            let p0 = net.tensors()[k].clone();
            let mut probe = net.clone();
            check(
                &format!("net param {k}"),
                &p0,
                g,
                |p| {
                    *probe.tensors_mut()[k] = p.clone();
                    out(&probe, &x)
                },
                |_| false,
                true,
                &mut s,
            );
        }
    }
    assert_coverage("network", &s);
}

pub fn network_loss_end_to_end() {
    // chain rule through the L2 loss into every parameter
    let mut s = Stats::default();
    for t in 0..TRIALS {
        let cfg = tiny_net_config(false);
        let mut rng = seeded_rng(2000 + t);
        let net: Network<f64> = Network::new(cfg, &mut rng).unwrap();
        let x = randn(&mut rng, vec![1, 1, 4, 6], 1.0);
        let y = randn(&mut rng, vec![1, 8], 3.0);
        let trace = net.forward_train(&x, &mut seeded_rng(0)).unwrap();
        let (_, dl) = loss(trace.output(), &y, LossKind::L2).unwrap();
        let (grads, _) = net.backward(&trace, &dl).unwrap();
        let k = grads.len() - 2; // fully connected weight
        let mut probe = net.clone();
        check(
            "loss through network",
            &net.tensors()[k].clone(),
            &grads[k],
            |p| {
                *probe.tensors_mut()[k] = p.clone();
                loss(&probe.forward(&x).unwrap(), &y, LossKind::L2)
                    .unwrap()
                    .0
            },
            |_| false,
            true,
            &mut s,
        );
    }
    assert_coverage("loss through network", &s);
}

/// Every suite by name, for reporting.
pub const SUITES: &[(&str, fn())] = &[
    ("conv2d", conv2d),
    ("fully_connected", fully_connected),
    ("relu", relu),
    ("maxpool", maxpool),
    ("dropout_with_fixed_mask", dropout_with_fixed_mask),
    ("l1_loss", l1_loss),
    ("l2_loss", l2_loss),
    ("berhu_loss", berhu_loss),
    ("whole_network", whole_network),
    ("network_loss_end_to_end", network_loss_end_to_end),
];
