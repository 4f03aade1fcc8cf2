//! Analytic gradients vs. central finite differences, all in `f64`.
//! Each check returns the worst relative error per parameter tensor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use urban_acoustics::nn::{
    adaptive_avg_pool2d, adaptive_avg_pool2d_backward, batchnorm2d_backward, batchnorm2d_train, conv2d_backward,
    conv2d_forward, linear_backward, linear_forward, softmax_cross_entropy, Conv2dGeom, ConvBlockConfig, Model,
    ModelConfig, Tensor,
};

use super::{finite_diff, max_rel_err, project, random_tensor};

pub const H: f64 = 1e-5;

pub type Report = Vec<(&'static str, f64)>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn with(t: &Tensor<f64>, v: &[f64]) -> Tensor<f64> {
    Tensor::new(t.shape(), v.to_vec()).unwrap()
}

pub fn conv(seed: u64) -> Report {
    let mut r = rng(seed);
    let g = Conv2dGeom { kernel: (3, 2), padding: (1, 1), stride: (2, 1) };
    let x = random_tensor(&[2, 3, 6, 7], &mut r);
    let w = random_tensor(&[4, 3, 3, 2], &mut r);
    let b = random_tensor(&[4], &mut r);
    let y = conv2d_forward(&x, &w, &b, g).unwrap();
    let probe = random_tensor(y.shape(), &mut r);
    let (gx, gw, gb) = conv2d_backward(&probe, &x, &w, g).unwrap();
    let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| project(conv2d_forward(x, w, b, g).unwrap().data(), probe.data());
    vec![
        ("conv input", max_rel_err(gx.data(), &finite_diff(x.data(), H, |v| loss(&with(&x, v), &w, &b)))),
        ("conv weight", max_rel_err(gw.data(), &finite_diff(w.data(), H, |v| loss(&x, &with(&w, v), &b)))),
        ("conv bias", max_rel_err(gb.data(), &finite_diff(b.data(), H, |v| loss(&x, &w, &with(&b, v))))),
    ]
}

pub fn batchnorm(seed: u64) -> Report {
    let mut r = rng(seed);
    let x = random_tensor(&[3, 2, 3, 4], &mut r);
    let gamma = random_tensor(&[2], &mut r).into_data();
    let beta = random_tensor(&[2], &mut r).into_data();
    let eps = 1e-5;
    let (y, cache, _) = batchnorm2d_train(&x, &gamma, &beta, eps).unwrap();
    let probe = random_tensor(y.shape(), &mut r);
    let (gx, gg, gb) = batchnorm2d_backward(&probe, &cache, &gamma).unwrap();
    let loss = |x: &Tensor<f64>, g: &[f64], b: &[f64]| project(batchnorm2d_train(x, g, b, eps).unwrap().0.data(), probe.data());
    vec![
        ("bn input", max_rel_err(gx.data(), &finite_diff(x.data(), H, |v| loss(&with(&x, v), &gamma, &beta)))),
        ("bn gamma", max_rel_err(&gg, &finite_diff(&gamma, H, |v| loss(&x, v, &beta)))),
        ("bn beta", max_rel_err(&gb, &finite_diff(&beta, H, |v| loss(&x, &gamma, v)))),
    ]
}

pub fn linear(seed: u64) -> Report {
    let mut r = rng(seed);
    let x = random_tensor(&[4, 5], &mut r);
    let w = random_tensor(&[3, 5], &mut r);
    let b = random_tensor(&[3], &mut r);
    let probe = random_tensor(&[4, 3], &mut r);
    let (gx, gw, gb) = linear_backward(&probe, &x, &w).unwrap();
    let loss = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| project(linear_forward(x, w, b).unwrap().data(), probe.data());
    vec![
        ("linear input", max_rel_err(gx.data(), &finite_diff(x.data(), H, |v| loss(&with(&x, v), &w, &b)))),
        ("linear weight", max_rel_err(gw.data(), &finite_diff(w.data(), H, |v| loss(&x, &with(&w, v), &b)))),
        ("linear bias", max_rel_err(gb.data(), &finite_diff(b.data(), H, |v| loss(&x, &w, &with(&b, v))))),
    ]
}

pub fn cross_entropy(seed: u64) -> Report {
    let mut r = rng(seed);
    let logits = random_tensor(&[5, 6], &mut r).map(|v| 3.0 * v);
    let labels = [0, 5, 2, 2, 3];
    let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
    let fd = finite_diff(logits.data(), H, |v| softmax_cross_entropy(&with(&logits, v), &labels).unwrap().0);
    vec![("softmax cross-entropy", max_rel_err(g.data(), &fd))]
}

pub fn pool(seed: u64) -> Report {
    let mut r = rng(seed);
    let x = random_tensor(&[2, 3, 5, 9], &mut r);
    let probe = random_tensor(&[2, 3, 2, 4], &mut r);
    let gx = adaptive_avg_pool2d_backward(&probe, x.shape()).unwrap();
    let fd = finite_diff(x.data(), H, |v| project(adaptive_avg_pool2d(&with(&x, v), (2, 4)).unwrap().data(), probe.data()));
    vec![("avg pool input", max_rel_err(gx.data(), &fd))]
}

/// Two blocks of four filters on an 8x12 two-channel input.
pub fn tiny_config(classes: usize) -> ModelConfig {
    ModelConfig {
        in_channels: 2,
        input_hw: (8, 12),
        blocks: vec![
            ConvBlockConfig { out_filters: 4, kernel: (3, 3), padding: (1, 1), stride: (1, 1) },
            ConvBlockConfig { out_filters: 4, kernel: (3, 5), padding: (2, 2), stride: (2, 2) },
        ],
        pool_grid: (2, 4),
        hidden: 8,
        classes,
        bn_eps: 1e-5,
        bn_momentum: 0.1,
    }
}

/// Every trainable tensor of the tiny model through loss, BN batch statistics included.
pub fn full_model(seed: u64) -> Report {
    let mut r = rng(seed);
    let model = Model::<f64>::init(tiny_config(3), seed).unwrap();
    let x = random_tensor(&[3, 2, 8, 12], &mut r);
    let labels = [0, 2, 1];
    let fwd = model.forward_train(&x).unwrap();
    let (_, g_logits) = softmax_cross_entropy(&fwd.logits, &labels).unwrap();
    let grads = model.backward(&fwd.cache, &g_logits).unwrap();

    let names = [
        "model block1 conv weight",
        "model block1 conv bias",
        "model block1 bn gamma",
        "model block1 bn beta",
        "model block2 conv weight",
        "model block2 conv bias",
        "model block2 bn gamma",
        "model block2 bn beta",
        "model fc1 weight",
        "model fc1 bias",
        "model fc2 weight",
        "model fc2 bias",
    ];
    let n_params = model.trainable().len();
    assert_eq!(n_params, names.len());
    (0..n_params)
        .map(|i| {
            let base = model.trainable()[i].data().to_vec();
            let fd = finite_diff(&base, H, |v| {
                let mut m = model.clone();
                m.trainable_mut()[i].data_mut().copy_from_slice(v);
                let logits = m.forward_train(&x).unwrap().logits;
                softmax_cross_entropy(&logits, &labels).unwrap().0
            });
            (names[i], max_rel_err(grads.tensors[i].data(), &fd))
        })
        .collect()
}

pub fn all_layers(seed: u64) -> Report {
    let mut out = conv(seed);
    out.extend(batchnorm(seed));
    out.extend(linear(seed));
    out.extend(cross_entropy(seed));
    out.extend(pool(seed));
    out
}
