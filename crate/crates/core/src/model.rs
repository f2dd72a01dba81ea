//! A small ReLU multilayer perceptron with hand-written backpropagation and
//! SGD with momentum, used as the trainable substrate for experiments.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{mixup_pairs, Dataset};
use crate::error::{Error, Result};
use crate::losses::{
    argmax, grad_total, total_loss, HardLabel, LogitVector, MixTarget, RegKind, RegularizerSpec,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub seed: u64,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("model.input_dim", "must be >= 1"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::config(
                "model.hidden_dims",
                "every width must be >= 1",
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::config("model.num_classes", "must be >= 2"));
        }
        Ok(())
    }
}

/// One affine layer. `weight` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Network parameters. Also used to hold parameter gradients and momentum
/// buffers, which share the same shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub layers: Vec<Dense>,
}

/// Every intermediate of a batched forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Layer inputs: the batch itself, then each hidden activation.
    activations: Vec<Array2<f64>>,
    /// Hidden-layer pre-activations.
    pre_activations: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.logits.nrows()
    }

    /// Penultimate activations (the raw input when there are no hidden layers).
    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.activations
            .last()
            .expect("input is always present")
            .view()
    }

    pub fn logits(&self) -> ArrayView2<'_, f64> {
        self.logits.view()
    }

    pub fn logit_vector(&self, row: usize) -> Result<LogitVector> {
        LogitVector::new(self.logits.row(row).to_vec())
    }

    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre_activations
    }
}

/// He-normal weights (std `sqrt(2 / fan_in)`), zero biases.
pub fn init_params(cfg: &MlpConfig) -> Result<Params> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dims = vec![cfg.input_dim];
    dims.extend_from_slice(&cfg.hidden_dims);
    dims.push(cfg.num_classes);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                std * rng.sample::<f64, _>(StandardNormal)
            });
            Dense {
                weight,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(Params { layers })
}

impl Params {
    pub fn zeros_like(&self) -> Params {
        Params {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.layers
            .last()
            .expect("at least one layer")
            .weight
            .nrows()
    }

    /// All weights and biases, layer by layer, weights row-major first.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Mutable access to the `index`-th scalar in [`Params::flatten`] order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weight.len();
            if index < nw {
                let cols = layer.weight.ncols();
                return &mut layer.weight[[index / cols, index % cols]];
            }
            index -= nw;
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("contiguous slice");
        self.forward_batch(batch)
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        let mut activations = vec![x.to_owned()];
        let mut pre_activations = Vec::with_capacity(self.layers.len() - 1);
        let (hidden, last) = self.layers.split_at(self.layers.len() - 1);
        for layer in hidden {
            let input = activations.last().expect("non-empty");
            let pre = input.dot(&layer.weight.t()) + &layer.bias;
            activations.push(pre.mapv(|v| v.max(0.0)));
            pre_activations.push(pre);
        }
        let input = activations.last().expect("non-empty");
        let logits = input.dot(&last[0].weight.t()) + &last[0].bias;
        Ok(ForwardTrace {
            activations,
            pre_activations,
            logits,
        })
    }

    /// Gradients of `Σ_rows dlogits · logits` with respect to every
    /// parameter. The ReLU subgradient at exactly zero is zero.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: ArrayView2<'_, f64>) -> Result<Params> {
        if trace.activations.len() != self.layers.len()
            || trace.logits.ncols() != self.num_classes()
            || trace.activations[0].ncols() != self.input_dim()
        {
            return Err(Error::Usage(
                "trace was not produced by these parameters".into(),
            ));
        }
        if dlogits.dim() != trace.logits.dim() {
            return Err(Error::Shape {
                expected: trace.logits.len(),
                actual: dlogits.len(),
            });
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = dlogits.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[l];
            grads.push(Dense {
                weight: delta.t().dot(input),
                bias: delta.sum_axis(Axis(0)),
            });
            if l > 0 {
                let mut upstream = delta.dot(&layer.weight);
                upstream.zip_mut_with(&trace.pre_activations[l - 1], |d, &pre| {
                    if pre <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = upstream;
            }
        }
        grads.reverse();
        Ok(Params { layers: grads })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub momentum: f64,
    pub weight_decay: f64,
    pub buffers: Params,
}

impl OptimState {
    pub fn new(params: &Params, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config("momentum", "must be in [0, 1)"));
        }
        if !(weight_decay.is_finite() && weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be >= 0"));
        }
        Ok(Self {
            momentum,
            weight_decay,
            buffers: params.zeros_like(),
        })
    }
}

/// `buf ← μ·buf + (g + λ·w)`, `w ← w − lr·buf`. Biases get no weight decay.
pub fn sgd_step(params: &mut Params, grads: &Params, opt: &mut OptimState, lr: f64) {
    let (mu, wd) = (opt.momentum, opt.weight_decay);
    for ((p, g), buf) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut opt.buffers.layers)
    {
        ndarray::Zip::from(&mut buf.weight)
            .and(&g.weight)
            .and(&p.weight)
            .for_each(|b, &gw, &w| *b = mu * *b + (gw + wd * w));
        ndarray::Zip::from(&mut buf.bias)
            .and(&g.bias)
            .for_each(|b, &gb| *b = mu * *b + gb);
        p.weight.scaled_add(-lr, &buf.weight);
        p.bias.scaled_add(-lr, &buf.bias);
    }
}

/// Row indices grouped into batches, shuffled with a generator keyed by
/// `(seed, epoch)`.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(seed ^ epoch as u64);
    order.shuffle(&mut rng);
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

/// Per-epoch knobs for [`train_epoch`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochSettings {
    /// Regularizer with `alpha` already set to the scheduled value.
    pub spec: RegularizerSpec,
    pub lr: f64,
    /// Beta-distribution concentration for mixup, used when `spec.kind` is
    /// `LsMixup`.
    pub mixup_concentration: f64,
    /// Seed for mixup pairing; combined with the batch index.
    pub mixup_seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub accuracy: f64,
    pub mean_reg_term: f64,
    pub mean_err_term: f64,
}

/// Mean total loss and its parameter gradient over one batch. Under mixup
/// the batch rows are replaced by their λ-interpolated pairs first.
pub fn batch_loss_and_grads(
    params: &Params,
    inputs: ArrayView2<'_, f64>,
    labels: &[usize],
    spec: &RegularizerSpec,
    mix: Option<&[MixTarget]>,
) -> Result<(Params, EpochStats)> {
    let b = labels.len();
    if b == 0 {
        return Err(Error::Usage("empty batch".into()));
    }
    let trace = params.forward_batch(inputs)?;
    let mut dlogits = Array2::zeros(trace.logits.raw_dim());
    let mut stats = EpochStats::default();
    let scale = 1.0 / b as f64;
    for (row, &label) in labels.iter().enumerate() {
        let z = trace.logit_vector(row)?;
        let mix_target = mix.map(|m| &m[row]);
        let gt = HardLabel(label);
        let breakdown = total_loss(&z, gt, spec, mix_target)?;
        let grad = grad_total(&z, gt, spec, mix_target)?;
        for (d, g) in dlogits.row_mut(row).iter_mut().zip(grad.as_slice()) {
            *d = g * scale;
        }
        stats.mean_loss += breakdown.total;
        stats.mean_reg_term += breakdown.reg_term;
        stats.mean_err_term += breakdown.err_term;
        if z.argmax() == label {
            stats.accuracy += 1.0;
        }
    }
    let grads = params.backward(&trace, dlogits.view())?;
    Ok((grads, stats))
}

/// One pass over `batches`, updating parameters after every batch.
/// Statistics are accumulated from the pre-update forward passes.
pub fn train_epoch(
    params: &mut Params,
    opt: &mut OptimState,
    data: &Dataset,
    batches: &[Vec<usize>],
    settings: &EpochSettings,
) -> Result<EpochStats> {
    if batches.is_empty() {
        return Err(Error::Usage("no batches".into()));
    }
    let mut totals = EpochStats::default();
    let mut seen = 0usize;
    for (batch_index, batch) in batches.iter().enumerate() {
        if batch.is_empty() {
            return Err(Error::Usage(format!("batch {batch_index} is empty")));
        }
        let mut inputs = data.inputs.select(Axis(0), batch);
        let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();

        let mix = if settings.spec.kind == RegKind::LsMixup {
            let seed = settings
                .mixup_seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(batch_index as u64);
            let pairs = mixup_pairs(batch.len(), settings.mixup_concentration, seed)?;
            let original = inputs.clone();
            let mut targets = Vec::with_capacity(pairs.len());
            for p in &pairs {
                let mixed = &original.row(p.i) * p.lambda + &original.row(p.j) * (1.0 - p.lambda);
                inputs.slice_mut(s![p.i, ..]).assign(&mixed);
                targets.push(MixTarget {
                    gt1: labels[p.i],
                    gt2: labels[p.j],
                    lambda: p.lambda,
                });
            }
            Some(targets)
        } else {
            None
        };

        let (grads, stats) = batch_loss_and_grads(
            params,
            inputs.view(),
            &labels,
            &settings.spec,
            mix.as_deref(),
        )?;
        totals.mean_loss += stats.mean_loss;
        totals.accuracy += stats.accuracy;
        totals.mean_reg_term += stats.mean_reg_term;
        totals.mean_err_term += stats.mean_err_term;
        seen += batch.len();
        sgd_step(params, &grads, opt, settings.lr);
    }
    let n = seen as f64;
    Ok(EpochStats {
        mean_loss: totals.mean_loss / n,
        accuracy: totals.accuracy / n,
        mean_reg_term: totals.mean_reg_term / n,
        mean_err_term: totals.mean_err_term / n,
    })
}

/// Logits and penultimate features for every row of `inputs`.
pub fn predict(params: &Params, inputs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let trace = params.forward_batch(inputs)?;
    Ok((trace.logits.clone(), trace.features().to_owned()))
}

/// Top-1 predictions with the lowest-index tie break.
pub fn predicted_classes(logits: ArrayView2<'_, f64>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|r| argmax(r.as_slice().expect("standard layout")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_blobs, BlobSpec};
    use ndarray::array;

    fn cfg(hidden: Vec<usize>) -> MlpConfig {
        MlpConfig {
            input_dim: 3,
            hidden_dims: hidden,
            num_classes: 3,
            seed: 42,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(&cfg(vec![5, 4])).unwrap();
        let b = init_params(&cfg(vec![5, 4])).unwrap();
        let bits = |p: &Params| p.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn he_init_sample_std() {
        let c = MlpConfig {
            input_dim: 50,
            hidden_dims: vec![1000],
            num_classes: 2,
            seed: 7,
        };
        let p = init_params(&c).unwrap();
        let w = &p.layers[0].weight;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let std = (w.mapv(|v| (v - mean).powi(2)).sum() / (n - 1.0)).sqrt();
        let want = (2.0f64 / 50.0).sqrt();
        assert!((std - want).abs() < 0.1 * want, "std {std} vs {want}");
    }

    #[test]
    fn no_hidden_layers_is_linear() {
        let p = init_params(&cfg(vec![])).unwrap();
        let t = p.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.features(), array![[1.0, 2.0, 3.0]]);
        assert_eq!(p.layers.len(), 1);
    }

    #[test]
    fn zero_params_give_uniform_softmax() {
        let p = init_params(&cfg(vec![4])).unwrap().zeros_like();
        let t = p.forward(&[0.3, -2.0, 5.0]).unwrap();
        assert!(t.logits().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_matches_hand_multiply() {
        let p = Params {
            layers: vec![Dense {
                weight: array![[1.0, 2.0], [-3.0, 0.5]],
                bias: array![0.25, -1.0],
            }],
        };
        let t = p.forward(&[2.0, -1.0]).unwrap();
        // [1·2 + 2·(−1) + 0.25, −3·2 + 0.5·(−1) − 1]
        assert_eq!(t.logits(), array![[0.25, -7.5]]);
        assert!(matches!(p.forward(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn backward_zero_and_linearity() {
        let p = init_params(&cfg(vec![4, 3])).unwrap();
        let t = p.forward(&[0.3, -0.7, 1.1]).unwrap();
        let zero = p.backward(&t, Array2::zeros((1, 3)).view()).unwrap();
        assert!(zero.flatten().iter().all(|&v| v == 0.0));

        let d = array![[0.2, -0.5, 0.3]];
        let g1 = p.backward(&t, d.view()).unwrap().flatten();
        let g3 = p.backward(&t, (&d * 3.0).view()).unwrap().flatten();
        for (a, b) in g1.iter().zip(&g3) {
            assert!((3.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let p = init_params(&cfg(vec![4])).unwrap();
        let other = init_params(&cfg(vec![4, 4])).unwrap();
        let t = other.forward(&[0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            p.backward(&t, Array2::zeros((1, 3)).view()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn sgd_plain_step_on_quadratic() {
        let mut p = Params {
            layers: vec![Dense {
                weight: array![[1.0]],
                bias: array![0.0],
            }],
        };
        // ∂(½w²)/∂w = w
        let g = p.clone();
        let mut opt = OptimState::new(&p, 0.0, 0.0).unwrap();
        sgd_step(&mut p, &g, &mut opt, 0.1);
        assert!((p.layers[0].weight[[0, 0]] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn momentum_buffer_decays_geometrically() {
        let mut p = Params {
            layers: vec![Dense {
                weight: array![[1.0]],
                bias: array![0.0],
            }],
        };
        let mut opt = OptimState::new(&p, 0.9, 0.0).unwrap();
        opt.buffers.layers[0].weight[[0, 0]] = 1.0;
        let zero = p.zeros_like();
        for step in 1..=5 {
            sgd_step(&mut p, &zero, &mut opt, 0.1);
            let want = 0.9f64.powi(step);
            assert!((opt.buffers.layers[0].weight[[0, 0]] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_decay_skips_biases() {
        let mut p = Params {
            layers: vec![Dense {
                weight: array![[2.0]],
                bias: array![2.0],
            }],
        };
        let zero = p.zeros_like();
        let mut opt = OptimState::new(&p, 0.0, 0.5).unwrap();
        sgd_step(&mut p, &zero, &mut opt, 0.1);
        assert!((p.layers[0].weight[[0, 0]] - 1.9).abs() < 1e-15);
        assert_eq!(p.layers[0].bias[0], 2.0);
    }

    #[test]
    fn batches_cover_every_row_once() {
        let batches = epoch_batches(103, 10, 5, 2);
        assert_eq!(batches.len(), 11);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
        assert_eq!(batches, epoch_batches(103, 10, 5, 2));
        assert_ne!(batches, epoch_batches(103, 10, 5, 3));
    }

    #[test]
    fn train_epoch_rejects_empty_batches() {
        let data = make_blobs(&BlobSpec {
            num_classes: 2,
            dim: 3,
            samples_per_class: 4,
            within_std: 0.1,
            mean_radius: 1.0,
            label_noise: 0.0,
            seed: 0,
        })
        .unwrap();
        let mut p = init_params(&cfg(vec![4])).unwrap();
        let mut opt = OptimState::new(&p, 0.9, 0.0).unwrap();
        let settings = EpochSettings {
            spec: RegularizerSpec::none(),
            lr: 0.1,
            mixup_concentration: 1.0,
            mixup_seed: 0,
        };
        assert!(train_epoch(&mut p, &mut opt, &data, &[], &settings).is_err());
        assert!(train_epoch(&mut p, &mut opt, &data, &[vec![]], &settings).is_err());
    }
}
