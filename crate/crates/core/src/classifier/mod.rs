//! One-hidden-layer softmax classifier: `softmax(V · tanh(W x + b) + c)`.
//!
//! Training always restarts from the parameters captured at initialization.

mod optim;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use optim::{AdamW, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_in: usize,
    pub d_h: usize,
    pub classes: usize,
}

impl Dims {
    pub fn n_params(&self) -> usize {
        self.d_h * self.d_in + self.d_h + self.classes * self.d_h + self.classes
    }

    // flat layout: [W (d_h x d_in) | b (d_h) | V (C x d_h) | c (C)]
    fn offsets(&self) -> (usize, usize, usize) {
        let b = self.d_h * self.d_in;
        let v = b + self.d_h;
        let c = v + self.classes * self.d_h;
        (b, v, c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    dims: Dims,
    seed: u64,
    params: Vec<f64>,
    base: Arc<Vec<f64>>,
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
pub fn init_model(d_in: usize, d_h: usize, classes: usize, seed: u64) -> Result<ClassifierModel> {
    if d_in == 0 || d_h == 0 || classes == 0 {
        return Err(Error::InvalidArgument(format!(
            "classifier dims must be >= 1 (d_in={d_in}, d_h={d_h}, classes={classes})"
        )));
    }
    let dims = Dims { d_in, d_h, classes };
    let (b_off, v_off, c_off) = dims.offsets();
    let mut rng = seed::rng(seed);
    let mut params = vec![0.0; dims.n_params()];
    let s_in = 1.0 / (d_in as f64).sqrt();
    for w in &mut params[..b_off] {
        *w = rng.gen_range(-s_in..s_in);
    }
    let s_h = 1.0 / (d_h as f64).sqrt();
    for w in &mut params[v_off..c_off] {
        *w = rng.gen_range(-s_h..s_h);
    }
    Ok(ClassifierModel {
        dims,
        seed,
        base: Arc::new(params.clone()),
        params,
    })
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// `sum_i p_i ln(1/p_i)`, with `0 ln(1/0) = 0`.
pub fn predictive_entropy(proba: &[f64]) -> f64 {
    proba
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub micro_f1: f64,
}

impl ClassifierModel {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn base_params(&self) -> &[f64] {
        &self.base
    }

    /// Replace the current parameters; the base snapshot is unchanged.
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.dims.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.dims.n_params(),
                actual: params.len(),
            });
        }
        self.params = params;
        Ok(())
    }

    /// The model at its initial parameters.
    pub fn base_snapshot(&self) -> ClassifierModel {
        ClassifierModel {
            dims: self.dims,
            seed: self.seed,
            params: self.base.as_ref().clone(),
            base: Arc::clone(&self.base),
        }
    }

    pub fn is_at_base(&self) -> bool {
        self.params == *self.base
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.dims.d_in,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn hidden_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let Dims { d_in, d_h, .. } = self.dims;
        let (b_off, _, _) = self.dims.offsets();
        let w = &self.params[..b_off];
        let b = &self.params[b_off..b_off + d_h];
        (0..d_h)
            .map(|j| {
                let row = &w[j * d_in..(j + 1) * d_in];
                let mut a = b[j];
                for (wi, xi) in row.iter().zip(x) {
                    if *xi != 0.0 {
                        a += wi * xi;
                    }
                }
                a.tanh()
            })
            .collect()
    }

    fn logits_from_hidden(&self, h: &[f64]) -> Vec<f64> {
        let Dims { d_h, classes, .. } = self.dims;
        let (_, v_off, c_off) = self.dims.offsets();
        let v = &self.params[v_off..c_off];
        let c = &self.params[c_off..];
        (0..classes)
            .map(|k| {
                let row = &v[k * d_h..(k + 1) * d_h];
                c[k] + row.iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Hidden activation `tanh(W x + b)`.
    pub fn hidden(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.hidden_unchecked(x))
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.logits_from_hidden(&self.hidden_unchecked(x)))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Probabilities and hidden activation in one pass.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        let h = self.hidden_unchecked(x);
        let p = softmax(&self.logits_from_hidden(&h));
        Ok((p, h))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::embeddings::argmax(&self.logits(x)?))
    }

    /// Cross-entropy of `(x, y)`; adds `scale * dloss/dparams` into `grad`.
    fn accumulate_grad(&self, x: &[f64], y: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let Dims { d_in, d_h, classes } = self.dims;
        let (b_off, v_off, c_off) = self.dims.offsets();
        let h = self.hidden_unchecked(x);
        let p = softmax(&self.logits_from_hidden(&h));
        let loss = -p[y].max(f64::MIN_POSITIVE).ln();

        let v = &self.params[v_off..c_off];
        let mut dh = vec![0.0; d_h];
        for k in 0..classes {
            let dz = scale * (p[k] - if k == y { 1.0 } else { 0.0 });
            grad[c_off + k] += dz;
            let row = v_off + k * d_h;
            for j in 0..d_h {
                grad[row + j] += dz * h[j];
                dh[j] += dz * v[k * d_h + j];
            }
        }
        for j in 0..d_h {
            let da = dh[j] * (1.0 - h[j] * h[j]);
            grad[b_off + j] += da;
            let row = j * d_in;
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    grad[row + i] += da * xi;
                }
            }
        }
        loss
    }

    /// Loss and full parameter gradient for one example.
    pub fn loss_and_grad(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        self.check_label(y)?;
        let mut g = vec![0.0; self.dims.n_params()];
        let loss = self.accumulate_grad(x, y, 1.0, &mut g);
        Ok((loss, g))
    }

    pub fn loss(&self, x: &[f64], y: usize) -> Result<f64> {
        self.check_label(y)?;
        let p = self.predict_proba(x)?;
        Ok(-p[y].ln())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.dims.classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: self.dims.classes,
            });
        }
        Ok(())
    }

    /// Mini-batch AdamW training starting from the base snapshot.
    pub fn train(&self, examples: &[(&[f64], usize)], cfg: &TrainConfig) -> Result<ClassifierModel> {
        cfg.validate()?;
        if examples.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        for &(x, y) in examples {
            self.check_input(x)?;
            self.check_label(y)?;
        }
        let mut model = self.base_snapshot();
        if cfg.epochs == 0 {
            return Ok(model);
        }
        let n = examples.len();
        let per_epoch = n.div_ceil(cfg.batch_size);
        let total = per_epoch * cfg.epochs;
        let mut opt = AdamW::new(self.dims.n_params(), cfg);
        let mut rng = seed::rng(cfg.seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut grad = vec![0.0; self.dims.n_params()];
        let mut step = 0;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let (x, y) = examples[i];
                    model.accumulate_grad(x, y, scale, &mut grad);
                }
                let lr = cfg.lr_at(step, total);
                opt.step(&mut model.params, &grad, lr);
                step += 1;
            }
        }
        Ok(model)
    }

    pub fn evaluate(&self, examples: &[(&[f64], usize)]) -> Result<Metrics> {
        if examples.is_empty() {
            return Err(Error::InvalidArgument("empty evaluation set".into()));
        }
        let c = self.dims.classes;
        let mut tp = vec![0usize; c];
        let mut fp = vec![0usize; c];
        let mut fn_ = vec![0usize; c];
        for &(x, y) in examples {
            self.check_label(y)?;
            let pred = self.predict(x)?;
            if pred == y {
                tp[y] += 1;
            } else {
                fp[pred] += 1;
                fn_[y] += 1;
            }
        }
        let tp: usize = tp.iter().sum();
        let fp: usize = fp.iter().sum();
        let fn_: usize = fn_.iter().sum();
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / (tp + fn_) as f64;
        let micro_f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Ok(Metrics {
            accuracy: tp as f64 / examples.len() as f64,
            micro_f1,
        })
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            dims: self.dims,
            seed: self.seed,
            params: self.params.clone(),
            base: self.base.as_ref().clone(),
        };
        let text = serde_json::to_string(&ckpt)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint format `{}`",
                ckpt.format
            )));
        }
        let n = ckpt.dims.n_params();
        for len in [ckpt.params.len(), ckpt.base.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        Ok(ClassifierModel {
            dims: ckpt.dims,
            seed: ckpt.seed,
            params: ckpt.params,
            base: Arc::new(ckpt.base),
        })
    }
}

const CHECKPOINT_FORMAT: &str = "coldstart-al/classifier-v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    dims: Dims,
    seed: u64,
    params: Vec<f64>,
    base: Vec<f64>,
}
