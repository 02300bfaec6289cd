//! The end-to-end steering network: a stack of 5x5 valid convolutions
//! followed by fully connected layers narrowing to one output, trained
//! with plain SGD on the mean squared error of the (standardized) inverse
//! turning radius.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::binio::{put_text, put_u32, OffsetReader};
use crate::checkpoint::{read_params_from, write_params};
use crate::dropout::{check_keep_prob, DropoutKind, DropoutSpec};
use crate::error::{Error, Result};
use crate::kv::{join_list, KvMap};
use crate::seed::{derive_seed, rng, TAG_INIT, TAG_SHUFFLE};
use crate::synth::{Frame, ImageConfig};
use crate::tape::{accumulate_gradients, clip_gradient_norm, sgd_step, Parameter, Tape, Var};
use crate::tensor::{conv_output_extent, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    /// `(channels, height, width)` of the input image.
    pub input: [usize; 3],
    pub kernel: usize,
    pub conv_channels: Vec<usize>,
    pub conv_strides: Vec<usize>,
    /// Widths of the fully connected layers; the last must be 1.
    pub fc_widths: Vec<usize>,
    pub conv_keep: f64,
    pub fc_keep: f64,
    pub conv_dropout: DropoutKind,
}

impl Default for NetworkConfig {
    /// Five 5x5 conv layers with strides (2,1,2,1,2) and four FC layers,
    /// keep probabilities 0.9 (conv) and 0.5 (FC), on a 1x56x96 image.
    fn default() -> Self {
        Self {
            input: [1, 56, 96],
            kernel: 5,
            conv_channels: vec![16, 24, 32, 48, 64],
            conv_strides: vec![2, 1, 2, 1, 2],
            fc_widths: vec![128, 64, 16, 1],
            conv_keep: 0.9,
            fc_keep: 0.5,
            conv_dropout: DropoutKind::Spatial,
        }
    }
}

impl NetworkConfig {
    /// Stride sequence starting at 1 instead of 2.
    pub fn with_odd_strides(mut self) -> Self {
        self.conv_strides = (0..self.conv_strides.len())
            .map(|i| if i % 2 == 0 { 1 } else { 2 })
            .collect();
        self
    }

    /// Output shape `(channels, height, width)` of every conv layer.
    pub fn conv_shapes(&self) -> Result<Vec<[usize; 3]>> {
        if self.conv_channels.len() != self.conv_strides.len() {
            return Err(Error::InvalidConfig(
                "conv_channels and conv_strides differ in length".into(),
            ));
        }
        let [_, mut h, mut w] = self.input;
        let mut out = Vec::with_capacity(self.conv_channels.len());
        for (i, (&c, &s)) in self.conv_channels.iter().zip(&self.conv_strides).enumerate() {
            let layer = i + 1;
            h = conv_output_extent(h, self.kernel, s).ok_or(Error::LayerUnderflow {
                layer,
                axis: "height",
                extent: h,
                kernel: self.kernel,
            })?;
            w = conv_output_extent(w, self.kernel, s).ok_or(Error::LayerUnderflow {
                layer,
                axis: "width",
                extent: w,
                kernel: self.kernel,
            })?;
            out.push([c, h, w]);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.input.iter().any(|&e| e == 0) {
            return bad("input extents must be positive");
        }
        if self.kernel == 0 || self.conv_strides.contains(&0) || self.conv_channels.contains(&0) {
            return bad("kernel, strides and channel counts must be positive");
        }
        if self.fc_widths.is_empty() || self.fc_widths.contains(&0) {
            return bad("need at least one fully connected layer with positive widths");
        }
        if self.fc_widths.last() != Some(&1) {
            return bad("final layer width must be 1");
        }
        check_keep_prob(self.conv_keep)?;
        check_keep_prob(self.fc_keep)?;
        self.conv_shapes()?;
        Ok(())
    }

    pub fn flat_features(&self) -> Result<usize> {
        Ok(match self.conv_shapes()?.last() {
            Some(s) => s.iter().product(),
            None => self.input.iter().product(),
        })
    }

    pub fn to_kv(&self, kv: &mut KvMap) {
        kv.set("input", join_list(&self.input));
        kv.set("kernel", self.kernel);
        kv.set("conv_channels", join_list(&self.conv_channels));
        kv.set("conv_strides", join_list(&self.conv_strides));
        kv.set("fc_widths", join_list(&self.fc_widths));
        kv.set("conv_keep", self.conv_keep);
        kv.set("fc_keep", self.fc_keep);
        kv.set("conv_dropout", self.conv_dropout);
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let input: Vec<usize> = kv.parse_list("input")?;
        let input: [usize; 3] = input
            .try_into()
            .map_err(|_| Error::InvalidConfig("input needs three extents".into()))?;
        let cfg = Self {
            input,
            kernel: kv.parse_required("kernel")?,
            conv_channels: kv.parse_list("conv_channels")?,
            conv_strides: kv.parse_list("conv_strides")?,
            fc_widths: kv.parse_list("fc_widths")?,
            conv_keep: kv.parse_required("conv_keep")?,
            fc_keep: kv.parse_required("fc_keep")?,
            conv_dropout: kv.parse_required("conv_dropout")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like [`from_kv`](Self::from_kv), with absent keys taken from
    /// `self`.
    pub fn overlay_kv(&self, kv: &KvMap) -> Result<Self> {
        let mut full = KvMap::new();
        self.to_kv(&mut full);
        for key in kv.keys() {
            if full.contains(key) {
                full.set(key, kv.require(key)?);
            }
        }
        Self::from_kv(&full)
    }
}

/// Standardization of the curvature labels: `z = (y - mean) / std`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelScaler {
    pub mean: f64,
    pub std: f64,
}

impl Default for LabelScaler {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl LabelScaler {
    pub fn fit(labels: &[f64]) -> Self {
        if labels.is_empty() {
            return Self::default();
        }
        let n = labels.len() as f64;
        let mean = labels.iter().sum::<f64>() / n;
        let var = labels.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, std }
    }

    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn unscale(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn unscale_variance(&self, v: f64) -> f64 {
        v * self.std * self.std
    }
}

/// How dropout is handled in a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// No masks. Inverted scaling during sampling keeps activations
    /// on the same scale, so no rescale is applied here.
    Deterministic,
    /// Fresh masks seeded from `(seed, layer, pass)`.
    Stochastic { seed: u64, pass: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub params: Vec<Parameter>,
    pub scaler: LabelScaler,
    pub epochs_completed: usize,
    /// Camera the training frames came from; closed-loop rendering uses
    /// the same view.
    pub camera: ImageConfig,
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, seed: u64) -> Result<Tensor> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut r = rng(seed);
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| r.random_range(-bound..=bound)).collect(),
    )
}

impl Network {
    /// Builds the network with Glorot-uniform weights and zero biases.
    pub fn build(config: NetworkConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let k = config.kernel;
        let mut params = Vec::new();
        let mut c_in = config.input[0];
        let seed_for = |params: &Vec<Parameter>| derive_seed(init_seed, &[TAG_INIT, params.len() as u64]);
        for (i, &c_out) in config.conv_channels.iter().enumerate() {
            let w = glorot(&[c_out, c_in, k, k], c_in * k * k, c_out * k * k, seed_for(&params))?;
            params.push(Parameter::new(format!("conv{}.weight", i + 1), w));
            params.push(Parameter::new(format!("conv{}.bias", i + 1), Tensor::zeros(&[c_out])?));
            c_in = c_out;
        }
        let mut n_in = config.flat_features()?;
        for (j, &m) in config.fc_widths.iter().enumerate() {
            let w = glorot(&[m, n_in], n_in, m, seed_for(&params))?;
            params.push(Parameter::new(format!("fc{}.weight", j + 1), w));
            params.push(Parameter::new(format!("fc{}.bias", j + 1), Tensor::zeros(&[m])?));
            n_in = m;
        }
        let camera = ImageConfig {
            height: config.input[1],
            width: config.input[2],
            ..ImageConfig::default()
        };
        Ok(Self {
            config,
            params,
            scaler: LabelScaler::default(),
            epochs_completed: 0,
            camera,
        })
    }

    pub fn num_conv(&self) -> usize {
        self.config.conv_channels.len()
    }

    pub fn num_fc(&self) -> usize {
        self.config.fc_widths.len()
    }

    /// Dropout placement: after every conv layer (conv kind, `conv_keep`)
    /// and after every hidden FC layer (element-wise, `fc_keep`). The
    /// output unit is never dropped.
    pub fn dropout_specs(&self) -> Vec<DropoutSpec> {
        let nc = self.num_conv();
        let conv = (0..nc).map(|i| DropoutSpec {
            kind: self.config.conv_dropout,
            keep_prob: self.config.conv_keep,
            layer_index: i,
        });
        let fc = (0..self.num_fc().saturating_sub(1)).map(|j| DropoutSpec {
            kind: DropoutKind::ElementWise,
            keep_prob: self.config.fc_keep,
            layer_index: nc + j,
        });
        conv.chain(fc).collect()
    }

    fn check_image(&self, image: &Tensor) -> Result<()> {
        if image.shape() != self.config.input {
            let found: usize = image.len();
            return Err(Error::ShapeMismatch {
                op: "forward",
                dim: "input image",
                expected: self.config.input.iter().product(),
                found,
            });
        }
        Ok(())
    }

    fn maybe_drop<'a>(&self, tape: &mut Tape<'a>, x: Var, spec: &DropoutSpec, mode: Mode) -> Result<Var> {
        match mode {
            Mode::Stochastic { seed, pass } if spec.keep_prob < 1.0 => {
                let shape = tape.value(x).shape().to_vec();
                let mask = spec.sample(&shape, seed, pass)?;
                tape.mask(x, mask.values)
            }
            _ => Ok(x),
        }
    }

    /// Records the forward pass on `tape` and returns the `[1]` output.
    /// Also returns the pre-dropout activation of every dropout site.
    pub fn record<'a>(&'a self, tape: &mut Tape<'a>, image: &Tensor, mode: Mode) -> Result<(Var, Vec<Var>)> {
        self.check_image(image)?;
        let specs = self.dropout_specs();
        let mut sites = Vec::with_capacity(specs.len());
        let mut x = tape.input(standardize(image));
        let mut p = 0;
        for (i, &stride) in self.config.conv_strides.iter().enumerate() {
            let (w, b) = (tape.param(p), tape.param(p + 1));
            p += 2;
            x = tape.conv2d(x, w, b, stride)?;
            x = tape.relu(x);
            sites.push(x);
            x = self.maybe_drop(tape, x, &specs[i], mode)?;
        }
        x = tape.flatten(x)?;
        let nc = self.num_conv();
        for j in 0..self.num_fc() {
            let (w, b) = (tape.param(p), tape.param(p + 1));
            p += 2;
            x = tape.dense(x, w, b)?;
            if j + 1 < self.num_fc() {
                x = tape.relu(x);
                sites.push(x);
                x = self.maybe_drop(tape, x, &specs[nc + j], mode)?;
            }
        }
        Ok((x, sites))
    }

    /// Network output in standardized label units.
    pub fn forward(&self, image: &Tensor, mode: Mode) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let (out, _) = self.record(&mut tape, image, mode)?;
        Ok(tape.value(out).data()[0])
    }

    /// Forward pass unscaled to curvature units.
    pub fn predict(&self, image: &Tensor, mode: Mode) -> Result<f64> {
        Ok(self.scaler.unscale(self.forward(image, mode)?))
    }

    /// Squared-error loss on one example and the parameter gradients.
    pub fn loss_and_grads(&self, image: &Tensor, target: f64, mode: Mode) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = Tape::new(&self.params);
        let (out, _) = self.record(&mut tape, image, mode)?;
        let loss = tape.mse(out, Tensor::scalar(target))?;
        let value = tape.value(loss).data()[0];
        Ok((value, tape.backward(loss)?.into_param_grads()))
    }

    /// Deterministic-mode MSE in standardized units.
    pub fn evaluate_mse(&self, frames: &[Frame]) -> Result<f64> {
        if frames.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        let mut total = 0.0;
        for f in frames {
            let z = self.forward(&f.image, Mode::Deterministic)?;
            total += (z - self.scaler.normalize(f.label)).powi(2);
        }
        Ok(total / frames.len() as f64)
    }

    /// Mean SGD loss of one stochastic pass over `frames` without updates.
    fn stochastic_mse(&self, frames: &[Frame], seed: u64, first_pass: u64) -> Result<f64> {
        let mut total = 0.0;
        for (i, f) in frames.iter().enumerate() {
            let mode = Mode::Stochastic {
                seed,
                pass: first_pass + i as u64,
            };
            let z = self.forward(&f.image, mode)?;
            total += (z - self.scaler.normalize(f.label)).powi(2);
        }
        Ok(total / frames.len() as f64)
    }

    /// SGD on per-example squared error, averaged over each minibatch.
    ///
    /// The conv dropout kind is taken from `tc` and stored in the network
    /// config. A fresh network fits the label scaler on `train` and logs
    /// an epoch-0 record before the first update; a resumed network keeps
    /// its scaler and continues the epoch counter.
    pub fn train(&mut self, train: &[Frame], val: &[Frame], tc: &TrainConfig) -> Result<TrainLog> {
        tc.validate()?;
        if train.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        self.config.conv_dropout = tc.conv_dropout;
        let n = train.len();
        let mut log = TrainLog {
            seed: tc.seed,
            dropout: tc.conv_dropout,
            epochs: Vec::new(),
        };
        let val_mse = |net: &Self| -> Result<Option<f64>> {
            if val.is_empty() {
                Ok(None)
            } else {
                net.evaluate_mse(val).map(Some)
            }
        };
        if self.epochs_completed == 0 {
            let labels: Vec<f64> = train.iter().map(|f| f.label).collect();
            self.scaler = LabelScaler::fit(&labels);
            let start = Instant::now();
            let train_mse = self.evaluate_mse(train)?;
            let sgd_loss = self.stochastic_mse(train, derive_seed(tc.seed, &[TAG_SHUFFLE, u64::MAX]), 0)?;
            log.epochs.push(EpochRecord {
                epoch: 0,
                train_mse,
                val_mse: val_mse(self)?,
                sgd_loss,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..tc.epochs {
            let epoch = self.epochs_completed + 1;
            let start = Instant::now();
            order.sort_unstable();
            order.shuffle(&mut rng(derive_seed(tc.seed, &[TAG_SHUFFLE, epoch as u64])));
            let mut loss_sum = 0.0;
            for (batch, chunk) in order.chunks(tc.batch_size).enumerate() {
                let scale = 1.0 / chunk.len() as f64;
                let mut batch_loss = 0.0;
                for (k, &i) in chunk.iter().enumerate() {
                    let pass = ((epoch - 1) * n + batch * tc.batch_size + k) as u64;
                    let target = self.scaler.normalize(train[i].label);
                    let (loss, grads) = self.loss_and_grads(
                        &train[i].image,
                        target,
                        Mode::Stochastic { seed: tc.seed, pass },
                    )?;
                    batch_loss += loss;
                    accumulate_gradients(&mut self.params, &grads, scale);
                }
                if !batch_loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch });
                }
                loss_sum += batch_loss;
                if let Some(c) = tc.clip_norm {
                    clip_gradient_norm(&mut self.params, c);
                }
                sgd_step(&mut self.params, tc.learning_rate)?;
            }
            self.epochs_completed = epoch;
            let train_mse = self.evaluate_mse(train)?;
            if !train_mse.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: n.div_ceil(tc.batch_size),
                });
            }
            log.epochs.push(EpochRecord {
                epoch,
                train_mse,
                val_mse: val_mse(self)?,
                sgd_loss: loss_sum / n as f64,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        Ok(log)
    }

    fn header(&self) -> KvMap {
        let mut kv = KvMap::new();
        self.config.to_kv(&mut kv);
        kv.set("label_mean", self.scaler.mean);
        kv.set("label_std", self.scaler.std);
        kv.set("epochs_completed", self.epochs_completed);
        self.camera.write_kv(&mut kv);
        kv
    }

    /// Writes a network checkpoint.
    ///
    /// ```text
    /// magic    8 bytes  "STEERNET"
    /// version  u32      1
    /// header   u32 length + UTF-8 `key = value` text (config, scaler, epochs)
    /// params   parameter block (see `checkpoint`)
    /// ```
    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(NET_MAGIC)?;
        put_u32(w, NET_VERSION)?;
        put_text(w, &self.header().to_text())?;
        write_params(w, &self.params)
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<Self> {
        let mut r = OffsetReader::new(r);
        r.magic(NET_MAGIC)?;
        r.version(NET_VERSION)?;
        let at = r.offset();
        let header = r.text(1 << 16, "checkpoint header")?;
        let corrupt = |e: Error| Error::Corrupt {
            offset: at,
            reason: format!("checkpoint header: {e}"),
        };
        let kv = KvMap::parse(&header).map_err(corrupt)?;
        let config = NetworkConfig::from_kv(&kv).map_err(corrupt)?;
        let scaler = LabelScaler {
            mean: kv.parse_required("label_mean").map_err(corrupt)?,
            std: kv.parse_required("label_std").map_err(corrupt)?,
        };
        let epochs_completed = kv.parse_required("epochs_completed").map_err(corrupt)?;
        let camera = ImageConfig::read_kv(&kv).map_err(corrupt)?;
        if camera.validate().is_err() || camera.shape() != config.input {
            return Err(corrupt(Error::InvalidConfig("camera does not match network input".into())));
        }
        let params_at = r.offset();
        let params = read_params_from(&mut r)?;
        r.expect_eof()?;
        let mut net = Self::build(config, 0)?;
        if params.len() != net.params.len() {
            return Err(Error::Corrupt {
                offset: params_at,
                reason: format!("expected {} parameters, found {}", net.params.len(), params.len()),
            });
        }
        for (slot, p) in net.params.iter_mut().zip(params) {
            if slot.name != p.name || slot.value.shape() != p.value.shape() {
                return Err(Error::Corrupt {
                    offset: params_at,
                    reason: format!("parameter `{}` does not match the configured architecture", p.name),
                });
            }
            *slot = p;
        }
        net.scaler = scaler;
        net.epochs_completed = epochs_completed;
        net.camera = camera;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_checkpoint(&mut bytes.as_slice())
    }
}

pub const NET_MAGIC: &[u8; 8] = b"STEERNET";
pub const NET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub conv_dropout: DropoutKind,
    /// Global gradient-norm ceiling per minibatch step; `None` is plain SGD.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 10,
            seed: 0,
            conv_dropout: DropoutKind::Spatial,
            clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    /// Reads `learning_rate`, `batch_size`, `epochs`, `seed` and
    /// `dropout`; absent keys keep their defaults.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let d = Self::default();
        let tc = Self {
            learning_rate: kv.parse_or("learning_rate", d.learning_rate)?,
            batch_size: kv.parse_or("batch_size", d.batch_size)?,
            epochs: kv.parse_or("epochs", d.epochs)?,
            seed: kv.parse_or("seed", d.seed)?,
            conv_dropout: kv.parse_or("dropout", d.conv_dropout)?,
            clip_norm: match kv.get("clip_norm") {
                None | Some("none") => None,
                Some(_) => Some(kv.parse_required("clip_norm")?),
            },
        };
        tc.validate()?;
        Ok(tc)
    }

    pub fn to_kv(&self, kv: &mut KvMap) {
        kv.set("learning_rate", self.learning_rate);
        kv.set("batch_size", self.batch_size);
        kv.set("epochs", self.epochs);
        kv.set("seed", self.seed);
        kv.set("dropout", self.conv_dropout);
        kv.set("clip_norm", self.clip_norm.map_or("none".to_string(), |c| c.to_string()));
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidConfig("clip_norm must be finite and > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Deterministic-mode MSE over the training set after the epoch.
    pub train_mse: f64,
    pub val_mse: Option<f64>,
    /// Mean per-example loss seen by SGD (dropout active).
    pub sgd_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    pub seed: u64,
    pub dropout: DropoutKind,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// Everything except wall-clock timings.
    pub fn trajectory(&self) -> Vec<(usize, f64, Option<f64>, f64)> {
        self.epochs
            .iter()
            .map(|e| (e.epoch, e.train_mse, e.val_mse, e.sgd_loss))
            .collect()
    }

    pub fn initial_mse(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.train_mse)
    }

    pub fn final_mse(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_mse)
    }

    /// First epoch whose training MSE is at most `fraction` of the first
    /// logged value.
    pub fn epochs_to_fraction(&self, fraction: f64) -> Option<usize> {
        let init = self.initial_mse()?;
        self.epochs
            .iter()
            .find(|e| e.train_mse <= fraction * init)
            .map(|e| e.epoch)
    }

    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }
}


/// Per-image zero mean, unit variance. A constant image maps to zeros.
pub fn standardize(image: &Tensor) -> Tensor {
    let n = image.len() as f64;
    let mean = image.data().iter().sum::<f64>() / n;
    let var = image.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = if var > 1e-12 { 1.0 / var.sqrt() } else { 0.0 };
    image.map(|v| (v - mean) * inv)
}
