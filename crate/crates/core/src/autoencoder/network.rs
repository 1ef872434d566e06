use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, ConvGeom};
use crate::error::{Result, RomError};

/// Shape of a convolutional autoencoder: `channels[0]` is the input channel
/// count, each further entry the output channels of one stride-2 conv layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub channels: Vec<usize>,
    pub length: usize,
    pub latent: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Architecture {
    /// Kernel 10, stride 2, padding 4: each layer halves the length.
    pub fn new(channels: Vec<usize>, length: usize, latent: usize) -> Result<Self> {
        let a = Architecture { channels, length, latent, kernel: 10, stride: 2, padding: 4 };
        a.validate()?;
        Ok(a)
    }

    /// Four layers with `hidden` channels and `last` channels at the bottleneck.
    pub fn ladder(n_v: usize, hidden: usize, last: usize, length: usize, latent: usize) -> Result<Self> {
        Self::new(vec![n_v, hidden, hidden, hidden, last], length, latent)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.channels.len() < 2 || self.channels.contains(&0) {
            errs.push("need an input channel count and at least one positive layer width".to_string());
        }
        if self.latent == 0 {
            errs.push("latent dimension must be positive".into());
        }
        if self.stride == 0 || self.kernel == 0 {
            errs.push("kernel and stride must be positive".into());
        }
        if errs.is_empty() {
            let mut l = self.length;
            for _ in 1..self.channels.len() {
                if l == 0 || l + 2 * self.padding < self.kernel || self.geom().out_len(l) * self.stride != l {
                    errs.push(format!(
                        "length {} does not halve cleanly through {} layers",
                        self.length,
                        self.channels.len() - 1
                    ));
                    break;
                }
                l = self.geom().out_len(l);
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(RomError::Config(errs))
        }
    }

    pub(crate) fn geom(&self) -> ConvGeom {
        ConvGeom { kernel: self.kernel, stride: self.stride, padding: self.padding }
    }

    pub fn n_layers(&self) -> usize {
        self.channels.len() - 1
    }

    /// Feature length entering conv layer `i` (and leaving its mirror).
    pub fn length_at(&self, i: usize) -> usize {
        self.length >> i
    }

    /// Flattened size at the bottleneck.
    pub fn bottleneck(&self) -> usize {
        self.channels[self.n_layers()] * self.length_at(self.n_layers())
    }

    pub fn sample_len(&self) -> usize {
        self.channels[0] * self.length
    }

    fn slots(&self) -> Layout {
        let mut off = 0;
        let mut take = |len: usize| {
            let s = Slot { offset: off, len };
            off += len;
            s
        };
        let n = self.n_layers();
        let k = self.kernel;
        let enc_conv = (0..n).map(|i| (take(self.channels[i + 1] * self.channels[i] * k), take(self.channels[i + 1]))).collect();
        let enc_fc = (take(self.latent * self.bottleneck()), take(self.latent));
        let dec_fc = (take(self.bottleneck() * self.latent), take(self.bottleneck()));
        // mirror layer m maps channels[n - m] -> channels[n - m - 1]
        let dec_conv =
            (0..n).map(|m| (take(self.channels[n - m] * self.channels[n - m - 1] * k), take(self.channels[n - m - 1]))).collect();
        Layout { enc_conv, enc_fc, dec_fc, dec_conv, total: off }
    }

    pub fn n_params(&self) -> usize {
        self.slots().total
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    offset: usize,
    len: usize,
}

impl Slot {
    fn of<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.len]
    }

    fn of_mut<'a>(&self, p: &'a mut [f64]) -> &'a mut [f64] {
        &mut p[self.offset..self.offset + self.len]
    }
}

#[derive(Debug, Clone)]
struct Layout {
    enc_conv: Vec<(Slot, Slot)>,
    enc_fc: (Slot, Slot),
    dec_fc: (Slot, Slot),
    dec_conv: Vec<(Slot, Slot)>,
    total: usize,
}

/// Encoder: conv+tanh layers, flatten, linear map to the latent space.
/// Decoder: linear+tanh, then transposed convs with tanh on all but the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    params: Vec<f64>,
}

/// Intermediate values of a forward pass.
pub(crate) struct Tape {
    batch: usize,
    enc_cols: Vec<Vec<f64>>,
    enc_act: Vec<Vec<f64>>,
    flat: Vec<f64>,
    latent: Vec<f64>,
    dec_fc_out: Vec<f64>,
    dec_act: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.dec_act.last().expect("at least one layer")
    }
}

/// Copies row-major samples `(batch, c, len)` into channel-major layout.
pub(crate) fn to_channel_major(x: &[f64], c: usize, batch: usize, len: usize) -> Vec<f64> {
    layers::unflatten(x, c, batch, len)
}

pub(crate) fn from_channel_major(a: &[f64], c: usize, batch: usize, len: usize) -> Vec<f64> {
    layers::flatten(a, c, batch, len)
}

// Per-layer conv column buffers, flattened bottleneck input, activations, latent codes.
type EncodeTape = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

impl Network {
    /// Uniform initialisation in `+-1/sqrt(fan_in)` from a seeded stream.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = arch.slots();
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = arch.kernel;
        let n = arch.n_layers();
        let mut fill = |slot: Slot, fan_in: usize, params: &mut [f64]| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in slot.of_mut(params) {
                *v = rng.random_range(-bound..bound);
            }
        };
        for (i, (w, b)) in layout.enc_conv.iter().enumerate() {
            fill(*w, arch.channels[i] * k, &mut params);
            fill(*b, arch.channels[i] * k, &mut params);
        }
        fill(layout.enc_fc.0, arch.bottleneck(), &mut params);
        fill(layout.enc_fc.1, arch.bottleneck(), &mut params);
        fill(layout.dec_fc.0, arch.latent, &mut params);
        fill(layout.dec_fc.1, arch.latent, &mut params);
        for (m, (w, b)) in layout.dec_conv.iter().enumerate() {
            // fan-in of a transposed conv counts its output channels
            fill(*w, arch.channels[n - m - 1] * k, &mut params);
            fill(*b, arch.channels[n - m - 1] * k, &mut params);
        }
        Ok(Network { arch, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.n_params() {
            return Err(RomError::DimensionMismatch { expected: arch.n_params(), got: params.len() });
        }
        Ok(Network { arch, params })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        let n = arch.n_params();
        Self::from_params(arch, vec![0.0; n])
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check_batch(&self, x: &[f64], per: usize) -> Result<usize> {
        if per == 0 || !x.len().is_multiple_of(per) {
            return Err(RomError::DimensionMismatch { expected: per, got: x.len() });
        }
        Ok(x.len() / per)
    }

    /// Encodes row-major samples `(batch, n_v, n_x)`; returns `batch x latent`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = self.check_batch(x, self.arch.sample_len())?;
        Ok(self.encode_tape(x, batch).3)
    }

    /// Decodes `batch x latent` into row-major samples.
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        let batch = self.check_batch(z, self.arch.latent)?;
        let (_, act) = self.decode_tape(z, batch);
        let c0 = self.arch.channels[0];
        Ok(from_channel_major(act.last().expect("layers"), c0, batch, self.arch.length))
    }

    fn encode_tape(&self, x: &[f64], batch: usize) -> EncodeTape {
        let a = &self.arch;
        let lay = a.slots();
        let g = a.geom();
        let mut act = vec![to_channel_major(x, a.channels[0], batch, a.length)];
        let mut cols_all = Vec::with_capacity(a.n_layers());
        for (i, (w, b)) in lay.enc_conv.iter().enumerate() {
            let mut cols = Vec::new();
            let mut y = layers::conv_forward(
                &act[i],
                w.of(&self.params),
                b.of(&self.params),
                a.channels[i],
                a.channels[i + 1],
                batch,
                a.length_at(i),
                g,
                &mut cols,
            );
            layers::tanh_inplace(&mut y);
            cols_all.push(cols);
            act.push(y);
        }
        let n = a.n_layers();
        let flat = layers::flatten(&act[n], a.channels[n], batch, a.length_at(n));
        let latent = layers::dense_forward(
            &flat,
            lay.enc_fc.0.of(&self.params),
            lay.enc_fc.1.of(&self.params),
            a.bottleneck(),
            a.latent,
            batch,
        );
        (cols_all, flat, act, latent)
    }

    fn decode_tape(&self, z: &[f64], batch: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let a = &self.arch;
        let lay = a.slots();
        let g = a.geom();
        let n = a.n_layers();
        let mut h = layers::dense_forward(z, lay.dec_fc.0.of(&self.params), lay.dec_fc.1.of(&self.params), a.latent, a.bottleneck(), batch);
        layers::tanh_inplace(&mut h);
        let mut act = vec![layers::unflatten(&h, a.channels[n], batch, a.length_at(n))];
        for (m, (w, b)) in lay.dec_conv.iter().enumerate() {
            let (c_in, c_out) = (a.channels[n - m], a.channels[n - m - 1]);
            let mut y = layers::convt_forward(
                &act[m],
                w.of(&self.params),
                b.of(&self.params),
                c_in,
                c_out,
                batch,
                a.length_at(n - m - 1),
                g,
            );
            if m + 1 < n {
                layers::tanh_inplace(&mut y);
            }
            act.push(y);
        }
        (h, act)
    }

    pub(crate) fn forward(&self, x: &[f64], batch: usize) -> Tape {
        let (enc_cols, flat, mut enc_act, latent) = self.encode_tape(x, batch);
        let (dec_fc_out, dec_act) = self.decode_tape(&latent, batch);
        // the channel-major input is not needed by the backward pass
        enc_act[0] = Vec::new();
        Tape { batch, enc_cols, enc_act, flat, latent, dec_fc_out, dec_act }
    }

    /// Backpropagates `d_out` (gradient w.r.t. the channel-major output)
    /// and accumulates into `grad`.
    pub(crate) fn backward(&self, tape: &Tape, d_out: Vec<f64>, grad: &mut [f64]) {
        let a = &self.arch;
        let lay = a.slots();
        let g = a.geom();
        let n = a.n_layers();
        let batch = tape.batch;
        let mut scratch = Vec::new();
        let mut d = d_out;
        for m in (0..n).rev() {
            let (c_in, c_out) = (a.channels[n - m], a.channels[n - m - 1]);
            if m + 1 < n {
                layers::tanh_backward(&tape.dec_act[m + 1], &mut d);
            }
            let (w, b) = lay.dec_conv[m];
            let (gw, gb) = split_two(grad, w, b);
            d = layers::convt_backward(
                &d,
                &tape.dec_act[m],
                w.of(&self.params),
                c_in,
                c_out,
                batch,
                a.length_at(n - m - 1),
                g,
                gw,
                gb,
                &mut scratch,
            );
        }
        let mut dh = layers::flatten(&d, a.channels[n], batch, a.length_at(n));
        layers::tanh_backward(&tape.dec_fc_out, &mut dh);
        let (gw, gb) = split_two(grad, lay.dec_fc.0, lay.dec_fc.1);
        let dz = layers::dense_backward(&dh, &tape.latent, lay.dec_fc.0.of(&self.params), a.latent, a.bottleneck(), batch, gw, gb, true)
            .expect("requested");
        let (gw, gb) = split_two(grad, lay.enc_fc.0, lay.enc_fc.1);
        let dflat = layers::dense_backward(&dz, &tape.flat, lay.enc_fc.0.of(&self.params), a.bottleneck(), a.latent, batch, gw, gb, true)
            .expect("requested");
        let mut d = layers::unflatten(&dflat, a.channels[n], batch, a.length_at(n));
        for i in (0..n).rev() {
            layers::tanh_backward(&tape.enc_act[i + 1], &mut d);
            let (w, b) = lay.enc_conv[i];
            let (gw, gb) = split_two(grad, w, b);
            match layers::conv_backward(
                &d,
                &tape.enc_cols[i],
                w.of(&self.params),
                a.channels[i],
                a.channels[i + 1],
                batch,
                a.length_at(i),
                g,
                gw,
                gb,
                i > 0,
            ) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }

    /// Per-sample loss `||x - D(E(x))||^2` summed over the batch, with the
    /// gradient of `scale * loss` accumulated into `grad`.
    pub(crate) fn loss_and_grad(&self, x: &[f64], batch: usize, scale: f64, grad: &mut [f64]) -> f64 {
        let a = &self.arch;
        let tape = self.forward(x, batch);
        let target = to_channel_major(x, a.channels[0], batch, a.length);
        let mut d: Vec<f64> = tape.output().iter().zip(&target).map(|(y, t)| y - t).collect();
        let loss: f64 = d.iter().map(|v| v * v).sum();
        d.iter_mut().for_each(|v| *v *= 2.0 * scale);
        self.backward(&tape, d, grad);
        loss
    }

    /// Sum of per-sample squared reconstruction errors.
    pub fn loss(&self, x: &[f64]) -> Result<f64> {
        let batch = self.check_batch(x, self.arch.sample_len())?;
        let tape = self.forward(x, batch);
        let target = to_channel_major(x, self.arch.channels[0], batch, self.arch.length);
        Ok(tape.output().iter().zip(&target).map(|(y, t)| (y - t) * (y - t)).sum())
    }

    /// Gradient of the mean per-sample loss.
    pub fn gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let batch = self.check_batch(x, self.arch.sample_len())?;
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.loss_and_grad(x, batch, 1.0 / batch as f64, &mut grad);
        Ok((loss / batch as f64, grad))
    }
}

fn split_two(grad: &mut [f64], w: Slot, b: Slot) -> (&mut [f64], &mut [f64]) {
    debug_assert_eq!(w.offset + w.len, b.offset);
    let (head, tail) = grad[w.offset..b.offset + b.len].split_at_mut(w.len);
    (head, tail)
}
