//! Stage-2 target classification: cosine similarities between a projected
//! prompt embedding and the two separated-channel embeddings, a
//! temperature-scaled sigmoid over their difference, SI-SDR label
//! generation, and projection-head training with plain mini-batch gradient
//! descent.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingVector;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::wave::{si_sdr, WaveBuffer};

const COSINE_EPS: f64 = 1e-12;
const BCE_EPS: f64 = 1e-7;
const LN_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Sigmoid temperature; below one sharpens the output distribution.
    pub temperature: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { temperature: 0.2 }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 || self.temperature > 1.0 {
            return Err(Error::Config {
                field: "classifier.temperature".into(),
                reason: format!("must be in (0, 1], got {}", self.temperature),
            });
        }
        Ok(())
    }
}

/// Cosine similarity with an epsilon-guarded denominator; zero vectors are
/// rejected.
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
            context: "cosine_sim",
        });
    }
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroSignal("cosine_sim"));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb).max(COSINE_EPS))
}

/// Difference of the prompt's similarities to the two channels.
pub fn logit(z_p: &[f64], z_1: &[f64], z_2: &[f64]) -> Result<f64> {
    Ok(cosine_sim(z_p, z_1)? - cosine_sim(z_p, z_2)?)
}

/// Temperature-scaled sigmoid.
pub fn predict_prob(logit: f64, config: &ClassifierConfig) -> f64 {
    sigmoid(logit / config.temperature)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// 1 when the probability strictly exceeds one half.
pub fn predict_label(prob: f64) -> u8 {
    u8::from(prob > 0.5)
}

/// Binary cross-entropy with probability clamped away from 0 and 1.
pub fn bce_loss(prob: f64, label: u8) -> f64 {
    let p = prob.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let y = f64::from(label);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Assignment of two estimates to two references: the permutation with the
/// higher mean SI-SDR, together with the per-pair SI-SDR under it.
/// `permutation[i]` is the estimate index assigned to reference `i`.
pub fn pit_assign(
    estimates: [&WaveBuffer; 2],
    references: [&WaveBuffer; 2],
) -> Result<([usize; 2], [f64; 2])> {
    let m = [
        [
            si_sdr(estimates[0], references[0])?,
            si_sdr(estimates[1], references[0])?,
        ],
        [
            si_sdr(estimates[0], references[1])?,
            si_sdr(estimates[1], references[1])?,
        ],
    ];
    let identity = m[0][0] + m[1][1];
    let swapped = m[0][1] + m[1][0];
    if identity >= swapped {
        Ok(([0, 1], [m[0][0], m[1][1]]))
    } else {
        Ok(([1, 0], [m[0][1], m[1][0]]))
    }
}

/// Training label: 1 when the first separated signal reconstructs the
/// reference better; exact ties go to 0.
pub fn make_label(s1: &WaveBuffer, s2: &WaveBuffer, s_ref: &WaveBuffer) -> Result<u8> {
    Ok(u8::from(si_sdr(s1, s_ref)? > si_sdr(s2, s_ref)?))
}

/// One Stage-2 decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    /// Channel picked as the target: 1 or 2.
    pub pred_index: u8,
    /// Probability that channel 1 is the target.
    pub prob: f64,
    pub sim1: f64,
    pub sim2: f64,
}

/// Full Stage-2 pass over already-projected embeddings: cosine similarities,
/// temperature-scaled sigmoid, argmax decision.
pub fn classify_embeddings(
    z_p: &[f64],
    z_1: &[f64],
    z_2: &[f64],
    config: &ClassifierConfig,
) -> Result<Classification> {
    let sim1 = cosine_sim(z_p, z_1)?;
    let sim2 = cosine_sim(z_p, z_2)?;
    let prob = predict_prob(sim1 - sim2, config);
    Ok(Classification {
        pred_index: if predict_label(prob) == 1 { 1 } else { 2 },
        prob,
        sim1,
        sim2,
    })
}

/// Linear projection with ReLU and layer normalization mapping raw prompt
/// embeddings into the audio embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    pub d_in: usize,
    pub d_out: usize,
    /// Row-major `d_out x d_in`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
pub struct HeadForward {
    pub input: Vec<f64>,
    pub pre_relu: Vec<f64>,
    pub normalized: Vec<f64>,
    pub std: f64,
    pub output: Vec<f64>,
}

impl ProjectionHead {
    pub fn identity(d: usize) -> Self {
        let mut weight = vec![0.0; d * d];
        for i in 0..d {
            weight[i * d + i] = 1.0;
        }
        ProjectionHead {
            d_in: d,
            d_out: d,
            weight,
            bias: vec![0.0; d],
            gamma: vec![1.0; d],
            beta: vec![0.0; d],
        }
    }

    pub fn random(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        use rand::Rng;
        let scale = 1.0 / (d_in as f64).sqrt();
        let weight = (0..d_out * d_in)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        ProjectionHead {
            d_in,
            d_out,
            weight,
            bias: vec![0.0; d_out],
            gamma: vec![1.0; d_out],
            beta: vec![0.0; d_out],
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<HeadForward> {
        if input.len() != self.d_in {
            return Err(Error::LengthMismatch {
                left: input.len(),
                right: self.d_in,
                context: "projection head input",
            });
        }
        let d = self.d_out;
        let mut pre_relu = vec![0.0; d];
        for (i, h) in pre_relu.iter_mut().enumerate() {
            let row = &self.weight[i * self.d_in..(i + 1) * self.d_in];
            *h = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.bias[i];
        }
        let relu: Vec<f64> = pre_relu.iter().map(|&h| h.max(0.0)).collect();
        let mean = relu.iter().sum::<f64>() / d as f64;
        let var = relu.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / d as f64;
        let std = (var + LN_EPS).sqrt();
        let normalized: Vec<f64> = relu.iter().map(|r| (r - mean) / std).collect();
        let output: Vec<f64> = normalized
            .iter()
            .zip(self.gamma.iter().zip(&self.beta))
            .map(|(n, (g, b))| g * n + b)
            .collect();
        Ok(HeadForward {
            input: input.to_vec(),
            pre_relu,
            normalized,
            std,
            output,
        })
    }

    pub fn project(&self, v: &EmbeddingVector) -> Result<Vec<f64>> {
        Ok(self.forward(&v.values)?.output)
    }

    /// Total trainable parameter count.
    pub fn param_len(&self) -> usize {
        self.weight.len() + self.bias.len() + self.gamma.len() + self.beta.len()
    }
}

/// Gradient accumulator with the head's layout.
#[derive(Debug, Clone)]
pub struct HeadGradient {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl HeadGradient {
    pub fn zero(head: &ProjectionHead) -> Self {
        HeadGradient {
            weight: vec![0.0; head.weight.len()],
            bias: vec![0.0; head.bias.len()],
            gamma: vec![0.0; head.gamma.len()],
            beta: vec![0.0; head.beta.len()],
        }
    }

    fn scale(&mut self, s: f64) {
        for v in self
            .weight
            .iter_mut()
            .chain(&mut self.bias)
            .chain(&mut self.gamma)
            .chain(&mut self.beta)
        {
            *v *= s;
        }
    }
}

/// One training example: a raw prompt embedding, the two channel embeddings,
/// and whether channel 1 is the target.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub prompt_raw: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub label: u8,
}

/// Loss and parameter gradient of one sample.
///
/// Backpropagates binary cross-entropy of `sigmoid(logit / T)` through the
/// similarity difference, the layer norm, the ReLU, and the linear map.
pub fn sample_loss_and_grad(
    head: &ProjectionHead,
    sample: &TrainSample,
    config: &ClassifierConfig,
    grad: &mut HeadGradient,
) -> Result<f64> {
    let fwd = head.forward(&sample.prompt_raw)?;
    let z = &fwd.output;

    let nz: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nz == 0.0 {
        return Err(Error::ZeroSignal("projected prompt embedding"));
    }
    let sim = |other: &[f64]| -> Result<(f64, f64)> {
        let no: f64 = other.iter().map(|v| v * v).sum::<f64>().sqrt();
        if no == 0.0 {
            return Err(Error::ZeroSignal("channel embedding"));
        }
        let dot: f64 = z.iter().zip(other).map(|(a, b)| a * b).sum();
        Ok((dot / (nz * no).max(COSINE_EPS), no))
    };
    let (sim1, n1) = sim(&sample.z1)?;
    let (sim2, n2) = sim(&sample.z2)?;
    let logit = sim1 - sim2;
    let prob = sigmoid(logit / config.temperature);
    let loss = bce_loss(prob, sample.label);

    // d loss / d logit for BCE(sigmoid(logit/T)).
    let dlogit = (prob - f64::from(sample.label)) / config.temperature;

    // d cos(z, a) / dz = a/(|z||a|) - cos * z/|z|^2.
    let d = head.d_out;
    let mut dz = vec![0.0; d];
    for i in 0..d {
        let term1 = sample.z1[i] / (nz * n1).max(COSINE_EPS) - sim1 * z[i] / (nz * nz);
        let term2 = sample.z2[i] / (nz * n2).max(COSINE_EPS) - sim2 * z[i] / (nz * nz);
        dz[i] = dlogit * (term1 - term2);
    }

    // Through gamma/beta.
    let mut dn = vec![0.0; d];
    for i in 0..d {
        grad.gamma[i] += dz[i] * fwd.normalized[i];
        grad.beta[i] += dz[i];
        dn[i] = dz[i] * head.gamma[i];
    }

    // Layer-norm backward.
    let mean_dn = dn.iter().sum::<f64>() / d as f64;
    let mean_dn_n = dn
        .iter()
        .zip(&fwd.normalized)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / d as f64;
    let mut dh = vec![0.0; d];
    for i in 0..d {
        let dr = (dn[i] - mean_dn - fwd.normalized[i] * mean_dn_n) / fwd.std;
        dh[i] = if fwd.pre_relu[i] > 0.0 { dr } else { 0.0 };
    }

    // Linear backward.
    for (i, &dhi) in dh.iter().enumerate() {
        if dhi == 0.0 {
            continue;
        }
        let row = &mut grad.weight[i * head.d_in..(i + 1) * head.d_in];
        for (w, x) in row.iter_mut().zip(&fwd.input) {
            *w += dhi * x;
        }
        grad.bias[i] += dhi;
    }

    Ok(loss)
}

/// Mean loss and gradient over a batch.
pub fn batch_loss_and_grad(
    head: &ProjectionHead,
    batch: &[&TrainSample],
    config: &ClassifierConfig,
) -> Result<(f64, HeadGradient)> {
    let mut grad = HeadGradient::zero(head);
    let mut loss = 0.0;
    for sample in batch {
        loss += sample_loss_and_grad(head, sample, config, &mut grad)?;
    }
    let n = batch.len().max(1) as f64;
    grad.scale(1.0 / n);
    Ok((loss / n, grad))
}

/// Mean loss only (no gradient), for plateau evaluation.
pub fn dataset_loss(
    head: &ProjectionHead,
    samples: &[TrainSample],
    config: &ClassifierConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let z = head.forward(&s.prompt_raw)?.output;
        let l = logit(&z, &s.z1, &s.z2)?;
        total += bce_loss(predict_prob(l, config), s.label);
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Fraction of samples the head classifies correctly.
pub fn dataset_accuracy(
    head: &ProjectionHead,
    samples: &[TrainSample],
    config: &ClassifierConfig,
) -> Result<f64> {
    let mut correct = 0usize;
    for s in samples {
        let z = head.forward(&s.prompt_raw)?.output;
        let l = logit(&z, &s.z1, &s.z2)?;
        if predict_label(predict_prob(l, config)) == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Halve the learning rate after this many epoch-end evaluations without
    /// improvement.
    pub plateau_patience: usize,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 32,
            epochs: 40,
            plateau_patience: 3,
            seed: 0,
        }
    }
}

/// One loss-trace row per optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

/// Mini-batch gradient descent with momentum and halve-on-plateau. Batch
/// order is a deterministic function of the schedule seed. A zero-epoch
/// schedule returns the head unchanged.
pub fn train_projection(
    samples: &[TrainSample],
    mut head: ProjectionHead,
    config: &ClassifierConfig,
    schedule: &TrainSchedule,
) -> Result<(ProjectionHead, Vec<TraceRow>)> {
    if samples.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    for s in samples {
        if s.prompt_raw.len() != head.d_in || s.z1.len() != head.d_out || s.z2.len() != head.d_out {
            return Err(Error::Training(format!(
                "sample dimensions ({}, {}, {}) do not match head ({} -> {})",
                s.prompt_raw.len(),
                s.z1.len(),
                s.z2.len(),
                head.d_in,
                head.d_out
            )));
        }
    }
    config.validate()?;

    let mut trace = Vec::new();
    let mut velocity = HeadGradient::zero(&head);
    let mut lr = schedule.learning_rate;
    let mut best_eval = f64::INFINITY;
    let mut stale = 0usize;
    let mut step = 0usize;
    let mut rng = stream_rng(schedule.seed, "train-shuffle", 0);
    let batch_size = schedule.batch_size.max(1);

    for _epoch in 0..schedule.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (loss, grad) = batch_loss_and_grad(&head, &batch, config)?;
            let apply = |p: &mut [f64], g: &[f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    v[i] = schedule.momentum * v[i] - lr * g[i];
                    p[i] += v[i];
                }
            };
            apply(&mut head.weight, &grad.weight, &mut velocity.weight);
            apply(&mut head.bias, &grad.bias, &mut velocity.bias);
            apply(&mut head.gamma, &grad.gamma, &mut velocity.gamma);
            apply(&mut head.beta, &grad.beta, &mut velocity.beta);
            trace.push(TraceRow {
                step,
                loss,
                learning_rate: lr,
            });
            step += 1;
        }
        let eval = dataset_loss(&head, samples, config)?;
        if eval + 1e-9 < best_eval {
            best_eval = eval;
            stale = 0;
        } else {
            stale += 1;
            if stale >= schedule.plateau_patience {
                lr *= 0.5;
                stale = 0;
            }
        }
    }
    Ok((head, trace))
}

const HEAD_MAGIC: &[u8; 4] = b"PHED";
const HEAD_VERSION: u16 = 1;

/// Checkpoint: header then W, b, gamma, beta as little-endian f32.
pub fn save_head(path: &Path, head: &ProjectionHead) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
    file.write_all(HEAD_MAGIC)?;
    file.write_all(&HEAD_VERSION.to_le_bytes())?;
    file.write_all(&(head.d_in as u32).to_le_bytes())?;
    file.write_all(&(head.d_out as u32).to_le_bytes())?;
    for v in head
        .weight
        .iter()
        .chain(&head.bias)
        .chain(&head.gamma)
        .chain(&head.beta)
    {
        file.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn load_head(path: &Path) -> Result<ProjectionHead> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != HEAD_MAGIC {
        return Err(Error::StoreFormat(format!(
            "{}: bad head magic {magic:?}",
            path.display()
        )));
    }
    let mut u16buf = [0u8; 2];
    file.read_exact(&mut u16buf)?;
    if u16::from_le_bytes(u16buf) != HEAD_VERSION {
        return Err(Error::StoreFormat("unsupported head version".into()));
    }
    let mut u32buf = [0u8; 4];
    file.read_exact(&mut u32buf)?;
    let d_in = u32::from_le_bytes(u32buf) as usize;
    file.read_exact(&mut u32buf)?;
    let d_out = u32::from_le_bytes(u32buf) as usize;
    let mut head = ProjectionHead {
        d_in,
        d_out,
        weight: vec![0.0; d_out * d_in],
        bias: vec![0.0; d_out],
        gamma: vec![0.0; d_out],
        beta: vec![0.0; d_out],
    };
    {
        let params: Vec<&mut Vec<f64>> = vec![
            &mut head.weight,
            &mut head.bias,
            &mut head.gamma,
            &mut head.beta,
        ];
        for vec in params {
            for v in vec.iter_mut() {
                file.read_exact(&mut u32buf)
                    .map_err(|_| Error::StoreFormat("truncated head checkpoint".into()))?;
                *v = f64::from(f32::from_le_bytes(u32buf));
            }
        }
    }
    Ok(head)
}

/// Write the loss trace as `step,loss,lr` CSV.
pub fn save_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut out = String::from("step,loss,lr\n");
    for row in trace {
        out.push_str(&format!(
            "{},{},{}\n",
            row.step, row.loss, row.learning_rate
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io_at(path, e))
}
