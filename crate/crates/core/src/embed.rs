//! Cost-predictive latent embedding: an autoencoder over heightmaps trained
//! jointly with a two-layer sigmoid cost predictor whose Lipschitz bound is
//! pulled toward a target value.
//!
//! The joint loss is `L = L_rec + a1*L_pred + a2*L_Lip + a3*L_norm` where
//! `L_rec` is mean pixel squared reconstruction error, `L_pred` the squared
//! cost prediction error, `L_Lip = (gamma_bar - gamma_target)^2` with
//! `gamma_bar = |psi0|_2 |psi1|_2 / 16`, and `L_norm` the mean squared latent
//! norm. Gradients flow through all four terms, including the spectral norms
//! (via their `u v^T` subgradient).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Heightmap;
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, spectral_norm, spectral_norm_warm, Activation, AdamState, Matrix, Mlp, MlpGrads,
    MlpSpec,
};
use crate::ot::DiscreteDistribution;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub predictor_hidden: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Weight on the cost-prediction term.
    pub alpha_pred: f64,
    /// Weight on the Lipschitz-bound term.
    pub alpha_lip: f64,
    /// Weight on the latent-norm term.
    pub alpha_norm: f64,
    /// Target for the predictor's Lipschitz upper bound.
    pub gamma_target: f64,
    /// Epoch budget for the first training round; later rounds fine-tune.
    pub first_epochs: usize,
    pub later_epochs: usize,
    /// Power iterations per training step (warm-started) and for reported
    /// values.
    pub power_iters_train: usize,
    pub power_iters_report: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            latent_dim: 16,
            hidden: 64,
            predictor_hidden: 16,
            lr: 1e-3,
            batch_size: 4,
            alpha_pred: 0.1,
            alpha_lip: 1.0,
            alpha_norm: 0.1,
            gamma_target: 0.04,
            first_epochs: 400,
            later_epochs: 50,
            power_iters_train: 5,
            power_iters_report: 100,
        }
    }
}

/// Encoder, decoder and cost predictor over `g x g` heightmaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedModel {
    g: usize,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub predictor: Mlp,
}

impl EmbedModel {
    pub fn init<R: Rng + ?Sized>(g: usize, cfg: &EmbedConfig, rng: &mut R) -> Self {
        let pixels = g * g;
        let encoder = Mlp::init(
            MlpSpec::new(
                vec![pixels, cfg.hidden, cfg.latent_dim],
                vec![Activation::Sigmoid, Activation::Identity],
            )
            .expect("valid encoder spec"),
            rng,
        );
        let decoder = Mlp::init(
            MlpSpec::new(
                vec![cfg.latent_dim, cfg.hidden, pixels],
                vec![Activation::Sigmoid, Activation::Sigmoid],
            )
            .expect("valid decoder spec"),
            rng,
        );
        let predictor = Mlp::init(
            MlpSpec::new(
                vec![cfg.latent_dim, cfg.predictor_hidden, 1],
                vec![Activation::Sigmoid, Activation::Sigmoid],
            )
            .expect("valid predictor spec"),
            rng,
        );
        EmbedModel {
            g,
            encoder,
            decoder,
            predictor,
        }
    }

    pub fn grid_size(&self) -> usize {
        self.g
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// `z = g(E)`.
    pub fn encode(&self, h: &Heightmap) -> Vec<f64> {
        self.encoder.eval(h.data()).expect("grid size fixed at init")
    }

    /// Decoded heightmap; sigmoid output keeps every pixel in (0, 1).
    pub fn decode(&self, z: &[f64]) -> Heightmap {
        let pixels = self.decoder.eval(z).expect("latent dim fixed at init");
        Heightmap::new(self.g, pixels).expect("sigmoid output is in range")
    }

    /// Predicted cost in (0, 1).
    pub fn predict_cost(&self, z: &[f64]) -> f64 {
        self.predictor.eval(z).expect("latent dim fixed at init")[0]
    }

    /// Predicted cost plus its gradient with respect to the latent.
    pub fn predict_cost_grad(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let (y, cache) = self.predictor.forward(z).expect("latent dim fixed");
        let (_, grad_z) = self
            .predictor
            .backward(&cache, &[1.0])
            .expect("cache fresh");
        (y[0], grad_z)
    }

    /// `|psi0|_2 |psi1|_2 / 16` at report precision.
    pub fn lipschitz_upper_bound(&self, power_iters: usize) -> f64 {
        lipschitz_upper_bound(
            self.predictor.weight(0),
            self.predictor.weight(1),
            power_iters,
        )
    }
}

/// The predictor's Lipschitz upper bound from its two weight matrices. The
/// 1/16 comes from the two sigmoid layers, each 1/4-Lipschitz.
pub fn lipschitz_upper_bound(psi0: &Matrix, psi1: &Matrix, power_iters: usize) -> f64 {
    spectral_norm(psi0, power_iters).sigma * spectral_norm(psi1, power_iters).sigma / 16.0
}

/// Loss value split by term, plus the bound it was computed with.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub rec: f64,
    pub pred: f64,
    pub lip: f64,
    pub norm: f64,
    pub gamma_bar: f64,
}

/// Gradients for all three networks.
#[derive(Debug)]
pub struct EmbedGrads {
    pub encoder: MlpGrads,
    pub decoder: MlpGrads,
    pub predictor: MlpGrads,
}

/// Persistent left singular vectors that warm-start the training-time power
/// iteration.
#[derive(Debug, Clone, Default)]
pub struct SpectralWarm {
    u0: Option<Vec<f64>>,
    u1: Option<Vec<f64>>,
}

/// Joint loss and gradients over a batch of `(heightmap, true cost)` pairs.
pub fn embedding_loss(
    model: &EmbedModel,
    batch: &[(&Heightmap, f64)],
    cfg: &EmbedConfig,
    power_iters: usize,
    warm: Option<&mut SpectralWarm>,
) -> Result<(LossBreakdown, EmbedGrads)> {
    if batch.is_empty() {
        return Err(Error::usage("embedding loss needs a non-empty batch"));
    }
    if batch.iter().any(|&(_, c)| !(0.0..=1.0).contains(&c)) {
        return Err(Error::usage("true costs must lie in [0, 1]"));
    }

    let b = batch.len() as f64;
    let mut grads = EmbedGrads {
        encoder: MlpGrads::zeros_like(&model.encoder),
        decoder: MlpGrads::zeros_like(&model.decoder),
        predictor: MlpGrads::zeros_like(&model.predictor),
    };
    let (mut rec, mut pred, mut norm) = (0.0, 0.0, 0.0);

    for &(h, cost) in batch {
        let x = h.data();
        let (z, enc_cache) = model.encoder.forward(x)?;
        let (xhat, dec_cache) = model.decoder.forward(&z)?;
        let (chat, pred_cache) = model.predictor.forward(&z)?;

        // per-image sum of squared pixel errors, averaged over the batch.
        // Normalizing by the pixel count instead starves the reconstruction
        // gradient against the latent-norm penalty and the latent space
        // collapses to a single point.
        let mut d_xhat = vec![0.0; xhat.len()];
        let mut rec_i = 0.0;
        for ((d, xh), xv) in d_xhat.iter_mut().zip(&xhat).zip(x) {
            let e = xh - xv;
            rec_i += e * e;
            *d = 2.0 * e / b;
        }
        rec += rec_i / b;
        let (dec_grads, dz_rec) = model.decoder.backward(&dec_cache, &d_xhat)?;
        grads.decoder.accumulate(&dec_grads);

        let e_pred = chat[0] - cost;
        pred += e_pred * e_pred / b;
        let d_chat = [2.0 * e_pred * cfg.alpha_pred / b];
        let (pred_grads, dz_pred) = model.predictor.backward(&pred_cache, &d_chat)?;
        grads.predictor.accumulate(&pred_grads);

        norm += z.iter().map(|v| v * v).sum::<f64>() / b;

        let dz: Vec<f64> = (0..z.len())
            .map(|i| dz_rec[i] + dz_pred[i] + 2.0 * z[i] * cfg.alpha_norm / b)
            .collect();
        let (enc_grads, _) = model.encoder.backward(&enc_cache, &dz)?;
        grads.encoder.accumulate(&enc_grads);
    }

    // Lipschitz term: differentiate through both spectral norms.
    let psi0 = model.predictor.weight(0);
    let psi1 = model.predictor.weight(1);
    let (s0, s1) = match warm {
        Some(w) => {
            let s0 = spectral_norm_warm(psi0, power_iters, w.u0.as_deref());
            let s1 = spectral_norm_warm(psi1, power_iters, w.u1.as_deref());
            w.u0 = Some(s0.u.clone());
            w.u1 = Some(s1.u.clone());
            (s0, s1)
        }
        None => (
            spectral_norm(psi0, power_iters),
            spectral_norm(psi1, power_iters),
        ),
    };
    let gamma_bar = s0.sigma * s1.sigma / 16.0;
    let lip = (gamma_bar - cfg.gamma_target).powi(2);
    let d_gamma = 2.0 * (gamma_bar - cfg.gamma_target) * cfg.alpha_lip;
    let g0 = &mut grads.predictor.weights[0];
    for r in 0..g0.rows() {
        for c in 0..g0.cols() {
            let v = g0.get(r, c) + d_gamma * (s1.sigma / 16.0) * s0.u[r] * s0.v[c];
            g0.set(r, c, v);
        }
    }
    let g1 = &mut grads.predictor.weights[1];
    for r in 0..g1.rows() {
        for c in 0..g1.cols() {
            let v = g1.get(r, c) + d_gamma * (s0.sigma / 16.0) * s1.u[r] * s1.v[c];
            g1.set(r, c, v);
        }
    }

    let total = rec + cfg.alpha_pred * pred + cfg.alpha_lip * lip + cfg.alpha_norm * norm;
    if !total.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite embedding loss: rec={rec} pred={pred} lip={lip} norm={norm}"
        )));
    }
    Ok((
        LossBreakdown {
            total,
            rec,
            pred,
            lip,
            norm,
            gamma_bar,
        },
        grads,
    ))
}

/// Adam states for the three networks plus the persistent power-iteration
/// vectors. Lives as long as the model does so later training rounds
/// fine-tune instead of restarting.
#[derive(Debug)]
pub struct EmbedOptimizer {
    enc: AdamState,
    dec: AdamState,
    pred: AdamState,
    warm: SpectralWarm,
}

impl EmbedOptimizer {
    pub fn new(model: &EmbedModel) -> Self {
        EmbedOptimizer {
            enc: AdamState::new(&model.encoder),
            dec: AdamState::new(&model.decoder),
            pred: AdamState::new(&model.predictor),
            warm: SpectralWarm::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedTrainStats {
    pub epochs: usize,
    pub epoch_loss: Vec<f64>,
    pub final_loss: Option<LossBreakdown>,
}

/// Mini-batch Adam on the joint loss. `costs[i]` labels `maps[i]`.
pub fn train_embedding<R: Rng + ?Sized>(
    model: &mut EmbedModel,
    opt: &mut EmbedOptimizer,
    maps: &[Heightmap],
    costs: &[f64],
    epochs: usize,
    cfg: &EmbedConfig,
    rng: &mut R,
) -> Result<EmbedTrainStats> {
    if maps.len() != costs.len() {
        return Err(Error::usage("each environment needs a cost label"));
    }
    if maps.is_empty() {
        return Err(Error::usage("cannot train on an empty environment set"));
    }

    let mut stats = EmbedTrainStats {
        epochs,
        epoch_loss: Vec::with_capacity(epochs),
        final_loss: None,
    };
    let mut indices: Vec<usize> = (0..maps.len()).collect();
    let mut initial_loss: Option<f64> = None;
    let mut high_loss_streak = 0usize;

    for epoch in 0..epochs {
        indices.shuffle(rng);
        let mut epoch_total = 0.0;
        let mut batches = 0usize;
        let mut last = None;
        for chunk in indices.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<(&Heightmap, f64)> =
                chunk.iter().map(|&i| (&maps[i], costs[i])).collect();
            let (loss, grads) =
                embedding_loss(model, &batch, cfg, cfg.power_iters_train, Some(&mut opt.warm))?;
            adam_step(&mut model.encoder, &grads.encoder, &mut opt.enc, cfg.lr)?;
            adam_step(&mut model.decoder, &grads.decoder, &mut opt.dec, cfg.lr)?;
            adam_step(&mut model.predictor, &grads.predictor, &mut opt.pred, cfg.lr)?;
            epoch_total += loss.total;
            batches += 1;
            last = Some(loss);
        }
        let mean_loss = epoch_total / batches as f64;
        stats.epoch_loss.push(mean_loss);
        stats.final_loss = last;

        let baseline = *initial_loss.get_or_insert(mean_loss);
        if mean_loss > 10.0 * baseline && epoch > 0 {
            high_loss_streak += 1;
            if high_loss_streak >= 3 {
                return Err(Error::numeric(format!(
                    "embedding training diverged: epoch {epoch} loss {mean_loss} \
                     vs initial {baseline}"
                )));
            }
        } else {
            high_loss_streak = 0;
        }
    }
    Ok(stats)
}

/// Post-hoc evaluation over a whole set, at report precision.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmbedEval {
    pub recon_mse: f64,
    pub pred_mse: f64,
    pub gamma_bar: f64,
    pub mean_latent_norm: f64,
}

pub fn evaluate_embedding(
    model: &EmbedModel,
    maps: &[Heightmap],
    costs: &[f64],
    cfg: &EmbedConfig,
) -> EmbedEval {
    let pixels = (model.g * model.g) as f64;
    let n = maps.len() as f64;
    let (mut rec, mut pred, mut norm) = (0.0, 0.0, 0.0);
    for (h, &c) in maps.iter().zip(costs) {
        let z = model.encode(h);
        let xhat = model.decode(&z);
        rec += h
            .data()
            .iter()
            .zip(xhat.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / pixels
            / n;
        let e = model.predict_cost(&z) - c;
        pred += e * e / n;
        norm += z.iter().map(|v| v * v).sum::<f64>().sqrt() / n;
    }
    EmbedEval {
        recon_mse: rec,
        pred_mse: pred,
        gamma_bar: model.lipschitz_upper_bound(cfg.power_iters_report),
        mean_latent_norm: norm,
    }
}

/// Predicted cost of every environment under the current model.
pub fn predicted_costs(model: &EmbedModel, maps: &[Heightmap]) -> Vec<f64> {
    maps.iter()
        .map(|h| model.predict_cost(&model.encode(h)))
        .collect()
}

/// The empirical latent distribution: one atom per environment, uniform
/// weights.
pub fn build_latent_distribution(
    model: &EmbedModel,
    maps: &[Heightmap],
) -> Result<DiscreteDistribution> {
    if maps.is_empty() {
        return Err(Error::usage(
            "cannot build a latent distribution from an empty set",
        ));
    }
    DiscreteDistribution::uniform(maps.iter().map(|h| model.encode(h)).collect())
}
