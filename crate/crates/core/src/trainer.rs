//! Self-supervised one-step forecasting with early stopping.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, Graph, Tensor, DEFAULT_LR};
use crate::data::{Dataset, Split, Triplet, VitalSeries, N_FEATURES};
use crate::encoder::{Encoder, Mode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub samples_per_epoch: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub val_fraction: f64,
    pub seed: u64,
    /// Cut each drawn series at a random timestamp instead of the last one.
    pub random_cut: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: DEFAULT_LR,
            batch_size: 32,
            samples_per_epoch: 10240,
            patience: 5,
            max_epochs: 100,
            val_fraction: 0.2,
            seed: 0,
            random_cut: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.lr > 0.0) {
            bad.push("lr must be positive");
        }
        if self.batch_size == 0 {
            bad.push("batch_size must be at least 1");
        }
        if self.samples_per_epoch == 0 {
            bad.push("samples_per_epoch must be at least 1");
        }
        if self.patience == 0 {
            bad.push("patience must be at least 1");
        }
        if self.max_epochs == 0 {
            bad.push("max_epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            bad.push("val_fraction must lie in [0, 1)");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastExample {
    pub input: Vec<Triplet>,
    pub target: [f64; N_FEATURES],
    pub mask: [f64; N_FEATURES],
    pub demographics: Vec<f64>,
}

/// Cuts at the last distinct timestamp: everything strictly earlier is input,
/// the features observed at the cut are the target.
pub fn make_example(series: &VitalSeries, demographics: Vec<f64>) -> Result<ForecastExample> {
    let times = series.timestamps();
    if times.len() < 2 {
        return Err(Error::TooShort(format!(
            "series {} has {} distinct timestamp(s)",
            series.id,
            times.len()
        )));
    }
    example_at(series, *times.last().unwrap(), demographics)
}

/// Like [`make_example`] but with the cut at a uniformly chosen timestamp
/// other than the first.
pub fn make_example_random_cut(
    series: &VitalSeries,
    demographics: Vec<f64>,
    rng: &mut impl Rng,
) -> Result<ForecastExample> {
    let times = series.timestamps();
    if times.len() < 2 {
        return Err(Error::TooShort(format!(
            "series {} has {} distinct timestamp(s)",
            series.id,
            times.len()
        )));
    }
    let cut = times[rng.gen_range(1..times.len())];
    example_at(series, cut, demographics)
}

fn example_at(series: &VitalSeries, cut: f64, demographics: Vec<f64>) -> Result<ForecastExample> {
    let mut target = [0.0; N_FEATURES];
    let mut mask = [0.0; N_FEATURES];
    let mut input = Vec::new();
    for tr in &series.triplets {
        if tr.t < cut {
            input.push(*tr);
        } else if tr.t == cut {
            target[tr.feature.code()] = tr.value;
            mask[tr.feature.code()] = 1.0;
        }
    }
    Ok(ForecastExample {
        input,
        target,
        mask,
        demographics,
    })
}

/// Squared error over observed entries divided by the number observed.
pub fn masked_loss(pred: &[f64], target: &[f64], mask: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.len() != mask.len() {
        return Err(Error::Shape {
            op: "masked_loss",
            lhs: vec![pred.len()],
            rhs: vec![target.len(), mask.len()],
        });
    }
    let m: f64 = mask.iter().sum();
    if m == 0.0 {
        return Err(Error::Contract("masked_loss with an all-zero mask".into()));
    }
    let s: f64 = pred
        .iter()
        .zip(target)
        .zip(mask)
        .map(|((p, t), w)| w * (p - t) * (p - t))
        .sum();
    Ok(s / m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub encoder: Encoder,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Series skipped for having fewer than two timestamps.
    pub skipped: usize,
}

/// Loss and gradients for one example (gradients in parameter order).
pub fn example_loss_and_grads(
    encoder: &Encoder,
    ex: &ForecastExample,
    mode: Mode,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let p = encoder.bind(&mut g, true);
    let fwd = encoder.forward(&mut g, &p, &ex.input, &ex.demographics, mode)?;
    let m: f64 = ex.mask.iter().sum();
    if m == 0.0 {
        return Err(Error::Contract("example with an all-zero mask".into()));
    }
    let se = g.squared_error(
        fwd.forecast,
        &Tensor::row(ex.target.to_vec()),
        &Tensor::row(ex.mask.to_vec()),
    )?;
    let loss = g.scale(se, 1.0 / m);
    g.backward(loss)?;
    let value = g.value(loss).data()[0];
    Ok((value, p.iter().map(|&v| g.grad(v)).collect()))
}

/// Evaluation-mode loss of one example.
pub fn example_loss(encoder: &Encoder, ex: &ForecastExample) -> Result<f64> {
    let enc = encoder.encode(&ex.input, &ex.demographics)?;
    let pred = encoder.forecast(&enc.e_e)?;
    masked_loss(&pred, &ex.target, &ex.mask)
}

fn collect_examples(ds: &Dataset, which: Split) -> (Vec<usize>, Vec<ForecastExample>, usize) {
    let mut idx = Vec::new();
    let mut out = Vec::new();
    let mut skipped = 0;
    for i in ds.indices(which) {
        match make_example(&ds.series[i], ds.demographic_vector(i)) {
            Ok(ex) if !ex.input.is_empty() => {
                idx.push(i);
                out.push(ex);
            }
            _ => skipped += 1,
        }
    }
    (idx, out, skipped)
}

fn mean_loss(encoder: &Encoder, examples: &[ForecastExample]) -> Result<f64> {
    let mut s = 0.0;
    for ex in examples {
        s += example_loss(encoder, ex)?;
    }
    Ok(s / examples.len() as f64)
}

pub fn fit(ds: &Dataset, init: Encoder, cfg: &TrainConfig) -> Result<TrainOutcome> {
    fit_with_hook(ds, init, cfg, |_, v| v)
}

/// [`fit`] with `val_hook(epoch, val_loss)` able to replace each epoch's
/// validation loss before the early-stopping rule sees it.
///
/// Without validation series the training loss stands in for it.
pub fn fit_with_hook(
    ds: &Dataset,
    init: Encoder,
    cfg: &TrainConfig,
    mut val_hook: impl FnMut(usize, f64) -> f64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (train_idx, train_ex, skip_t) = collect_examples(ds, Split::Train);
    let (_, val_ex, skip_v) = collect_examples(ds, Split::Val);
    if train_ex.is_empty() {
        return Err(Error::Contract("no usable training series".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut encoder = init;
    let mut adam = AdamState::new(encoder.params(), cfg.lr);
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, encoder.clone());
    let mut streak = 0;

    for epoch in 1..=cfg.max_epochs {
        let mut drawn = 0;
        let mut batch_losses = Vec::new();
        while drawn < cfg.samples_per_epoch {
            let bs = cfg.batch_size.min(cfg.samples_per_epoch - drawn);
            let mut acc: Vec<Tensor> = encoder
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape()))
                .collect();
            let mut loss_sum = 0.0;
            for _ in 0..bs {
                let k = rng.gen_range(0..train_ex.len());
                let dropout_seed: u64 = rng.gen();
                let random;
                let ex = if cfg.random_cut {
                    let i = train_idx[k];
                    random = make_example_random_cut(
                        &ds.series[i],
                        train_ex[k].demographics.clone(),
                        &mut rng,
                    )?;
                    &random
                } else {
                    &train_ex[k]
                };
                if ex.input.is_empty() || ex.mask.iter().sum::<f64>() == 0.0 {
                    continue;
                }
                let (l, grads) =
                    example_loss_and_grads(&encoder, ex, Mode::Train { seed: dropout_seed })?;
                loss_sum += l;
                for (a, g) in acc.iter_mut().zip(&grads) {
                    for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                        *x += y;
                    }
                }
            }
            let inv = 1.0 / bs as f64;
            for a in &mut acc {
                a.data_mut().iter_mut().for_each(|x| *x *= inv);
            }
            adam.step(encoder.params_mut(), &acc)?;
            if encoder.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite parameters in epoch {epoch}"
                )));
            }
            batch_losses.push(loss_sum * inv);
            drawn += bs;
        }
        let train_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        let raw_val = if val_ex.is_empty() {
            train_loss
        } else {
            mean_loss(&encoder, &val_ex)?
        };
        let val_loss = val_hook(epoch, raw_val);
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, encoder.clone());
            streak = 0;
        } else {
            streak += 1;
            if streak >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        encoder: best.2,
        history,
        best_epoch: best.1,
        best_val_loss: best.0,
        skipped: skip_t + skip_v,
    })
}

pub fn write_history(w: impl Write, history: &[EpochRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "train_loss", "val_loss"])?;
    for r in history {
        out.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_loss.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    write_history(std::fs::File::create(path)?, history)
}
