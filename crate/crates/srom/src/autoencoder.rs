//! Nonlinear compression of the pruned coefficient series.
//!
//! Complex coefficients are handled as two fully independent real networks,
//! one per component. Hidden layers are tanh; the bottleneck and the final
//! output layer are linear so the latent space and the reconstruction can
//! span the full dynamic range of the inputs.

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::nn::{
    adam_step, gather_columns, mse_loss, AdamState, Activation, EarlyStopping, GradStore,
    LossHistory, Mlp, ParamModel, ParamStore, TrainConfig,
};

/// Autoencoder architecture and training settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AeConfig {
    /// Hidden widths of the encoder, input to bottleneck.
    pub encoder_hidden: Vec<usize>,
    /// Hidden widths of the decoder; must mirror `encoder_hidden` reversed.
    pub decoder_hidden: Vec<usize>,
    /// Latent (bottleneck) size `N_z`.
    pub latent_size: usize,
    pub train: TrainConfig,
}

impl AeConfig {
    /// Symmetric architecture: the decoder mirrors the encoder.
    pub fn symmetric(encoder_hidden: Vec<usize>, latent_size: usize, train: TrainConfig) -> Self {
        let decoder_hidden = encoder_hidden.iter().rev().copied().collect();
        Self { encoder_hidden, decoder_hidden, latent_size, train }
    }

    pub fn validate(&self, n_m: usize) -> Result<()> {
        self.train.validate()?;
        let mirrored: Vec<usize> = self.encoder_hidden.iter().rev().copied().collect();
        if self.decoder_hidden != mirrored {
            return Err(Error::InvalidArgument(
                "decoder widths must mirror the encoder reversed".into(),
            ));
        }
        if self.latent_size == 0 {
            return Err(Error::InvalidArgument("latent size must be positive".into()));
        }
        if self.latent_size >= n_m && n_m > 1 {
            return Err(Error::InvalidArgument(format!(
                "latent size {} must be smaller than the input size {n_m}",
                self.latent_size
            )));
        }
        Ok(())
    }
}

/// Per-feature affine standardization fitted on the training split.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Array2<f64>) -> Self {
        let n_t = data.ncols().max(1) as f64;
        let mean: Vec<f64> = data.rows().into_iter().map(|r| r.sum() / n_t).collect();
        let std: Vec<f64> = data
            .rows()
            .into_iter()
            .zip(&mean)
            .map(|(r, &m)| {
                let var = r.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n_t;
                let s = var.sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(n: usize) -> Self {
        Self { mean: vec![0.0; n], std: vec![1.0; n] }
    }

    pub fn apply(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = data.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|v| (v - self.mean[i]) / self.std[i]);
        }
        out
    }

    pub fn invert(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = data.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|v| v * self.std[i] + self.mean[i]);
        }
        out
    }
}

/// One trained real-component autoencoder.
#[derive(Debug, Clone)]
pub struct AeModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub stats: Standardizer,
    /// Observed per-dimension latent bounds over the training split.
    pub latent_min: Vec<f64>,
    pub latent_max: Vec<f64>,
    pub config: AeConfig,
}

impl ParamModel for AeModel {
    fn params(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    fn params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }
}

impl AeModel {
    fn new_seeded(n_m: usize, config: &AeConfig, seed: u64) -> Result<Self> {
        let mut enc_widths = vec![n_m];
        enc_widths.extend(&config.encoder_hidden);
        enc_widths.push(config.latent_size);
        let mut dec_widths = vec![config.latent_size];
        dec_widths.extend(&config.decoder_hidden);
        dec_widths.push(n_m);
        Ok(Self {
            encoder: Mlp::new_seeded(
                &enc_widths,
                Activation::Tanh,
                Activation::Linear,
                "enc",
                crate::derive_seed(seed, "ae-encoder"),
            )?,
            decoder: Mlp::new_seeded(
                &dec_widths,
                Activation::Tanh,
                Activation::Linear,
                "dec",
                crate::derive_seed(seed, "ae-decoder"),
            )?,
            stats: Standardizer::identity(n_m),
            latent_min: vec![0.0; config.latent_size],
            latent_max: vec![0.0; config.latent_size],
            config: config.clone(),
        })
    }

    pub fn n_m(&self) -> usize {
        self.encoder.layers[0].n_in()
    }

    pub fn latent_size(&self) -> usize {
        self.config.latent_size
    }

    /// Forward through the encoder. Input must already be standardized with
    /// the stored statistics.
    pub fn encode(&self, a_std: &Array1<f64>) -> Result<Array1<f64>> {
        let x = a_std.clone().insert_axis(Axis(1));
        let (z, _) = self.encoder.forward(&x)?;
        Ok(z.index_axis(Axis(1), 0).to_owned())
    }

    /// Decode a latent vector back to coefficient units (de-standardized).
    pub fn decode(&self, z: &Array1<f64>) -> Result<Array1<f64>> {
        let x = z.clone().insert_axis(Axis(1));
        let (y, _) = self.decoder.forward(&x)?;
        let y = self.stats.invert(&y);
        Ok(y.index_axis(Axis(1), 0).to_owned())
    }

    /// Standardize and encode a whole component series `[n_m, n_t]`.
    pub fn encode_series(&self, component: &Array2<f64>) -> Result<Array2<f64>> {
        let std = self.stats.apply(component);
        let (z, _) = self.encoder.forward(&std)?;
        Ok(z)
    }

    /// Decode a latent series `[n_z, n_t]` to coefficient units.
    pub fn decode_series(&self, latent: &Array2<f64>) -> Result<Array2<f64>> {
        let (y, _) = self.decoder.forward(latent)?;
        Ok(self.stats.invert(&y))
    }

    /// Standardized-space round trip used by the training loss.
    fn forward_train(
        &self,
        x: &Array2<f64>,
    ) -> Result<(Array2<f64>, Vec<crate::nn::DenseCache>, Vec<crate::nn::DenseCache>)> {
        let (z, enc_caches) = self.encoder.forward(x)?;
        let (y, dec_caches) = self.decoder.forward(&z)?;
        Ok((y, enc_caches, dec_caches))
    }
}

/// Train one real-component autoencoder on `[n_m, n_t]` data.
///
/// The last `validation_fraction` of the samples (chronologically) form the
/// validation split; inputs are standardized per feature with statistics from
/// the training split only. Training stops early when the validation loss
/// plateaus and the best-validation parameters are restored.
pub fn train_autoencoder(
    component: &Array2<f64>,
    config: &AeConfig,
) -> Result<(AeModel, LossHistory)> {
    let n_m = component.nrows();
    let n_t = component.ncols();
    config.validate(n_m)?;
    if !component.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidData("non-finite coefficient input".into()));
    }
    let n_val = ((n_t as f64) * config.train.validation_fraction).round() as usize;
    let n_train = n_t.saturating_sub(n_val);
    if n_train < 2 || n_val < 1 {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n_t} samples into train/validation"
        )));
    }

    let train_raw = component.slice(ndarray::s![.., ..n_train]).to_owned();
    let val_raw = component.slice(ndarray::s![.., n_train..]).to_owned();
    let stats = Standardizer::fit(&train_raw);
    let train = stats.apply(&train_raw);
    let val = stats.apply(&val_raw);

    let mut model = AeModel::new_seeded(n_m, config, config.train.seed)?;
    model.stats = stats;

    let mut adam = AdamState::new();
    let mut stopper = EarlyStopping::new(config.train.patience, config.train.min_delta);
    let mut history = LossHistory::default();
    let mut best_params = model.snapshot();

    for epoch in 0..config.train.epochs {
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for batch in crate::nn::shuffled_batches(n_train, config.train.batch_size, config.train.seed, epoch)
        {
            let x = gather_columns(&train, &batch);
            let (y, enc_caches, dec_caches) = model.forward_train(&x)?;
            let (loss, dloss) = mse_loss(&y, &x)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!("epoch {epoch}: loss is {loss}")));
            }
            let mut grads = GradStore::new();
            let dz = model.decoder.backward(&dec_caches, &dloss, &mut grads);
            model.encoder.backward(&enc_caches, &dz, &mut grads);
            adam_step(&mut adam, &mut model, &grads, &config.train)?;
            epoch_loss += loss;
            n_batches += 1;
        }
        history.train.push(epoch_loss / n_batches.max(1) as f64);

        let (val_out, _, _) = model.forward_train(&val)?;
        let (val_loss, _) = mse_loss(&val_out, &val)?;
        history.validation.push(val_loss);

        let (improved, stop) = stopper.update(epoch, val_loss);
        if improved {
            best_params = model.snapshot();
        }
        if stop {
            history.stopped_early = true;
            break;
        }
    }
    model.restore(&best_params);
    history.best_epoch = stopper.best_epoch;

    // Record the latent range seen on the training split; downstream rollouts
    // use it as their divergence guard.
    let (z, _) = model.encoder.forward(&train)?;
    for d in 0..model.latent_size() {
        let row = z.row(d);
        model.latent_min[d] = row.iter().cloned().fold(f64::INFINITY, f64::min);
        model.latent_max[d] = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    Ok((model, history))
}

/// Both component networks of a complex coefficient series.
#[derive(Debug, Clone)]
pub struct AePair {
    pub re: AeModel,
    pub im: AeModel,
    pub re_history: LossHistory,
    pub im_history: LossHistory,
}

/// Complex latent series assembled from the two component networks.
#[derive(Debug, Clone)]
pub struct LatentSeries {
    /// `[n_z, n_t]`: real channel from the Re network, imaginary channel from
    /// the Im network.
    pub values: Array2<Complex64>,
}

impl LatentSeries {
    pub fn n_z(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.values.ncols()
    }

    pub fn real(&self) -> Array2<f64> {
        self.values.mapv(|v| v.re)
    }

    pub fn imag(&self) -> Array2<f64> {
        self.values.mapv(|v| v.im)
    }

    pub fn from_parts(re: &Array2<f64>, im: &Array2<f64>) -> Result<Self> {
        if re.dim() != im.dim() {
            return Err(Error::InvalidArgument("latent channel shapes disagree".into()));
        }
        Ok(Self {
            values: ndarray::Zip::from(re)
                .and(im)
                .map_collect(|&r, &i| Complex64::new(r, i)),
        })
    }
}

impl AePair {
    /// Train independent networks on the real and imaginary components, with
    /// seeds derived from the run seed.
    pub fn train(values: &Array2<Complex64>, config: &AeConfig) -> Result<Self> {
        let re_data = values.mapv(|v| v.re);
        let im_data = values.mapv(|v| v.im);
        let mut cfg_re = config.clone();
        cfg_re.train.seed = crate::derive_seed(config.train.seed, "ae-re");
        let mut cfg_im = config.clone();
        cfg_im.train.seed = crate::derive_seed(config.train.seed, "ae-im");
        let (re, re_history) = train_autoencoder(&re_data, &cfg_re)?;
        let (im, im_history) = train_autoencoder(&im_data, &cfg_im)?;
        Ok(Self { re, im, re_history, im_history })
    }

    pub fn encode_series(&self, values: &Array2<Complex64>) -> Result<LatentSeries> {
        let z_re = self.re.encode_series(&values.mapv(|v| v.re))?;
        let z_im = self.im.encode_series(&values.mapv(|v| v.im))?;
        LatentSeries::from_parts(&z_re, &z_im)
    }

    pub fn decode_series(&self, latent: &LatentSeries) -> Result<Array2<Complex64>> {
        let a_re = self.re.decode_series(&latent.real())?;
        let a_im = self.im.decode_series(&latent.imag())?;
        Ok(ndarray::Zip::from(&a_re)
            .and(&a_im)
            .map_collect(|&r, &i| Complex64::new(r, i)))
    }
}

/// One row of the latent-size sensitivity study.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LatentStudyRow {
    pub latent_size: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Present when a field-evaluation context was supplied.
    pub field_nmse: Option<f64>,
}

/// Field-evaluation context for [`latent_size_study`]: the studied component
/// is round-tripped through each autoencoder while the other component stays
/// exact, and the reconstruction is compared against the reduced-basis
/// reference.
pub struct FieldContext<'a> {
    pub basis: &'a crate::spod::SpodBasis,
    pub selection: &'a crate::pruning::ModeSelection,
    pub coeffs: &'a crate::projection::CoefficientSeries,
    pub component: ComplexPart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComplexPart {
    Real,
    Imag,
}

/// Train one autoencoder per unique latent size and tabulate the losses.
pub fn latent_size_study(
    component: &Array2<f64>,
    sizes: &[usize],
    config: &AeConfig,
    field: Option<&FieldContext<'_>>,
) -> Result<Vec<LatentStudyRow>> {
    let mut unique = Vec::new();
    for &s in sizes {
        if !unique.contains(&s) {
            unique.push(s);
        }
    }
    let mut rows = Vec::with_capacity(unique.len());
    for &size in &unique {
        let cfg = AeConfig::symmetric(config.encoder_hidden.clone(), size, config.train.clone());
        let (model, history) = train_autoencoder(component, &cfg)?;
        let field_nmse = match field {
            Some(ctx) => Some(field_round_trip_nmse(ctx, &model, component)?),
            None => None,
        };
        rows.push(LatentStudyRow {
            latent_size: size,
            train_loss: history.train.last().copied().unwrap_or(f64::NAN),
            val_loss: history.validation.last().copied().unwrap_or(f64::NAN),
            field_nmse,
        });
    }
    Ok(rows)
}

fn field_round_trip_nmse(
    ctx: &FieldContext<'_>,
    model: &AeModel,
    component: &Array2<f64>,
) -> Result<f64> {
    let reference =
        crate::projection::reconstruct(ctx.basis, Some(ctx.selection), ctx.coeffs, None)?;
    let z = model.encode_series(component)?;
    let decoded = model.decode_series(&z)?;
    let mut coeffs = ctx.coeffs.clone();
    for ((i, j), v) in coeffs.values.indexed_iter_mut() {
        match ctx.component {
            ComplexPart::Real => v.re = decoded[[i, j]],
            ComplexPart::Imag => v.im = decoded[[i, j]],
        }
    }
    let approx = crate::projection::reconstruct(ctx.basis, Some(ctx.selection), &coeffs, None)?;
    let report = crate::projection::nmse(
        &reference.fluct.view().into_dyn(),
        &approx.fluct.view().into_dyn(),
    )?;
    Ok(report.time_averaged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn quick_train(lr: f64, batch: usize, epochs: usize, seed: u64) -> TrainConfig {
        let mut t = TrainConfig::new(lr, batch, epochs, seed);
        t.patience = 0; // run every epoch in tests unless stated otherwise
        t
    }

    /// Data on a random 3-dim linear subspace of R^8.
    fn linear_subspace_data(n_t: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let basis = Array2::from_shape_fn((8, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let coords = Array2::from_shape_fn((3, n_t), |_| rng.sample::<f64, _>(StandardNormal));
        basis.dot(&coords)
    }

    #[test]
    fn standardization_round_trip_is_exact() {
        let data = linear_subspace_data(50, 3);
        let stats = Standardizer::fit(&data);
        let back = stats.invert(&stats.apply(&data));
        for (a, b) in back.iter().zip(data.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn linear_subspace_compresses_to_three_dims() {
        let data = linear_subspace_data(600, 1);
        let config = AeConfig::symmetric(vec![16], 3, quick_train(3e-3, 64, 400, 7));
        let (model, history) = train_autoencoder(&data, &config).unwrap();
        // Validation NMSE in standardized space: final val loss over per-sample
        // energy of the standardized validation block.
        let n_train = 480;
        let val = data.slice(ndarray::s![.., n_train..]).to_owned();
        let val_std = model.stats.apply(&val);
        let energy = val_std.iter().map(|v| v * v).sum::<f64>() / val_std.ncols() as f64;
        let nmse = history.validation.last().unwrap() / energy;
        assert!(nmse <= 0.05, "linear 3-dim subspace should compress losslessly, NMSE {nmse}");
    }

    #[test]
    fn no_bottleneck_reaches_tiny_training_loss() {
        // Latent as wide as the intrinsic data dimension, zero noise.
        let data = linear_subspace_data(400, 2);
        let config = AeConfig::symmetric(vec![16], 4, quick_train(3e-3, 64, 500, 3));
        let (_, history) = train_autoencoder(&data, &config).unwrap();
        let variance = {
            let stats = Standardizer::fit(&data.slice(ndarray::s![.., ..320]).to_owned());
            let std = stats.apply(&data);
            std.iter().map(|v| v * v).sum::<f64>() / std.ncols() as f64
        };
        let final_loss = *history.train.last().unwrap();
        assert!(
            final_loss <= 1e-3 * variance,
            "loss {final_loss} should be tiny next to variance {variance}"
        );
    }

    #[test]
    fn paper_shaped_config_is_accepted() {
        let config = AeConfig::symmetric(
            vec![1024, 512, 256, 128, 64, 32],
            30,
            quick_train(0.001, 2048, 1, 0),
        );
        // Validation only; actually training a net this wide is out of scope
        // for a unit test.
        config.validate(2003).unwrap();
        assert_eq!(config.decoder_hidden, vec![32, 64, 128, 256, 512, 1024]);
    }

    #[test]
    fn asymmetric_decoder_rejected() {
        let mut config = AeConfig::symmetric(vec![8, 4], 2, quick_train(1e-3, 8, 1, 0));
        config.decoder_hidden = vec![8, 4];
        assert!(config.validate(16).is_err());
    }

    #[test]
    fn encode_decode_contracts() {
        let data = linear_subspace_data(300, 9);
        let config = AeConfig::symmetric(vec![12], 3, quick_train(3e-3, 32, 300, 11));
        let (model, _) = train_autoencoder(&data, &config).unwrap();

        // Determinism.
        let sample = model.stats.apply(&data).column(5).to_owned();
        let z1 = model.encode(&sample).unwrap();
        let z2 = model.encode(&sample).unwrap();
        assert_eq!(z1, z2);

        // Training samples stay within the recorded latent range.
        for d in 0..3 {
            assert!(z1[d] >= model.latent_min[d] - 1e-12);
            assert!(z1[d] <= model.latent_max[d] + 1e-12);
        }

        // Round trip on held-out samples within 5% relative error.
        let val = data.slice(ndarray::s![.., 240..]).to_owned();
        let z = model.encode_series(&val).unwrap();
        let back = model.decode_series(&z).unwrap();
        let num: f64 = (&back - &val).iter().map(|v| v * v).sum();
        let den: f64 = val.iter().map(|v| v * v).sum();
        assert!(num / den < 0.05f64.powi(2) * 10.0, "round-trip rel error {}", (num / den).sqrt());
    }

    #[test]
    fn zero_latent_decodes_to_destandardization_offset() {
        let data = linear_subspace_data(100, 4);
        let config = AeConfig::symmetric(vec![6], 2, quick_train(1e-3, 16, 2, 0));
        let (mut model, _) = train_autoencoder(&data, &config).unwrap();
        for (_, p) in model.decoder.params_mut() {
            for v in p.iter_mut() {
                *v = 0.0;
            }
        }
        let out = model.decode(&Array1::zeros(2)).unwrap();
        for (o, m) in out.iter().zip(&model.stats.mean) {
            assert!((o - m).abs() < 1e-12);
        }
    }

    #[test]
    fn latent_study_dedupes_and_orders_capacity() {
        // 6-dim nonlinear manifold embedded in 24 dims.
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let w1 = Array2::from_shape_fn((24, 6), |_| rng.sample::<f64, _>(StandardNormal));
        let w2 = Array2::from_shape_fn((24, 6), |_| rng.sample::<f64, _>(StandardNormal));
        let coords = Array2::from_shape_fn((6, 900), |_| rng.sample::<f64, _>(StandardNormal));
        let data = w1.dot(&coords) + 0.4 * &w2.dot(&coords).mapv(f64::tanh);

        let config = AeConfig::symmetric(vec![16], 8, quick_train(3e-3, 64, 250, 5));
        let rows = latent_size_study(&data, &[2, 8, 8, 2], &config, None).unwrap();
        assert_eq!(rows.len(), 2, "duplicate sizes must train once");
        let val2 = rows.iter().find(|r| r.latent_size == 2).unwrap().val_loss;
        let val8 = rows.iter().find(|r| r.latent_size == 8).unwrap().val_loss;
        assert!(
            val8 < val2,
            "8-dim latent must beat 2-dim on a 6-dim manifold: {val8} vs {val2}"
        );
    }
}
