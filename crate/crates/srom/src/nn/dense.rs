//! Fully connected layers and layer stacks.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

use super::{glorot_uniform, seeded_rng, Activation, GradStore, ParamModel};

/// One dense layer `y = act(W x + b)`.
#[derive(Debug, Clone)]
pub struct Dense {
    /// `[n_out, n_in]`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
}

/// Cached forward state needed by the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    /// Layer input `[n_in, batch]`.
    pub x: Array2<f64>,
    /// Pre-activation `[n_out, batch]`.
    pub z: Array2<f64>,
}

impl Dense {
    pub fn new_seeded(n_in: usize, n_out: usize, act: Activation, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let w = Array2::from_shape_vec(
            (n_out, n_in),
            glorot_uniform(&mut rng, n_in, n_out, n_in * n_out),
        )
        .expect("shape matches data");
        Self { w, b: Array1::zeros(n_out), act }
    }

    pub fn n_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.w.nrows()
    }

    /// Batched forward pass on column-major samples `[n_in, batch]`.
    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, DenseCache)> {
        if x.nrows() != self.n_in() {
            return Err(Error::InvalidArgument(format!(
                "dense layer expects {} inputs, got {}",
                self.n_in(),
                x.nrows()
            )));
        }
        let mut z = self.w.dot(x);
        for mut col in z.columns_mut() {
            col += &self.b;
        }
        let y = z.mapv(|v| self.act.apply(v));
        Ok((y, DenseCache { x: x.clone(), z }))
    }

    /// Backward pass: returns the input gradient and accumulates `dW`, `db`.
    pub fn backward(
        &self,
        cache: &DenseCache,
        dout: &Array2<f64>,
        prefix: &str,
        grads: &mut GradStore,
    ) -> Array2<f64> {
        let dz = {
            let mut dz = dout.clone();
            ndarray::Zip::from(&mut dz).and(&cache.z).for_each(|d, &z| {
                *d *= self.act.derivative(z);
            });
            dz
        };
        let dw = dz.dot(&cache.x.t());
        let db = dz.sum_axis(Axis(1));
        grads.accumulate(&format!("{prefix}.w"), dw.as_slice().expect("contiguous"));
        grads.accumulate(&format!("{prefix}.b"), db.as_slice().expect("contiguous"));
        self.w.t().dot(&dz)
    }
}

/// Single-vector convenience wrapper around [`Dense::forward`].
pub fn dense_apply(
    layer: &Dense,
    input: ArrayView1<'_, f64>,
) -> Result<(Array1<f64>, DenseCache)> {
    let x = input.to_owned().insert_axis(Axis(1));
    let (y, cache) = layer.forward(&x)?;
    Ok((y.index_axis(Axis(1), 0).to_owned(), cache))
}

/// A stack of dense layers sharing one gradient namespace.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    /// Gradient/parameter name prefix, e.g. `"enc"`.
    pub prefix: String,
}

impl Mlp {
    /// Build a stack from layer widths `[n_in, h1, ..., n_out]`; every hidden
    /// layer uses `hidden_act`, the final layer `output_act`.
    pub fn new_seeded(
        widths: &[usize],
        hidden_act: Activation,
        output_act: Activation,
        prefix: &str,
        seed: u64,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            let act = if i + 2 == widths.len() { output_act } else { hidden_act };
            layers.push(Dense::new_seeded(
                pair[0],
                pair[1],
                act,
                crate::derive_seed(seed, &format!("{prefix}.{i}")),
            ));
        }
        Ok(Self { layers, prefix: prefix.to_string() })
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Vec<DenseCache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&cur)?;
            caches.push(cache);
            cur = y;
        }
        Ok((cur, caches))
    }

    pub fn backward(
        &self,
        caches: &[DenseCache],
        dout: &Array2<f64>,
        grads: &mut GradStore,
    ) -> Array2<f64> {
        let mut d = dout.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            d = layer.backward(&caches[i], &d, &format!("{}.{i}", self.prefix), grads);
        }
        d
    }
}

impl ParamModel for Dense {
    fn params(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        vec![
            ("w".into(), vec![self.w.nrows(), self.w.ncols()], self.w.as_slice().unwrap()),
            ("b".into(), vec![self.b.len()], self.b.as_slice().unwrap()),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("w".into(), self.w.as_slice_mut().unwrap()),
            ("b".into(), self.b.as_slice_mut().unwrap()),
        ]
    }
}

impl ParamModel for Mlp {
    fn params(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((
                format!("{}.{i}.w", self.prefix),
                vec![layer.w.nrows(), layer.w.ncols()],
                layer.w.as_slice().expect("contiguous"),
            ));
            out.push((
                format!("{}.{i}.b", self.prefix),
                vec![layer.b.len()],
                layer.b.as_slice().expect("contiguous"),
            ));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let prefix = self.prefix.clone();
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("{prefix}.{i}.w"), layer.w.as_slice_mut().expect("contiguous")));
            out.push((format!("{prefix}.{i}.b"), layer.b.as_slice_mut().expect("contiguous")));
        }
        out
    }
}
