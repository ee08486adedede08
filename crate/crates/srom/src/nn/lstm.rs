//! LSTM cell with batched steps and backpropagation through time.

use ndarray::{concatenate, Array1, Array2, Axis};

use crate::error::{Error, Result};

use super::{glorot_uniform, seeded_rng, GradStore, ParamModel};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM cell. Gate weights act on the concatenation `[h_prev; z_in]`.
#[derive(Debug, Clone)]
pub struct LstmCell {
    /// Input, forget, output and candidate weights, each `[n_h, n_h + n_z]`.
    pub w_i: Array2<f64>,
    pub w_f: Array2<f64>,
    pub w_o: Array2<f64>,
    pub w_s: Array2<f64>,
    pub b_i: Array1<f64>,
    pub b_f: Array1<f64>,
    pub b_o: Array1<f64>,
    pub b_s: Array1<f64>,
    pub prefix: String,
}

/// Cached state of one step, for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// `[n_h + n_z, batch]` concatenated input.
    pub u: Array2<f64>,
    pub i: Array2<f64>,
    pub f: Array2<f64>,
    pub o: Array2<f64>,
    pub g: Array2<f64>,
    pub s_prev: Array2<f64>,
    pub s: Array2<f64>,
    pub tanh_s: Array2<f64>,
}

impl LstmCell {
    pub fn new_seeded(n_h: usize, n_z: usize, prefix: &str, seed: u64) -> Self {
        let n_u = n_h + n_z;
        let mut rng = seeded_rng(seed);
        let mut mk = |_tag: &str| {
            Array2::from_shape_vec((n_h, n_u), glorot_uniform(&mut rng, n_u, n_h, n_h * n_u))
                .expect("shape matches data")
        };
        let w_i = mk("i");
        let w_f = mk("f");
        let w_o = mk("o");
        let w_s = mk("s");
        Self {
            w_i,
            w_f,
            w_o,
            w_s,
            b_i: Array1::zeros(n_h),
            // Forget gate starts open so early training does not wipe state.
            b_f: Array1::ones(n_h),
            b_o: Array1::zeros(n_h),
            b_s: Array1::zeros(n_h),
            prefix: prefix.to_string(),
        }
    }

    pub fn n_h(&self) -> usize {
        self.w_i.nrows()
    }

    pub fn n_z(&self) -> usize {
        self.w_i.ncols() - self.n_h()
    }

    /// Batched step on `[n_h, batch]` states and `[n_z, batch]` inputs.
    pub fn step(
        &self,
        h_prev: &Array2<f64>,
        s_prev: &Array2<f64>,
        z_in: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>, LstmCache)> {
        let n_h = self.n_h();
        if h_prev.nrows() != n_h || s_prev.nrows() != n_h || z_in.nrows() != self.n_z() {
            return Err(Error::InvalidArgument(format!(
                "lstm step shapes: h {:?}, s {:?}, z {:?} for n_h {n_h}, n_z {}",
                h_prev.dim(),
                s_prev.dim(),
                z_in.dim(),
                self.n_z()
            )));
        }
        let batch = h_prev.ncols();
        if s_prev.ncols() != batch || z_in.ncols() != batch {
            return Err(Error::InvalidArgument("lstm step batch sizes disagree".into()));
        }
        let u = concatenate(Axis(0), &[h_prev.view(), z_in.view()])
            .map_err(|e| Error::Internal(format!("concat failed: {e}")))?;
        let gate = |w: &Array2<f64>, b: &Array1<f64>| {
            let mut a = w.dot(&u);
            for mut col in a.columns_mut() {
                col += b;
            }
            a
        };
        let i = gate(&self.w_i, &self.b_i).mapv(sigmoid);
        let f = gate(&self.w_f, &self.b_f).mapv(sigmoid);
        let o = gate(&self.w_o, &self.b_o).mapv(sigmoid);
        let g = gate(&self.w_s, &self.b_s).mapv(f64::tanh);
        let s = &f * s_prev + &i * &g;
        let tanh_s = s.mapv(f64::tanh);
        let h = &o * &tanh_s;
        let cache = LstmCache { u, i, f, o, g, s_prev: s_prev.clone(), s: s.clone(), tanh_s };
        Ok((h, s, cache))
    }

    /// Backward through one step. Returns `(dh_prev, ds_prev, dz)` and
    /// accumulates the weight gradients.
    pub fn backward_step(
        &self,
        cache: &LstmCache,
        dh: &Array2<f64>,
        ds_next: &Array2<f64>,
        grads: &mut GradStore,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let n_h = self.n_h();
        let do_ = dh * &cache.tanh_s;
        let ds = ds_next + &(dh * &cache.o * &cache.tanh_s.mapv(|t| 1.0 - t * t));
        let di = &ds * &cache.g;
        let dg = &ds * &cache.i;
        let df = &ds * &cache.s_prev;
        let ds_prev = &ds * &cache.f;

        let dai = di * &cache.i * &cache.i.mapv(|v| 1.0 - v);
        let daf = df * &cache.f * &cache.f.mapv(|v| 1.0 - v);
        let dao = do_ * &cache.o * &cache.o.mapv(|v| 1.0 - v);
        let dag = dg * &cache.g.mapv(|v| 1.0 - v * v);

        let mut du = self.w_i.t().dot(&dai);
        du += &self.w_f.t().dot(&daf);
        du += &self.w_o.t().dot(&dao);
        du += &self.w_s.t().dot(&dag);

        for (tag, da) in [("i", &dai), ("f", &daf), ("o", &dao), ("s", &dag)] {
            let dw = da.dot(&cache.u.t());
            let db = da.sum_axis(Axis(1));
            grads.accumulate(
                &format!("{}.w_{tag}", self.prefix),
                dw.as_slice().expect("contiguous"),
            );
            grads.accumulate(
                &format!("{}.b_{tag}", self.prefix),
                db.as_slice().expect("contiguous"),
            );
        }

        let dh_prev = du.slice(ndarray::s![..n_h, ..]).to_owned();
        let dz = du.slice(ndarray::s![n_h.., ..]).to_owned();
        (dh_prev, ds_prev, dz)
    }
}

impl ParamModel for LstmCell {
    fn params(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let shape2 = |a: &Array2<f64>| vec![a.nrows(), a.ncols()];
        vec![
            (format!("{}.w_i", self.prefix), shape2(&self.w_i), self.w_i.as_slice().unwrap()),
            (format!("{}.w_f", self.prefix), shape2(&self.w_f), self.w_f.as_slice().unwrap()),
            (format!("{}.w_o", self.prefix), shape2(&self.w_o), self.w_o.as_slice().unwrap()),
            (format!("{}.w_s", self.prefix), shape2(&self.w_s), self.w_s.as_slice().unwrap()),
            (format!("{}.b_i", self.prefix), vec![self.b_i.len()], self.b_i.as_slice().unwrap()),
            (format!("{}.b_f", self.prefix), vec![self.b_f.len()], self.b_f.as_slice().unwrap()),
            (format!("{}.b_o", self.prefix), vec![self.b_o.len()], self.b_o.as_slice().unwrap()),
            (format!("{}.b_s", self.prefix), vec![self.b_s.len()], self.b_s.as_slice().unwrap()),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let p = self.prefix.clone();
        vec![
            (format!("{p}.w_i"), self.w_i.as_slice_mut().unwrap()),
            (format!("{p}.w_f"), self.w_f.as_slice_mut().unwrap()),
            (format!("{p}.w_o"), self.w_o.as_slice_mut().unwrap()),
            (format!("{p}.w_s"), self.w_s.as_slice_mut().unwrap()),
            (format!("{p}.b_i"), self.b_i.as_slice_mut().unwrap()),
            (format!("{p}.b_f"), self.b_f.as_slice_mut().unwrap()),
            (format!("{p}.b_o"), self.b_o.as_slice_mut().unwrap()),
            (format!("{p}.b_s"), self.b_s.as_slice_mut().unwrap()),
        ]
    }
}

/// Single-sample step, the spec-level entry point.
pub fn lstm_step(
    cell: &LstmCell,
    h_prev: &Array1<f64>,
    s_prev: &Array1<f64>,
    z_in: &Array1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let col = |v: &Array1<f64>| v.clone().insert_axis(Axis(1));
    let (h, s, _) = cell.step(&col(h_prev), &col(s_prev), &col(z_in))?;
    Ok((h.index_axis(Axis(1), 0).to_owned(), s.index_axis(Axis(1), 0).to_owned()))
}
