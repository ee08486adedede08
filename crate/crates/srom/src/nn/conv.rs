//! 2-D convolution layers (cross-correlation convention, zero padding).
//!
//! Kernels must be odd-sized with padding `(L - 1) / 2` so the spatial
//! resolution is preserved through the stack. Forward and backward passes go
//! through an im2col buffer so the heavy lifting is a dense matrix product.

use ndarray::{Array1, Array2, Array4};

use crate::error::{Error, Result};

use super::{glorot_uniform, seeded_rng, Activation, GradStore, ParamModel};

#[derive(Debug, Clone)]
pub struct Conv2d {
    /// `[c_out, c_in, l, l]`.
    pub w: Array4<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
    pub prefix: String,
}

/// Forward cache: the im2col patch matrix and pre-activations.
#[derive(Debug, Clone)]
pub struct ConvCache {
    /// `[c_in * l * l, batch * h * w]`.
    cols: Array2<f64>,
    /// `[c_out, batch * h * w]`.
    z: Array2<f64>,
    batch: usize,
    height: usize,
    width: usize,
}

impl Conv2d {
    pub fn new_seeded(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        act: Activation,
        prefix: &str,
        seed: u64,
    ) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel size must be odd to preserve resolution, got {kernel}"
            )));
        }
        let mut rng = seeded_rng(seed);
        let fan_in = c_in * kernel * kernel;
        let fan_out = c_out * kernel * kernel;
        let w = Array4::from_shape_vec(
            (c_out, c_in, kernel, kernel),
            glorot_uniform(&mut rng, fan_in, fan_out, c_out * c_in * kernel * kernel),
        )
        .expect("shape matches data");
        Ok(Self { w, b: Array1::zeros(c_out), act, prefix: prefix.to_string() })
    }

    pub fn kernel(&self) -> usize {
        self.w.dim().2
    }

    pub fn c_in(&self) -> usize {
        self.w.dim().1
    }

    pub fn c_out(&self) -> usize {
        self.w.dim().0
    }

    pub fn padding(&self) -> usize {
        (self.kernel() - 1) / 2
    }

    fn im2col(&self, x: &Array4<f64>) -> Array2<f64> {
        let (batch, c_in, h, w) = x.dim();
        let l = self.kernel();
        let p = self.padding() as i64;
        let mut cols = Array2::zeros((c_in * l * l, batch * h * w));
        for n in 0..batch {
            for i in 0..h {
                for j in 0..w {
                    let col = (n * h + i) * w + j;
                    for c in 0..c_in {
                        for ki in 0..l {
                            for kj in 0..l {
                                let si = i as i64 + ki as i64 - p;
                                let sj = j as i64 + kj as i64 - p;
                                let row = (c * l + ki) * l + kj;
                                if si >= 0 && sj >= 0 && (si as usize) < h && (sj as usize) < w {
                                    cols[[row, col]] = x[[n, c, si as usize, sj as usize]];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<f64>, batch: usize, h: usize, w: usize) -> Array4<f64> {
        let c_in = self.c_in();
        let l = self.kernel();
        let p = self.padding() as i64;
        let mut dx = Array4::zeros((batch, c_in, h, w));
        for n in 0..batch {
            for i in 0..h {
                for j in 0..w {
                    let col = (n * h + i) * w + j;
                    for c in 0..c_in {
                        for ki in 0..l {
                            for kj in 0..l {
                                let si = i as i64 + ki as i64 - p;
                                let sj = j as i64 + kj as i64 - p;
                                if si >= 0 && sj >= 0 && (si as usize) < h && (sj as usize) < w {
                                    let row = (c * l + ki) * l + kj;
                                    dx[[n, c, si as usize, sj as usize]] += dcols[[row, col]];
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    fn weight_matrix(&self) -> Array2<f64> {
        let (c_out, c_in, l, _) = self.w.dim();
        self.w
            .view()
            .into_shape_with_order((c_out, c_in * l * l))
            .expect("contiguous kernel")
            .to_owned()
    }

    /// Batched forward on `[batch, c_in, h, w]`.
    pub fn forward(&self, x: &Array4<f64>) -> Result<(Array4<f64>, ConvCache)> {
        let (batch, c_in, h, w) = x.dim();
        if c_in != self.c_in() {
            return Err(Error::InvalidArgument(format!(
                "conv expects {} input channels, got {c_in}",
                self.c_in()
            )));
        }
        let cols = self.im2col(x);
        let mut z = self.weight_matrix().dot(&cols);
        for (c, mut row) in z.rows_mut().into_iter().enumerate() {
            row += self.b[c];
        }
        let y_flat = z.mapv(|v| self.act.apply(v));
        let mut y = Array4::zeros((batch, self.c_out(), h, w));
        for n in 0..batch {
            for c in 0..self.c_out() {
                for i in 0..h {
                    for j in 0..w {
                        y[[n, c, i, j]] = y_flat[[c, (n * h + i) * w + j]];
                    }
                }
            }
        }
        Ok((y, ConvCache { cols, z, batch, height: h, width: w }))
    }

    pub fn backward(
        &self,
        cache: &ConvCache,
        dout: &Array4<f64>,
        grads: &mut GradStore,
    ) -> Array4<f64> {
        let (batch, c_out, h, w) = dout.dim();
        debug_assert_eq!(batch, cache.batch);
        let mut dz = Array2::zeros((c_out, batch * h * w));
        for n in 0..batch {
            for c in 0..c_out {
                for i in 0..h {
                    for j in 0..w {
                        let col = (n * h + i) * w + j;
                        dz[[c, col]] =
                            dout[[n, c, i, j]] * self.act.derivative(cache.z[[c, col]]);
                    }
                }
            }
        }
        let dw = dz.dot(&cache.cols.t());
        let db = dz.sum_axis(ndarray::Axis(1));
        grads.accumulate(&format!("{}.w", self.prefix), dw.as_slice().expect("contiguous"));
        grads.accumulate(&format!("{}.b", self.prefix), db.as_slice().expect("contiguous"));
        let dcols = self.weight_matrix().t().dot(&dz);
        self.col2im(&dcols, cache.batch, cache.height, cache.width)
    }
}

impl ParamModel for Conv2d {
    fn params(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let (c_out, c_in, l, _) = self.w.dim();
        vec![
            (
                format!("{}.w", self.prefix),
                vec![c_out, c_in, l, l],
                self.w.as_slice().expect("contiguous"),
            ),
            (format!("{}.b", self.prefix), vec![self.b.len()], self.b.as_slice().unwrap()),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let p = self.prefix.clone();
        vec![
            (format!("{p}.w"), self.w.as_slice_mut().expect("contiguous")),
            (format!("{p}.b"), self.b.as_slice_mut().unwrap()),
        ]
    }
}

/// Spec-level single-frame entry point: apply one convolution layer to a
/// `[c_in, h, w]` frame.
pub fn conv2d_apply(layer: &Conv2d, frame: &ndarray::Array3<f64>) -> Result<ndarray::Array3<f64>> {
    let (c, h, w) = frame.dim();
    let mut x = Array4::zeros((1, c, h, w));
    x.index_axis_mut(ndarray::Axis(0), 0).assign(frame);
    let (y, _) = layer.forward(&x)?;
    Ok(y.index_axis(ndarray::Axis(0), 0).to_owned())
}
