use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};

use crate::error::{Error, Result};
use crate::rng::RngStream;

use super::Real;

/// Output shift: `y = max(exp(z) - OUTPUT_FLOOR, 0)`.
pub const OUTPUT_FLOOR: f64 = 0.049_787_068_367_863_944;
pub const OUTPUT_DIM: usize = 3;

/// Fully connected ReLU network with an exponential RGB head. All weights
/// and biases live in one flat vector; layer `l` stores its `in x out`
/// weight matrix row-major followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    widths: Vec<usize>,
    params: Vec<T>,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Forward<T> {
    /// Input to each layer; entry 0 is the feature batch, later ones are post-ReLU.
    inputs: Vec<Array2<T>>,
    /// Final pre-activation.
    pub z: Array2<T>,
    pub output: Array2<T>,
}

fn layer_offsets(widths: &[usize]) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
    let mut off = 0;
    widths.windows(2).map(move |w| {
        let o = off;
        off += w[0] * w[1] + w[1];
        (o, w[0], w[1])
    })
}

impl<T: Real> Mlp<T> {
    pub fn zeros(widths: &[usize]) -> Result<Mlp<T>> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument(format!("bad layer widths {widths:?}")));
        }
        if *widths.last().unwrap() != OUTPUT_DIM {
            return Err(Error::InvalidArgument(format!("output width must be {OUTPUT_DIM}")));
        }
        let n = layer_offsets(widths).map(|(_, i, o)| i * o + o).sum();
        Ok(Mlp { widths: widths.to_vec(), params: vec![T::zero(); n] })
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier(widths: &[usize], rng: &mut RngStream) -> Result<Mlp<T>> {
        let mut mlp = Mlp::zeros(widths)?;
        let layers: Vec<_> = layer_offsets(widths).collect();
        for (off, i, o) in layers {
            let bound = (6.0 / (i + o) as f64).sqrt();
            for p in &mut mlp.params[off..off + i * o] {
                *p = T::of((2.0 * rng.next_f64() - 1.0) * bound);
            }
        }
        Ok(mlp)
    }

    pub fn from_params(widths: &[usize], params: Vec<T>) -> Result<Mlp<T>> {
        let mlp = Mlp::<T>::zeros(widths)?;
        if params.len() != mlp.params.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                mlp.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite network parameter".into()));
        }
        Ok(Mlp { widths: mlp.widths, params })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Flat index range of layer `l`'s bias.
    pub fn bias_range(&self, l: usize) -> std::ops::Range<usize> {
        let (off, i, o) = layer_offsets(&self.widths).nth(l).expect("layer index");
        off + i * o..off + i * o + o
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp { widths: self.widths.clone(), params: self.params.iter().map(|p| U::of(p.f64())).collect() }
    }

    fn layer(&self, off: usize, i: usize, o: usize) -> (ArrayView2<'_, T>, ArrayView1<'_, T>) {
        let w = ArrayView2::from_shape((i, o), &self.params[off..off + i * o]).expect("layer shape");
        let b = ArrayView1::from(&self.params[off + i * o..off + i * o + o]);
        (w, b)
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "feature width {} does not match network input {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<T>, keep: bool) -> (Vec<Array2<T>>, Array2<T>) {
        let layers: Vec<_> = layer_offsets(&self.widths).collect();
        let last = layers.len() - 1;
        let mut inputs = Vec::with_capacity(if keep { layers.len() } else { 0 });
        let mut a = x.to_owned();
        for (l, &(off, i, o)) in layers.iter().enumerate() {
            let (w, b) = self.layer(off, i, o);
            let mut z = Array2::from_shape_fn((a.nrows(), o), |(_, c)| b[c]);
            general_mat_mul(T::one(), &a, &w, T::one(), &mut z);
            if l < last {
                z.mapv_inplace(|v| v.max(T::zero()));
            }
            let prev = std::mem::replace(&mut a, z);
            if keep {
                inputs.push(prev);
            }
        }
        (inputs, a)
    }

    /// Batched forward pass keeping activations.
    pub fn forward(&self, x: ArrayView2<T>) -> Result<Forward<T>> {
        self.check_input(&x)?;
        let (inputs, z) = self.run(x, true);
        let output = z.mapv(activation);
        Ok(Forward { inputs, z, output })
    }

    /// Batched forward pass returning only the non-negative RGB output.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let (_, z) = self.run(x, false);
        Ok(z.mapv(activation))
    }

    /// Adds `d(sum_n upstream[n] . y[n]) / d params` into `grad`.
    pub fn backward(&self, fwd: &Forward<T>, upstream: ArrayView2<T>, grad: &mut [T]) -> Result<()> {
        if upstream.dim() != fwd.z.dim() {
            return Err(Error::InvalidArgument("upstream shape does not match forward output".into()));
        }
        if grad.len() != self.params.len() {
            return Err(Error::InvalidArgument("gradient buffer has the wrong length".into()));
        }
        let mut dz = Array2::zeros(fwd.z.dim());
        Zip::from(&mut dz).and(&upstream).and(&fwd.z).for_each(|d, &u, &z| *d = u * activation_grad(z));
        let layers: Vec<_> = layer_offsets(&self.widths).collect();
        for (l, &(off, i, o)) in layers.iter().enumerate().rev() {
            let a = &fwd.inputs[l];
            {
                let (gw, gb) = grad[off..off + i * o + o].split_at_mut(i * o);
                let mut gw = ArrayViewMut2::from_shape((i, o), gw).expect("layer shape");
                general_mat_mul(T::one(), &a.t(), &dz, T::one(), &mut gw);
                let mut gb = ArrayViewMut1::from(gb);
                Zip::from(&mut gb).and(&dz.sum_axis(Axis(0))).for_each(|g, &d| *g = *g + d);
            }
            if l > 0 {
                let (w, _) = self.layer(off, i, o);
                let mut da = dz.dot(&w.t());
                Zip::from(&mut da).and(a).for_each(|d, &x| {
                    if x <= T::zero() {
                        *d = T::zero();
                    }
                });
                dz = da;
            }
        }
        Ok(())
    }
}

#[inline]
fn activation<T: Real>(z: T) -> T {
    (z.exp() - T::of(OUTPUT_FLOOR)).max(T::zero())
}

#[inline]
fn activation_grad<T: Real>(z: T) -> T {
    let e = z.exp();
    if e > T::of(OUTPUT_FLOOR) {
        e
    } else {
        T::zero()
    }
}
