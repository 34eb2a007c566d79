//! Modality projection networks, the total-correlation penalty, and fusion.
//!
//! Each modality passes through `h = W1·relu(W0·N(x) + b0) + b1` where `N` is
//! a per-row layer norm without affine terms. Dropout acts on the hidden
//! activation in training mode. The two latents are concatenated,
//! normalized, and mapped to the fused item representation by one linear layer.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{init, Graph, ParamId, ParamStore, Real, Var};

/// Floor applied to per-column standard deviations in [`tc_loss`].
pub const TC_STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub text_out: usize,
    pub visual_out: usize,
    pub fused: usize,
    pub layer_norm_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            text_out: 64,
            visual_out: 64,
            fused: 64,
            layer_norm_eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionNet {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
    pub w0: ParamId,
    pub b0: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
}

impl ProjectionNet {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        dropout: f64,
        layer_norm_eps: f64,
        rng: &mut R,
    ) -> Self {
        let w0 = store.add(format!("{prefix}.w0"), init::glorot(rng, input_dim, hidden_dim));
        let b0 = store.add(format!("{prefix}.b0"), Array2::zeros((1, hidden_dim)));
        let w1 = store.add(format!("{prefix}.w1"), init::glorot(rng, hidden_dim, output_dim));
        let b1 = store.add(format!("{prefix}.b1"), Array2::zeros((1, output_dim)));
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            dropout,
            layer_norm_eps,
            w0,
            b0,
            w1,
            b1,
        }
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.w0, self.b0, self.w1, self.b1]
    }

    pub fn forward<T: Real, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        let (_, d) = g.shape(x);
        if d != self.input_dim {
            return Err(Error::shape("projection input dim", self.input_dim, d));
        }
        let n = g.layer_norm(x, T::from_f64(self.layer_norm_eps));
        let w0 = g.param(store, self.w0);
        let b0 = g.param(store, self.b0);
        let h = g.matmul(n, w0)?;
        let h = g.add_row(h, b0)?;
        let h = g.relu(h);
        let h = g.dropout(h, T::from_f64(self.dropout), rng, training)?;
        let w1 = g.param(store, self.w1);
        let b1 = g.param(store, self.b1);
        let o = g.matmul(h, w1)?;
        let o = g.add_row(o, b1)?;
        Ok(g.identity(o))
    }
}

/// Evaluates a projection net on a feature matrix outside any training graph.
pub fn project<T: Real, R: Rng + ?Sized>(
    net: &ProjectionNet,
    store: &ParamStore<T>,
    x: &Array2<T>,
    rng: &mut R,
    training: bool,
) -> Result<Array2<T>> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let h = net.forward(&mut g, store, xv, rng, training)?;
    g.check_finite()?;
    Ok(g.value(h).clone())
}

#[derive(Debug, Clone)]
pub struct FusionLayer {
    pub input_dim: usize,
    pub output_dim: usize,
    pub layer_norm_eps: f64,
    pub w: ParamId,
    pub b: ParamId,
}

impl FusionLayer {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input_dim: usize,
        output_dim: usize,
        layer_norm_eps: f64,
        rng: &mut R,
    ) -> Self {
        let w = store.add(format!("{prefix}.w"), init::glorot(rng, input_dim, output_dim));
        let b = store.add(format!("{prefix}.b"), Array2::zeros((1, output_dim)));
        Self {
            input_dim,
            output_dim,
            layer_norm_eps,
            w,
            b,
        }
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.w, self.b]
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        h_text: Var,
        h_visual: Var,
    ) -> Result<Var> {
        let (rt, _) = g.shape(h_text);
        let (rv, _) = g.shape(h_visual);
        if rt != rv {
            return Err(Error::shape("fusion rows", rt, rv));
        }
        let cat = g.concat_cols(h_text, h_visual)?;
        if g.shape(cat).1 != self.input_dim {
            return Err(Error::shape("fusion input dim", self.input_dim, g.shape(cat).1));
        }
        let n = g.layer_norm(cat, T::from_f64(self.layer_norm_eps));
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let o = g.matmul(n, w)?;
        let o = g.add_row(o, b)?;
        Ok(g.identity(o))
    }
}

pub fn fuse<T: Real>(
    layer: &FusionLayer,
    store: &ParamStore<T>,
    h_text: &Array2<T>,
    h_visual: &Array2<T>,
) -> Result<Array2<T>> {
    let mut g = Graph::new();
    let t = g.constant(h_text.clone());
    let v = g.constant(h_visual.clone());
    let f = layer.forward(&mut g, store, t, v)?;
    g.check_finite()?;
    Ok(g.value(f).clone())
}

/// Mean squared off-diagonal entry of the batch correlation matrix of the
/// columns of `h` (rows are the batch). Zero when the columns are pairwise
/// uncorrelated, and zero by definition for a single column.
pub fn tc_loss_graph<T: Real>(g: &mut Graph<T>, h: Var) -> Result<Var> {
    let (b, d) = g.shape(h);
    if b < 2 {
        return Err(Error::Config(format!("tc_loss needs a batch of at least 2 rows, got {b}")));
    }
    if d < 2 {
        return Ok(g.constant(Array2::zeros((1, 1))));
    }
    let mean = g.col_mean(h);
    let centered = g.sub_row(h, mean)?;
    let sq = g.mul(centered, centered)?;
    let var = g.col_mean(sq);
    let var = g.clamp_min(var, T::from_f64(TC_STD_FLOOR * TC_STD_FLOOR));
    let std = g.sqrt(var);
    let z = g.div_row(centered, std)?;
    let zt = g.transpose(z);
    let gram = g.matmul(zt, z)?;
    let corr = g.scale(gram, T::one() / T::from_usize(b));
    let off_diag = Array2::from_shape_fn((d, d), |(i, j)| if i == j { T::zero() } else { T::one() });
    let off = g.mul_const(corr, off_diag)?;
    let total = g.sum_squares(off)?;
    Ok(g.scale(total, T::one() / T::from_usize(d * (d - 1))))
}

pub fn tc_loss<T: Real>(h: &Array2<T>) -> Result<T> {
    let mut g = Graph::new();
    let hv = g.constant(h.clone());
    let l = tc_loss_graph(&mut g, hv)?;
    Ok(g.scalar(l))
}
