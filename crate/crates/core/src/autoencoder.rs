//! Item-based autoencoder whose layer weights are masked by a learned local
//! kernel.
//!
//! For a layer mapping `n_in -> n_out`, each input unit `j` owns an embedding
//! `u_j` and each output unit `k` an embedding `v_k` in a small kernel space.
//! The kernel `K[j][k] = max(0, 1 - ||u_j - v_k||²)` multiplies the raw
//! weight elementwise, so units whose embeddings drift apart disconnect.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{init, AdamConfig, AdamState, Graph, ParamId, ParamStore, Real, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    pub hidden: usize,
    pub kernel_dim: usize,
    /// L2 weight on the raw layer weights.
    pub lambda2: f64,
    /// L2 weight on the kernel embeddings.
    pub lambda_s: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Std of the normal init of kernel embeddings; small values start with K ≈ 1.
    pub kernel_init_std: f64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            kernel_dim: 5,
            lambda2: 1e-3,
            lambda_s: 1e-4,
            lr: 1e-3,
            epochs: 200,
            kernel_init_std: 1e-3,
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.kernel_dim == 0 {
            return Err(Error::Config("autoencoder hidden and kernel dims must be >= 1".into()));
        }
        if !(self.lambda2 >= 0.0 && self.lambda_s >= 0.0 && self.lr > 0.0) {
            return Err(Error::Config("autoencoder penalties must be >= 0 and lr > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KernelLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_embed: ParamId,
    pub out_embed: ParamId,
}

impl KernelLayer {
    fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        prefix: &str,
        n_in: usize,
        n_out: usize,
        cfg: &AeConfig,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{prefix}.w"), init::glorot(rng, n_in, n_out));
        let bias = store.add(format!("{prefix}.b"), Array2::zeros((1, n_out)));
        let in_embed = store.add(
            format!("{prefix}.kernel_u"),
            init::normal(rng, (n_in, cfg.kernel_dim), cfg.kernel_init_std),
        );
        let out_embed = store.add(
            format!("{prefix}.kernel_v"),
            init::normal(rng, (n_out, cfg.kernel_dim), cfg.kernel_init_std),
        );
        Self {
            n_in,
            n_out,
            weight,
            bias,
            in_embed,
            out_embed,
        }
    }

    pub fn params(&self) -> [ParamId; 4] {
        [self.weight, self.bias, self.in_embed, self.out_embed]
    }

    /// Local kernel `max(0, 1 - ||u_j - v_k||²)`.
    pub fn kernel_graph<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>) -> Result<Var> {
        let u = g.param(store, self.in_embed);
        let v = g.param(store, self.out_embed);
        let d = g.sq_dist(u, v)?;
        let neg = g.scale(d, -T::one());
        let k = g.add_scalar(neg, T::one());
        Ok(g.relu(k))
    }

    pub fn kernel<T: Real>(&self, store: &ParamStore<T>) -> Result<Array2<T>> {
        let mut g = Graph::new();
        let k = self.kernel_graph(&mut g, store)?;
        Ok(g.value(k).clone())
    }

    fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<(Var, Var)> {
        let w = g.param(store, self.weight);
        let k = self.kernel_graph(g, store)?;
        let wk = g.mul(w, k)?;
        let b = g.param(store, self.bias);
        let pre = g.matmul(x, wk)?;
        let pre = g.add_row(pre, b)?;
        Ok((g.sigmoid(pre), w))
    }
}

#[derive(Debug, Clone)]
pub struct KernelizedAe {
    pub visible: usize,
    pub hidden: usize,
    pub encoder: KernelLayer,
    pub decoder: KernelLayer,
}

/// Graph handles of the autoencoder loss terms.
#[derive(Debug, Clone, Copy)]
pub struct AeLossVars {
    pub reconstruction: Var,
    pub mse: Var,
    pub l2_weights: Var,
    pub l2_kernel: Var,
}

impl KernelizedAe {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        visible: usize,
        cfg: &AeConfig,
        rng: &mut R,
    ) -> Self {
        let encoder = KernelLayer::new(store, "ae.enc", visible, cfg.hidden, cfg, rng);
        let decoder = KernelLayer::new(store, "ae.dec", cfg.hidden, visible, cfg, rng);
        Self {
            visible,
            hidden: cfg.hidden,
            encoder,
            decoder,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.encoder
            .params()
            .into_iter()
            .chain(self.decoder.params())
            .collect()
    }

    pub fn embedding_params(&self) -> [ParamId; 4] {
        [
            self.encoder.in_embed,
            self.encoder.out_embed,
            self.decoder.in_embed,
            self.decoder.out_embed,
        ]
    }

    /// Reconstruction of item rows `x` (items × users); entries in (0, 1).
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        Ok(self.forward_with_weights(g, store, x)?.0)
    }

    fn forward_with_weights<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
    ) -> Result<(Var, Var, Var)> {
        let (_, cols) = g.shape(x);
        if cols != self.visible {
            return Err(Error::shape("autoencoder input columns", self.visible, cols));
        }
        let (h, w_enc) = self.encoder.forward(g, store, x)?;
        let h = g.label(h, "ae.hidden");
        let (out, w_dec) = self.decoder.forward(g, store, h)?;
        let out = g.label(out, "ae.reconstruction");
        Ok((out, w_enc, w_dec))
    }

    /// Full-entry MSE against `target` plus the two L2 penalties.
    pub fn loss_terms<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        input: Var,
        target: Var,
        cfg: &AeConfig,
    ) -> Result<AeLossVars> {
        let (out, w_enc, w_dec) = self.forward_with_weights(g, store, input)?;
        let diff = g.sub(out, target)?;
        let sq = g.mul(diff, diff)?;
        let mse = g.mean(sq);
        let se = g.sum_squares(w_enc)?;
        let sd = g.sum_squares(w_dec)?;
        let sw = g.add(se, sd)?;
        let l2_weights = g.scale(sw, T::from_f64(cfg.lambda2));
        let mut emb_total: Option<Var> = None;
        for id in self.embedding_params() {
            let e = g.param(store, id);
            let s = g.sum_squares(e)?;
            emb_total = Some(match emb_total {
                None => s,
                Some(t) => g.add(t, s)?,
            });
        }
        let l2_kernel = g.scale(emb_total.expect("four embeddings"), T::from_f64(cfg.lambda_s));
        Ok(AeLossVars {
            reconstruction: out,
            mse,
            l2_weights,
            l2_kernel,
        })
    }
}

pub fn ae_forward<T: Real>(ae: &KernelizedAe, store: &ParamStore<T>, rows: &Array2<T>) -> Result<Array2<T>> {
    let mut g = Graph::new();
    let x = g.constant(rows.clone());
    let out = ae.forward(&mut g, store, x)?;
    g.check_finite()?;
    Ok(g.value(out).clone())
}

/// Scalar value of the autoencoder loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeLoss {
    pub total: f64,
    pub mse: f64,
    pub l2_weights: f64,
    pub l2_kernel: f64,
}

pub fn ae_loss<T: Real>(
    ae: &KernelizedAe,
    store: &ParamStore<T>,
    input: &Array2<T>,
    target: &Array2<T>,
    cfg: &AeConfig,
) -> Result<AeLoss> {
    if input.dim() != target.dim() {
        return Err(Error::shape(
            "autoencoder target",
            format!("{:?}", input.dim()),
            format!("{:?}", target.dim()),
        ));
    }
    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let t = g.constant(target.clone());
    let terms = ae.loss_terms(&mut g, store, x, t, cfg)?;
    let total = sum_terms(&mut g, &terms)?;
    g.check_finite()?;
    Ok(AeLoss {
        total: g.scalar(total).to_f64(),
        mse: g.scalar(terms.mse).to_f64(),
        l2_weights: g.scalar(terms.l2_weights).to_f64(),
        l2_kernel: g.scalar(terms.l2_kernel).to_f64(),
    })
}

fn sum_terms<T: Real>(g: &mut Graph<T>, terms: &AeLossVars) -> Result<Var> {
    let a = g.add(terms.mse, terms.l2_weights)?;
    g.add(a, terms.l2_kernel)
}

/// Full-batch Adam on `ae_loss(R, R)`. Returns the loss recorded at each
/// epoch before that epoch's update.
pub fn pretrain<T: Real>(
    ae: &KernelizedAe,
    store: &mut ParamStore<T>,
    matrix: &Array2<T>,
    cfg: &AeConfig,
    adam: &mut AdamState<T>,
) -> Result<Vec<AeLoss>> {
    if matrix.is_empty() {
        return Err(Error::Config("cannot pretrain on an empty matrix".into()));
    }
    let ids = ae.params();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut g = Graph::new();
        let x = g.constant(matrix.clone());
        let terms = ae.loss_terms(&mut g, store, x, x, cfg)?;
        let total = sum_terms(&mut g, &terms)?;
        g.check_finite().map_err(|e| Error::NonFinite {
            context: format!("autoencoder pretraining epoch {epoch}: {e}"),
        })?;
        trace.push(AeLoss {
            total: g.scalar(total).to_f64(),
            mse: g.scalar(terms.mse).to_f64(),
            l2_weights: g.scalar(terms.l2_weights).to_f64(),
            l2_kernel: g.scalar(terms.l2_kernel).to_f64(),
        });
        g.backward(total, store)?;
        adam.step(store, &ids);
    }
    Ok(trace)
}

pub fn pretrain_optimizer<T: Real>(cfg: &AeConfig, base: AdamConfig) -> AdamState<T> {
    AdamState::new(AdamConfig { lr: cfg.lr, ..base })
}
