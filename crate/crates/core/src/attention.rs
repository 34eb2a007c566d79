//! Multi-head cross-attention. Queries come from the rating matrix rows,
//! keys and values from the fused item features; the attended latent is
//! projected back to the user dimension and optionally added to the matrix.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{init, Graph, ParamId, ParamStore, Real, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionConfig {
    pub heads: usize,
    pub latent: usize,
    pub residual: bool,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            heads: 4,
            latent: 64,
            residual: true,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.latent == 0 {
            return Err(Error::Config("attention heads and latent dim must be >= 1".into()));
        }
        if self.latent % self.heads != 0 {
            return Err(Error::Config(format!(
                "attention latent dim {} is not divisible by {} heads",
                self.latent, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.latent / self.heads
    }
}

#[derive(Debug, Clone)]
pub struct CrossAttentionBlock {
    pub heads: usize,
    pub latent: usize,
    pub users: usize,
    pub fused_dim: usize,
    pub residual: bool,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
}

/// Attention latent and the per-head attention weights (I×I each).
#[derive(Debug, Clone)]
pub struct AttentionOutput<T> {
    pub output: Array2<T>,
    pub weights: Vec<Array2<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedMatrix<T> {
    pub values: Array2<T>,
}

impl CrossAttentionBlock {
    /// Glorot-initialised query/key/value maps; the output projection and
    /// its bias start at zero.
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        users: usize,
        fused_dim: usize,
        cfg: &AttentionConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let wq = store.add("attn.wq", init::glorot(rng, users, cfg.latent));
        let wk = store.add("attn.wk", init::glorot(rng, fused_dim, cfg.latent));
        let wv = store.add("attn.wv", init::glorot(rng, fused_dim, cfg.latent));
        let wo = store.add("attn.wo", Array2::zeros((cfg.latent, users)));
        let bo = store.add("attn.bo", Array2::zeros((1, users)));
        Ok(Self {
            heads: cfg.heads,
            latent: cfg.latent,
            users,
            fused_dim,
            residual: cfg.residual,
            wq,
            wk,
            wv,
            wo,
            bo,
        })
    }

    pub fn params(&self) -> [ParamId; 5] {
        [self.wq, self.wk, self.wv, self.wo, self.bo]
    }

    pub fn head_dim(&self) -> usize {
        self.latent / self.heads
    }

    fn check_inputs<T: Real>(&self, g: &Graph<T>, r: Var, hf: Var) -> Result<()> {
        if self.heads == 0 || self.latent % self.heads != 0 {
            return Err(Error::Config(format!(
                "attention latent dim {} is not divisible by {} heads",
                self.latent, self.heads
            )));
        }
        let (ri, ru) = g.shape(r);
        let (fi, fd) = g.shape(hf);
        if ru != self.users {
            return Err(Error::shape("attention query columns", self.users, ru));
        }
        if fd != self.fused_dim {
            return Err(Error::shape("attention key/value columns", self.fused_dim, fd));
        }
        if ri != fi {
            return Err(Error::shape("attention item rows", ri, fi));
        }
        Ok(())
    }

    /// Concatenated head outputs (I×l) plus each head's attention weights.
    pub fn attend_graph<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        r: Var,
        hf: Var,
    ) -> Result<(Var, Vec<Var>)> {
        self.check_inputs(g, r, hf)?;
        let wq = g.param(store, self.wq);
        let wk = g.param(store, self.wk);
        let wv = g.param(store, self.wv);
        let q = g.matmul(r, wq)?;
        let k = g.matmul(hf, wk)?;
        let v = g.matmul(hf, wv)?;
        let d = self.head_dim();
        let inv_sqrt_d = T::one() / T::from_usize(d).sqrt();
        let mut weights = Vec::with_capacity(self.heads);
        let mut out: Option<Var> = None;
        for h in 0..self.heads {
            let (a, b) = (h * d, (h + 1) * d);
            let qh = g.slice_cols(q, a, b)?;
            let kh = g.slice_cols(k, a, b)?;
            let vh = g.slice_cols(v, a, b)?;
            let kt = g.transpose(kh);
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, inv_sqrt_d);
            let w = g.softmax_rows(scores);
            let w = g.label(w, format!("attn.head{h}.weights"));
            let head = g.matmul(w, vh)?;
            weights.push(w);
            out = Some(match out {
                None => head,
                Some(acc) => g.concat_cols(acc, head)?,
            });
        }
        let out = g.label(out.expect("at least one head"), "attn.output");
        Ok((out, weights))
    }

    /// `R + A·W_O + b_O` with the residual on, `A·W_O + b_O` otherwise.
    pub fn refine_graph<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        r: Var,
        hf: Var,
    ) -> Result<Var> {
        let (a, _) = self.attend_graph(g, store, r, hf)?;
        let wo = g.param(store, self.wo);
        let bo = g.param(store, self.bo);
        let proj = g.matmul(a, wo)?;
        let proj = g.add_row(proj, bo)?;
        let out = if self.residual { g.add(r, proj)? } else { proj };
        Ok(g.label(out, "attn.refined"))
    }
}

pub fn attend<T: Real>(
    block: &CrossAttentionBlock,
    store: &ParamStore<T>,
    r: &Array2<T>,
    hf: &Array2<T>,
) -> Result<AttentionOutput<T>> {
    let mut g = Graph::new();
    let rv = g.constant(r.clone());
    let fv = g.constant(hf.clone());
    let (out, weights) = block.attend_graph(&mut g, store, rv, fv)?;
    g.check_finite()?;
    Ok(AttentionOutput {
        output: g.value(out).clone(),
        weights: weights.into_iter().map(|w| g.value(w).clone()).collect(),
    })
}

pub fn refine_matrix<T: Real>(
    block: &CrossAttentionBlock,
    store: &ParamStore<T>,
    r: &Array2<T>,
    hf: &Array2<T>,
) -> Result<RefinedMatrix<T>> {
    let mut g = Graph::new();
    let rv = g.constant(r.clone());
    let fv = g.constant(hf.clone());
    let out = block.refine_graph(&mut g, store, rv, fv)?;
    g.check_finite()?;
    Ok(RefinedMatrix {
        values: g.value(out).clone(),
    })
}
