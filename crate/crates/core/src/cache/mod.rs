//! Neural radiance cache: input encoding, a small MLP with explicit
//! backward pass, the visibility-gated two-network form and the single
//! network ablation, frozen snapshots and the checkpoint format.

mod checkpoint;
mod encoding;
mod mlp;

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2, LinalgScalar, ScalarOperand};
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math::Rgb;
use crate::rng::{Purpose, RngStream};
use crate::scene::Scene;
use crate::transport::{direct_unshadowed, CacheQuery, RadianceField};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use encoding::{encode, encode_into, EncodingCfg, Normalizer};
pub use mlp::{Forward, Mlp, OUTPUT_DIM, OUTPUT_FLOOR};

/// Rows per evaluation chunk. Fixed so results do not depend on thread count.
pub const EVAL_CHUNK: usize = 128;

pub trait Real: Float + LinalgScalar + ScalarOperand + Send + Sync + fmt::Debug + Default + 'static {
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> f32 {
        v as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> f64 {
        v
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheKind {
    /// `V * direct + indirect`.
    Dynamic,
    /// One network for all radiance.
    Naive,
}

impl CacheKind {
    pub fn net_count(self) -> usize {
        match self {
            CacheKind::Dynamic => 2,
            CacheKind::Naive => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheArch {
    pub kind: CacheKind,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub encoding: EncodingCfg,
}

impl Default for CacheArch {
    fn default() -> CacheArch {
        CacheArch { kind: CacheKind::Dynamic, hidden_layers: 4, hidden_width: 128, encoding: EncodingCfg::default() }
    }
}

impl CacheArch {
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.encoding.width()];
        w.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        w.push(OUTPUT_DIM);
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 {
            return Err(Error::InvalidConfig("hidden width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadianceCache<T: Real = f32> {
    arch: CacheArch,
    norm: Normalizer,
    nets: Vec<Mlp<T>>,
}

impl<T: Real> RadianceCache<T> {
    /// Xavier-initialized cache; network `i` draws from its own stream of `seed`.
    pub fn new(arch: CacheArch, norm: Normalizer, seed: u64) -> Result<RadianceCache<T>> {
        arch.validate()?;
        let widths = arch.widths();
        let nets = (0..arch.kind.net_count())
            .map(|i| Mlp::xavier(&widths, &mut RngStream::derive(seed, Purpose::Init, &[i as u64])))
            .collect::<Result<_>>()?;
        Ok(RadianceCache { arch, norm, nets })
    }

    pub fn zeros(arch: CacheArch, norm: Normalizer) -> Result<RadianceCache<T>> {
        arch.validate()?;
        let widths = arch.widths();
        let nets = (0..arch.kind.net_count()).map(|_| Mlp::zeros(&widths)).collect::<Result<_>>()?;
        Ok(RadianceCache { arch, norm, nets })
    }

    pub fn from_parts(arch: CacheArch, norm: Normalizer, nets: Vec<Mlp<T>>) -> Result<RadianceCache<T>> {
        arch.validate()?;
        let widths = arch.widths();
        if nets.len() != arch.kind.net_count() || nets.iter().any(|n| n.widths() != widths.as_slice()) {
            return Err(Error::InvalidArgument("networks do not match the cache architecture".into()));
        }
        Ok(RadianceCache { arch, norm, nets })
    }

    pub fn kind(&self) -> CacheKind {
        self.arch.kind
    }

    pub fn arch(&self) -> &CacheArch {
        &self.arch
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.norm
    }

    pub fn nets(&self) -> &[Mlp<T>] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [Mlp<T>] {
        &mut self.nets
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(Mlp::param_count).sum()
    }

    pub fn cast<U: Real>(&self) -> RadianceCache<U> {
        RadianceCache { arch: self.arch, norm: self.norm, nets: self.nets.iter().map(Mlp::cast).collect() }
    }

    /// Encoded feature rows for a batch of queries.
    pub fn features(&self, queries: &[CacheQuery]) -> Array2<T> {
        let w = self.arch.encoding.width();
        let mut buf = Vec::with_capacity(w);
        let mut out = Array2::zeros((queries.len(), w));
        for (mut row, q) in out.rows_mut().into_iter().zip(queries) {
            buf.clear();
            encode_into(&self.arch.encoding, &self.norm, q.x, q.wo, q.xl, &mut buf);
            for (o, v) in row.iter_mut().zip(&buf) {
                *o = T::of(*v);
            }
        }
        out
    }

    /// Per-network outputs for one chunk of queries.
    fn eval_chunk(&self, queries: &[CacheQuery]) -> Vec<Array2<T>> {
        let x = self.features(queries);
        self.nets.iter().map(|n| n.predict(x.view()).expect("feature width matches")).collect()
    }

    /// Raw per-network outputs, one row per query.
    pub fn eval_nets(&self, queries: &[CacheQuery]) -> Vec<Vec<Rgb>> {
        let chunks: Vec<Vec<Array2<T>>> = queries.par_chunks(EVAL_CHUNK).map(|c| self.eval_chunk(c)).collect();
        (0..self.nets.len())
            .map(|i| chunks.iter().flat_map(|c| rows_to_rgb(c[i].view())).collect())
            .collect()
    }

    /// SHA-256 over the parameter bytes of every network.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.nets {
            for p in n.params() {
                h.update(p.f64().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn snapshot(&self, step: u64) -> CacheSnapshot<T> {
        CacheSnapshot { cache: Arc::new(self.clone()), step }
    }
}

fn rows_to_rgb<T: Real>(a: ArrayView2<'_, T>) -> Vec<Rgb> {
    a.rows().into_iter().map(|r| Rgb::new(r[0].f64(), r[1].f64(), r[2].f64())).collect()
}

impl<T: Real> RadianceField for RadianceCache<T> {
    fn eval_batch(&self, queries: &[CacheQuery]) -> Vec<Rgb> {
        let chunks: Vec<Vec<Rgb>> = queries
            .par_chunks(EVAL_CHUNK)
            .map(|c| {
                let outs = self.eval_chunk(c);
                match self.arch.kind {
                    CacheKind::Naive => rows_to_rgb(outs[0].view()),
                    CacheKind::Dynamic => rows_to_rgb(outs[0].view())
                        .into_iter()
                        .zip(rows_to_rgb(outs[1].view()))
                        .zip(c)
                        .map(|((d, i), q)| if q.visible { d + i } else { i })
                        .collect(),
                }
            })
            .collect();
        chunks.concat()
    }
}

/// Immutable copy of a cache taken at a training step.
#[derive(Clone, Debug)]
pub struct CacheSnapshot<T: Real = f32> {
    cache: Arc<RadianceCache<T>>,
    step: u64,
}

impl<T: Real> CacheSnapshot<T> {
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn cache(&self) -> &RadianceCache<T> {
        &self.cache
    }

    pub fn snapshot(&self) -> CacheSnapshot<T> {
        self.clone()
    }

    pub fn checksum(&self) -> String {
        self.cache.checksum()
    }
}

impl<T: Real> RadianceField for CacheSnapshot<T> {
    fn eval_batch(&self, queries: &[CacheQuery]) -> Vec<Rgb> {
        self.cache.eval_batch(queries)
    }
}

/// Dynamic cache with the learned direct network replaced by the exact
/// unshadowed next-event term, for debugging.
pub struct AnalyticDirect<'a, T: Real> {
    pub scene: &'a Scene,
    pub cache: &'a RadianceCache<T>,
}

impl<'a, T: Real> AnalyticDirect<'a, T> {
    pub fn new(scene: &'a Scene, cache: &'a RadianceCache<T>) -> Result<AnalyticDirect<'a, T>> {
        if cache.kind() != CacheKind::Dynamic {
            return Err(Error::InvalidConfig("analytic direct needs a dynamic cache".into()));
        }
        Ok(AnalyticDirect { scene, cache })
    }
}

impl<T: Real> RadianceField for AnalyticDirect<'_, T> {
    fn eval_batch(&self, queries: &[CacheQuery]) -> Vec<Rgb> {
        let nets = self.cache.eval_nets(queries);
        queries
            .iter()
            .zip(&nets[1])
            .map(|(q, i)| {
                if q.visible {
                    *i + direct_unshadowed(self.scene, &q.hit, q.wo, q.xl)
                } else {
                    *i
                }
            })
            .collect()
    }
}
