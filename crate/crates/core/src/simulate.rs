//! Synthetic corpora drawn from the CRF by systematic-scan Gibbs sampling
//! within each segment.
//!
//! Random streams: `ChaCha8` seeded with `seed`; stream 0 draws segment
//! sizes and features in order, stream `s + 1` drives the sampler of
//! segment `s`. Output therefore does not depend on thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::crf::{logistic, CrfParams};
use crate::error::{Error, Result};
use crate::graph::{build_adjacency, Adjacency, GraphConfig};

pub const RNG_SCHEME: &str = "chacha8-stream/v1";

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_segments: usize,
    /// Inclusive range of instances per segment.
    pub instances_per_segment: (usize, usize),
    pub q: usize,
    /// Feature count, bias excluded.
    pub p: usize,
    /// `(p + 1) x Q`, row 0 the intercepts.
    pub true_alpha: DMatrix<f64>,
    /// `Q x Q`, symmetric with zero row sums.
    pub true_beta: DMatrix<f64>,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub graph: GraphConfig,
}

impl SimConfig {
    /// Zero parameters with default sampler settings.
    pub fn new(n_segments: usize, instances: usize, q: usize, p: usize, seed: u64) -> Self {
        SimConfig {
            n_segments,
            instances_per_segment: (instances, instances),
            q,
            p,
            true_alpha: DMatrix::zeros(p + 1, q),
            true_beta: DMatrix::zeros(q, q),
            burn_in: 200,
            thinning: 5,
            seed,
            graph: GraphConfig::default(),
        }
    }

    pub fn params(&self) -> CrfParams {
        CrfParams {
            alpha: self.true_alpha.clone(),
            beta: self.true_beta.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.true_alpha.shape() != (self.p + 1, self.q) {
            return Err(Error::Config(format!(
                "true_alpha must be {}x{}",
                self.p + 1,
                self.q
            )));
        }
        if self.true_beta.shape() != (self.q, self.q) {
            return Err(Error::Config(format!(
                "true_beta must be {q}x{q}",
                q = self.q
            )));
        }
        let b = &self.true_beta;
        let asym = (b - b.transpose()).amax();
        let row = b.row_iter().map(|r| r.sum().abs()).fold(0.0, f64::max);
        if asym > 1e-12 || row > 1e-10 {
            return Err(Error::Config(
                "true_beta must be symmetric with zero row sums".into(),
            ));
        }
        let (lo, hi) = self.instances_per_segment;
        if lo == 0 || lo > hi {
            return Err(Error::Config(
                "instances_per_segment must be a nonempty range".into(),
            ));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be positive".into()));
        }
        Ok(())
    }
}

/// Single-site Gibbs chain over one segment.
pub struct GibbsChain<'a> {
    x: &'a DMatrix<f64>,
    weights: &'a DMatrix<f64>,
    params: &'a CrfParams,
    state: DMatrix<f64>,
    rng: ChaCha8Rng,
}

impl<'a> GibbsChain<'a> {
    /// Starts from the all-zero configuration.
    pub fn new(
        x: &'a DMatrix<f64>,
        weights: &'a DMatrix<f64>,
        params: &'a CrfParams,
        rng: ChaCha8Rng,
    ) -> Self {
        let state = DMatrix::zeros(x.nrows(), params.alpha.ncols());
        GibbsChain {
            x,
            weights,
            params,
            state,
            rng,
        }
    }

    pub fn state(&self) -> &DMatrix<f64> {
        &self.state
    }

    /// One pass over `(i, q)` in row-major order.
    pub fn sweep(&mut self) {
        let (n, q_count) = self.state.shape();
        let mut neighbor = vec![0.0; q_count];
        for i in 0..n {
            for q in 0..q_count {
                neighbor.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..n {
                    let w = self.weights[(i, j)];
                    if w != 0.0 {
                        for (r, v) in neighbor.iter_mut().enumerate() {
                            *v += w * self.state[(j, r)];
                        }
                    }
                }
                let mut z = 0.0;
                for f in 0..self.x.ncols() {
                    z += self.x[(i, f)] * self.params.alpha[(f, q)];
                }
                for (r, v) in neighbor.iter().enumerate() {
                    z += v * self.params.beta[(q, r)];
                }
                let u: f64 = self.rng.random();
                self.state[(i, q)] = if u < logistic(z) { 1.0 } else { 0.0 };
            }
        }
    }
}

fn segment_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// State after `burn_in` sweeps from the all-zero configuration.
pub fn gibbs_sample_segment(
    x_block: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    params: &CrfParams,
    burn_in: usize,
    seed: u64,
) -> DMatrix<f64> {
    let mut chain = GibbsChain::new(x_block, weights, params, segment_rng(seed, 0));
    for _ in 0..burn_in {
        chain.sweep();
    }
    chain.state().clone()
}

/// `n_samples` states taken every `thinning` sweeps after `burn_in`.
pub fn sample_chain(
    x_block: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    params: &CrfParams,
    burn_in: usize,
    thinning: usize,
    n_samples: usize,
    seed: u64,
) -> Vec<DMatrix<f64>> {
    let mut chain = GibbsChain::new(x_block, weights, params, segment_rng(seed, 0));
    for _ in 0..burn_in {
        chain.sweep();
    }
    let mut out = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for _ in 0..thinning.max(1) {
            chain.sweep();
        }
        out.push(chain.state().clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// `N x (p + 1)`, bias in column 0.
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub adjacency: Adjacency,
    pub segment_index: Vec<usize>,
}

pub fn synthesize_corpus(config: &SimConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = segment_rng(config.seed, 0);
    let (lo, hi) = config.instances_per_segment;
    let sizes: Vec<usize> = (0..config.n_segments)
        .map(|_| rng.random_range(lo..=hi))
        .collect();
    let n: usize = sizes.iter().sum();
    let mut x = DMatrix::zeros(n, config.p + 1);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..=config.p {
            x[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let mut segments = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &len in &sizes {
        segments.push((start..start + len).collect::<Vec<_>>());
        start += len;
    }
    let adjacency = build_adjacency(n, &segments, &config.graph)?;
    let params = config.params();
    let blocks: Vec<DMatrix<f64>> = adjacency
        .blocks
        .par_iter()
        .enumerate()
        .map(|(s, block)| {
            let rows = block.members[0];
            let xb = x.rows(rows, block.len()).into_owned();
            let mut chain = GibbsChain::new(
                &xb,
                &block.weights,
                &params,
                segment_rng(config.seed, s as u64 + 1),
            );
            for _ in 0..config.burn_in {
                chain.sweep();
            }
            chain.state().clone()
        })
        .collect();
    let mut y = DMatrix::zeros(n, config.q);
    for (block, yb) in adjacency.blocks.iter().zip(&blocks) {
        y.rows_mut(block.members[0], block.len()).copy_from(yb);
    }
    let segment_index = adjacency.segment_index();
    Ok(SyntheticData {
        x,
        y,
        adjacency,
        segment_index,
    })
}
