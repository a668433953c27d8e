//! Additive attention over encoder states.
//!
//! Scores are `u_i = v . tanh(W1 h_i + W2 q)` for encoder state `h_i` and
//! query `q`; weights are `softmax(u)` and the context is the weighted sum
//! of encoder states.

use rand::Rng;

use super::math::{softmax, Mat};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Attention {
    pub w1: Mat,
    pub w2: Mat,
    pub v: Vec<f64>,
}

/// Forward byproducts needed by the backward pass.
#[derive(Debug, Clone)]
pub struct AttnCache {
    /// `tanh(W1 h_i + W2 q)` per encoder position.
    pub t: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Attention {
    pub fn zeros(hidden: usize) -> Attention {
        Attention {
            w1: Mat::zeros(hidden, hidden),
            w2: Mat::zeros(hidden, hidden),
            v: vec![0.0; hidden],
        }
    }

    pub fn init(hidden: usize, scale: f64, rng: &mut impl Rng) -> Attention {
        Attention {
            w1: Mat::uniform(hidden, hidden, scale, rng),
            w2: Mat::uniform(hidden, hidden, scale, rng),
            v: (0..hidden).map(|_| rng.random_range(-scale..scale)).collect(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.v.len()
    }

    /// Precompute `W1 h_i` for a sequence of encoder states; the projection
    /// does not depend on the decoder step.
    pub fn project_encoder(&self, enc_states: &[Vec<f64>]) -> Vec<Vec<f64>> {
        enc_states
            .iter()
            .map(|h| {
                let mut out = vec![0.0; self.hidden_dim()];
                self.w1.matvec_add(h, &mut out);
                out
            })
            .collect()
    }

    /// Context vector and attention weights for one query.
    pub fn forward(
        &self,
        query: &[f64],
        enc_states: &[Vec<f64>],
        enc_proj: &[Vec<f64>],
    ) -> (Vec<f64>, AttnCache) {
        let h = self.hidden_dim();
        let mut wq = vec![0.0; h];
        self.w2.matvec_add(query, &mut wq);

        let mut scores = Vec::with_capacity(enc_states.len());
        let mut t_all = Vec::with_capacity(enc_states.len());
        for proj in enc_proj {
            let t: Vec<f64> = proj.iter().zip(&wq).map(|(a, b)| (a + b).tanh()).collect();
            scores.push(t.iter().zip(&self.v).map(|(a, b)| a * b).sum());
            t_all.push(t);
        }
        let weights = softmax(&scores);
        let mut context = vec![0.0; h];
        for (w, state) in weights.iter().zip(enc_states) {
            for (c, s) in context.iter_mut().zip(state) {
                *c += w * s;
            }
        }
        (
            context,
            AttnCache {
                t: t_all,
                weights,
            },
        )
    }

    /// Backward through one attention application. Accumulates parameter
    /// gradients into `grads` and adds input gradients onto `dquery` and
    /// the per-position `denc` vectors.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        cache: &AttnCache,
        query: &[f64],
        enc_states: &[Vec<f64>],
        dcontext: &[f64],
        grads: &mut Attention,
        dquery: &mut [f64],
        denc: &mut [Vec<f64>],
    ) {
        let n = enc_states.len();
        // context = sum_i a_i h_i
        let mut dweights = vec![0.0; n];
        for i in 0..n {
            dweights[i] = dcontext
                .iter()
                .zip(&enc_states[i])
                .map(|(d, s)| d * s)
                .sum();
            for (de, d) in denc[i].iter_mut().zip(dcontext) {
                *de += cache.weights[i] * d;
            }
        }
        // softmax backward: du_i = a_i (dw_i - sum_j a_j dw_j)
        let dot: f64 = cache
            .weights
            .iter()
            .zip(&dweights)
            .map(|(a, d)| a * d)
            .sum();
        let dscores: Vec<f64> = cache
            .weights
            .iter()
            .zip(&dweights)
            .map(|(a, d)| a * (d - dot))
            .collect();
        // u_i = v . t_i, t_i = tanh(g_i), g_i = W1 h_i + W2 q
        for i in 0..n {
            let du = dscores[i];
            if du == 0.0 {
                continue;
            }
            let t = &cache.t[i];
            for (g, ti) in grads.v.iter_mut().zip(t) {
                *g += du * ti;
            }
            let dg: Vec<f64> = t
                .iter()
                .zip(&self.v)
                .map(|(ti, vi)| du * vi * (1.0 - ti * ti))
                .collect();
            grads.w1.add_outer(&dg, &enc_states[i]);
            grads.w2.add_outer(&dg, query);
            self.w1.matvec_t_add(&dg, &mut denc[i]);
            self.w2.matvec_t_add(&dg, dquery);
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w1", self.w1.data()),
            ("w2", self.w2.data()),
            ("v", &self.v),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w1", self.w1.data_mut()),
            ("w2", self.w2.data_mut()),
            ("v", &mut self.v),
        ]
    }
}

/// Attention as a standalone operation: context and weights for a query
/// over a nonempty encoder state sequence.
pub fn attend(
    attention: &Attention,
    query: &[f64],
    enc_states: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if enc_states.is_empty() {
        return Err(Error::Invalid("attention over no encoder states".into()));
    }
    let proj = attention.project_encoder(enc_states);
    let (context, cache) = attention.forward(query, enc_states, &proj);
    Ok((context, cache.weights))
}
