//! Gated recurrent unit with a hand-written backward pass.
//!
//! Cell equations, for input `x`, previous state `h`:
//!
//! ```text
//! z = sigmoid(Wz x + Uz h + bz)          update gate
//! r = sigmoid(Wr x + Ur h + br)          reset gate
//! h~ = tanh(Wh x + Uh (r . h) + bh)      candidate
//! h' = (1 - z) . h + z . h~
//! ```

use rand::Rng;

use super::math::{sigmoid, Mat};
use crate::error::{Error, Result};

/// One GRU layer's parameters (or their gradients; the shapes are the same).
#[derive(Debug, Clone)]
pub struct GruLayer {
    pub wz: Mat,
    pub uz: Mat,
    pub bz: Vec<f64>,
    pub wr: Mat,
    pub ur: Mat,
    pub br: Vec<f64>,
    pub wh: Mat,
    pub uh: Mat,
    pub bh: Vec<f64>,
}

/// Everything the backward pass needs about one forward step.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub h_cand: Vec<f64>,
    /// `r . h_prev`, the input to `Uh`.
    pub rh: Vec<f64>,
}

impl GruLayer {
    pub fn zeros(in_dim: usize, hidden: usize) -> GruLayer {
        GruLayer {
            wz: Mat::zeros(hidden, in_dim),
            uz: Mat::zeros(hidden, hidden),
            bz: vec![0.0; hidden],
            wr: Mat::zeros(hidden, in_dim),
            ur: Mat::zeros(hidden, hidden),
            br: vec![0.0; hidden],
            wh: Mat::zeros(hidden, in_dim),
            uh: Mat::zeros(hidden, hidden),
            bh: vec![0.0; hidden],
        }
    }

    /// Uniform weight init, zero biases.
    pub fn init(in_dim: usize, hidden: usize, scale: f64, rng: &mut impl Rng) -> GruLayer {
        GruLayer {
            wz: Mat::uniform(hidden, in_dim, scale, rng),
            uz: Mat::uniform(hidden, hidden, scale, rng),
            bz: vec![0.0; hidden],
            wr: Mat::uniform(hidden, in_dim, scale, rng),
            ur: Mat::uniform(hidden, hidden, scale, rng),
            br: vec![0.0; hidden],
            wh: Mat::uniform(hidden, in_dim, scale, rng),
            uh: Mat::uniform(hidden, hidden, scale, rng),
            bh: vec![0.0; hidden],
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.bz.len()
    }

    pub fn in_dim(&self) -> usize {
        self.wz.cols()
    }

    /// One step, returning the new state and the cache for backprop.
    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, GruCache) {
        let h = self.hidden_dim();
        let mut z = self.bz.clone();
        self.wz.matvec_add(x, &mut z);
        self.uz.matvec_add(h_prev, &mut z);
        for v in z.iter_mut() {
            *v = sigmoid(*v);
        }

        let mut r = self.br.clone();
        self.wr.matvec_add(x, &mut r);
        self.ur.matvec_add(h_prev, &mut r);
        for v in r.iter_mut() {
            *v = sigmoid(*v);
        }

        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut h_cand = self.bh.clone();
        self.wh.matvec_add(x, &mut h_cand);
        self.uh.matvec_add(&rh, &mut h_cand);
        for v in h_cand.iter_mut() {
            *v = v.tanh();
        }

        let mut h_new = vec![0.0; h];
        for i in 0..h {
            h_new[i] = (1.0 - z[i]) * h_prev[i] + z[i] * h_cand[i];
        }
        let cache = GruCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            h_cand,
            rh,
        };
        (h_new, cache)
    }

    /// One step without building a cache (inference path).
    pub fn step_inference(&self, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        self.step(x, h_prev).0
    }

    /// Backward through one step: given `d h'`, accumulate parameter
    /// gradients into `grads` and add the input/state gradients onto `dx`
    /// and `dh_prev`.
    pub fn backward(
        &self,
        cache: &GruCache,
        dh_new: &[f64],
        grads: &mut GruLayer,
        dx: &mut [f64],
        dh_prev: &mut [f64],
    ) {
        let h = self.hidden_dim();
        let mut dz = vec![0.0; h];
        let mut dh_cand = vec![0.0; h];
        for i in 0..h {
            dh_cand[i] = dh_new[i] * cache.z[i];
            dz[i] = dh_new[i] * (cache.h_cand[i] - cache.h_prev[i]);
            dh_prev[i] += dh_new[i] * (1.0 - cache.z[i]);
        }

        // Candidate: h~ = tanh(a_h), a_h = Wh x + Uh rh + bh.
        let mut da_h = vec![0.0; h];
        for i in 0..h {
            da_h[i] = dh_cand[i] * (1.0 - cache.h_cand[i] * cache.h_cand[i]);
        }
        grads.wh.add_outer(&da_h, &cache.x);
        grads.uh.add_outer(&da_h, &cache.rh);
        for (g, d) in grads.bh.iter_mut().zip(&da_h) {
            *g += d;
        }
        self.wh.matvec_t_add(&da_h, dx);
        let mut drh = vec![0.0; h];
        self.uh.matvec_t_add(&da_h, &mut drh);
        let mut dr = vec![0.0; h];
        for i in 0..h {
            dr[i] = drh[i] * cache.h_prev[i];
            dh_prev[i] += drh[i] * cache.r[i];
        }

        // Gates: sigmoid'(a) = s(1-s).
        let mut da_z = vec![0.0; h];
        let mut da_r = vec![0.0; h];
        for i in 0..h {
            da_z[i] = dz[i] * cache.z[i] * (1.0 - cache.z[i]);
            da_r[i] = dr[i] * cache.r[i] * (1.0 - cache.r[i]);
        }
        grads.wz.add_outer(&da_z, &cache.x);
        grads.uz.add_outer(&da_z, &cache.h_prev);
        for (g, d) in grads.bz.iter_mut().zip(&da_z) {
            *g += d;
        }
        self.wz.matvec_t_add(&da_z, dx);
        self.uz.matvec_t_add(&da_z, dh_prev);

        grads.wr.add_outer(&da_r, &cache.x);
        grads.ur.add_outer(&da_r, &cache.h_prev);
        for (g, d) in grads.br.iter_mut().zip(&da_r) {
            *g += d;
        }
        self.wr.matvec_t_add(&da_r, dx);
        self.ur.matvec_t_add(&da_r, dh_prev);
    }

    /// Visit (name, tensor) pairs; parameter and gradient structs share the
    /// traversal order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("wz", self.wz.data()),
            ("uz", self.uz.data()),
            ("bz", &self.bz),
            ("wr", self.wr.data()),
            ("ur", self.ur.data()),
            ("br", &self.br),
            ("wh", self.wh.data()),
            ("uh", self.uh.data()),
            ("bh", &self.bh),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("wz", self.wz.data_mut()),
            ("uz", self.uz.data_mut()),
            ("bz", &mut self.bz),
            ("wr", self.wr.data_mut()),
            ("ur", self.ur.data_mut()),
            ("br", &mut self.br),
            ("wh", self.wh.data_mut()),
            ("uh", self.uh.data_mut()),
            ("bh", &mut self.bh),
        ]
    }
}

/// The GRU cell as a standalone operation with contract checks: dimensions
/// must agree and inputs must be finite.
pub fn gru_cell(layer: &GruLayer, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    if x.len() != layer.in_dim() || h_prev.len() != layer.hidden_dim() {
        return Err(Error::Invalid(format!(
            "gru_cell dims: x {} (want {}), h {} (want {})",
            x.len(),
            layer.in_dim(),
            h_prev.len(),
            layer.hidden_dim()
        )));
    }
    if x.iter().chain(h_prev).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite input to gru_cell".into()));
    }
    Ok(layer.step_inference(x, h_prev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_halve_the_state() {
        // z = sigmoid(0) = 0.5 and h~ = 0, so h' = 0.5 h.
        let layer = GruLayer::zeros(3, 4);
        let h = vec![1.0, -2.0, 0.5, 4.0];
        let got = gru_cell(&layer, &[0.0; 3], &h).unwrap();
        for (g, want) in got.iter().zip(&h) {
            assert_relative_eq!(*g, 0.5 * want, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_state_zero_params_stay_zero() {
        let layer = GruLayer::zeros(2, 2);
        let got = gru_cell(&layer, &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(got, vec![0.0, 0.0]);
    }

    /// Independent oracle: evaluate the four equations with plain index
    /// loops, no shared code with the implementation.
    fn oracle_step(layer: &GruLayer, x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = layer.hidden_dim();
        let dot = |m: &Mat, v: &[f64], i: usize| -> f64 {
            (0..v.len()).map(|j| m.row(i)[j] * v[j]).sum()
        };
        let rh: Vec<f64> = (0..n)
            .map(|j| {
                let rj = sigmoid(dot(&layer.wr, x, j) + dot(&layer.ur, h, j) + layer.br[j]);
                rj * h[j]
            })
            .collect();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let z = sigmoid(dot(&layer.wz, x, i) + dot(&layer.uz, h, i) + layer.bz[i]);
            let cand = (dot(&layer.wh, x, i) + dot(&layer.uh, &rh, i) + layer.bh[i]).tanh();
            out[i] = (1.0 - z) * h[i] + z * cand;
        }
        out
    }

    #[test]
    fn random_case_matches_equation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = GruLayer::init(3, 4, 0.5, &mut rng);
        let x: Vec<f64> = (0..3).map(|i| 0.3 * i as f64 - 0.2).collect();
        let h: Vec<f64> = (0..4).map(|i| 0.1 * i as f64 + 0.05).collect();
        let got = gru_cell(&layer, &x, &h).unwrap();
        let want = oracle_step(&layer, &x, &h);
        for (g, w) in got.iter().zip(&want) {
            assert_relative_eq!(g, w, epsilon = 1e-12);
        }
    }

    #[test]
    fn first_step_from_zero_state_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer = GruLayer::init(2, 8, 0.08, &mut rng);
        let got = gru_cell(&layer, &[0.4, -0.7], &vec![0.0; 8]).unwrap();
        for v in got {
            assert!(v > -1.0 && v < 1.0);
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_dims() {
        let layer = GruLayer::zeros(2, 2);
        assert!(gru_cell(&layer, &[f64::NAN, 0.0], &[0.0, 0.0]).is_err());
        assert!(gru_cell(&layer, &[0.0], &[0.0, 0.0]).is_err());
    }
}
