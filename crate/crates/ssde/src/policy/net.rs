use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Parameters of the autoregressive generator: one LSTM cell plus a linear
/// head producing a logit per library token. Inputs are the one-hot parent
/// and sibling of the token being sampled, each with an extra "empty" slot.
#[derive(Debug, Clone)]
pub struct PolicyState {
    /// Gate weights, rows ordered [input, forget, cell, output], applied to
    /// the concatenated `[x, h_prev]`.
    pub(crate) w: Array2<f64>,
    pub(crate) b: Array1<f64>,
    pub(crate) w_out: Array2<f64>,
    pub(crate) b_out: Array1<f64>,
    pub hidden: usize,
    pub n_tokens: usize,
    pub input_dim: usize,
}

impl PolicyState {
    pub fn new(n_tokens: usize, hidden: usize, seed: u64) -> PolicyState {
        let input_dim = 2 * (n_tokens + 1);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let scale = 1.0 / (hidden as f64).sqrt();
        let mut uniform = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
        };
        let w = uniform(4 * hidden, input_dim + hidden);
        let w_out = uniform(n_tokens, hidden);
        let mut b = Array1::zeros(4 * hidden);
        // Forget gate opens at init.
        b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        PolicyState {
            w,
            b,
            w_out,
            b_out: Array1::zeros(n_tokens),
            hidden,
            n_tokens,
            input_dim,
        }
    }

    pub fn init_state(&self) -> LstmState {
        LstmState {
            h: Array1::zeros(self.hidden),
            c: Array1::zeros(self.hidden),
        }
    }

    /// One cell update; returns the new state, the logits, and the cache the
    /// backward pass needs.
    pub fn step(&self, state: &LstmState, x: &Array1<f64>) -> (LstmState, Array1<f64>, StepCache) {
        debug_assert_eq!(x.len(), self.input_dim);
        let h = self.hidden;
        let mut xh = Array1::zeros(self.input_dim + h);
        xh.slice_mut(s![..self.input_dim]).assign(x);
        xh.slice_mut(s![self.input_dim..]).assign(&state.h);

        let a = self.w.dot(&xh) + &self.b;
        let gi = a.slice(s![..h]).mapv(sigmoid);
        let gf = a.slice(s![h..2 * h]).mapv(sigmoid);
        let gg = a.slice(s![2 * h..3 * h]).mapv(f64::tanh);
        let go = a.slice(s![3 * h..4 * h]).mapv(sigmoid);

        let c = &gf * &state.c + &gi * &gg;
        let tanh_c = c.mapv(f64::tanh);
        let h_new = &go * &tanh_c;
        let logits = self.w_out.dot(&h_new) + &self.b_out;

        let cache = StepCache {
            xh,
            c_prev: state.c.clone(),
            gi,
            gf,
            gg,
            go,
            tanh_c,
            h: h_new.clone(),
        };
        (LstmState { h: h_new, c }, logits, cache)
    }

    /// Accumulates gradients for one sampled sequence by backpropagation
    /// through time, given the objective's gradient at each step's logits.
    pub fn backward_sequence(
        &self,
        caches: &[StepCache],
        dlogits: &[Array1<f64>],
        grads: &mut PolicyGrads,
    ) {
        let h = self.hidden;
        let mut dh = Array1::<f64>::zeros(h);
        let mut dc = Array1::<f64>::zeros(h);
        for (cache, dz) in caches.iter().zip(dlogits).rev() {
            // Head.
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr == 0.0 {
                    continue;
                }
                grads.b_out[r] += dzr;
                let mut row = grads.w_out.row_mut(r);
                row += &(dzr * &cache.h);
            }
            dh += &self.w_out.t().dot(dz);

            // Cell.
            let dgo = &dh * &cache.tanh_c;
            dc += &(&dh * &cache.go * &(1.0 - &cache.tanh_c * &cache.tanh_c));
            let dgf = &dc * &cache.c_prev;
            let dgi = &dc * &cache.gg;
            let dgg = &dc * &cache.gi;

            let da_i = &dgi * &cache.gi * &(1.0 - &cache.gi);
            let da_f = &dgf * &cache.gf * &(1.0 - &cache.gf);
            let da_g = &dgg * &(1.0 - &cache.gg * &cache.gg);
            let da_o = &dgo * &cache.go * &(1.0 - &cache.go);

            let mut da = Array1::zeros(4 * h);
            da.slice_mut(s![..h]).assign(&da_i);
            da.slice_mut(s![h..2 * h]).assign(&da_f);
            da.slice_mut(s![2 * h..3 * h]).assign(&da_g);
            da.slice_mut(s![3 * h..4 * h]).assign(&da_o);

            for (r, &dar) in da.iter().enumerate() {
                if dar != 0.0 {
                    grads.b[r] += dar;
                    let mut row = grads.w.row_mut(r);
                    row += &(dar * &cache.xh);
                }
            }
            let dxh = self.w.t().dot(&da);
            dh = dxh.slice(s![self.input_dim..]).to_owned();
            dc = &dc * &cache.gf;
        }
    }

    pub fn apply_ascent(&mut self, grads: &PolicyGrads, lr: f64) {
        self.w += &(lr * &grads.w);
        self.b += &(lr * &grads.b);
        self.w_out += &(lr * &grads.w_out);
        self.b_out += &(lr * &grads.b_out);
    }

    /// Flattened view of all parameters, for gradient checking.
    pub fn flatten(&self) -> Vec<f64> {
        self.w
            .iter()
            .chain(self.b.iter())
            .chain(self.w_out.iter())
            .chain(self.b_out.iter())
            .copied()
            .collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for v in self.w.iter_mut() {
            *v = it.next().expect("flat length");
        }
        for v in self.b.iter_mut() {
            *v = it.next().expect("flat length");
        }
        for v in self.w_out.iter_mut() {
            *v = it.next().expect("flat length");
        }
        for v in self.b_out.iter_mut() {
            *v = it.next().expect("flat length");
        }
        assert!(it.next().is_none(), "flat length");
    }
}

/// Recurrent state carried across sampling steps.
#[derive(Debug, Clone)]
pub struct LstmState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

/// Forward activations cached for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    xh: Array1<f64>,
    c_prev: Array1<f64>,
    gi: Array1<f64>,
    gf: Array1<f64>,
    gg: Array1<f64>,
    go: Array1<f64>,
    tanh_c: Array1<f64>,
    h: Array1<f64>,
}

impl StepCache {
    pub fn hidden_out(&self) -> &Array1<f64> {
        &self.h
    }
}

/// Gradient accumulator with the same shapes as the policy.
#[derive(Debug, Clone)]
pub struct PolicyGrads {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

impl PolicyGrads {
    pub fn zeros(policy: &PolicyState) -> PolicyGrads {
        PolicyGrads {
            w: Array2::zeros(policy.w.dim()),
            b: Array1::zeros(policy.b.len()),
            w_out: Array2::zeros(policy.w_out.dim()),
            b_out: Array1::zeros(policy.b_out.len()),
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.w *= k;
        self.b *= k;
        self.w_out *= k;
        self.b_out *= k;
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
            && self.w_out.iter().all(|v| v.is_finite())
            && self.b_out.iter().all(|v| v.is_finite())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.w
            .iter()
            .chain(self.b.iter())
            .chain(self.w_out.iter())
            .chain(self.b_out.iter())
            .copied()
            .collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_init_and_step() {
        let p1 = PolicyState::new(10, 32, 99);
        let p2 = PolicyState::new(10, 32, 99);
        let x = Array1::from_elem(p1.input_dim, 0.5);
        let (s1, l1, _) = p1.step(&p1.init_state(), &x);
        let (s2, l2, _) = p2.step(&p2.init_state(), &x);
        assert_eq!(l1, l2);
        assert_eq!(s1.h, s2.h);
    }

    #[test]
    fn state_evolves() {
        let p = PolicyState::new(5, 8, 1);
        let x = Array1::from_elem(p.input_dim, 1.0);
        let (s1, _, _) = p.step(&p.init_state(), &x);
        let (s2, _, _) = p.step(&s1, &x);
        assert_ne!(s1.h, s2.h);
    }
}
