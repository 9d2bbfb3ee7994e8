//! Single-layer LSTM regressor with a dense output, trained by
//! backpropagation through time and Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Gate order in the stacked weight matrices.
const I: usize = 0;
const F: usize = 1;
const G: usize = 2;
const O: usize = 3;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub hidden: usize,
    /// Input weights, 4H (one input feature).
    pub w_x: Vec<f64>,
    /// Recurrent weights, 4H × H row-major.
    pub w_h: Vec<f64>,
    pub b: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

/// Activations saved for the backward pass.
struct Trace {
    /// Post-activation gates per step, 4H each.
    gates: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Grads {
    w_x: Vec<f64>,
    w_h: Vec<f64>,
    b: Vec<f64>,
    w_out: Vec<f64>,
    b_out: f64,
}

impl Grads {
    fn zeros(hidden: usize) -> Self {
        Self {
            w_x: vec![0.0; 4 * hidden],
            w_h: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
            w_out: vec![0.0; hidden],
            b_out: 0.0,
        }
    }

    fn norm(&self) -> f64 {
        let s: f64 = [&self.w_x, &self.w_h, &self.b, &self.w_out]
            .iter()
            .flat_map(|v| v.iter())
            .map(|g| g * g)
            .sum();
        (s + self.b_out * self.b_out).sqrt()
    }

    fn scale(&mut self, k: f64) {
        for v in [&mut self.w_x, &mut self.w_h, &mut self.b, &mut self.w_out] {
            v.iter_mut().for_each(|g| *g *= k);
        }
        self.b_out *= k;
    }
}

impl Lstm {
    pub fn new(hidden: usize, output_bias: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1.0 / (hidden as f64).sqrt();
        let mut uniform = |n: usize| (0..n).map(|_| rng.gen_range(-k..k)).collect::<Vec<_>>();
        let w_x = uniform(4 * hidden);
        let w_h = uniform(4 * hidden * hidden);
        let w_out = uniform(hidden);
        let mut b = vec![0.0; 4 * hidden];
        // Forget-gate bias of one keeps early gradients flowing.
        b[F * hidden..(F + 1) * hidden].iter_mut().for_each(|v| *v = 1.0);
        Self {
            hidden,
            w_x,
            w_h,
            b,
            w_out,
            b_out: output_bias,
        }
    }

    fn run(&self, xs: &[f64]) -> Trace {
        let h_n = self.hidden;
        let mut h = vec![0.0; h_n];
        let mut c = vec![0.0; h_n];
        let mut tr = Trace {
            gates: Vec::with_capacity(xs.len()),
            c: Vec::with_capacity(xs.len()),
            h: Vec::with_capacity(xs.len()),
        };
        for &x in xs {
            let mut z = vec![0.0; 4 * h_n];
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &self.w_h[r * h_n..(r + 1) * h_n];
                let mut acc = self.b[r] + self.w_x[r] * x;
                for (w, hv) in row.iter().zip(&h) {
                    acc += w * hv;
                }
                *zr = acc;
            }
            #[allow(clippy::needless_range_loop)]
            for r in 0..4 * h_n {
                z[r] = if r / h_n == G { z[r].tanh() } else { sigmoid(z[r]) };
            }
            for u in 0..h_n {
                c[u] = z[F * h_n + u] * c[u] + z[I * h_n + u] * z[G * h_n + u];
                h[u] = z[O * h_n + u] * c[u].tanh();
            }
            tr.gates.push(z);
            tr.c.push(c.clone());
            tr.h.push(h.clone());
        }
        tr
    }

    fn output(&self, h: &[f64]) -> f64 {
        self.b_out + self.w_out.iter().zip(h).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn forward(&self, xs: &[f64]) -> f64 {
        let tr = self.run(xs);
        match tr.h.last() {
            Some(h) => self.output(h),
            None => self.b_out,
        }
    }

    /// Accumulates ∂(½·err²)·2 = err·∂y gradients for one sequence; returns
    /// the squared error.
    fn backward(&self, xs: &[f64], target: f64, g: &mut Grads) -> f64 {
        let h_n = self.hidden;
        let tr = self.run(xs);
        let steps = xs.len();
        let y = self.output(&tr.h[steps - 1]);
        let err = y - target;
        let dy = 2.0 * err;
        g.b_out += dy;
        let mut dh: Vec<f64> = self.w_out.iter().map(|w| w * dy).collect();
        for (u, gw) in g.w_out.iter_mut().enumerate() {
            *gw += dy * tr.h[steps - 1][u];
        }
        let mut dc = vec![0.0; h_n];
        let mut dz = vec![0.0; 4 * h_n];
        for t in (0..steps).rev() {
            let z = &tr.gates[t];
            let c_prev = if t > 0 { &tr.c[t - 1][..] } else { &[][..] };
            for u in 0..h_n {
                let c = tr.c[t][u];
                let tc = c.tanh();
                let (i, f, gg, o) = (z[I * h_n + u], z[F * h_n + u], z[G * h_n + u], z[O * h_n + u]);
                let dct = dc[u] + dh[u] * o * (1.0 - tc * tc);
                let cp = c_prev.get(u).copied().unwrap_or(0.0);
                dz[I * h_n + u] = dct * gg * i * (1.0 - i);
                dz[F * h_n + u] = dct * cp * f * (1.0 - f);
                dz[G * h_n + u] = dct * i * (1.0 - gg * gg);
                dz[O * h_n + u] = dh[u] * tc * o * (1.0 - o);
                dc[u] = dct * f;
            }
            let x = xs[t];
            let h_prev = if t > 0 { &tr.h[t - 1][..] } else { &[][..] };
            let mut dh_prev = vec![0.0; h_n];
            #[allow(clippy::needless_range_loop)]
            for r in 0..4 * h_n {
                let d = dz[r];
                if d == 0.0 {
                    continue;
                }
                g.b[r] += d;
                g.w_x[r] += d * x;
                let row = r * h_n;
                if !h_prev.is_empty() {
                    for u in 0..h_n {
                        g.w_h[row + u] += d * h_prev[u];
                        dh_prev[u] += d * self.w_h[row + u];
                    }
                }
            }
            dh = dh_prev;
        }
        err * err
    }

    /// Mean squared error and gradient over a mini-batch.
    pub fn batch_grad(&self, inputs: &[&[f64]], targets: &[f64]) -> (f64, Grads) {
        let mut g = Grads::zeros(self.hidden);
        let mut loss = 0.0;
        for (xs, &t) in inputs.iter().zip(targets) {
            loss += self.backward(xs, t, &mut g);
        }
        let n = inputs.len().max(1) as f64;
        g.scale(1.0 / n);
        (loss / n, g)
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(hidden: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Grads::zeros(hidden),
            v: Grads::zeros(hidden),
        }
    }

    pub fn step(&mut self, net: &mut Lstm, mut g: Grads, clip_norm: f64) {
        let n = g.norm();
        if n > clip_norm {
            g.scale(clip_norm / n);
        }
        self.t += 1;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let upd = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        };
        upd(&mut net.w_x, &g.w_x, &mut self.m.w_x, &mut self.v.w_x);
        upd(&mut net.w_h, &g.w_h, &mut self.m.w_h, &mut self.v.w_h);
        upd(&mut net.b, &g.b, &mut self.m.b, &mut self.v.b);
        upd(&mut net.w_out, &g.w_out, &mut self.m.w_out, &mut self.v.w_out);
        let mut p = [net.b_out];
        upd(&mut p, &[g.b_out], std::slice::from_mut(&mut self.m.b_out), std::slice::from_mut(&mut self.v.b_out));
        net.b_out = p[0];
    }
}
