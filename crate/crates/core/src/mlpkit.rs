//! Three-layer tansig/linear perceptron trained by Levenberg-Marquardt.
//!
//! Parameter vector layout, used by the Jacobian, the optimizer and the
//! text format alike:
//!
//! ```text
//! [ W1 (n_hidden × n_in, row-major) | b1 (n_hidden) | W2 (n_out × n_hidden, row-major) | b2 (n_out) ]
//! ```
//!
//! Errors are always `e = y − ŷ`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    params: Vec<f64>,
}

impl MlpNetwork {
    pub fn param_count_for(n_in: usize, n_hidden: usize, n_out: usize) -> usize {
        n_hidden * n_in + n_hidden + n_out * n_hidden + n_out
    }

    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        MlpNetwork {
            n_in,
            n_hidden,
            n_out,
            params: vec![0.0; Self::param_count_for(n_in, n_hidden, n_out)],
        }
    }

    pub fn from_params(n_in: usize, n_hidden: usize, n_out: usize, params: Vec<f64>) -> Result<Self> {
        if n_in == 0 || n_hidden == 0 || n_out == 0 {
            return Err(Error::Domain("layer sizes must be positive".into()));
        }
        shape(Self::param_count_for(n_in, n_hidden, n_out), params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        Ok(MlpNetwork {
            n_in,
            n_hidden,
            n_out,
            params,
        })
    }

    /// Uniform in ±1/√fan_in per layer, biases included.
    pub fn init(n_in: usize, n_hidden: usize, n_out: usize, seed: u64) -> Self {
        let mut net = Self::zeros(n_in, n_hidden, n_out);
        let mut rng = rng::stream(seed, "mlpkit/init");
        let b1 = 1.0 / (n_in as f64).sqrt();
        let b2 = 1.0 / (n_hidden as f64).sqrt();
        let split = n_hidden * (n_in + 1);
        for (i, p) in net.params.iter_mut().enumerate() {
            let b = if i < split { b1 } else { b2 };
            *p = rng.random_range(-b..=b);
        }
        net
    }

    pub fn layer_sizes(&self) -> [usize; 3] {
        [self.n_in, self.n_hidden, self.n_out]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn off_b1(&self) -> usize {
        self.n_hidden * self.n_in
    }
    fn off_w2(&self) -> usize {
        self.off_b1() + self.n_hidden
    }
    fn off_b2(&self) -> usize {
        self.off_w2() + self.n_out * self.n_hidden
    }

    pub fn w1(&self, j: usize, d: usize) -> f64 {
        self.params[j * self.n_in + d]
    }
    pub fn b1(&self, j: usize) -> f64 {
        self.params[self.off_b1() + j]
    }
    pub fn w2(&self, k: usize, j: usize) -> f64 {
        self.params[self.off_w2() + k * self.n_hidden + j]
    }
    pub fn b2(&self, k: usize) -> f64 {
        self.params[self.off_b2() + k]
    }

    fn hidden_into(&self, x: &[f64], h: &mut [f64]) {
        let (d_in, ob1) = (self.n_in, self.off_b1());
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &self.params[j * d_in..(j + 1) * d_in];
            let a: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.params[ob1 + j];
            *hj = a.tanh();
        }
    }

    fn output_into(&self, h: &[f64], y: &mut [f64]) {
        let (nh, ow2, ob2) = (self.n_hidden, self.off_w2(), self.off_b2());
        for (k, yk) in y.iter_mut().enumerate() {
            let row = &self.params[ow2 + k * nh..ow2 + (k + 1) * nh];
            *yk = row.iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + self.params[ob2 + k];
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        shape(self.n_in, x.len())?;
        let mut h = vec![0.0; self.n_hidden];
        let mut y = vec![0.0; self.n_out];
        self.hidden_into(x, &mut h);
        self.output_into(&h, &mut y);
        Ok(y)
    }

    pub fn predict(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    /// Multiply the output layer (weights and biases) by `c`.
    pub fn scale_output(&mut self, c: f64) {
        let o = self.off_w2();
        for p in &mut self.params[o..] {
            *p *= c;
        }
    }

    fn check_batch(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        shape(xs.len(), ys.len())?;
        for (x, y) in xs.iter().zip(ys) {
            shape(self.n_in, x.len())?;
            shape(self.n_out, y.len())?;
        }
        Ok(())
    }

    fn sse(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
        let mut h = vec![0.0; self.n_hidden];
        let mut out = vec![0.0; self.n_out];
        let mut s = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            self.hidden_into(x, &mut h);
            self.output_into(&h, &mut out);
            s += y.iter().zip(&out).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("mlp-v1\n");
        let _ = writeln!(s, "{} {} {}", self.n_in, self.n_hidden, self.n_out);
        for p in &self.params {
            let _ = writeln!(s, "{p:.16e}");
        }
        s
    }

    /// Parse the `mlp-v1` text format. `path` is only used in error messages.
    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, msg: &str| Error::format(path, line, msg);
        match lines.next() {
            Some((_, "mlp-v1")) => {}
            Some((i, _)) => return Err(bad(i + 1, "expected header `mlp-v1`")),
            None => return Err(bad(1, "empty model file")),
        }
        let (i, sizes) = lines.next().ok_or_else(|| bad(2, "missing layer sizes"))?;
        let sizes: Vec<usize> = sizes
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(i + 1, "layer sizes must be integers"))?;
        if sizes.len() != 3 || sizes.contains(&0) {
            return Err(bad(i + 1, "expected three positive layer sizes"));
        }
        let n = Self::param_count_for(sizes[0], sizes[1], sizes[2]);
        let mut params = Vec::with_capacity(n);
        for (i, l) in lines {
            let l = l.trim();
            if l.is_empty() {
                continue;
            }
            let v: f64 = l.parse().map_err(|_| bad(i + 1, "unparseable parameter"))?;
            if !v.is_finite() {
                return Err(bad(i + 1, "non-finite parameter"));
            }
            params.push(v);
        }
        if params.len() != n {
            return Err(bad(
                text.lines().count(),
                &format!("expected {n} parameters, found {}", params.len()),
            ));
        }
        Self::from_params(sizes[0], sizes[1], sizes[2], params)
    }
}

/// Mean over samples of the squared error norm.
pub fn mse(y: &[Vec<f64>], y_hat: &[Vec<f64>]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Domain("mse of empty input".into()));
    }
    shape(y.len(), y_hat.len())?;
    let mut s = 0.0;
    for (a, b) in y.iter().zip(y_hat) {
        shape(a.len(), b.len())?;
        s += a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    }
    Ok(s / y.len() as f64)
}

/// Explicit Jacobian of `e = y − ŷ`: one row per (sample, output), sample-major.
pub fn jacobian(net: &MlpNetwork, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if xs.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let [d_in, nh, k_out] = net.layer_sizes();
    let p = net.params.len();
    let mut h = vec![0.0; nh];
    let mut rows = Vec::with_capacity(xs.len() * k_out);
    for x in xs {
        shape(d_in, x.len())?;
        net.hidden_into(x, &mut h);
        for k in 0..k_out {
            let mut r = vec![0.0; p];
            for j in 0..nh {
                let g = net.w2(k, j) * (1.0 - h[j] * h[j]);
                for d in 0..d_in {
                    r[j * d_in + d] = -g * x[d];
                }
                r[net.off_b1() + j] = -g;
                r[net.off_w2() + k * nh + j] = -h[j];
            }
            r[net.off_b2() + k] = -1.0;
            rows.push(r);
        }
    }
    Ok(rows)
}

/// Gauss-Newton system for the whole batch.
///
/// Returns `(JᵀJ, Jᵀe, Σ‖e‖²)` with `JᵀJ` row-major `P × P` in the canonical
/// parameter order. Assembled from per-sample outer products that exploit the
/// fact that every output shares the hidden layer, so the cost does not grow
/// with `n_out` the way an explicit `(N·n_out) × P` Jacobian would.
pub fn normal_equations(net: &MlpNetwork, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    net.check_batch(xs, ys)?;
    let [d_in, nh, k_out] = net.layer_sizes();
    let da = d_in + 1;
    let ph = nh * da;
    let ha_n = nh + 1;

    let mut s = vec![0.0; ph * ph]; // Σ z zᵀ, upper triangle
    let mut t = vec![0.0; ph * ha_n]; // Σ z haᵀ
    let mut o = vec![0.0; ha_n * ha_n]; // Σ ha haᵀ
    let mut gh = vec![0.0; ph];
    let mut go = vec![0.0; k_out * ha_n];
    let mut sse = 0.0;

    let mut h = vec![0.0; nh];
    let mut ha = vec![1.0; ha_n];
    let mut out = vec![0.0; k_out];
    let mut z = vec![0.0; ph];
    let mut c = vec![0.0; nh];
    let mut xa = vec![1.0; da];

    for (x, y) in xs.iter().zip(ys) {
        net.hidden_into(x, &mut h);
        net.output_into(&h, &mut out);
        xa[..d_in].copy_from_slice(x);
        ha[..nh].copy_from_slice(&h);
        for j in 0..nh {
            let u = 1.0 - h[j] * h[j];
            let mut ew = 0.0;
            for k in 0..k_out {
                ew += (y[k] - out[k]) * net.w2(k, j);
            }
            c[j] = u * ew;
            for d in 0..da {
                z[j * da + d] = u * xa[d];
            }
        }
        for k in 0..k_out {
            let e = y[k] - out[k];
            sse += e * e;
            for (g, v) in go[k * ha_n..(k + 1) * ha_n].iter_mut().zip(&ha) {
                *g += e * v;
            }
        }
        for j in 0..nh {
            for d in 0..da {
                gh[j * da + d] += c[j] * xa[d];
            }
        }
        for a in 0..ph {
            let za = z[a];
            let row = &mut s[a * ph + a..(a + 1) * ph];
            for (r, zb) in row.iter_mut().zip(&z[a..]) {
                *r += za * zb;
            }
            let trow = &mut t[a * ha_n..(a + 1) * ha_n];
            for (r, hb) in trow.iter_mut().zip(&ha) {
                *r += za * hb;
            }
        }
        for a in 0..ha_n {
            let va = ha[a];
            for b in a..ha_n {
                o[a * ha_n + b] += va * ha[b];
            }
        }
    }

    // augmented index → canonical index
    let p = net.params.len();
    let mut perm = vec![0usize; p];
    for j in 0..nh {
        for d in 0..d_in {
            perm[j * da + d] = j * d_in + d;
        }
        perm[j * da + d_in] = net.off_b1() + j;
    }
    for k in 0..k_out {
        for j in 0..nh {
            perm[ph + k * ha_n + j] = net.off_w2() + k * nh + j;
        }
        perm[ph + k * ha_n + nh] = net.off_b2() + k;
    }

    let mut m = vec![0.0; nh * nh];
    for j in 0..nh {
        for jj in 0..nh {
            m[j * nh + jj] = (0..k_out).map(|k| net.w2(k, j) * net.w2(k, jj)).sum();
        }
    }

    let mut jtj = vec![0.0; p * p];
    let mut put = |a: usize, b: usize, v: f64| {
        let (ca, cb) = (perm[a], perm[b]);
        jtj[ca * p + cb] = v;
        jtj[cb * p + ca] = v;
    };
    for a in 0..ph {
        for b in a..ph {
            put(a, b, m[(a / da) * nh + b / da] * s[a * ph + b]);
        }
        let j = a / da;
        for k in 0..k_out {
            let w = net.w2(k, j);
            for jb in 0..ha_n {
                put(a, ph + k * ha_n + jb, w * t[a * ha_n + jb]);
            }
        }
    }
    for k in 0..k_out {
        let base = ph + k * ha_n;
        for a in 0..ha_n {
            for b in a..ha_n {
                put(base + a, base + b, o[a * ha_n + b]);
            }
        }
    }

    // J = −∂ŷ/∂θ, so Jᵀe = −(accumulated ∂ŷ/∂θ · e)
    let mut jte = vec![0.0; p];
    for a in 0..ph {
        jte[perm[a]] = -gh[a];
    }
    for a in 0..k_out * ha_n {
        jte[perm[ph + a]] = -go[a];
    }
    Ok((jtj, jte, sse))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mu_init: f64,
    pub mu_inc: f64,
    pub mu_dec: f64,
    pub max_mu: f64,
    pub max_epochs: usize,
    pub goal_mse: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mu_init: 1e-3,
            mu_inc: 10.0,
            mu_dec: 0.1,
            max_mu: 1e10,
            max_epochs: 1000,
            goal_mse: 1e-10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_init > 0.0) {
            return Err(Error::Config("mu_init must be positive".into()));
        }
        if !(self.mu_inc > 1.0) {
            return Err(Error::Config("mu_inc must exceed 1".into()));
        }
        if !(self.mu_dec > 0.0 && self.mu_dec < 1.0) {
            return Err(Error::Config("mu_dec must lie in (0, 1)".into()));
        }
        if !(self.goal_mse >= 0.0) {
            return Err(Error::Config("goal_mse must be nonnegative".into()));
        }
        if !(self.max_mu > self.mu_init) {
            return Err(Error::Config("max_mu must exceed mu_init".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Goal,
    MaxEpochs,
    MaxMu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub final_mse: f64,
    pub epochs: usize,
    /// initial MSE followed by the MSE after each accepted step
    pub mse_history: Vec<f64>,
    pub error_mean: f64,
    pub error_std: f64,
    pub correlation_r: Option<f64>,
    pub stop: StopReason,
}

pub fn lm_train(
    net: &MlpNetwork,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(MlpNetwork, TrainReport)> {
    cfg.validate()?;
    net.check_batch(xs, ys)?;
    let n = xs.len() as f64;
    let mut net = net.clone();
    let mut cur = net.sse(xs, ys) / n;
    if !cur.is_finite() {
        return Err(Error::Diverged("initial loss is not finite".into()));
    }
    let p = net.params.len();
    let mut mu = cfg.mu_init;
    let mut history = vec![cur];
    let mut epochs = 0;
    let stop = 'outer: loop {
        if cur <= cfg.goal_mse {
            break StopReason::Goal;
        }
        if epochs >= cfg.max_epochs {
            break StopReason::MaxEpochs;
        }
        let (jtj, jte, _) = normal_equations(&net, xs, ys)?;
        let rhs = DVector::from_vec(jte);
        loop {
            if mu > cfg.max_mu {
                break 'outer StopReason::MaxMu;
            }
            let mut a = DMatrix::from_row_slice(p, p, &jtj);
            for i in 0..p {
                a[(i, i)] += mu;
            }
            let step = a.cholesky().map(|ch| ch.solve(&rhs));
            if let Some(delta) = step {
                let mut trial = net.clone();
                for (t, d) in trial.params.iter_mut().zip(delta.iter()) {
                    *t -= d;
                }
                let m = trial.sse(xs, ys) / n;
                if m.is_finite() && m < cur {
                    net = trial;
                    cur = m;
                    history.push(m);
                    mu *= cfg.mu_dec;
                    break;
                }
            }
            mu *= cfg.mu_inc;
        }
        epochs += 1;
    };
    log::debug!("lm_train: {epochs} epochs, mse {cur:.3e}, stop {stop:?}");

    let pred = net.predict(xs)?;
    let yf: Vec<f64> = ys.iter().flatten().copied().collect();
    let pf: Vec<f64> = pred.iter().flatten().copied().collect();
    let st = error_stats(&yf, &pf)?;
    Ok((
        net,
        TrainReport {
            final_mse: cur,
            epochs,
            mse_history: history,
            error_mean: st.mean,
            error_std: st.std,
            correlation_r: st.correlation_r,
            stop,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub correlation_r: Option<f64>,
    pub rmse: f64,
}

pub fn error_stats(y: &[f64], y_hat: &[f64]) -> Result<ErrorStats> {
    shape(y.len(), y_hat.len())?;
    if y.len() < 2 {
        return Err(Error::Domain("error statistics need at least two samples".into()));
    }
    let n = y.len() as f64;
    let e: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| a - b).collect();
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let rmse = (e.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    Ok(ErrorStats {
        mean,
        std: var.sqrt(),
        correlation_r: pearson(y, y_hat),
        rmse,
    })
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Per-feature affine map onto [−1, 1]: `z = (x − offset)·scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn fit(data: &[Vec<f64>]) -> Result<Self> {
        let first = data.first().ok_or_else(|| Error::Domain("normalizer fit on empty data".into()))?;
        let d = first.len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for row in data {
            shape(d, row.len())?;
            for (i, &v) in row.iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        let mut offset = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for i in 0..d {
            if hi[i] > lo[i] {
                offset[i] = 0.5 * (hi[i] + lo[i]);
                scale[i] = 2.0 / (hi[i] - lo[i]);
            } else {
                offset[i] = lo[i];
            }
        }
        Ok(Normalizer { offset, scale })
    }

    pub fn identity(d: usize) -> Self {
        Normalizer {
            offset: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| (v - o) * s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| v / s + o)
            .collect()
    }

    pub fn apply_all(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.apply(x)).collect()
    }
}
