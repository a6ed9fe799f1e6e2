//! Forward and backward passes for the trainable architectures. All
//! activations are smooth (tanh) and gradients are exact.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Architecture, Forecaster};

/// Seeded initialization for one parameter segment. Weights are normal with
/// std 1/sqrt(fan_in); biases start at zero except the frozen feature bias,
/// which is randomized so the frozen features are diverse.
pub fn init_segment(slice: &mut [f64], fan_in: usize, name: &str, rng: &mut ChaCha8Rng) {
    let is_bias = name.ends_with('b') || name.ends_with("_b");
    if is_bias && name != "feat_b" && name != "embed_b" {
        slice.fill(0.0);
        return;
    }
    let std = 1.0 / (fan_in as f64).sqrt();
    for v in slice.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = std * z;
    }
}

pub fn forward(f: &Forecaster, x: &[f64]) -> Vec<f64> {
    match f.arch {
        Architecture::ScratchMlp { hidden } => mlp_forward(f, x, hidden).0,
        Architecture::ScratchCnn { channels, kernel } => cnn_forward(f, x, channels, kernel).0,
        Architecture::ScratchTransformer { d_model, heads } => {
            transformer_forward(f, x, d_model, heads).0
        }
        Architecture::FrozenFeature { d_feat } => frozen_forward(f, x, d_feat).0,
        Architecture::StatEnsemble => unreachable!("stat ensemble handled by caller"),
    }
}

pub fn backward(f: &Forecaster, x: &[f64], dout: &[f64], grad: &mut [f64]) {
    match f.arch {
        Architecture::ScratchMlp { hidden } => mlp_backward(f, x, dout, grad, hidden),
        Architecture::ScratchCnn { channels, kernel } => {
            cnn_backward(f, x, dout, grad, channels, kernel)
        }
        Architecture::ScratchTransformer { d_model, heads } => {
            transformer_backward(f, x, dout, grad, d_model, heads)
        }
        Architecture::FrozenFeature { d_feat } => frozen_backward(f, x, dout, grad, d_feat),
        Architecture::StatEnsemble => unreachable!("stat ensemble has no gradients"),
    }
}

// ---------------------------------------------------------------- MLP

fn mlp_forward(f: &Forecaster, x: &[f64], hidden: usize) -> (Vec<f64>, Vec<f64>) {
    let l = f.window.context_len;
    let h = f.window.horizon;
    let w1 = &f.params[f.layout.seg("w1")];
    let b1 = &f.params[f.layout.seg("b1")];
    let w2 = &f.params[f.layout.seg("w2")];
    let b2 = &f.params[f.layout.seg("b2")];
    let mut act = vec![0.0; hidden];
    for i in 0..hidden {
        let mut z = b1[i];
        for j in 0..l {
            z += w1[i * l + j] * x[j];
        }
        act[i] = z.tanh();
    }
    let mut out = vec![0.0; h];
    for o in 0..h {
        let mut z = b2[o];
        for i in 0..hidden {
            z += w2[o * hidden + i] * act[i];
        }
        out[o] = z;
    }
    (out, act)
}

fn mlp_backward(f: &Forecaster, x: &[f64], dout: &[f64], grad: &mut [f64], hidden: usize) {
    let l = f.window.context_len;
    let h = f.window.horizon;
    let (_, act) = mlp_forward(f, x, hidden);
    let w2 = f.params[f.layout.seg("w2")].to_vec();
    let (r_w1, r_b1, r_w2, r_b2) = (
        f.layout.seg("w1"),
        f.layout.seg("b1"),
        f.layout.seg("w2"),
        f.layout.seg("b2"),
    );
    let mut dact = vec![0.0; hidden];
    for o in 0..h {
        grad[r_b2.start + o] += dout[o];
        for i in 0..hidden {
            grad[r_w2.start + o * hidden + i] += dout[o] * act[i];
            dact[i] += dout[o] * w2[o * hidden + i];
        }
    }
    for i in 0..hidden {
        let dz = dact[i] * (1.0 - act[i] * act[i]);
        grad[r_b1.start + i] += dz;
        for j in 0..l {
            grad[r_w1.start + i * l + j] += dz * x[j];
        }
    }
}

// ---------------------------------------------------------------- CNN

struct CnnCache {
    a1: Vec<f64>, // channels x L
    a2: Vec<f64>, // channels x L
    pool: Vec<f64>,
}

fn cnn_forward(f: &Forecaster, x: &[f64], channels: usize, kernel: usize) -> (Vec<f64>, CnnCache) {
    let l = f.window.context_len;
    let h = f.window.horizon;
    let w1 = &f.params[f.layout.seg("conv1_w")];
    let b1 = &f.params[f.layout.seg("conv1_b")];
    let w2 = &f.params[f.layout.seg("conv2_w")];
    let b2 = &f.params[f.layout.seg("conv2_b")];
    let wh = &f.params[f.layout.seg("head_w")];
    let bh = &f.params[f.layout.seg("head_b")];

    // causal conv: output at t uses inputs t-kernel+1..=t, zero-padded left
    let mut a1 = vec![0.0; channels * l];
    for c in 0..channels {
        for t in 0..l {
            let mut z = b1[c];
            for j in 0..kernel {
                let idx = t as isize - (kernel as isize - 1) + j as isize;
                if idx >= 0 {
                    z += w1[c * kernel + j] * x[idx as usize];
                }
            }
            a1[c * l + t] = z.tanh();
        }
    }
    let mut a2 = vec![0.0; channels * l];
    for c2 in 0..channels {
        for t in 0..l {
            let mut z = b2[c2];
            for c1 in 0..channels {
                for j in 0..kernel {
                    let idx = t as isize - (kernel as isize - 1) + j as isize;
                    if idx >= 0 {
                        z += w2[(c2 * channels + c1) * kernel + j] * a1[c1 * l + idx as usize];
                    }
                }
            }
            a2[c2 * l + t] = z.tanh();
        }
    }
    let mut pool = vec![0.0; channels];
    for c in 0..channels {
        pool[c] = a2[c * l..(c + 1) * l].iter().sum::<f64>() / l as f64;
    }
    let mut out = vec![0.0; h];
    for o in 0..h {
        let mut z = bh[o];
        for c in 0..channels {
            z += wh[o * channels + c] * pool[c];
        }
        out[o] = z;
    }
    (out, CnnCache { a1, a2, pool })
}

fn cnn_backward(
    f: &Forecaster,
    x: &[f64],
    dout: &[f64],
    grad: &mut [f64],
    channels: usize,
    kernel: usize,
) {
    let l = f.window.context_len;
    let h = f.window.horizon;
    let (_, cache) = cnn_forward(f, x, channels, kernel);
    let w2 = f.params[f.layout.seg("conv2_w")].to_vec();
    let wh = f.params[f.layout.seg("head_w")].to_vec();
    let (r_c1w, r_c1b, r_c2w, r_c2b, r_hw, r_hb) = (
        f.layout.seg("conv1_w"),
        f.layout.seg("conv1_b"),
        f.layout.seg("conv2_w"),
        f.layout.seg("conv2_b"),
        f.layout.seg("head_w"),
        f.layout.seg("head_b"),
    );

    let mut dpool = vec![0.0; channels];
    for o in 0..h {
        grad[r_hb.start + o] += dout[o];
        for c in 0..channels {
            grad[r_hw.start + o * channels + c] += dout[o] * cache.pool[c];
            dpool[c] += dout[o] * wh[o * channels + c];
        }
    }
    // through mean pool and tanh of conv2
    let mut dz2 = vec![0.0; channels * l];
    for c in 0..channels {
        let d = dpool[c] / l as f64;
        for t in 0..l {
            let a = cache.a2[c * l + t];
            dz2[c * l + t] = d * (1.0 - a * a);
        }
    }
    let mut da1 = vec![0.0; channels * l];
    for c2 in 0..channels {
        for t in 0..l {
            let g = dz2[c2 * l + t];
            grad[r_c2b.start + c2] += g;
            for c1 in 0..channels {
                for j in 0..kernel {
                    let idx = t as isize - (kernel as isize - 1) + j as isize;
                    if idx >= 0 {
                        grad[r_c2w.start + (c2 * channels + c1) * kernel + j] +=
                            g * cache.a1[c1 * l + idx as usize];
                        da1[c1 * l + idx as usize] += g * w2[(c2 * channels + c1) * kernel + j];
                    }
                }
            }
        }
    }
    for c in 0..channels {
        for t in 0..l {
            let a = cache.a1[c * l + t];
            let g = da1[c * l + t] * (1.0 - a * a);
            grad[r_c1b.start + c] += g;
            for j in 0..kernel {
                let idx = t as isize - (kernel as isize - 1) + j as isize;
                if idx >= 0 {
                    grad[r_c1w.start + c * kernel + j] += g * x[idx as usize];
                }
            }
        }
    }
}

// -------------------------------------------------------- Transformer

fn positional(t: usize, i: usize, d: usize) -> f64 {
    let exponent = (2 * (i / 2)) as f64 / d as f64;
    let angle = t as f64 / 10000f64.powf(exponent);
    if i % 2 == 0 {
        angle.sin()
    } else {
        angle.cos()
    }
}

struct TfCache {
    embed: Vec<f64>, // L x d
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    attn: Vec<f64>,    // per head: L x L softmax weights, concatenated
    heads_out: Vec<f64>, // L x d (concatenated head outputs, pre-Wo)
    pooled: Vec<f64>,  // d
}

/// Row-major matmul helper: (l x d) by (d x d).
fn project(e: &[f64], w: &[f64], l: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; l * d];
    for t in 0..l {
        for i in 0..d {
            let mut z = 0.0;
            for j in 0..d {
                z += e[t * d + j] * w[j * d + i];
            }
            out[t * d + i] = z;
        }
    }
    out
}

fn transformer_forward(
    f: &Forecaster,
    x: &[f64],
    d: usize,
    heads: usize,
) -> (Vec<f64>, TfCache) {
    let l = f.window.context_len;
    let h = f.window.horizon;
    let dh = d / heads;
    let we = &f.params[f.layout.seg("embed_w")];
    let be = &f.params[f.layout.seg("embed_b")];
    let wq = &f.params[f.layout.seg("wq")];
    let wk = &f.params[f.layout.seg("wk")];
    let wv = &f.params[f.layout.seg("wv")];
    let wo = &f.params[f.layout.seg("wo")];
    let wh_ = &f.params[f.layout.seg("head_w")];
    let bh = &f.params[f.layout.seg("head_b")];

    let mut embed = vec![0.0; l * d];
    for t in 0..l {
        for i in 0..d {
            embed[t * d + i] = x[t] * we[i] + be[i] + positional(t, i, d);
        }
    }
    let q = project(&embed, wq, l, d);
    let k = project(&embed, wk, l, d);
    let v = project(&embed, wv, l, d);

    let scale = 1.0 / (dh as f64).sqrt();
    let mut attn = vec![0.0; heads * l * l];
    let mut heads_out = vec![0.0; l * d];
    for hd in 0..heads {
        let off = hd * dh;
        for t in 0..l {
            // scores with max-subtracted softmax
            let mut scores = vec![0.0; l];
            let mut max = f64::NEG_INFINITY;
            for u in 0..l {
                let mut s = 0.0;
                for i in 0..dh {
                    s += q[t * d + off + i] * k[u * d + off + i];
                }
                scores[u] = s * scale;
                max = max.max(scores[u]);
            }
            let mut sum = 0.0;
            for u in 0..l {
                scores[u] = (scores[u] - max).exp();
                sum += scores[u];
            }
            for u in 0..l {
                attn[hd * l * l + t * l + u] = scores[u] / sum;
            }
            for i in 0..dh {
                let mut z = 0.0;
                for u in 0..l {
                    z += attn[hd * l * l + t * l + u] * v[u * d + off + i];
                }
                heads_out[t * d + off + i] = z;
            }
        }
    }
    // output projection, residual, mean pool
    let proj = project(&heads_out, wo, l, d);
    let mut pooled = vec![0.0; d];
    for t in 0..l {
        for i in 0..d {
            pooled[i] += (embed[t * d + i] + proj[t * d + i]) / l as f64;
        }
    }
    let mut out = vec![0.0; h];
    for o in 0..h {
        let mut z = bh[o];
        for i in 0..d {
            z += wh_[o * d + i] * pooled[i];
        }
        out[o] = z;
    }
    (
        out,
        TfCache {
            embed,
            q,
            k,
            v,
            attn,
            heads_out,
            pooled,
        },
    )
}

fn transformer_backward(
    f: &Forecaster,
    x: &[f64],
    dout: &[f64],
    grad: &mut [f64],
    d: usize,
    heads: usize,
) {
    let l = f.window.context_len;
    let h = f.window.horizon;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (_, cache) = transformer_forward(f, x, d, heads);
    let wq = f.params[f.layout.seg("wq")].to_vec();
    let wk = f.params[f.layout.seg("wk")].to_vec();
    let wv = f.params[f.layout.seg("wv")].to_vec();
    let wo = f.params[f.layout.seg("wo")].to_vec();
    let wh_ = f.params[f.layout.seg("head_w")].to_vec();
    let (r_we, r_be, r_wq, r_wk, r_wv, r_wo, r_hw, r_hb) = (
        f.layout.seg("embed_w"),
        f.layout.seg("embed_b"),
        f.layout.seg("wq"),
        f.layout.seg("wk"),
        f.layout.seg("wv"),
        f.layout.seg("wo"),
        f.layout.seg("head_w"),
        f.layout.seg("head_b"),
    );

    // head gradient and pooled gradient
    let mut dpooled = vec![0.0; d];
    for o in 0..h {
        grad[r_hb.start + o] += dout[o];
        for i in 0..d {
            grad[r_hw.start + o * d + i] += dout[o] * cache.pooled[i];
            dpooled[i] += dout[o] * wh_[o * d + i];
        }
    }
    // mean pool distributes 1/L to every timestep; Z = embed + proj
    let mut dz = vec![0.0; l * d];
    for t in 0..l {
        for i in 0..d {
            dz[t * d + i] = dpooled[i] / l as f64;
        }
    }
    let mut dembed = dz.clone(); // residual path
    // proj = heads_out Wo
    let mut dheads_out = vec![0.0; l * d];
    for t in 0..l {
        for i in 0..d {
            let g = dz[t * d + i];
            for j in 0..d {
                grad[r_wo.start + j * d + i] += cache.heads_out[t * d + j] * g;
                dheads_out[t * d + j] += g * wo[j * d + i];
            }
        }
    }
    // attention backward per head
    let mut dq = vec![0.0; l * d];
    let mut dk = vec![0.0; l * d];
    let mut dv = vec![0.0; l * d];
    for hd in 0..heads {
        let off = hd * dh;
        for t in 0..l {
            // dA[t,u] = sum_i dheads_out[t,off+i] * v[u,off+i]
            let mut da = vec![0.0; l];
            for u in 0..l {
                let mut s = 0.0;
                for i in 0..dh {
                    s += dheads_out[t * d + off + i] * cache.v[u * d + off + i];
                }
                da[u] = s;
            }
            // dV[u] += A[t,u] * dheads_out[t]
            for u in 0..l {
                let a = cache.attn[hd * l * l + t * l + u];
                for i in 0..dh {
                    dv[u * d + off + i] += a * dheads_out[t * d + off + i];
                }
            }
            // softmax backward: dS[u] = A[u] * (da[u] - sum_u' A[u'] da[u'])
            let dot: f64 = (0..l)
                .map(|u| cache.attn[hd * l * l + t * l + u] * da[u])
                .sum();
            for u in 0..l {
                let a = cache.attn[hd * l * l + t * l + u];
                let ds = a * (da[u] - dot) * scale;
                for i in 0..dh {
                    dq[t * d + off + i] += ds * cache.k[u * d + off + i];
                    dk[u * d + off + i] += ds * cache.q[t * d + off + i];
                }
            }
        }
    }
    // projection gradients: Q = E Wq etc.
    for t in 0..l {
        for i in 0..d {
            let (gq, gk, gv) = (dq[t * d + i], dk[t * d + i], dv[t * d + i]);
            for j in 0..d {
                let e = cache.embed[t * d + j];
                grad[r_wq.start + j * d + i] += e * gq;
                grad[r_wk.start + j * d + i] += e * gk;
                grad[r_wv.start + j * d + i] += e * gv;
                dembed[t * d + j] += gq * wq[j * d + i] + gk * wk[j * d + i] + gv * wv[j * d + i];
            }
        }
    }
    // embedding gradients: E[t,i] = x[t]*we[i] + be[i] + pos
    for t in 0..l {
        for i in 0..d {
            grad[r_we.start + i] += dembed[t * d + i] * x[t];
            grad[r_be.start + i] += dembed[t * d + i];
        }
    }
}

// ----------------------------------------------------- Frozen feature

fn frozen_forward(f: &Forecaster, x: &[f64], d_feat: usize) -> (Vec<f64>, Vec<f64>) {
    let l = f.window.context_len;
    let h = f.window.horizon;
    let wf = &f.params[f.layout.seg("feat_w")];
    let bf = &f.params[f.layout.seg("feat_b")];
    let wh_ = &f.params[f.layout.seg("head_w")];
    let bh = &f.params[f.layout.seg("head_b")];
    let mut feat = vec![0.0; d_feat];
    for i in 0..d_feat {
        let mut z = bf[i];
        for j in 0..l {
            z += wf[i * l + j] * x[j];
        }
        feat[i] = z.tanh();
    }
    let mut out = vec![0.0; h];
    for o in 0..h {
        let mut z = bh[o];
        for i in 0..d_feat {
            z += wh_[o * d_feat + i] * feat[i];
        }
        out[o] = z;
    }
    (out, feat)
}

fn frozen_backward(f: &Forecaster, x: &[f64], dout: &[f64], grad: &mut [f64], d_feat: usize) {
    let h = f.window.horizon;
    let (_, feat) = frozen_forward(f, x, d_feat);
    let (r_hw, r_hb) = (f.layout.seg("head_w"), f.layout.seg("head_b"));
    for o in 0..h {
        grad[r_hb.start + o] += dout[o];
        for i in 0..d_feat {
            grad[r_hw.start + o * d_feat + i] += dout[o] * feat[i];
        }
    }
}
