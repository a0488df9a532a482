//! Minimal LSTM cell with exact backpropagation through time, operating
//! on flat `f64` parameter slices so a whole model can live in one
//! parameter vector.
//!
//! Gate order in the stacked weight matrices is `(i, f, o, g)`:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
//! o = σ(W_o x + U_o h + b_o)      g = tanh(W_g x + U_g h + b_g)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-step activations kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct LstmCache {
    pub i: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub o: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub tanh_c: Vec<Vec<f64>>,
    /// Hidden states; `h[t]` is the output of step `t`.
    pub h: Vec<Vec<f64>>,
}

/// Forward pass over a sequence; initial hidden and cell states are zero.
/// Returns the final hidden state and the activation cache.
///
/// `wx` is `4H×D` row-major, `wh` is `4H×H`, `b` is `4H`.
pub fn lstm_forward(
    input_dim: usize,
    hidden: usize,
    wx: &[f64],
    wh: &[f64],
    b: &[f64],
    xs: &[&[f64]],
) -> (Vec<f64>, LstmCache) {
    assert_eq!(wx.len(), 4 * hidden * input_dim);
    assert_eq!(wh.len(), 4 * hidden * hidden);
    assert_eq!(b.len(), 4 * hidden);

    let mut cache = LstmCache::default();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut pre = vec![0.0; 4 * hidden];

    for &x in xs {
        assert_eq!(x.len(), input_dim);
        for k in 0..4 * hidden {
            let mut acc = b[k];
            let wrow = &wx[k * input_dim..(k + 1) * input_dim];
            for (w, xi) in wrow.iter().zip(x) {
                acc += w * xi;
            }
            let urow = &wh[k * hidden..(k + 1) * hidden];
            for (u, hi) in urow.iter().zip(&h) {
                acc += u * hi;
            }
            pre[k] = acc;
        }
        let mut gi = vec![0.0; hidden];
        let mut gf = vec![0.0; hidden];
        let mut go = vec![0.0; hidden];
        let mut gg = vec![0.0; hidden];
        for j in 0..hidden {
            gi[j] = sigmoid(pre[j]);
            gf[j] = sigmoid(pre[hidden + j]);
            go[j] = sigmoid(pre[2 * hidden + j]);
            gg[j] = pre[3 * hidden + j].tanh();
        }
        let mut c_new = vec![0.0; hidden];
        let mut tc = vec![0.0; hidden];
        let mut h_new = vec![0.0; hidden];
        for j in 0..hidden {
            c_new[j] = gf[j] * c[j] + gi[j] * gg[j];
            tc[j] = c_new[j].tanh();
            h_new[j] = go[j] * tc[j];
        }
        cache.i.push(gi);
        cache.f.push(gf);
        cache.o.push(go);
        cache.g.push(gg);
        cache.c.push(c_new.clone());
        cache.tanh_c.push(tc);
        cache.h.push(h_new.clone());
        c = c_new;
        h = h_new;
    }
    (h, cache)
}

/// Exact BPTT from a gradient on the final hidden state. Accumulates into
/// `gwx`, `gwh`, `gb` (same shapes as the parameters).
#[allow(clippy::too_many_arguments)]
pub fn lstm_backward(
    input_dim: usize,
    hidden: usize,
    wh: &[f64],
    xs: &[&[f64]],
    cache: &LstmCache,
    dh_final: &[f64],
    gwx: &mut [f64],
    gwh: &mut [f64],
    gb: &mut [f64],
) {
    let steps = xs.len();
    let mut dh = dh_final.to_vec();
    let mut dc = vec![0.0; hidden];
    let mut dz = vec![0.0; 4 * hidden];

    for t in (0..steps).rev() {
        let (gi, gf, go, gg) = (&cache.i[t], &cache.f[t], &cache.o[t], &cache.g[t]);
        let tc = &cache.tanh_c[t];
        let c_prev: &[f64] = if t == 0 { &[] } else { &cache.c[t - 1] };
        let h_prev: &[f64] = if t == 0 { &[] } else { &cache.h[t - 1] };

        for j in 0..hidden {
            let d_o = dh[j] * tc[j];
            let d_c = dc[j] + dh[j] * go[j] * (1.0 - tc[j] * tc[j]);
            let cp = if t == 0 { 0.0 } else { c_prev[j] };
            let d_i = d_c * gg[j];
            let d_f = d_c * cp;
            let d_g = d_c * gi[j];
            dc[j] = d_c * gf[j];
            dz[j] = d_i * gi[j] * (1.0 - gi[j]);
            dz[hidden + j] = d_f * gf[j] * (1.0 - gf[j]);
            dz[2 * hidden + j] = d_o * go[j] * (1.0 - go[j]);
            dz[3 * hidden + j] = d_g * (1.0 - gg[j] * gg[j]);
        }

        let x = xs[t];
        for k in 0..4 * hidden {
            let d = dz[k];
            if d == 0.0 {
                continue;
            }
            let grow = &mut gwx[k * input_dim..(k + 1) * input_dim];
            for (g, xi) in grow.iter_mut().zip(x) {
                *g += d * xi;
            }
            if t > 0 {
                let grow = &mut gwh[k * hidden..(k + 1) * hidden];
                for (g, hi) in grow.iter_mut().zip(h_prev) {
                    *g += d * hi;
                }
            }
            gb[k] += d;
        }

        for j in 0..hidden {
            let mut acc = 0.0;
            for k in 0..4 * hidden {
                acc += wh[k * hidden + j] * dz[k];
            }
            dh[j] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_give_zero_hidden() {
        let (d, h) = (5, 3);
        let wx = vec![0.0; 4 * h * d];
        let wh = vec![0.0; 4 * h * h];
        let b = vec![0.0; 4 * h];
        let x1 = vec![1.0; d];
        let x2 = vec![-2.0; d];
        let (hf, _) = lstm_forward(d, h, &wx, &wh, &b, &[&x1, &x2]);
        assert!(hf.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_hidden() {
        let (d, h) = (4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let wx: Vec<f64> = (0..4 * h * d).map(|_| rng.random::<f64>() - 0.5).collect();
        let wh: Vec<f64> = (0..4 * h * h).map(|_| rng.random::<f64>() - 0.5).collect();
        let b = vec![0.0; 4 * h];
        let x = vec![0.0; d];
        let (hf, _) = lstm_forward(d, h, &wx, &wh, &b, &[&x, &x, &x]);
        assert!(hf.iter().all(|&v| v == 0.0));
    }

    /// Straight-line scalar re-implementation used as an oracle.
    fn scalar_lstm(
        d: usize,
        h: usize,
        wx: &[f64],
        wh: &[f64],
        b: &[f64],
        xs: &[&[f64]],
    ) -> Vec<f64> {
        let mut hid = vec![0.0; h];
        let mut cell = vec![0.0; h];
        for x in xs {
            let mut z = vec![0.0; 4 * h];
            for k in 0..4 * h {
                z[k] = b[k];
                for a in 0..d {
                    z[k] += wx[k * d + a] * x[a];
                }
                for a in 0..h {
                    z[k] += wh[k * h + a] * hid[a];
                }
            }
            let mut new_h = vec![0.0; h];
            let mut new_c = vec![0.0; h];
            for j in 0..h {
                let i = 1.0 / (1.0 + (-z[j]).exp());
                let f = 1.0 / (1.0 + (-z[h + j]).exp());
                let o = 1.0 / (1.0 + (-z[2 * h + j]).exp());
                let g = z[3 * h + j].tanh();
                new_c[j] = f * cell[j] + i * g;
                new_h[j] = o * new_c[j].tanh();
            }
            hid = new_h;
            cell = new_c;
        }
        hid
    }

    #[test]
    fn matches_scalar_oracle() {
        let (d, h) = (48, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let wx: Vec<f64> = (0..4 * h * d).map(|_| 0.2 * (rng.random::<f64>() - 0.5)).collect();
        let wh: Vec<f64> = (0..4 * h * h).map(|_| 0.2 * (rng.random::<f64>() - 0.5)).collect();
        let b: Vec<f64> = (0..4 * h).map(|_| 0.2 * (rng.random::<f64>() - 0.5)).collect();
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..d).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect();
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let (hf, _) = lstm_forward(d, h, &wx, &wh, &b, &refs);
        let oracle = scalar_lstm(d, h, &wx, &wh, &b, &refs);
        for (a, b) in hf.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (d, h, steps) = (6, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut wx: Vec<f64> = (0..4 * h * d).map(|_| 0.3 * (rng.random::<f64>() - 0.5)).collect();
        let wh: Vec<f64> = (0..4 * h * h).map(|_| 0.3 * (rng.random::<f64>() - 0.5)).collect();
        let b: Vec<f64> = (0..4 * h).map(|_| 0.3 * (rng.random::<f64>() - 0.5)).collect();
        let xs: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..d).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect();
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        // Scalar loss: sum of the final hidden state.
        let (hf, cache) = lstm_forward(d, h, &wx, &wh, &b, &refs);
        let _ = hf;
        let mut gwx = vec![0.0; wx.len()];
        let mut gwh = vec![0.0; wh.len()];
        let mut gb = vec![0.0; b.len()];
        lstm_backward(d, h, &wh, &refs, &cache, &vec![1.0; h], &mut gwx, &mut gwh, &mut gb);

        let eps = 1e-6;
        for idx in [0usize, 7, 4 * h * d - 1] {
            let orig = wx[idx];
            wx[idx] = orig + eps;
            let (hp, _) = lstm_forward(d, h, &wx, &wh, &b, &refs);
            wx[idx] = orig - eps;
            let (hm, _) = lstm_forward(d, h, &wx, &wh, &b, &refs);
            wx[idx] = orig;
            let num = (hp.iter().sum::<f64>() - hm.iter().sum::<f64>()) / (2.0 * eps);
            assert!(
                (num - gwx[idx]).abs() < 1e-6,
                "wx[{idx}]: analytic {} vs numeric {num}",
                gwx[idx]
            );
        }
    }
}
