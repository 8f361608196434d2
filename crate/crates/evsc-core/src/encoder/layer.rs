//! One post-norm transformer encoder layer with multi-head self-attention,
//! shared by the event encoder and the clip contextualizer.

use crate::tensor::{ParamStore, Tape, TensorId, TensorResult};

use super::model::LN_EPS;

/// Registers one layer's parameters under `prefix`: attention projections,
/// feed-forward weights (hidden `4 * dim`), and both layer norms.
pub fn register_layer_params(
    store: &mut ParamStore,
    prefix: &str,
    dim: usize,
) -> TensorResult<()> {
    for name in ["wq", "wk", "wv", "wo"] {
        store.init_xavier(&format!("{prefix}.attn.{name}"), dim, dim)?;
    }
    for name in ["bq", "bk", "bv", "bo"] {
        store.init_zeros(&format!("{prefix}.attn.{name}"), vec![dim])?;
    }
    store.init_xavier(&format!("{prefix}.ffn.w1"), dim, 4 * dim)?;
    store.init_zeros(&format!("{prefix}.ffn.b1"), vec![4 * dim])?;
    store.init_xavier(&format!("{prefix}.ffn.w2"), 4 * dim, dim)?;
    store.init_zeros(&format!("{prefix}.ffn.b2"), vec![dim])?;
    store.init_ones(&format!("{prefix}.ln1.gain"), dim)?;
    store.init_zeros(&format!("{prefix}.ln1.bias"), vec![dim])?;
    store.init_ones(&format!("{prefix}.ln2.gain"), dim)?;
    store.init_zeros(&format!("{prefix}.ln2.bias"), vec![dim])?;
    Ok(())
}

/// Runs one post-norm encoder layer on `x` of shape `[L, dim]`:
/// self-attention, residual, layer norm, feed-forward, residual, layer
/// norm. Returns the layer output and the head-averaged attention matrix.
pub fn transformer_layer(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    x: TensorId,
    heads: usize,
) -> TensorResult<(TensorId, TensorId)> {
    let dim = tape.shape(x)[1];
    let head_dim = dim / heads;
    let wq = tape.param(store, &format!("{prefix}.attn.wq"))?;
    let wk = tape.param(store, &format!("{prefix}.attn.wk"))?;
    let wv = tape.param(store, &format!("{prefix}.attn.wv"))?;
    let wo = tape.param(store, &format!("{prefix}.attn.wo"))?;
    let bq = tape.param(store, &format!("{prefix}.attn.bq"))?;
    let bk = tape.param(store, &format!("{prefix}.attn.bk"))?;
    let bv = tape.param(store, &format!("{prefix}.attn.bv"))?;
    let bo = tape.param(store, &format!("{prefix}.attn.bo"))?;

    let q = tape.matmul(x, wq)?;
    let q = tape.add(q, bq)?;
    let k = tape.matmul(x, wk)?;
    let k = tape.add(k, bk)?;
    let v = tape.matmul(x, wv)?;
    let v = tape.add(v, bv)?;

    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut head_outs = Vec::with_capacity(heads);
    let mut head_attns = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice(q, 1, h * head_dim, head_dim)?;
        let kh = tape.slice(k, 1, h * head_dim, head_dim)?;
        let vh = tape.slice(v, 1, h * head_dim, head_dim)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale)?;
        let attn = tape.softmax(scores)?;
        head_outs.push(tape.matmul(attn, vh)?);
        head_attns.push(attn);
    }
    let merged = tape.concat(1, &head_outs)?;
    let projected = tape.matmul(merged, wo)?;
    let attended = tape.add(projected, bo)?;

    let mut attn_sum = head_attns[0];
    for &a in &head_attns[1..] {
        attn_sum = tape.add(attn_sum, a)?;
    }
    let attention = tape.scale(attn_sum, 1.0 / heads as f64)?;

    let ln1_gain = tape.param(store, &format!("{prefix}.ln1.gain"))?;
    let ln1_bias = tape.param(store, &format!("{prefix}.ln1.bias"))?;
    let res1 = tape.add(x, attended)?;
    let normed1 = tape.layer_norm(res1, ln1_gain, ln1_bias, LN_EPS)?;

    let w1 = tape.param(store, &format!("{prefix}.ffn.w1"))?;
    let b1 = tape.param(store, &format!("{prefix}.ffn.b1"))?;
    let w2 = tape.param(store, &format!("{prefix}.ffn.w2"))?;
    let b2 = tape.param(store, &format!("{prefix}.ffn.b2"))?;
    let hidden = tape.matmul(normed1, w1)?;
    let hidden = tape.add(hidden, b1)?;
    let hidden = tape.relu(hidden)?;
    let ffn = tape.matmul(hidden, w2)?;
    let ffn = tape.add(ffn, b2)?;

    let ln2_gain = tape.param(store, &format!("{prefix}.ln2.gain"))?;
    let ln2_bias = tape.param(store, &format!("{prefix}.ln2.bias"))?;
    let res2 = tape.add(normed1, ffn)?;
    let out = tape.layer_norm(res2, ln2_gain, ln2_bias, LN_EPS)?;
    Ok((out, attention))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attention_rows_sum_to_one() {
        let mut store = ParamStore::new(3);
        register_layer_params(&mut store, "layer", 8).unwrap();
        let mut tape = Tape::new();
        let x = tape
            .constant(
                vec![3, 8],
                (0..24).map(|i| (i as f64 * 0.37).sin()).collect(),
            )
            .unwrap();
        let (_, attn) = transformer_layer(&mut tape, &store, "layer", x, 4).unwrap();
        assert_eq!(tape.shape(attn), &[3, 3]);
        for row in tape.data(attn).chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_token_attention_is_certain() {
        let mut store = ParamStore::new(5);
        register_layer_params(&mut store, "layer", 8).unwrap();
        let mut tape = Tape::new();
        let x = tape
            .constant(vec![1, 8], vec![0.5, -0.25, 1.0, 0.0, 2.0, -1.0, 0.75, 0.1])
            .unwrap();
        let (out, attn) = transformer_layer(&mut tape, &store, "layer", x, 4).unwrap();
        assert_eq!(tape.data(attn), &[1.0]);
        assert_eq!(tape.shape(out), &[1, 8]);
    }

    #[test]
    fn zeroed_value_and_ffn_paths_reduce_to_double_layer_norm() {
        let mut store = ParamStore::new(7);
        register_layer_params(&mut store, "layer", 4).unwrap();
        for name in ["layer.attn.wv", "layer.attn.wo", "layer.ffn.w2"] {
            let t = store.get_mut(name).unwrap();
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let x_data = vec![0.9, -0.3, 0.2, 1.4];
        let mut tape = Tape::new();
        let x = tape.constant(vec![1, 4], x_data.clone()).unwrap();
        let (out, _) = transformer_layer(&mut tape, &store, "layer", x, 2).unwrap();
        // With zero attention values and a zero FFN the layer is just two
        // stacked layer norms of the input row.
        let ln = |row: &[f64]| {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
            row.iter()
                .map(|v| (v - mean) / (var + LN_EPS).sqrt())
                .collect::<Vec<f64>>()
        };
        let want = ln(&ln(&x_data));
        for (a, b) in tape.data(out).iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
