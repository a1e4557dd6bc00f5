//! Finite-difference gradient checks of every graph op, layer and model
//! at tiny dimensions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::{
    HeadConfig, LstmBaseline, LstmBaselineConfig, SequenceModel, SpatialModel, SpatialModelConfig,
    TemporalModel, TemporalModelConfig,
};
use crate::nn::{
    uniform_init, Activation, Bound, Dropout, LayerNorm, Linear, Lstm, MultiHeadAttention,
    ParamStore, TransformerEncoder,
};
use crate::tensor::{grad_check, GradCheckReport, Graph, Tensor, Unary, Var};

#[derive(Clone, Debug)]
pub struct GradCheckCase {
    pub name: String,
    pub report: GradCheckReport,
}

fn rand(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    uniform_init(shape, 1, rng)
}

/// `Σ out ⊙ w` for a fixed random `w`, so every output element carries a
/// distinct weight into the scalar.
fn readout(g: &mut Graph, out: Var, w: &Tensor) -> Result<Var> {
    let c = g.constant(w.clone());
    let prod = g.mul(out, c)?;
    Ok(g.sum(prod))
}

fn op_case<F>(
    name: &str,
    inputs: Vec<Tensor>,
    out_shape: &[usize],
    eps: f64,
    seed: u64,
    f: F,
) -> Result<GradCheckCase>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var> + Sync + Send,
{
    let w = rand(out_shape, &mut ChaCha8Rng::seed_from_u64(seed));
    let report = grad_check(
        |g, v| {
            let out = f(g, v)?;
            readout(g, out, &w)
        },
        &inputs,
        eps,
    )?;
    Ok(GradCheckCase {
        name: name.to_string(),
        report,
    })
}

/// Checks a layer with its parameters redrawn in [-1, 1] and appended
/// input `x`.
fn layer_case<F>(
    name: &str,
    params: &ParamStore,
    x: Tensor,
    out_shape: &[usize],
    eps: f64,
    seed: u64,
    f: F,
) -> Result<GradCheckCase>
where
    F: Fn(&mut Graph, &Bound, Var) -> Result<Var> + Sync + Send,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.len();
    let mut inputs: Vec<Tensor> = params
        .tensors()
        .iter()
        .map(|t| rand(t.shape(), &mut rng))
        .collect();
    inputs.push(x);
    op_case(name, inputs, out_shape, eps, seed + 1, |g, v| {
        let p = params.bind_vars(&v[..n])?;
        f(g, &p, v[n])
    })
}

/// Checks a whole model at its own initialisation under MSE against a
/// target offset from its current output by at most `TARGET_OFFSET`.
/// Central-difference noise scales with the residual, and near-uniform
/// attention gives some query/key coordinates gradients near 1e-9, so a
/// target far from the output would drown them. Fails on any parameter
/// whose gradient is identically zero, so a dead path cannot pass.
fn model_case(
    name: &str,
    model: &dyn SequenceModel,
    x: Tensor,
    eps: f64,
    seed: u64,
) -> Result<GradCheckCase> {
    const TARGET_OFFSET: f64 = 1e-2;
    let params = model.init_params(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let y0 = model.predict(&params, &x)?;
    let target = Tensor::vector(
        y0.data()
            .iter()
            .map(|v| v + TARGET_OFFSET * rng.random_range(-1.0..1.0))
            .collect(),
    );
    let n = params.len();
    let mut inputs = params.tensors();
    inputs.push(x);
    let loss = |g: &mut Graph, v: &[Var]| -> Result<Var> {
        let p = params.bind_vars(&v[..n])?;
        let y = model.forward(g, &p, v[n], &mut Dropout::eval())?;
        let t = g.constant(target.clone());
        let d = g.sub(y, t)?;
        let sq = g.mul(d, d)?;
        let s = g.sum(sq);
        Ok(g.scale(s, 1.0 / model.seq_len() as f64))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = loss(&mut g, &vars)?;
    let grads = g.backward(out)?;
    for (k, pname) in params.names().enumerate() {
        let dead = grads
            .get(vars[k])
            .is_none_or(|t| t.data().iter().all(|&v| v == 0.0));
        if dead {
            return Err(Error::contract(format!(
                "{name}: gradient of {pname} is identically zero"
            )));
        }
    }

    let report = grad_check(loss, &inputs, eps)?;
    Ok(GradCheckCase {
        name: name.to_string(),
        report,
    })
}

fn tiny_head() -> HeadConfig {
    let mut h = HeadConfig::new(8, 2, 1);
    h.encoder.ffn_hidden_dim = 16;
    h
}

/// Every graph op, every layer, and the spatial, temporal and LSTM models.
#[allow(clippy::vec_init_then_push)]
pub fn gradcheck_suite(eps: f64) -> Result<Vec<GradCheckCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut r = |shape: &[usize]| rand(shape, &mut rng);
    let (a, b, c) = (r(&[3, 4]), r(&[3, 4]), r(&[4, 2]));
    let (bias, row) = (r(&[4]), r(&[2, 4]));
    let mut cases = Vec::new();

    cases.push(op_case(
        "matmul",
        vec![a.clone(), c.clone()],
        &[3, 2],
        eps,
        1,
        |g, v| g.matmul(v[0], v[1]),
    )?);
    cases.push(op_case(
        "add",
        vec![a.clone(), b.clone()],
        &[3, 4],
        eps,
        2,
        |g, v| g.add(v[0], v[1]),
    )?);
    cases.push(op_case(
        "sub",
        vec![a.clone(), b.clone()],
        &[3, 4],
        eps,
        3,
        |g, v| g.sub(v[0], v[1]),
    )?);
    cases.push(op_case(
        "mul",
        vec![a.clone(), b.clone()],
        &[3, 4],
        eps,
        4,
        |g, v| g.mul(v[0], v[1]),
    )?);
    for (k, u) in [Unary::Gelu, Unary::Relu, Unary::Tanh, Unary::Sigmoid]
        .into_iter()
        .enumerate()
    {
        cases.push(op_case(
            &format!("{u:?}").to_lowercase(),
            vec![a.clone()],
            &[3, 4],
            eps,
            10 + k as u64,
            move |g, v| Ok(g.unary(u, v[0])),
        )?);
    }
    cases.push(op_case(
        "scale",
        vec![a.clone()],
        &[3, 4],
        eps,
        20,
        |g, v| Ok(g.scale(v[0], -1.7)),
    )?);
    cases.push(op_case(
        "add_bias",
        vec![a.clone(), bias.clone()],
        &[3, 4],
        eps,
        21,
        |g, v| g.add_bias(v[0], v[1]),
    )?);
    cases.push(op_case(
        "mul_cols",
        vec![a.clone(), bias.clone()],
        &[3, 4],
        eps,
        22,
        |g, v| g.mul_cols(v[0], v[1]),
    )?);
    cases.push(op_case(
        "softmax",
        vec![a.clone()],
        &[3, 4],
        eps,
        23,
        |g, v| Ok(g.softmax_lastdim(v[0])),
    )?);
    cases.push(op_case(
        "layer_norm",
        vec![a.clone()],
        &[3, 4],
        eps,
        24,
        |g, v| g.layer_norm(v[0], 1e-5),
    )?);
    cases.push(op_case(
        "transpose",
        vec![a.clone()],
        &[4, 3],
        eps,
        25,
        |g, v| g.transpose(v[0]),
    )?);
    cases.push(op_case(
        "reshape",
        vec![a.clone()],
        &[1, 12],
        eps,
        26,
        |g, v| g.reshape(v[0], &[1, 12]),
    )?);
    cases.push(op_case(
        "concat_cols",
        vec![a.clone(), b.clone()],
        &[3, 8],
        eps,
        27,
        |g, v| g.concat_cols(&[v[0], v[1]]),
    )?);
    cases.push(op_case(
        "concat_rows",
        vec![a.clone(), row.clone()],
        &[5, 4],
        eps,
        28,
        |g, v| g.concat_rows(&[v[0], v[1]]),
    )?);
    cases.push(op_case(
        "slice_cols",
        vec![a.clone()],
        &[3, 2],
        eps,
        29,
        |g, v| g.slice_cols(v[0], 1, 2),
    )?);
    cases.push(op_case(
        "slice_rows",
        vec![a.clone()],
        &[2, 4],
        eps,
        30,
        |g, v| g.slice_rows(v[0], 1, 2),
    )?);
    cases.push(op_case("sum", vec![a.clone()], &[1], eps, 31, |g, v| {
        Ok(g.sum(v[0]))
    })?);

    let x = r(&[3, 4]);
    for (k, act) in [Activation::Gelu, Activation::Relu, Activation::Identity]
        .into_iter()
        .enumerate()
    {
        let layer = Linear::new("lin", 4, 5, act);
        let mut p = ParamStore::new();
        layer.init(&mut p, &mut ChaCha8Rng::seed_from_u64(40));
        cases.push(layer_case(
            &format!("linear_{act:?}").to_lowercase(),
            &p,
            x.clone(),
            &[3, 5],
            eps,
            41 + k as u64,
            |g, p, x| layer.forward(g, p, x),
        )?);
    }

    let ln = LayerNorm {
        name: "ln".into(),
        dim: 4,
    };
    let mut p = ParamStore::new();
    ln.init(&mut p);
    cases.push(layer_case(
        "layer_norm_affine",
        &p,
        x.clone(),
        &[3, 4],
        eps,
        50,
        |g, p, x| ln.forward(g, p, x),
    )?);

    let attn = MultiHeadAttention::new("attn", 4, 2)?;
    let mut p = ParamStore::new();
    attn.init(&mut p, &mut ChaCha8Rng::seed_from_u64(60));
    cases.push(layer_case(
        "attention",
        &p,
        x.clone(),
        &[3, 4],
        eps,
        61,
        |g, p, x| attn.forward(g, p, x),
    )?);

    let mut enc_cfg = crate::nn::EncoderConfig::new(4, 2, 1);
    enc_cfg.ffn_hidden_dim = 8;
    let enc = TransformerEncoder::new("enc", &enc_cfg)?;
    let mut p = ParamStore::new();
    enc.init(&mut p, &mut ChaCha8Rng::seed_from_u64(70));
    cases.push(layer_case(
        "encoder_layer",
        &p,
        x.clone(),
        &[3, 4],
        eps,
        71,
        |g, p, x| enc.forward(g, p, x, &mut Dropout::eval()),
    )?);

    let lstm = Lstm::new("lstm", 4, 4);
    let mut p = ParamStore::new();
    lstm.init(&mut p, &mut ChaCha8Rng::seed_from_u64(80));
    cases.push(layer_case(
        "lstm",
        &p,
        x.clone(),
        &[3, 4],
        eps,
        81,
        |g, p, x| lstm.forward(g, p, x),
    )?);

    let spatial = SpatialModel::new(SpatialModelConfig::new(4, 6, tiny_head()))?;
    cases.push(model_case("spatial_model", &spatial, r(&[4, 6]), eps, 90)?);
    let temporal = TemporalModel::new(TemporalModelConfig::new(5, 6, tiny_head()))?;
    cases.push(model_case(
        "temporal_model",
        &temporal,
        r(&[5, 6]),
        eps,
        91,
    )?);
    let lstm_model = LstmBaseline::new(LstmBaselineConfig {
        hidden_dim: 4,
        ..LstmBaselineConfig::new(5, 6)
    })?;
    cases.push(model_case("lstm_model", &lstm_model, r(&[5, 6]), eps, 92)?);
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let cases = gradcheck_suite(1e-5).unwrap();
        assert!(cases.len() > 25);
        for c in &cases {
            assert!(c.report.max_rel_error < 1e-4, "{}: {:?}", c.name, c.report);
        }
    }
}
