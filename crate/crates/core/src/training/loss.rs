use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

fn check(len: usize, target: &[f64], mask: &[bool]) -> Result<usize> {
    if target.len() != len || mask.len() != len {
        return Err(Error::Shape {
            op: "mse_loss",
            lhs: vec![len],
            rhs: vec![target.len(), mask.len()],
        });
    }
    Ok(mask.iter().filter(|&&k| k).count())
}

/// Mean squared error over the unmasked elements.
pub fn mse(pred: &[f64], target: &[f64], mask: &[bool]) -> Result<f64> {
    let count = check(pred.len(), target, mask)?;
    if count == 0 {
        return Err(Error::contract("mse over an all-masked target"));
    }
    let sse: f64 = pred
        .iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, &k)| k)
        .map(|((p, t), _)| (p - t) * (p - t))
        .sum();
    Ok(sse / count as f64)
}

/// Sum of squared errors over unmasked elements of the `[k]` node `pred`,
/// with the number of elements summed. A fully masked example yields 0.
pub fn masked_sse(g: &mut Graph, pred: Var, target: &[f64], mask: &[bool]) -> Result<(Var, usize)> {
    let count = check(g.value(pred).numel(), target, mask)?;
    let shape = g.shape(pred).to_vec();
    let t = g.constant(Tensor::new(shape.clone(), target.to_vec())?);
    let keep = g.constant(Tensor::new(
        shape,
        mask.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect(),
    )?);
    let diff = g.sub(pred, t)?;
    let diff = g.mul(diff, keep)?;
    let sq = g.mul(diff, diff)?;
    Ok((g.sum(sq), count))
}

/// Graph version of [`mse`].
pub fn mse_loss(g: &mut Graph, pred: Var, target: &[f64], mask: &[bool]) -> Result<Var> {
    let (sse, count) = masked_sse(g, pred, target, mask)?;
    if count == 0 {
        return Err(Error::contract("mse over an all-masked target"));
    }
    Ok(g.scale(sse, 1.0 / count as f64))
}
