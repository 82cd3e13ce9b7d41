//! Gumbel-Softmax reparameterization over the last axis.

use rand::distributions::Open01;
use rand::Rng as _;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Standard Gumbel(0, 1) draws `-ln(-ln u)`, `u ~ U(0, 1)`.
pub fn gumbel_noise(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng::rng(seed);
    Tensor::from_fn(shape, |_| {
        let u: f64 = r.sample(Open01);
        -(-u.ln()).ln()
    })
}

fn check(g: &Graph, logits: Var, temperature: f64) -> Result<()> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("Gumbel temperature must be positive, got {temperature}")));
    }
    if !g.value(logits).is_finite() {
        return Err(Error::Numerical("non-finite logits passed to Gumbel-Softmax".into()));
    }
    Ok(())
}

/// `softmax((logits + g) / temperature)` row-wise. In hard mode the forward
/// value is the one-hot argmax and the gradient is that of the soft sample.
pub fn gumbel_softmax(g: &mut Graph, logits: Var, temperature: f64, hard: bool, seed: u64) -> Result<Var> {
    check(g, logits, temperature)?;
    let noise = gumbel_noise(g.shape(logits), seed);
    let noise = g.constant(noise);
    let perturbed = g.add(logits, noise);
    let scaled = g.scale(perturbed, 1.0 / temperature);
    let soft = g.softmax(scaled);
    if !hard {
        return Ok(soft);
    }
    let hard_value = one_hot_argmax(g.value(soft));
    Ok(g.straight_through(hard_value, soft))
}

/// The noise-free counterpart `softmax(logits / temperature)`.
pub fn tempered_softmax(g: &mut Graph, logits: Var, temperature: f64) -> Result<Var> {
    check(g, logits, temperature)?;
    let scaled = g.scale(logits, 1.0 / temperature);
    Ok(g.softmax(scaled))
}

/// One-hot of the row-wise argmax; ties go to the lowest index.
pub fn one_hot_argmax(t: &Tensor) -> Tensor {
    let d = *t.shape().last().expect("rank >= 1");
    let mut out = Tensor::zeros(t.shape());
    for (r, row) in t.data().chunks(d).enumerate() {
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        out.data_mut()[r * d + best] = 1.0;
    }
    out
}

/// Convenience wrapper evaluating on plain tensors.
pub fn gumbel_softmax_tensor(logits: &Tensor, temperature: f64, hard: bool, seed: u64) -> Result<Tensor> {
    let mut g = Graph::new();
    let l = g.constant(logits.clone());
    let y = gumbel_softmax(&mut g, l, temperature, hard, seed)?;
    Ok(g.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominant_logit_wins() {
        let logits = Tensor::new(vec![1, 3], vec![1000.0, 0.0, 0.0]).unwrap();
        for seed in 0..20 {
            let y = gumbel_softmax_tensor(&logits, 0.5, false, seed).unwrap();
            assert!((y.data()[0] - 1.0).abs() < 1e-6);
            assert!(y.data()[1].abs() < 1e-6 && y.data()[2].abs() < 1e-6);
        }
    }

    #[test]
    fn soft_rows_sum_to_one() {
        let logits = Tensor::from_fn(&[7, 5], |ix| ((ix[0] * 5 + ix[1]) as f64 * 1.7).sin() * 3.0);
        let y = gumbel_softmax_tensor(&logits, 0.3, false, 4).unwrap();
        for row in y.data().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn hard_rows_are_one_hot() {
        let logits = Tensor::from_fn(&[6, 3], |ix| (ix[0] + 2 * ix[1]) as f64 * 0.1);
        let y = gumbel_softmax_tensor(&logits, 0.5, true, 9).unwrap();
        for row in y.data().chunks(3) {
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        let logits = Tensor::zeros(&[1, 2]);
        assert!(matches!(gumbel_softmax_tensor(&logits, 0.0, false, 0), Err(Error::Config(_))));
    }

    #[test]
    fn hard_gradient_is_soft_gradient() {
        let mut g = Graph::new();
        let l = g.leaf(Tensor::new(vec![1, 3], vec![0.2, -0.1, 0.4]).unwrap());
        let y = gumbel_softmax(&mut g, l, 0.7, true, 3).unwrap();
        let w = g.constant(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let o = g.mul(y, w);
        let o = g.sum(o);
        let gh = g.backward(o).get(l).unwrap().clone();

        let mut g2 = Graph::new();
        let l2 = g2.leaf(Tensor::new(vec![1, 3], vec![0.2, -0.1, 0.4]).unwrap());
        let y2 = gumbel_softmax(&mut g2, l2, 0.7, false, 3).unwrap();
        let w2 = g2.constant(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let o2 = g2.mul(y2, w2);
        let o2 = g2.sum(o2);
        let gs = g2.backward(o2).get(l2).unwrap().clone();
        assert_eq!(gh, gs);
    }
}
