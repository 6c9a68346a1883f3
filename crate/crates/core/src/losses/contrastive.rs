use crate::error::{Error, Result};
use crate::losses::NegativeQueue;
use crate::numcore::{dot, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct ContrastiveOutput<T> {
    pub loss: T,
    /// ∂loss/∂z for the query embeddings.
    pub grad_query: Matrix<T>,
    /// ∂loss/∂z⁺ for the positives (zero flow when they come from a key encoder).
    pub grad_positive: Matrix<T>,
}

/// Batch mean of `−log(e^{q·p/τ} / (e^{q·p/τ} + Σ_j e^{q·n_j/τ}))` over queue negatives `n_j`.
///
/// Queue entries are constants: no gradient flows into them.
pub fn contrastive_loss<T: Scalar>(
    query: &Matrix<T>,
    positive: &Matrix<T>,
    queue: &NegativeQueue<T>,
    tau: T,
) -> Result<ContrastiveOutput<T>> {
    if !(tau > T::zero()) {
        return Err(Error::input(format!("temperature must be > 0, got {tau}")));
    }
    if queue.is_empty() {
        return Err(Error::State("contrastive loss needs a non-empty negative queue".into()));
    }
    if query.rows() == 0 {
        return Err(Error::input("contrastive loss needs a non-empty batch"));
    }
    query.require_same_shape(positive)?;
    if query.cols() != queue.dim() {
        return Err(Error::dim("embedding and queue dimensions differ"));
    }
    let batch = query.rows();
    let n = T::from_count(batch);
    let negatives = queue.to_matrix();
    let neg_logits = query.matmul_nt(&negatives)?;
    let mut loss = T::zero();
    let mut grad_query = Matrix::zeros(batch, query.cols());
    let mut grad_positive = Matrix::zeros(batch, query.cols());
    let mut probs = vec![T::zero(); negatives.rows()];
    for i in 0..batch {
        let q = query.row(i);
        let p = positive.row(i);
        let pos_logit = dot(q, p) / tau;
        let max = neg_logits
            .row(i)
            .iter()
            .map(|&l| l / tau)
            .fold(pos_logit, T::max);
        let pos_exp = (pos_logit - max).exp();
        let mut denom = pos_exp;
        for (pr, &l) in probs.iter_mut().zip(neg_logits.row(i)) {
            *pr = (l / tau - max).exp();
            denom += *pr;
        }
        loss += denom.ln() + max - pos_logit;
        let p_pos = pos_exp / denom;
        // ∂ℓ/∂logit_pos = p_pos − 1, ∂ℓ/∂logit_j = p_j
        let coeff_pos = (p_pos - T::one()) / (tau * n);
        let gq = grad_query.row_mut(i);
        for (g, &pv) in gq.iter_mut().zip(p) {
            *g = coeff_pos * pv;
        }
        for (j, pr) in probs.iter().enumerate() {
            let c = *pr / denom / (tau * n);
            for (g, &nv) in gq.iter_mut().zip(negatives.row(j)) {
                *g += c * nv;
            }
        }
        for (g, &qv) in grad_positive.row_mut(i).iter_mut().zip(q) {
            *g = coeff_pos * qv;
        }
    }
    Ok(ContrastiveOutput {
        loss: loss / n,
        grad_query,
        grad_positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check, rng::rng_from_seed, ParamSet};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_units(rows: usize, dim: usize, rng: &mut impl Rng) -> Matrix<f64> {
        let mut m: Matrix<f64> = Matrix::from_fn(rows, dim, |_, _| StandardNormal.sample(rng));
        for r in 0..rows {
            let n = dot(m.row(r), m.row(r)).sqrt();
            m.row_mut(r).iter_mut().for_each(|v| *v /= n);
        }
        m
    }

    /// Log-softmax over the explicitly concatenated logits.
    fn oracle(q: &Matrix<f64>, p: &Matrix<f64>, negs: &Matrix<f64>, tau: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..q.rows() {
            let mut logits = vec![dot(q.row(i), p.row(i)) / tau];
            for j in 0..negs.rows() {
                logits.push(dot(q.row(i), negs.row(j)) / tau);
            }
            let lse = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
            total += -(logits[0] - lse);
        }
        total / q.rows() as f64
    }

    #[test]
    fn equal_logits_closed_forms() {
        let z = Matrix::row_vector(vec![1.0, 0.0]);
        let mut q = NegativeQueue::new(4095, 2).unwrap();
        q.push(&z).unwrap();
        let out = contrastive_loss(&z, &z, &q, 0.2).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-9);
        let many = Matrix::from_fn(4094, 2, |_, c| if c == 0 { 1.0 } else { 0.0 });
        q.push(&many).unwrap();
        let out = contrastive_loss(&z, &z, &q, 0.2).unwrap();
        assert!((out.loss - 4096f64.ln()).abs() < 1e-9);
        assert!((out.loss - 8.317766).abs() < 1e-6);
    }

    #[test]
    fn matches_log_softmax_oracle_and_gradients() {
        let mut rng = rng_from_seed(17);
        let qm = random_units(4, 5, &mut rng);
        let pm = random_units(4, 5, &mut rng);
        let negs = random_units(16, 5, &mut rng);
        let mut queue = NegativeQueue::new(16, 5).unwrap();
        queue.push(&negs).unwrap();
        let out = contrastive_loss(&qm, &pm, &queue, 0.2).unwrap();
        assert!((out.loss - oracle(&qm, &pm, &negs, 0.2)).abs() < 1e-10);
        assert!(out.loss >= 0.0);

        let mut params = ParamSet::new();
        params.push("q", qm.clone()).unwrap();
        params.push("p", pm.clone()).unwrap();
        let report = grad_check(
            |ps: &ParamSet<f64>| {
                let o = contrastive_loss(ps.require("q")?, ps.require("p")?, &queue, 0.2)?;
                let mut g = ParamSet::new();
                g.push("q", o.grad_query)?;
                g.push("p", o.grad_positive)?;
                Ok((o.loss, g))
            },
            &params,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn error_paths() {
        let z = Matrix::row_vector(vec![1.0, 0.0]);
        let empty = NegativeQueue::new(2, 2).unwrap();
        assert!(matches!(contrastive_loss(&z, &z, &empty, 0.2), Err(Error::State(_))));
        let mut q = empty.clone();
        q.push(&z).unwrap();
        assert!(matches!(contrastive_loss(&z, &z, &q, 0.0), Err(Error::Input(_))));
        assert!(matches!(contrastive_loss(&z, &z, &q, -1.0), Err(Error::Input(_))));
    }
}
