//! Micro-batch objective with shared negatives and its analytic gradient.
//!
//! The objective is `(1/B)·(Σ_b L_b + λ_T·Ω_T + λ_S·Ω_S + λ_F·Ω_F)` where
//! every positive `b` is scored against the same `N` negative tails.

use super::encoder::project;
use super::loss::{log_sigmoid_grad, sampled_softmax_grad, NegativeMask};
use super::regularise::{l3_penalty, l3_penalty_grad};
use super::score::{score, score_backward};
use super::{DropoutMasks, LossKind, ModelConfig, SharedParams};
use crate::error::{KgeError, Result};
use crate::graph::RelationId;
use crate::real::Real;

/// Rows gathered for one micro-batch. Shallow rows are `d` wide, feature
/// rows `F` wide; heads and tails have `B` rows, negatives `N`.
#[derive(Debug, Clone, Copy)]
pub struct BatchInput<'a, T> {
    pub relations: &'a [RelationId],
    pub head_shallow: &'a [T],
    pub head_features: &'a [T],
    pub tail_shallow: &'a [T],
    pub tail_features: &'a [T],
    pub negative_shallow: &'a [T],
    pub negative_features: &'a [T],
    pub mask: Option<&'a NegativeMask>,
    pub dropout: Option<&'a DropoutMasks<T>>,
}

/// Loss, scores and gradients of one micro-batch.
#[derive(Debug, Clone)]
pub struct BatchGrads<T> {
    /// Full objective (data loss plus regulariser), mean over positives.
    pub loss: T,
    pub positive_scores: Vec<T>,
    /// `B × N`
    pub negative_scores: Vec<T>,
    /// `B × d`, gradient w.r.t. head shallow embeddings.
    pub head: Vec<T>,
    /// `B × d`
    pub tail: Vec<T>,
    /// `N × d`, summed over all positives that share each negative.
    pub negative: Vec<T>,
    pub shared: SharedParams<T>,
}

struct Encoded<T> {
    finals: Vec<T>,
    projected: Vec<T>,
}

fn encode_rows<T: Real>(
    shallow: &[T],
    features: &[T],
    matrix: &[T],
    mask: Option<&[T]>,
    d: usize,
    f: usize,
) -> Encoded<T> {
    let rows = shallow.len() / d;
    let mut projected = vec![T::zero(); rows * d];
    let mut finals = vec![T::zero(); rows * d];
    for r in 0..rows {
        let out = &mut projected[r * d..(r + 1) * d];
        project(matrix, &features[r * f..(r + 1) * f], out);
        for i in 0..d {
            let m = mask.map_or(T::one(), |m| m[r * d + i]);
            finals[r * d + i] = shallow[r * d + i] + m * out[i];
        }
    }
    Encoded { finals, projected }
}

/// Adds the regulariser value for one group of rows and its gradients.
#[allow(clippy::too_many_arguments)]
fn regularise<T: Real>(
    cfg: &ModelConfig,
    d: usize,
    scale: T,
    enc: &Encoded<T>,
    shallow: &[T],
    g_final: &mut [T],
    g_shallow: &mut [T],
    g_proj: &mut [T],
) -> T {
    let plain = cfg.reg_use_plain_norm;
    let mut total = T::zero();
    let groups: [(f64, &[T], &mut [T]); 3] = [
        (cfg.lambda_t, &enc.finals, g_final),
        (cfg.lambda_s, shallow, g_shallow),
        (cfg.lambda_f, &enc.projected, g_proj),
    ];
    for (lambda, rows, grad) in groups {
        if lambda == 0.0 {
            continue;
        }
        let lambda = T::lit(lambda);
        for (row, g) in rows.chunks(d).zip(grad.chunks_mut(d)) {
            total = total + lambda * l3_penalty(row, plain);
            l3_penalty_grad(row, plain, lambda * scale, g);
        }
    }
    total
}

/// Back-propagates through the encoder: shallow gradient and projection
/// matrix gradient (`g_proj ⊗ e_F`).
#[allow(clippy::too_many_arguments)]
fn encoder_backward<T: Real>(
    g_final: &[T],
    g_proj_reg: &[T],
    mask: Option<&[T]>,
    features: &[T],
    d: usize,
    f: usize,
    shallow_out: &mut [T],
    matrix_grad: &mut [T],
) {
    let rows = g_final.len() / d;
    for r in 0..rows {
        let feats = &features[r * f..(r + 1) * f];
        for i in 0..d {
            let gf = g_final[r * d + i];
            shallow_out[r * d + i] = shallow_out[r * d + i] + gf;
            let m = mask.map_or(T::one(), |m| m[r * d + i]);
            let gp = m * gf + g_proj_reg[r * d + i];
            if f > 0 && gp != T::zero() {
                let row = &mut matrix_grad[i * f..(i + 1) * f];
                for (g, x) in row.iter_mut().zip(feats) {
                    *g = *g + gp * *x;
                }
            }
        }
    }
}

/// Forward and backward pass over one micro-batch with shared negatives.
pub fn batch_forward_backward<T: Real>(
    cfg: &ModelConfig,
    entity_count: usize,
    params: &SharedParams<T>,
    input: &BatchInput<'_, T>,
) -> Result<BatchGrads<T>> {
    let d = cfg.embedding_dim;
    let f = cfg.feature_dim;
    let b = input.relations.len();
    if b == 0 {
        return Err(KgeError::Shape("micro-batch has no positives".into()));
    }
    let n = input.negative_shallow.len() / d;
    if n == 0 {
        return Err(KgeError::Shape("micro-batch has no negatives".into()));
    }
    let checks = [
        ("head_shallow", input.head_shallow.len(), b * d),
        ("head_features", input.head_features.len(), b * f),
        ("tail_shallow", input.tail_shallow.len(), b * d),
        ("tail_features", input.tail_features.len(), b * f),
        ("negative_shallow", input.negative_shallow.len(), n * d),
        ("negative_features", input.negative_features.len(), n * f),
    ];
    for (name, got, want) in checks {
        if got != want {
            return Err(KgeError::Shape(format!("{name} has {got} values, expected {want}")));
        }
    }
    if let Some(m) = input.mask {
        if m.positives() != b || m.negatives() != n {
            return Err(KgeError::Shape("negative mask shape differs from batch".into()));
        }
    }
    if let Some(&r) = input.relations.iter().find(|&&r| r as usize >= params.relation_count) {
        return Err(KgeError::Shape(format!("relation {r} out of range")));
    }

    let dm = input.dropout;
    let heads = encode_rows(
        input.head_shallow,
        input.head_features,
        params.head_proj(),
        dm.map(|m| m.head.as_slice()),
        d,
        f,
    );
    let tails = encode_rows(
        input.tail_shallow,
        input.tail_features,
        params.tail_proj(),
        dm.map(|m| m.tail.as_slice()),
        d,
        f,
    );
    let negs = encode_rows(
        input.negative_shallow,
        input.negative_features,
        params.tail_proj(),
        dm.map(|m| m.negative.as_slice()),
        d,
        f,
    );

    let p = cfg.distance_p;
    let sf = cfg.score_fn;

    let mut pos_scores = vec![T::zero(); b];
    let mut neg_scores = vec![T::zero(); b * n];
    for j in 0..b {
        let r = input.relations[j] as usize;
        let h = &heads.finals[j * d..(j + 1) * d];
        let rel = params.relation(r);
        let w = params.normal(r);
        pos_scores[j] = score(sf, h, rel, &tails.finals[j * d..(j + 1) * d], w, p);
        for i in 0..n {
            neg_scores[j * n + i] = score(sf, h, rel, &negs.finals[i * d..(i + 1) * d], w, p);
        }
    }

    let inv_b = T::one() / T::lit(b as f64);
    let margin = T::lit(cfg.margin);
    let temperature = T::lit(cfg.adversarial_temperature);
    let mut data_loss = T::zero();
    let mut d_pos = vec![T::zero(); b];
    let mut d_neg = vec![T::zero(); b * n];
    for j in 0..b {
        let keep = input.mask.map(|m| m.row(j));
        let negs_j = &neg_scores[j * n..(j + 1) * n];
        let out = &mut d_neg[j * n..(j + 1) * n];
        let (l, dp) = match cfg.loss {
            LossKind::LogSigmoid => {
                log_sigmoid_grad(pos_scores[j], negs_j, keep, margin, temperature, out)
            }
            LossKind::SampledSoftmaxCE => {
                sampled_softmax_grad(pos_scores[j], negs_j, keep, entity_count, out)
            }
        };
        data_loss = data_loss + l;
        d_pos[j] = dp * inv_b;
        out.iter_mut().for_each(|g| *g = *g * inv_b);
    }

    let mut shared = params.zeros_like();
    let mut g_head = vec![T::zero(); b * d];
    let mut g_tail = vec![T::zero(); b * d];
    let mut g_neg = vec![T::zero(); n * d];
    for j in 0..b {
        let r = input.relations[j] as usize;
        let k = params.relation_dim;
        let h = &heads.finals[j * d..(j + 1) * d];
        let rel = params.relation(r);
        let w = params.normal(r);
        let gh = &mut g_head[j * d..(j + 1) * d];
        let gr = &mut shared.relations[r * k..(r + 1) * k];
        let mut gw = if shared.normals.is_empty() {
            None
        } else {
            Some(&mut shared.normals[r * d..(r + 1) * d])
        };
        score_backward(
            sf,
            h,
            rel,
            &tails.finals[j * d..(j + 1) * d],
            w,
            p,
            d_pos[j],
            gh,
            gr,
            &mut g_tail[j * d..(j + 1) * d],
            gw.as_deref_mut(),
        );
        for i in 0..n {
            let up = d_neg[j * n + i];
            if up == T::zero() {
                continue;
            }
            score_backward(
                sf,
                h,
                rel,
                &negs.finals[i * d..(i + 1) * d],
                w,
                p,
                up,
                gh,
                gr,
                &mut g_neg[i * d..(i + 1) * d],
                gw.as_deref_mut(),
            );
        }
    }

    let mut reg = T::zero();
    let mut gs_head = vec![T::zero(); b * d];
    let mut gs_tail = vec![T::zero(); b * d];
    let mut gs_neg = vec![T::zero(); n * d];
    let mut gp_head = vec![T::zero(); b * d];
    let mut gp_tail = vec![T::zero(); b * d];
    let mut gp_neg = vec![T::zero(); n * d];
    if !(cfg.lambda_t == 0.0 && cfg.lambda_s == 0.0 && cfg.lambda_f == 0.0) {
        reg = reg
            + regularise(cfg, d, inv_b, &heads, input.head_shallow, &mut g_head, &mut gs_head, &mut gp_head)
            + regularise(cfg, d, inv_b, &tails, input.tail_shallow, &mut g_tail, &mut gs_tail, &mut gp_tail)
            + regularise(cfg, d, inv_b, &negs, input.negative_shallow, &mut g_neg, &mut gs_neg, &mut gp_neg);
    }

    let head_mask = dm.map(|m| m.head.as_slice());
    let tail_mask = dm.map(|m| m.tail.as_slice());
    let neg_mask = dm.map(|m| m.negative.as_slice());
    encoder_backward(&g_head, &gp_head, head_mask, input.head_features, d, f, &mut gs_head, &mut shared.proj_head);
    let tail_matrix = if shared.tied {
        &mut shared.proj_head
    } else {
        &mut shared.proj_tail
    };
    encoder_backward(&g_tail, &gp_tail, tail_mask, input.tail_features, d, f, &mut gs_tail, tail_matrix);
    encoder_backward(&g_neg, &gp_neg, neg_mask, input.negative_features, d, f, &mut gs_neg, tail_matrix);

    Ok(BatchGrads {
        loss: (data_loss + reg) * inv_b,
        positive_scores: pos_scores,
        negative_scores: neg_scores,
        head: gs_head,
        tail: gs_tail,
        negative: gs_neg,
        shared,
    })
}
