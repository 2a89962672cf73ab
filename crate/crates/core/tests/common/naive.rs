//! Straightforward double-precision re-implementation of the micro-batch
//! objective, written without reference to the library kernels. Used as
//! the finite-difference oracle for analytic gradients.

#![allow(dead_code)]

use kge_core::model::{LossKind, ModelConfig, ScoreFunction};

#[derive(Clone, Copy, Debug)]
struct C {
    re: f64,
    im: f64,
}

impl C {
    fn mul(self, o: C) -> C {
        C {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
    fn conj(self) -> C {
        C {
            re: self.re,
            im: -self.im,
        }
    }
    fn sub(self, o: C) -> C {
        C {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }
    fn abs(self) -> f64 {
        (self.re * self.re + self.im * self.im).sqrt()
    }
}

fn complexes(v: &[f64]) -> Vec<C> {
    v.chunks(2).map(|c| C { re: c[0], im: c[1] }).collect()
}

fn p_norm(xs: &[f64], p: u8) -> f64 {
    if p == 1 {
        xs.iter().map(|x| x.abs()).sum()
    } else {
        xs.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Coordinates whose magnitude enters a p-norm (for kink rejection).
pub fn residual(score_fn: ScoreFunction, h: &[f64], r: &[f64], t: &[f64], w: Option<&[f64]>) -> Vec<f64> {
    match score_fn {
        ScoreFunction::TransE => (0..h.len()).map(|i| h[i] + r[i] - t[i]).collect(),
        ScoreFunction::TransH => {
            let w = w.unwrap();
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            let wu: Vec<f64> = w.iter().map(|x| x / n).collect();
            let dot = |a: &[f64]| a.iter().zip(&wu).map(|(x, y)| x * y).sum::<f64>();
            let (wh, wt) = (dot(h), dot(t));
            (0..h.len())
                .map(|i| (h[i] - wh * wu[i]) + r[i] - (t[i] - wt * wu[i]))
                .collect()
        }
        ScoreFunction::RotatE => {
            let (hc, tc) = (complexes(h), complexes(t));
            hc.iter()
                .zip(&tc)
                .zip(r)
                .map(|((hh, tt), theta)| {
                    hh.mul(C {
                        re: theta.cos(),
                        im: theta.sin(),
                    })
                    .sub(*tt)
                    .abs()
                })
                .collect()
        }
        _ => vec![],
    }
}

pub fn score(score_fn: ScoreFunction, h: &[f64], r: &[f64], t: &[f64], w: Option<&[f64]>, p: u8) -> f64 {
    match score_fn {
        ScoreFunction::TransE | ScoreFunction::TransH => -p_norm(&residual(score_fn, h, r, t, w), p),
        // moduli are non-negative, so the p-norm of the moduli is the complex p-norm
        ScoreFunction::RotatE => -p_norm(&residual(score_fn, h, r, t, w), p),
        ScoreFunction::DistMult => (0..h.len()).map(|i| r[i] * h[i] * t[i]).sum(),
        ScoreFunction::ComplEx => {
            let (hc, rc, tc) = (complexes(h), complexes(r), complexes(t));
            (0..hc.len()).map(|i| rc[i].mul(hc[i]).mul(tc[i].conj()).re).sum()
        }
    }
}

/// Everything the objective depends on, flattened for perturbation.
#[derive(Clone, Debug)]
pub struct Problem {
    pub cfg: ModelConfig,
    pub entity_count: usize,
    pub relations: Vec<u32>,
    pub head_s: Vec<f64>,
    pub head_f: Vec<f64>,
    pub tail_s: Vec<f64>,
    pub tail_f: Vec<f64>,
    pub neg_s: Vec<f64>,
    pub neg_f: Vec<f64>,
    pub rel_table: Vec<f64>,
    pub normals: Vec<f64>,
    pub m_head: Vec<f64>,
    pub m_tail: Vec<f64>,
    pub drop_head: Option<Vec<f64>>,
    pub drop_tail: Option<Vec<f64>>,
    pub drop_neg: Option<Vec<f64>>,
    pub keep: Option<Vec<bool>>,
    /// Frozen self-adversarial weights `B × N` (stop-gradient oracle).
    pub frozen_weights: Option<Vec<f64>>,
}

fn matvec(m: &[f64], x: &[f64], d: usize) -> Vec<f64> {
    let f = x.len();
    (0..d).map(|i| (0..f).map(|j| m[i * f + j] * x[j]).sum()).collect()
}

fn cube(v: &[f64], plain: bool) -> f64 {
    let s: f64 = v.iter().map(|x| x.abs().powi(3)).sum();
    if plain {
        s.cbrt()
    } else {
        s
    }
}

impl Problem {
    pub fn b(&self) -> usize {
        self.relations.len()
    }

    pub fn n(&self) -> usize {
        self.neg_s.len() / self.cfg.embedding_dim
    }

    fn m_tail(&self) -> &[f64] {
        if self.cfg.tie_projections {
            &self.m_head
        } else {
            &self.m_tail
        }
    }

    /// (final embedding, shallow, projection) for a row.
    fn encode(&self, s: &[f64], f: &[f64], m: &[f64], drop: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let d = self.cfg.embedding_dim;
        let proj = matvec(m, f, d);
        let fin = (0..d)
            .map(|i| s[i] + drop.map_or(1.0, |dm| dm[i]) * proj[i])
            .collect();
        (fin, proj)
    }

    pub fn weights(&self, neg_scores: &[f64]) -> Vec<f64> {
        let a = self.cfg.adversarial_temperature;
        let exps: Vec<f64> = neg_scores.iter().map(|s| (a * s).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }

    /// All pairwise scores, plus encoded rows.
    pub fn scores(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = self.cfg.embedding_dim;
        let fd = self.cfg.feature_dim;
        let k = self.cfg.relation_dim();
        let (b, n) = (self.b(), self.n());
        let sl = |v: &[f64], i: usize, w: usize| v[i * w..(i + 1) * w].to_vec();
        let dslice = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map(|x| x[i * d..(i + 1) * d].to_vec());
        let mut pos = Vec::new();
        let mut negs = Vec::new();
        for j in 0..b {
            let r = self.relations[j] as usize;
            let rel = sl(&self.rel_table, r, k);
            let w = (!self.normals.is_empty()).then(|| sl(&self.normals, r, d));
            let (h, _) = self.encode(&sl(&self.head_s, j, d), &sl(&self.head_f, j, fd), &self.m_head, dslice(&self.drop_head, j).as_deref());
            let (t, _) = self.encode(&sl(&self.tail_s, j, d), &sl(&self.tail_f, j, fd), self.m_tail(), dslice(&self.drop_tail, j).as_deref());
            pos.push(score(self.cfg.score_fn, &h, &rel, &t, w.as_deref(), self.cfg.distance_p));
            let mut row = Vec::new();
            for i in 0..n {
                let (tn, _) = self.encode(&sl(&self.neg_s, i, d), &sl(&self.neg_f, i, fd), self.m_tail(), dslice(&self.drop_neg, i).as_deref());
                row.push(score(self.cfg.score_fn, &h, &rel, &tn, w.as_deref(), self.cfg.distance_p));
            }
            negs.push(row);
        }
        (pos, negs)
    }

    /// Smallest |residual coordinate| over all scored pairs.
    pub fn min_residual(&self) -> f64 {
        let d = self.cfg.embedding_dim;
        let fd = self.cfg.feature_dim;
        let k = self.cfg.relation_dim();
        let sl = |v: &[f64], i: usize, w: usize| v[i * w..(i + 1) * w].to_vec();
        let dslice = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map(|x| x[i * d..(i + 1) * d].to_vec());
        let mut min = f64::INFINITY;
        for j in 0..self.b() {
            let r = self.relations[j] as usize;
            let rel = sl(&self.rel_table, r, k);
            let w = (!self.normals.is_empty()).then(|| sl(&self.normals, r, d));
            let (h, _) = self.encode(&sl(&self.head_s, j, d), &sl(&self.head_f, j, fd), &self.m_head, dslice(&self.drop_head, j).as_deref());
            let mut tails = vec![self.encode(&sl(&self.tail_s, j, d), &sl(&self.tail_f, j, fd), self.m_tail(), dslice(&self.drop_tail, j).as_deref()).0];
            for i in 0..self.n() {
                tails.push(self.encode(&sl(&self.neg_s, i, d), &sl(&self.neg_f, i, fd), self.m_tail(), dslice(&self.drop_neg, i).as_deref()).0);
            }
            for t in tails {
                for x in residual(self.cfg.score_fn, &h, &rel, &t, w.as_deref()) {
                    min = min.min(x.abs());
                }
            }
        }
        min
    }

    pub fn objective(&self) -> f64 {
        let cfg = &self.cfg;
        let d = cfg.embedding_dim;
        let fd = cfg.feature_dim;
        let (b, n) = (self.b(), self.n());
        let (pos, negs) = self.scores();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut total = 0.0;
        for j in 0..b {
            let kept: Vec<usize> = (0..n)
                .filter(|&i| self.keep.as_ref().map_or(true, |k| k[j * n + i]))
                .collect();
            match cfg.loss {
                LossKind::LogSigmoid => {
                    let g = cfg.margin;
                    total -= sig(g + pos[j]).ln();
                    let kept_scores: Vec<f64> = kept.iter().map(|&i| negs[j][i]).collect();
                    let w = match &self.frozen_weights {
                        Some(fw) => kept.iter().map(|&i| fw[j * n + i]).collect(),
                        None => self.weights(&kept_scores),
                    };
                    for (s, wi) in kept_scores.iter().zip(w) {
                        total -= wi * sig(-g - s).ln();
                    }
                }
                LossKind::SampledSoftmaxCE => {
                    if kept.is_empty() {
                        continue;
                    }
                    let c = ((self.entity_count as f64 - 1.0) / kept.len() as f64).ln();
                    let mut z = pos[j].exp();
                    for &i in &kept {
                        z += (negs[j][i] + c).exp();
                    }
                    total += -pos[j] + z.ln();
                }
            }
        }
        // regulariser over heads, tails and each shared negative once
        let sl = |v: &[f64], i: usize, w: usize| v[i * w..(i + 1) * w].to_vec();
        let dslice = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map(|x| x[i * d..(i + 1) * d].to_vec());
        let mut reg = 0.0;
        let mut add = |s: Vec<f64>, f: Vec<f64>, m: &[f64], drop: Option<Vec<f64>>| {
            let (fin, proj) = self.encode(&s, &f, m, drop.as_deref());
            let pl = cfg.reg_use_plain_norm;
            reg += cfg.lambda_t * cube(&fin, pl) + cfg.lambda_s * cube(&s, pl) + cfg.lambda_f * cube(&proj, pl);
        };
        for j in 0..b {
            add(sl(&self.head_s, j, d), sl(&self.head_f, j, fd), &self.m_head, dslice(&self.drop_head, j));
            add(sl(&self.tail_s, j, d), sl(&self.tail_f, j, fd), self.m_tail(), dslice(&self.drop_tail, j));
        }
        for i in 0..n {
            add(sl(&self.neg_s, i, d), sl(&self.neg_f, i, fd), self.m_tail(), dslice(&self.drop_neg, i));
        }
        (total + reg) / b as f64
    }

    /// Mutable views of every trainable buffer, in a fixed order.
    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        let mut v: Vec<(&'static str, &mut Vec<f64>)> = vec![
            ("head_s", &mut self.head_s),
            ("tail_s", &mut self.tail_s),
            ("neg_s", &mut self.neg_s),
            ("relations", &mut self.rel_table),
            ("normals", &mut self.normals),
            ("m_head", &mut self.m_head),
        ];
        if !self.cfg.tie_projections {
            v.push(("m_tail", &mut self.m_tail));
        }
        v
    }
}
