//! The five scoring functions and their gradients.
//!
//! RotatE and ComplEx read real vectors as interleaved `(re, im)` pairs.
//! For RotatE the relation vector holds one phase per complex coordinate and
//! the p-norm is taken over complex moduli.

use super::ScoreFunction;
use crate::real::Real;

/// Plausibility `f(h, r, t)`; higher is more plausible.
///
/// `normal` is the TransH hyperplane normal `w_r` (normalised here) and is
/// ignored by the other functions.
pub fn score<T: Real>(
    score_fn: ScoreFunction,
    head: &[T],
    relation: &[T],
    tail: &[T],
    normal: Option<&[T]>,
    p: u8,
) -> T {
    match score_fn {
        ScoreFunction::TransE => {
            let mut acc = T::zero();
            for i in 0..head.len() {
                acc = acc + pow_p(head[i] + relation[i] - tail[i], p);
            }
            -root_p(acc, p)
        }
        ScoreFunction::TransH => {
            let w = normal.expect("TransH requires a normal vector");
            let inv = inv_norm(w);
            let mut dot = T::zero();
            for i in 0..head.len() {
                dot = dot + w[i] * (head[i] - tail[i]);
            }
            let a = dot * inv * inv;
            let mut acc = T::zero();
            for i in 0..head.len() {
                acc = acc + pow_p(head[i] - tail[i] - a * w[i] + relation[i], p);
            }
            -root_p(acc, p)
        }
        ScoreFunction::RotatE => {
            let mut acc = T::zero();
            for c in 0..head.len() / 2 {
                let (re, im) = rotate_residual(head, relation, tail, c);
                acc = acc + complex_pow_p(re, im, p);
            }
            -root_p(acc, p)
        }
        ScoreFunction::DistMult => {
            let mut acc = T::zero();
            for i in 0..head.len() {
                acc = acc + relation[i] * head[i] * tail[i];
            }
            acc
        }
        ScoreFunction::ComplEx => {
            let mut acc = T::zero();
            for c in 0..head.len() / 2 {
                let (a, b) = (relation[2 * c], relation[2 * c + 1]);
                let (hr, hi) = (head[2 * c], head[2 * c + 1]);
                let (tr, ti) = (tail[2 * c], tail[2 * c + 1]);
                acc = acc + (a * hr - b * hi) * tr + (a * hi + b * hr) * ti;
            }
            acc
        }
    }
}

/// Accumulates `upstream · ∂f` into the gradient buffers.
#[allow(clippy::too_many_arguments)]
pub fn score_backward<T: Real>(
    score_fn: ScoreFunction,
    head: &[T],
    relation: &[T],
    tail: &[T],
    normal: Option<&[T]>,
    p: u8,
    upstream: T,
    d_head: &mut [T],
    d_relation: &mut [T],
    d_tail: &mut [T],
    d_normal: Option<&mut [T]>,
) {
    let d = head.len();
    match score_fn {
        ScoreFunction::TransE => {
            let norm = residual_norm(d, p, |i| head[i] + relation[i] - tail[i]);
            for i in 0..d {
                let g = upstream * dist_grad(head[i] + relation[i] - tail[i], norm, p);
                d_head[i] = d_head[i] + g;
                d_relation[i] = d_relation[i] + g;
                d_tail[i] = d_tail[i] - g;
            }
        }
        ScoreFunction::TransH => {
            let w = normal.expect("TransH requires a normal vector");
            let inv = inv_norm(w);
            // unit normal, u = h - t, a = ŵ·u
            let mut a = T::zero();
            for i in 0..d {
                a = a + w[i] * inv * (head[i] - tail[i]);
            }
            let resid = |i: usize| head[i] - tail[i] - a * w[i] * inv + relation[i];
            let norm = residual_norm(d, p, resid);
            let g: Vec<T> = (0..d).map(|i| upstream * dist_grad(resid(i), norm, p)).collect();
            let mut wg = T::zero();
            for i in 0..d {
                wg = wg + w[i] * inv * g[i];
            }
            for i in 0..d {
                let du = g[i] - wg * w[i] * inv;
                d_relation[i] = d_relation[i] + g[i];
                d_head[i] = d_head[i] + du;
                d_tail[i] = d_tail[i] - du;
            }
            if let Some(dw) = d_normal {
                if inv > T::zero() {
                    // ∂/∂ŵ = -(a g + (ŵ·g) u), then through ŵ = w/|w|
                    let dw_unit: Vec<T> = (0..d)
                        .map(|i| -(a * g[i] + wg * (head[i] - tail[i])))
                        .collect();
                    let mut proj = T::zero();
                    for i in 0..d {
                        proj = proj + w[i] * inv * dw_unit[i];
                    }
                    for i in 0..d {
                        dw[i] = dw[i] + (dw_unit[i] - proj * w[i] * inv) * inv;
                    }
                }
            }
        }
        ScoreFunction::RotatE => {
            let half = d / 2;
            let mut acc = T::zero();
            for c in 0..half {
                let (re, im) = rotate_residual(head, relation, tail, c);
                acc = acc + complex_pow_p(re, im, p);
            }
            let norm = root_p(acc, p);
            for c in 0..half {
                let (re, im) = rotate_residual(head, relation, tail, c);
                let (gr, gi) = if p == 1 {
                    let m = (re * re + im * im).sqrt();
                    if m > T::zero() {
                        (-re / m, -im / m)
                    } else {
                        (T::zero(), T::zero())
                    }
                } else if norm > T::zero() {
                    (-re / norm, -im / norm)
                } else {
                    (T::zero(), T::zero())
                };
                let (gr, gi) = (upstream * gr, upstream * gi);
                let (cos, sin) = (relation[c].cos(), relation[c].sin());
                let (hr, hi) = (head[2 * c], head[2 * c + 1]);
                d_head[2 * c] = d_head[2 * c] + gr * cos + gi * sin;
                d_head[2 * c + 1] = d_head[2 * c + 1] - gr * sin + gi * cos;
                d_tail[2 * c] = d_tail[2 * c] - gr;
                d_tail[2 * c + 1] = d_tail[2 * c + 1] - gi;
                d_relation[c] = d_relation[c]
                    + gr * (-hr * sin - hi * cos)
                    + gi * (hr * cos - hi * sin);
            }
        }
        ScoreFunction::DistMult => {
            for i in 0..d {
                d_head[i] = d_head[i] + upstream * relation[i] * tail[i];
                d_relation[i] = d_relation[i] + upstream * head[i] * tail[i];
                d_tail[i] = d_tail[i] + upstream * head[i] * relation[i];
            }
        }
        ScoreFunction::ComplEx => {
            for c in 0..d / 2 {
                let (re, im) = (2 * c, 2 * c + 1);
                let (a, b) = (relation[re], relation[im]);
                let (hr, hi) = (head[re], head[im]);
                let (tr, ti) = (tail[re], tail[im]);
                d_head[re] = d_head[re] + upstream * (a * tr + b * ti);
                d_head[im] = d_head[im] + upstream * (a * ti - b * tr);
                d_relation[re] = d_relation[re] + upstream * (hr * tr + hi * ti);
                d_relation[im] = d_relation[im] + upstream * (hr * ti - hi * tr);
                d_tail[re] = d_tail[re] + upstream * (a * hr - b * hi);
                d_tail[im] = d_tail[im] + upstream * (a * hi + b * hr);
            }
        }
    }
}

#[inline]
fn rotate_residual<T: Real>(head: &[T], phase: &[T], tail: &[T], c: usize) -> (T, T) {
    let (cos, sin) = (phase[c].cos(), phase[c].sin());
    let (hr, hi) = (head[2 * c], head[2 * c + 1]);
    (
        hr * cos - hi * sin - tail[2 * c],
        hr * sin + hi * cos - tail[2 * c + 1],
    )
}

#[inline]
fn pow_p<T: Real>(x: T, p: u8) -> T {
    if p == 1 {
        x.abs()
    } else {
        x * x
    }
}

#[inline]
fn complex_pow_p<T: Real>(re: T, im: T, p: u8) -> T {
    let sq = re * re + im * im;
    if p == 1 {
        sq.sqrt()
    } else {
        sq
    }
}

#[inline]
fn root_p<T: Real>(acc: T, p: u8) -> T {
    if p == 1 {
        acc
    } else {
        acc.sqrt()
    }
}

fn residual_norm<T: Real>(d: usize, p: u8, resid: impl Fn(usize) -> T) -> T {
    let mut acc = T::zero();
    for i in 0..d {
        acc = acc + pow_p(resid(i), p);
    }
    root_p(acc, p)
}

/// ∂(-‖v‖_p)/∂v_i given the precomputed norm.
#[inline]
fn dist_grad<T: Real>(v: T, norm: T, p: u8) -> T {
    if p == 1 {
        if v > T::zero() {
            -T::one()
        } else if v < T::zero() {
            T::one()
        } else {
            T::zero()
        }
    } else if norm > T::zero() {
        -v / norm
    } else {
        T::zero()
    }
}

fn inv_norm<T: Real>(w: &[T]) -> T {
    let n = w.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt();
    if n > T::zero() {
        T::one() / n
    } else {
        T::zero()
    }
}
