mod common;

use common::naive;
use kge_core::model::{
    adversarial_weights, encode_entity, l3_penalty, log_sigmoid_loss, log_sigmoid_with_weights, sampled_softmax_ce_loss,
    score, ModelConfig, Role, ScoreFunction, SharedParams,
};
use proptest::prelude::*;

fn vecs(len: usize, range: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-range..range, len)
}

proptest! {
    #[test]
    fn adversarial_weights_sum_to_one(neg in prop::collection::vec(-50.0f64..50.0, 1..40), temp in 0.0f64..3.0, shift in -100.0f64..100.0) {
        let w = adversarial_weights(&neg, None, temp);
        let total: f64 = w.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|&x| x > 0.0));
        let shifted: Vec<f64> = neg.iter().map(|s| s + shift).collect();
        let w2 = adversarial_weights(&shifted, None, temp);
        for (a, b) in w.iter().zip(&w2) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn sampled_softmax_ignores_negative_order(pos in -20.0f64..20.0, neg in prop::collection::vec(-20.0f64..20.0, 1..30), seed in any::<u64>()) {
        let mut shuffled = neg.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = sampled_softmax_ce_loss(pos, &neg, 1000).unwrap();
        let b = sampled_softmax_ce_loss(pos, &shuffled, 1000).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn full_enumeration_equals_cross_entropy(pos in -30.0f64..30.0, neg in vecs(10, 30.0)) {
        let got = sampled_softmax_ce_loss(pos, &neg, 11).unwrap();
        let m = neg.iter().cloned().fold(pos, f64::max);
        let z: f64 = (pos - m).exp() + neg.iter().map(|s| (s - m).exp()).sum::<f64>();
        let want = -(pos - m) + z.ln();
        prop_assert!((got - want).abs() <= 1e-10);
    }

    #[test]
    fn complex_with_zero_imaginary_is_distmult(h in vecs(4, 2.0), r in vecs(4, 2.0), t in vecs(4, 2.0)) {
        let inter = |v: &[f64]| v.iter().flat_map(|&x| [x, 0.0]).collect::<Vec<_>>();
        let c = score(ScoreFunction::ComplEx, &inter(&h), &inter(&r), &inter(&t), None, 2);
        let d = score(ScoreFunction::DistMult, &h, &r, &t, None, 2);
        prop_assert!((c - d).abs() <= 1e-12);
    }

    #[test]
    fn transh_with_orthogonal_normal_is_transe(h in vecs(5, 2.0), r in vecs(6, 2.0), t in vecs(5, 2.0), w in -3.0f64..3.0, p in 1u8..=2) {
        prop_assume!(w.abs() > 1e-3);
        let pad = |v: &[f64]| { let mut o = v.to_vec(); o.push(0.0); o };
        let (h, t) = (pad(&h), pad(&t));
        let mut normal = vec![0.0; 6];
        normal[5] = w;
        let a = score(ScoreFunction::TransH, &h, &r, &t, Some(&normal), p);
        let b = score(ScoreFunction::TransE, &h, &r, &t, None, p);
        prop_assert!((a - b).abs() <= 1e-10);
    }

    #[test]
    fn rotate_with_zero_phase_is_negative_distance(h in vecs(8, 2.0), t in vecs(8, 2.0), p in 1u8..=2) {
        let got = score(ScoreFunction::RotatE, &h, &[0.0; 4], &t, None, p);
        let want = -naive::score(ScoreFunction::RotatE, &h, &[0.0; 4], &t, None, p).abs();
        prop_assert!((got - want).abs() <= 1e-12);
        let diff: Vec<f64> = h.iter().zip(&t).map(|(a, b)| a - b).collect();
        let moduli: Vec<f64> = diff.chunks(2).map(|c| (c[0] * c[0] + c[1] * c[1]).sqrt()).collect();
        let dist = if p == 1 { moduli.iter().sum::<f64>() } else { moduli.iter().map(|m| m * m).sum::<f64>().sqrt() };
        prop_assert!((got + dist).abs() <= 1e-12);
    }

    #[test]
    fn scores_match_naive_oracle(h in vecs(8, 2.0), r in vecs(8, 2.0), t in vecs(8, 2.0), w in vecs(8, 2.0), p in 1u8..=2) {
        for f in ScoreFunction::ALL {
            let rel = &r[..f.relation_dim(8)];
            let normal = (f == ScoreFunction::TransH).then_some(w.as_slice());
            let got = score(f, &h, rel, &t, normal, p);
            let want = naive::score(f, &h, rel, &t, normal, p);
            prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{f}: {got} vs {want}");
        }
    }

    #[test]
    fn encoder_is_linear_in_shallow(s in vecs(4, 10.0), f in vecs(3, 10.0), m in vecs(12, 1.0), alpha_k in -8i32..8) {
        let alpha = alpha_k as f64 * 0.5;
        let cfg = ModelConfig { embedding_dim: 4, feature_dim: 3, ..Default::default() };
        let mut params = SharedParams::<f64>::zeros(&cfg, 1);
        params.proj_head = m;
        let scaled: Vec<f64> = s.iter().map(|x| alpha * x).collect();
        let a = encode_entity(&scaled, &f, Role::Head, &params, None).unwrap();
        let z = encode_entity(&[0.0; 4], &f, Role::Head, &params, None).unwrap();
        for i in 0..4 {
            // α is a small dyadic rational, so α·s and the sum below are exact
            // whenever the projection fits in the same binade.
            prop_assert!((a[i] - z[i] - scaled[i]).abs() <= f64::EPSILON * (a[i].abs() + z[i].abs()));
        }
    }

    #[test]
    fn log_sigmoid_loss_is_finite(pos in -1e4f64..1e4, neg in prop::collection::vec(-1e4f64..1e4, 1..20), margin in 0.0f64..20.0, temp in 0.0f64..2.0) {
        let (loss, w) = log_sigmoid_loss(pos, &neg, margin, temp).unwrap();
        prop_assert!(loss.is_finite() && loss >= 0.0);
        prop_assert!(w.iter().all(|x| x.is_finite()));
        let (l32, _) = log_sigmoid_loss(pos as f32, &neg.iter().map(|&x| x as f32).collect::<Vec<_>>(), margin as f32, temp as f32).unwrap();
        prop_assert!(l32.is_finite());
    }

    #[test]
    fn log_sigmoid_matches_term_by_term(pos in -5.0f64..5.0, neg in vecs(6, 5.0), margin in 0.0f64..3.0) {
        let (loss, w) = log_sigmoid_loss(pos, &neg, margin, 0.5).unwrap();
        let e: Vec<f64> = neg.iter().map(|s| (0.5 * s).exp()).collect();
        let total: f64 = e.iter().sum();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut want = -sig(margin + pos).ln();
        for (s, ei) in neg.iter().zip(&e) {
            want -= ei / total * sig(-margin - s).ln();
        }
        prop_assert!((loss - want).abs() <= 1e-12 * want.abs().max(1.0));
        prop_assert!((log_sigmoid_with_weights(pos, &neg, &w, margin) - loss).abs() <= 1e-12 * loss.abs().max(1.0));
    }

    #[test]
    fn cubed_penalty_is_sum_of_cubes(x in vecs(9, 3.0)) {
        let want: f64 = x.iter().map(|v| v.abs().powi(3)).sum();
        prop_assert!((l3_penalty(&x, false) - want).abs() <= 1e-12 * want.max(1.0));
        prop_assert!((l3_penalty(&x, true) - want.cbrt()).abs() <= 1e-12 * want.max(1.0));
    }
}

#[test]
fn regulariser_gradient_is_three_lambda_x_abs_x() {
    use common::{library_grads, random_problem, ProblemOptions};
    use kge_core::model::LossKind;
    let o = ProblemOptions {
        lambdas: (0.1, 0.0, 0.0),
        f: 0,
        ..Default::default()
    };
    let pr = random_problem(ScoreFunction::DistMult, 2, LossKind::LogSigmoid, 3, o);
    let with = library_grads(&pr);
    let mut plain = pr.clone();
    plain.cfg.lambda_t = 0.0;
    let without = library_grads(&plain);
    let b = pr.b() as f64;
    for (i, x) in pr.neg_s.iter().enumerate() {
        let reg = with.negative[i] - without.negative[i];
        let want = 3.0 * 0.1 * x * x.abs() / b;
        assert!((reg - want).abs() < 1e-14, "{reg} vs {want}");
    }
}
