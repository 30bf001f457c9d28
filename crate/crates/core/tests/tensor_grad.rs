use proptest::prelude::*;
use rand::Rng;
use synst::rng::SeedStreams;
use synst::tensor::*;

mod support;

use support::gradchecks::{self, probe, random_store, PRIMITIVE_TOL};

const EPS: f64 = 1e-5;

fn assert_close(report: GradCheckReport, tol: f64) {
    assert!(report.checked > 0);
    assert!(
        report.max_rel_error <= tol,
        "relative error {} exceeds {tol}",
        report.max_rel_error
    );
}

#[test]
fn sum_of_squares_closed_form() {
    let mut store = ParamStore::<f64>::new();
    let x = store.insert("x", Tensor::new(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
    let mut g = Graph::new(&store);
    let sq = g.mul(Var::Param(x), Var::Param(x)).unwrap();
    let y = g.sum(sq);
    let grads = g.backward(y).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0]);
    let r = grad_check(&store, &[], 1e-3, |g| {
        let sq = g.mul(Var::Param(x), Var::Param(x))?;
        Ok(g.sum(sq))
    })
    .unwrap();
    assert_close(r, PRIMITIVE_TOL);
}

#[test]
fn linear_function_is_exact() {
    let (store, ids) = random_store(3, &[("x", &[3, 4])]);
    let r = grad_check(&store, &[], 1e-3, |g| {
        let s = g.scale(Var::Param(ids[0]), 2.5);
        probe(g, s, 1)
    })
    .unwrap();
    assert!(r.max_abs_error < 1e-10, "{}", r.max_abs_error);
}

#[test]
fn primitives_match_finite_differences() {
    for (name, reports) in gradchecks::primitives() {
        assert!(reports.iter().all(|r| r.checked > 0), "{name}");
        let worst = gradchecks::worst(&reports);
        assert!(worst <= PRIMITIVE_TOL, "{name}: relative error {worst}");
    }
}

#[test]
fn transformer_block_gradients() {
    let mut rng = SeedStreams::new(21).stream("init");
    let mut store = ParamStore::<f64>::new();
    let x = store.uniform("x", &[5, 8], 1.0, &mut rng);
    let mha = MultiHeadAttention::new(&mut store, "self", 8, 2, &mut rng).unwrap();
    let ln1 = LayerNorm::new(&mut store, "ln1", 8);
    let ff = FeedForward::new(&mut store, "ff", 8, 12, &mut rng);
    let ln2 = LayerNorm::new(&mut store, "ln2", 8);
    let out = Linear::new(&mut store, "out", 8, 7, &mut rng);
    let r = grad_check(&store, &[], EPS, |g| {
        let xv = Var::Param(x);
        let a = mha.forward(g, xv, xv, vec![AttnSegment::square(0, 5, MaskKind::Causal)])?;
        let h = g.add(xv, a)?;
        let h = ln1.forward(g, h)?;
        let f = ff.forward(g, h, 0.0)?;
        let h2 = g.add(h, f)?;
        let h2 = ln2.forward(g, h2)?;
        let logits = out.forward(g, h2)?;
        g.cross_entropy(logits, &[Some(1), Some(3), Some(6), Some(0), Some(2)], 0.0)
    })
    .unwrap();
    assert_close(r, 1e-3);
}

#[test]
fn forward_examples() {
    let store = ParamStore::<f64>::new();
    let mut g = Graph::new(&store);
    let z = g.input(Tensor::new(&[1, 2], vec![0.0, 0.0]).unwrap());
    let s = g.softmax(z, None).unwrap();
    assert_eq!(g.value(s).data(), &[0.5, 0.5]);

    let c = g.input(Tensor::new(&[1, 4], vec![3.0; 4]).unwrap());
    let gain = g.input(Tensor::full(&[4], 1.0));
    let bias = g.input(Tensor::full(&[4], 0.0));
    let n = g.layer_norm(c, gain, bias).unwrap();
    assert!(g.value(n).data().iter().all(|&v| v == 0.0));

    let logits = g.input(Tensor::new(&[1, 3], vec![100.0, 0.0, 0.0]).unwrap());
    let l = g.cross_entropy(logits, &[Some(0)], 0.0).unwrap();
    assert!(g.value(l).item() < 1e-40);
}

#[test]
fn shape_errors_name_both_shapes() {
    let store = ParamStore::<f32>::new();
    let mut g = Graph::new(&store);
    let a = g.input(Tensor::zeros(&[2, 3]));
    let b = g.input(Tensor::zeros(&[2, 3]));
    let err = g.matmul(a, b).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("[2, 3]"), "{text}");
    assert!(matches!(err, synst::Error::Shape { .. }));
}

#[test]
fn dropout_is_identity_in_eval_and_seeded_in_training() {
    let store = ParamStore::<f32>::new();
    let x = Tensor::full(&[4, 4], 1.0f32);
    let mut g = Graph::new(&store);
    let v = g.input(x.clone());
    assert_eq!(g.dropout(v, 0.5), v);
    let run = || {
        let mut g = Graph::training(&store, SeedStreams::new(5).stream("dropout"));
        let v = g.input(x.clone());
        let d = g.dropout(v, 0.5);
        g.value(d).data().to_vec()
    };
    assert_eq!(run(), run());
    assert!(run().iter().any(|&v| v == 0.0));
}

#[test]
fn causal_attention_ignores_future_positions() {
    let mut rng = SeedStreams::new(31).stream("init");
    let mut store = ParamStore::<f64>::new();
    let mha = MultiHeadAttention::new(&mut store, "self", 8, 2, &mut rng).unwrap();
    let base: Vec<f64> = (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let segs = [AttnSegment::square(0, 6, MaskKind::Causal)];
    let y0 = mha.apply(&store, &base, &base, &segs);
    for j in 1..6 {
        let mut x = base.clone();
        for c in 0..8 {
            x[j * 8 + c] += 5.0;
        }
        let y = mha.apply(&store, &x, &x, &segs);
        for i in 0..j {
            for c in 0..8 {
                assert!((y[i * 8 + c] - y0[i * 8 + c]).abs() <= 1e-6);
            }
        }
    }
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(
        values in prop::collection::vec(-30.0f64..30.0, 12),
        bits in prop::collection::vec(any::<bool>(), 12),
    ) {
        let mask = AttentionMask::from_fn(3, 4, |i, j| j == i || bits[i * 4 + j]);
        let store = ParamStore::<f64>::new();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::new(&[3, 4], values).unwrap());
        let y = g.softmax(x, Some(&mask)).unwrap();
        for (i, row) in g.value(y).data().chunks(4).enumerate() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            for (j, &p) in row.iter().enumerate() {
                if !mask.allows(i, j) {
                    prop_assert_eq!(p, 0.0);
                }
            }
        }
    }

    #[test]
    fn random_primitive_inputs_pass_gradcheck(seed in 0u64..1000) {
        let (store, ids) = random_store(seed, &[("a", &[3, 4]), ("b", &[4, 2]), ("g", &[2]), ("h", &[2])]);
        let r = grad_check(&store, &[], EPS, |g| {
            let y = g.matmul(Var::Param(ids[0]), Var::Param(ids[1]))?;
            let y = g.layer_norm(y, Var::Param(ids[2]), Var::Param(ids[3]))?;
            let y = g.softmax(y, None)?;
            probe(g, y, seed)
        }).unwrap();
        prop_assert!(r.max_rel_error <= PRIMITIVE_TOL, "{}", r.max_rel_error);
    }
}

#[test]
fn overlapping_query_segments_are_rejected() {
    let store = ParamStore::<f32>::new();
    let mut g = Graph::new(&store);
    let x = g.input(Tensor::zeros(&[4, 4]));
    let segs = vec![AttnSegment::square(0, 3, MaskKind::Full), AttnSegment::cross(2, 2, 0, 4)];
    assert!(g.attention(x, x, x, 1, segs).is_err());
}
