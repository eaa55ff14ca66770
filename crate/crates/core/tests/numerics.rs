use dcd_core::numerics::{
    grad_check, kl_diag, GaussianDiag, GradCheckConfig, ParamGroup, ParamSet, Tape, Tensor,
};
use proptest::prelude::*;

#[test]
fn affine_matches_triple_loop() {
    let w: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
    let x = vec![0.5, -1.25, 2.0, 0.75];
    let b = vec![0.1, -0.2, 0.3];
    let mut tape = Tape::new();
    let wv = tape.constant(Tensor::matrix(3, 4, w.clone()).unwrap());
    let xv = tape.constant(Tensor::vector(x.clone()));
    let bv = tape.constant(Tensor::vector(b.clone()));
    let y = tape.affine(xv, wv, bv).unwrap();

    let mut expect = [0.0; 3];
    for i in 0..3 {
        let mut acc = b[i];
        for j in 0..4 {
            acc += w[i * 4 + j] * x[j];
        }
        expect[i] = acc;
    }
    for (got, want) in tape.value(y).data().iter().zip(expect) {
        assert!((got - want).abs() < 1e-14);
    }
}

fn chain_loss(params: &ParamSet, grad: bool) -> (f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let bound = if grad {
        params.bind(&mut tape)
    } else {
        params.bind_frozen(&mut tape)
    };
    let ids: Vec<_> = params.ids().collect();
    let x = tape.constant(Tensor::vector(vec![0.3, -0.7, 1.1]));
    let h = tape
        .affine(x, bound.var(ids[0]), bound.var(ids[1]))
        .unwrap();
    let h = tape.tanh(h).unwrap();
    let logits = tape
        .affine(h, bound.var(ids[2]), bound.var(ids[3]))
        .unwrap();
    let loss = tape.softmax_cross_entropy(logits, 1).unwrap();
    let value = tape.value(loss).data()[0];
    if !grad {
        return (value, Vec::new());
    }
    let grads = tape.backward(loss).unwrap();
    (value, bound.collect(params, &grads))
}

#[test]
fn affine_chain_gradients_match_finite_differences() {
    let mut ps = ParamSet::new();
    let fill = |n: usize, k: f64| {
        (0..n)
            .map(|i| ((i as f64 + 1.0) * k).cos() * 0.5)
            .collect::<Vec<_>>()
    };
    ps.add(
        "w1",
        ParamGroup::Generator,
        Tensor::matrix(4, 3, fill(12, 0.7)).unwrap(),
    );
    ps.add("b1", ParamGroup::Generator, Tensor::vector(fill(4, 1.3)));
    ps.add(
        "w2",
        ParamGroup::Classifier,
        Tensor::matrix(3, 4, fill(12, 0.4)).unwrap(),
    );
    ps.add("b2", ParamGroup::Classifier, Tensor::vector(fill(3, 2.1)));
    let (_, analytic) = chain_loss(&ps, true);
    let report = grad_check(
        &ps,
        &analytic,
        |p| Ok(chain_loss(p, false).0),
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(
        report.passed(),
        "max relative error {}",
        report.max_rel_err()
    );
    assert_eq!(report.params.len(), 4);
}

fn gaussian(dim: usize) -> impl Strategy<Value = GaussianDiag> {
    (
        prop::collection::vec(-3.0..3.0f64, dim),
        prop::collection::vec(-2.0..2.0f64, dim),
    )
        .prop_map(|(mean, logvar)| GaussianDiag::new(mean, logvar).unwrap())
}

proptest! {
    #[test]
    fn kl_is_nonnegative_and_zero_on_self(q in gaussian(4), p in gaussian(4)) {
        prop_assert!(kl_diag(&q, &p).unwrap() >= 0.0);
        prop_assert_eq!(kl_diag(&q, &q).unwrap(), 0.0);
    }

    #[test]
    fn concat_then_slice_recovers_parts(a in prop::collection::vec(-5.0..5.0f64, 1..6), b in prop::collection::vec(-5.0..5.0f64, 1..6)) {
        let mut tape = Tape::new();
        let av = tape.constant(Tensor::vector(a.clone()));
        let bv = tape.constant(Tensor::vector(b.clone()));
        let c = tape.concat(&[av, bv]).unwrap();
        let back = tape.slice(c, a.len(), b.len()).unwrap();
        prop_assert_eq!(tape.value(back).data(), &b[..]);
    }
}
