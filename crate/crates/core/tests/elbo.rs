mod common;

use common::random_dialogue;
use dcd_core::elbo::{cls_loss, kl_loss, recon_loss, total_loss, LossWeights};
use dcd_core::model::{Model, ModelConfig, ZeroNoise};
use dcd_core::numerics::GaussianDiag;

fn setup(t: usize) -> (Model, dcd_core::Dialogue, dcd_core::model::DialogueTrace) {
    let m = Model::new(ModelConfig::toy(), 1).unwrap();
    let d = random_dialogue(&m.config, t, &["a", "b"], 2);
    let trace = m
        .forward(&d, &mut ZeroNoise, &LossWeights::default())
        .unwrap();
    (m, d, trace)
}

#[test]
fn perfect_reconstruction_costs_nothing() {
    let (_, d, mut trace) = setup(3);
    for (s, turn) in trace.steps.iter_mut().zip(&d.turns) {
        s.u_hat = turn.u.clone();
        s.f_hat = s.f.clone();
    }
    assert_eq!(recon_loss(&trace, &d).unwrap(), (0.0, 0.0));
    trace.steps[1].u_hat[0] += 1.0;
    assert_eq!(recon_loss(&trace, &d).unwrap(), (0.5, 0.0));
}

#[test]
fn recon_matches_loop_sum() {
    let (_, d, trace) = setup(5);
    let mut u = 0.0;
    let mut f = 0.0;
    for (s, turn) in trace.steps.iter().zip(&d.turns) {
        for i in 0..turn.u.len() {
            u += 0.5 * (s.u_hat[i] - turn.u[i]).powi(2);
        }
        let (fh, fv) = (s.f_hat.as_ref().unwrap(), s.f.as_ref().unwrap());
        for i in 0..fv.len() {
            f += 0.5 * (fh[i] - fv[i]).powi(2);
        }
    }
    let (ru, rf) = recon_loss(&trace, &d).unwrap();
    assert!((ru - u).abs() < 1e-12 && (rf - f).abs() < 1e-12);
}

#[test]
fn kl_vanishes_when_posterior_equals_prior() {
    let (_, _, mut trace) = setup(4);
    for s in &mut trace.steps {
        for l in &mut s.latents {
            l.posterior = l.prior.clone();
        }
    }
    assert!(kl_loss(&trace).unwrap().iter().all(|(_, k)| *k == 0.0));
}

#[test]
fn kl_matches_per_dimension_closed_form() {
    let (_, _, trace) = setup(4);
    let kl = kl_loss(&trace).unwrap();
    for (c, (_, k)) in kl.iter().enumerate() {
        assert!(*k >= 0.0);
        let mut expect = 0.0;
        for s in &trace.steps {
            let (q, p): (&GaussianDiag, &GaussianDiag) =
                (&s.latents[c].posterior, &s.latents[c].prior);
            for i in 0..q.dim() {
                let (vq, vp) = (q.logvar[i].exp(), p.logvar[i].exp());
                expect +=
                    0.5 * ((vp / vq).ln() + vq / vp + (q.mean[i] - p.mean[i]).powi(2) / vp - 1.0);
            }
        }
        assert!((k - expect).abs() < 1e-12);
    }
}

#[test]
fn uniform_logits_cost_ln_k_per_turn() {
    let (_, d, mut trace) = setup(6);
    for s in &mut trace.steps {
        s.logits = vec![0.25; 3];
    }
    assert!((cls_loss(&trace, &d).unwrap() - 6.0 * 3f64.ln()).abs() < 1e-12);
    for (s, turn) in trace.steps.iter_mut().zip(&d.turns) {
        s.logits = vec![-40.0; 3];
        s.logits[turn.label] = 40.0;
    }
    assert!(cls_loss(&trace, &d).unwrap() < 1e-30);
}

#[test]
fn total_is_weighted_sum_of_parts() {
    let (_, d, trace) = setup(5);
    let b = total_loss(&trace, &d, &LossWeights::default()).unwrap();
    assert_eq!(b.total, b.cls + (b.recon_u + b.recon_f) + b.kl_sum());
    let no_kl = total_loss(&trace, &d, &LossWeights::new(1.0, 1.0, 0.0).unwrap()).unwrap();
    assert_eq!(no_kl.total, no_kl.cls + (no_kl.recon_u + no_kl.recon_f));
    assert!(LossWeights::new(1.0, -0.1, 1.0).is_err());
    let bad = LossWeights {
        kl: -1.0,
        ..LossWeights::default()
    };
    assert!(total_loss(&trace, &d, &bad).is_err());
}

#[test]
fn per_step_terms_sum_to_totals() {
    let (_, d, trace) = setup(5);
    let b = &trace.losses;
    let cls: f64 = b.steps.iter().map(|s| s.cls).sum();
    assert!((cls - b.cls).abs() < 1e-12);
    for (c, (_, k)) in b.kl.iter().enumerate() {
        let per: f64 = b.steps.iter().map(|s| s.kl[c]).sum();
        assert!((per - k).abs() < 1e-12);
    }
    assert_eq!(b.steps.len(), d.len());
}

#[test]
fn mismatched_lengths_are_rejected() {
    let (_, mut d, trace) = setup(3);
    d.turns.pop();
    assert!(recon_loss(&trace, &d).is_err());
    assert!(cls_loss(&trace, &d).is_err());
}
