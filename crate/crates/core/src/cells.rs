//! Recurrent cells and Gaussian parameter heads.
//!
//! Cells are stateless descriptions of where their weights live in a
//! [`ParamSet`]; every step is a pure function of bound parameters and
//! inputs recorded on a [`Tape`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    Bound, GaussianVar, ParamGroup, ParamId, ParamSet, Tape, Tensor, Var, LOGVAR_MAX, LOGVAR_MIN,
};

/// Uniform `±1/√fan_in` matrix of shape `[rows, cols]`.
pub(crate) fn uniform_init(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::matrix(rows, cols, data).expect("consistent shape")
}

pub(crate) fn uniform_vec(rng: &mut impl Rng, len: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::vector((0..len).map(|_| rng.random_range(-bound..bound)).collect())
}

/// Fully connected layer `W·x + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        group: ParamGroup,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = params.add(
            format!("{name}.w"),
            group,
            uniform_init(rng, out_dim, in_dim, in_dim),
        );
        let b = params.add(
            format!("{name}.b"),
            group,
            uniform_vec(rng, out_dim, in_dim),
        );
        Self {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        tape.affine(x, p.var(self.w), p.var(self.b))
    }
}

/// Two affine layers with a `tanh` between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        group: ParamGroup,
        dims: (usize, usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let (i, h, o) = dims;
        Self {
            hidden: Linear::new(params, &format!("{name}.0"), group, i, h, rng),
            out: Linear::new(params, &format!("{name}.1"), group, h, o, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, p, x)?;
        let h = tape.tanh(h)?;
        self.out.forward(tape, p, h)
    }
}

/// GRU over `[h_{t-1}, input]`: reset gate `r`, update gate `k`, candidate.
#[derive(Clone, Debug)]
pub struct GruCellParams {
    pub w_r: ParamId,
    pub b_r: ParamId,
    pub w_k: ParamId,
    pub b_k: ParamId,
    pub w: ParamId,
    pub b: ParamId,
    pub hidden: usize,
    pub input: usize,
}

impl GruCellParams {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        group: ParamGroup,
        hidden: usize,
        input: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = hidden + input;
        let mut mat = |params: &mut ParamSet, suffix: &str| {
            let w = params.add(
                format!("{name}.w_{suffix}"),
                group,
                uniform_init(rng, hidden, fan_in, fan_in),
            );
            let b = params.add(
                format!("{name}.b_{suffix}"),
                group,
                uniform_vec(rng, hidden, fan_in),
            );
            (w, b)
        };
        let (w_r, b_r) = mat(params, "r");
        let (w_k, b_k) = mat(params, "k");
        let (w, b) = mat(params, "h");
        Self {
            w_r,
            b_r,
            w_k,
            b_k,
            w,
            b,
            hidden,
            input,
        }
    }
}

pub fn gru_step(
    cell: &GruCellParams,
    tape: &mut Tape,
    p: &Bound,
    h_prev: Var,
    input: Var,
) -> Result<Var> {
    check_len(tape, "gru_step", h_prev, cell.hidden)?;
    check_len(tape, "gru_step", input, cell.input)?;
    let hp = tape.concat(&[h_prev, input])?;
    let r = tape.affine(hp, p.var(cell.w_r), p.var(cell.b_r))?;
    let r = tape.sigmoid(r)?;
    let k = tape.affine(hp, p.var(cell.w_k), p.var(cell.b_k))?;
    let k = tape.sigmoid(k)?;
    let rh = tape.mul(r, h_prev)?;
    let cand_in = tape.concat(&[rh, input])?;
    let cand = tape.affine(cand_in, p.var(cell.w), p.var(cell.b))?;
    let cand = tape.tanh(cand)?;
    let keep = tape.one_minus(k)?;
    let kept = tape.mul(keep, h_prev)?;
    let fresh = tape.mul(k, cand)?;
    tape.add(kept, fresh)
}

/// Standard LSTM; every gate reads `[x, h_{t-1}]`.
#[derive(Clone, Debug)]
pub struct LstmCellParams {
    pub input_gate: Linear,
    pub forget_gate: Linear,
    pub output_gate: Linear,
    pub candidate: Linear,
    pub hidden: usize,
    pub input: usize,
}

impl LstmCellParams {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        group: ParamGroup,
        hidden: usize,
        input: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = input + hidden;
        let input_gate = Linear::new(params, &format!("{name}.i"), group, fan_in, hidden, rng);
        let forget_gate = Linear::new(params, &format!("{name}.f"), group, fan_in, hidden, rng);
        params.get_mut(forget_gate.b).data_mut().fill(1.0);
        let output_gate = Linear::new(params, &format!("{name}.o"), group, fan_in, hidden, rng);
        let candidate = Linear::new(params, &format!("{name}.g"), group, fan_in, hidden, rng);
        Self {
            input_gate,
            forget_gate,
            output_gate,
            candidate,
            hidden,
            input,
        }
    }
}

pub fn lstm_step(
    cell: &LstmCellParams,
    tape: &mut Tape,
    p: &Bound,
    h_prev: Var,
    c_prev: Var,
    x: Var,
) -> Result<(Var, Var)> {
    check_len(tape, "lstm_step", h_prev, cell.hidden)?;
    check_len(tape, "lstm_step", c_prev, cell.hidden)?;
    check_len(tape, "lstm_step", x, cell.input)?;
    let xh = tape.concat(&[x, h_prev])?;
    let i = cell.input_gate.forward(tape, p, xh)?;
    let i = tape.sigmoid(i)?;
    let f = cell.forget_gate.forward(tape, p, xh)?;
    let f = tape.sigmoid(f)?;
    let o = cell.output_gate.forward(tape, p, xh)?;
    let o = tape.sigmoid(o)?;
    let g = cell.candidate.forward(tape, p, xh)?;
    let g = tape.tanh(g)?;
    let fc = tape.mul(f, c_prev)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Independent mean and log-variance layers.
#[derive(Clone, Debug)]
pub struct GaussianHeadParams {
    pub mean: Linear,
    pub logvar: Linear,
}

impl GaussianHeadParams {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        group: ParamGroup,
        input: usize,
        latent: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            mean: Linear::new(params, &format!("{name}.mean"), group, input, latent, rng),
            logvar: Linear::new(params, &format!("{name}.logvar"), group, input, latent, rng),
        }
    }
}

/// Mean and clamped log-variance from a feature vector.
pub fn gaussian_head(
    head: &GaussianHeadParams,
    tape: &mut Tape,
    p: &Bound,
    h: Var,
) -> Result<GaussianVar> {
    let mean = head.mean.forward(tape, p, h)?;
    let logvar = head.logvar.forward(tape, p, h)?;
    let logvar = tape.clamp(logvar, LOGVAR_MIN, LOGVAR_MAX)?;
    Ok(GaussianVar { mean, logvar })
}

fn check_len(tape: &Tape, op: &'static str, v: Var, expected: usize) -> Result<()> {
    if tape.shape(v) != [expected] {
        return Err(Error::dim(op, &[expected], tape.shape(v)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, kl_diag, sigmoid, GaussianDiag, GradCheckConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_all(params: &mut ParamSet) {
        for v in params.values_mut() {
            v.data_mut().fill(0.0);
        }
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn matvec(w: &Tensor, x: &[f64], b: &Tensor) -> Vec<f64> {
        let cols = w.shape()[1];
        (0..w.shape()[0])
            .map(|i| {
                let mut acc = b.data()[i];
                for (j, xj) in x.iter().enumerate().take(cols) {
                    acc += w.data()[i * cols + j] * xj;
                }
                acc
            })
            .collect()
    }

    fn gru_loop(params: &ParamSet, cell: &GruCellParams, h: &[f64], x: &[f64]) -> Vec<f64> {
        let hx: Vec<f64> = h.iter().chain(x).copied().collect();
        let r: Vec<f64> = matvec(params.get(cell.w_r), &hx, params.get(cell.b_r))
            .into_iter()
            .map(sigmoid)
            .collect();
        let k: Vec<f64> = matvec(params.get(cell.w_k), &hx, params.get(cell.b_k))
            .into_iter()
            .map(sigmoid)
            .collect();
        let rhx: Vec<f64> = h
            .iter()
            .zip(&r)
            .map(|(a, b)| a * b)
            .chain(x.iter().copied())
            .collect();
        let c: Vec<f64> = matvec(params.get(cell.w), &rhx, params.get(cell.b))
            .into_iter()
            .map(f64::tanh)
            .collect();
        (0..h.len())
            .map(|i| (1.0 - k[i]) * h[i] + k[i] * c[i])
            .collect()
    }

    fn run_gru(params: &ParamSet, cell: &GruCellParams, h: &[f64], x: &[f64]) -> Vec<f64> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let hv = tape.constant(Tensor::vector(h.to_vec()));
        let xv = tape.constant(Tensor::vector(x.to_vec()));
        let out = gru_step(cell, &mut tape, &bound, hv, xv).unwrap();
        tape.value(out).data().to_vec()
    }

    #[test]
    fn gru_zero_weights_halves_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ParamSet::new();
        let cell = GruCellParams::new(&mut params, "g", ParamGroup::Prior, 3, 2, &mut rng);
        zero_all(&mut params);
        let h = [0.4, -1.0, 2.0];
        assert_eq!(
            run_gru(&params, &cell, &h, &[1.0, 1.0]),
            vec![0.2, -0.5, 1.0]
        );
    }

    #[test]
    fn gru_update_gate_saturation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ParamSet::new();
        let cell = GruCellParams::new(&mut params, "g", ParamGroup::Prior, 2, 2, &mut rng);
        zero_all(&mut params);
        params.get_mut(cell.b_k).data_mut().fill(30.0);
        let out = run_gru(&params, &cell, &[1.0, -1.0], &[0.5, 0.5]);
        assert!(out.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gru_closed_update_gate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = ParamSet::new();
        let cell = GruCellParams::new(&mut params, "g", ParamGroup::Prior, 3, 2, &mut rng);
        params.get_mut(cell.w_k).data_mut().fill(0.0);
        params.get_mut(cell.b_k).data_mut().fill(-800.0);
        let h = [0.3, -0.7, 0.9];
        assert_eq!(run_gru(&params, &cell, &h, &[0.1, -0.2]), h.to_vec());
    }

    #[test]
    fn gru_matches_loop_oracle_and_is_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = ParamSet::new();
        let cell = GruCellParams::new(&mut params, "g", ParamGroup::Prior, 4, 3, &mut rng);
        for _ in 0..20 {
            let h = random_vec(&mut rng, 4);
            let x = random_vec(&mut rng, 3);
            let got = run_gru(&params, &cell, &h, &x);
            let want = gru_loop(&params, &cell, &h, &x);
            for i in 0..4 {
                assert!((got[i] - want[i]).abs() < 1e-12);
                // convex combination of h and a candidate in (-1, 1)
                let lo = h[i].min(-1.0);
                let hi = h[i].max(1.0);
                assert!(got[i] >= lo && got[i] <= hi);
            }
        }
    }

    #[test]
    fn gru_dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = ParamSet::new();
        let cell = GruCellParams::new(&mut params, "g", ParamGroup::Prior, 3, 2, &mut rng);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let h = tape.constant(Tensor::vector(vec![0.0; 2]));
        let x = tape.constant(Tensor::vector(vec![0.0; 2]));
        assert!(matches!(
            gru_step(&cell, &mut tape, &bound, h, x),
            Err(Error::Dimension { .. })
        ));
    }

    fn lstm_loop(
        params: &ParamSet,
        cell: &LstmCellParams,
        h: &[f64],
        c: &[f64],
        x: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let xh: Vec<f64> = x.iter().chain(h).copied().collect();
        let gate = |l: &Linear| matvec(params.get(l.w), &xh, params.get(l.b));
        let i: Vec<f64> = gate(&cell.input_gate).into_iter().map(sigmoid).collect();
        let f: Vec<f64> = gate(&cell.forget_gate).into_iter().map(sigmoid).collect();
        let o: Vec<f64> = gate(&cell.output_gate).into_iter().map(sigmoid).collect();
        let g: Vec<f64> = gate(&cell.candidate).into_iter().map(f64::tanh).collect();
        let c2: Vec<f64> = (0..h.len()).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
        let h2 = (0..h.len()).map(|j| o[j] * c2[j].tanh()).collect();
        (h2, c2)
    }

    fn run_lstm(
        params: &ParamSet,
        cell: &LstmCellParams,
        h: &[f64],
        c: &[f64],
        x: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let hv = tape.constant(Tensor::vector(h.to_vec()));
        let cv = tape.constant(Tensor::vector(c.to_vec()));
        let xv = tape.constant(Tensor::vector(x.to_vec()));
        let (h2, c2) = lstm_step(cell, &mut tape, &bound, hv, cv, xv).unwrap();
        (
            tape.value(h2).data().to_vec(),
            tape.value(c2).data().to_vec(),
        )
    }

    #[test]
    fn lstm_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut params = ParamSet::new();
        let cell = LstmCellParams::new(&mut params, "l", ParamGroup::Attribute, 2, 3, &mut rng);
        zero_all(&mut params);
        let c = [1.0, -3.0];
        let (h2, c2) = run_lstm(&params, &cell, &[0.5, 0.5], &c, &[1.0, 2.0, 3.0]);
        assert_eq!(c2, vec![0.5, -1.5]);
        assert_eq!(h2, vec![0.5 * 0.5f64.tanh(), 0.5 * (-1.5f64).tanh()]);
    }

    #[test]
    fn lstm_forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut params = ParamSet::new();
        let cell = LstmCellParams::new(&mut params, "l", ParamGroup::Attribute, 4, 3, &mut rng);
        assert!(params
            .get(cell.forget_gate.b)
            .data()
            .iter()
            .all(|&b| b == 1.0));
    }

    #[test]
    fn lstm_matches_loop_and_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut params = ParamSet::new();
        let cell = LstmCellParams::new(&mut params, "l", ParamGroup::Attribute, 4, 3, &mut rng);
        for _ in 0..20 {
            let h = random_vec(&mut rng, 4);
            let c: Vec<f64> = random_vec(&mut rng, 4).iter().map(|v| 5.0 * v).collect();
            let x: Vec<f64> = random_vec(&mut rng, 3).iter().map(|v| 10.0 * v).collect();
            let (h2, c2) = run_lstm(&params, &cell, &h, &c, &x);
            let (wh, wc) = lstm_loop(&params, &cell, &h, &c, &x);
            for j in 0..4 {
                assert!((h2[j] - wh[j]).abs() < 1e-12);
                assert!((c2[j] - wc[j]).abs() < 1e-12);
                assert!(h2[j].abs() < 1.0);
            }
        }
    }

    #[test]
    fn head_zero_params_is_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = ParamSet::new();
        let head = GaussianHeadParams::new(&mut params, "h", ParamGroup::Prior, 3, 2, &mut rng);
        zero_all(&mut params);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let g = gaussian_head(&head, &mut tape, &bound, x).unwrap();
        assert_eq!(tape.value(g.mean).data(), &[0.0, 0.0]);
        assert_eq!(tape.value(g.logvar).data(), &[0.0, 0.0]);
    }

    #[test]
    fn head_logvar_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut params = ParamSet::new();
        let head = GaussianHeadParams::new(&mut params, "h", ParamGroup::Prior, 3, 2, &mut rng);
        zero_all(&mut params);
        params
            .get_mut(head.logvar.b)
            .data_mut()
            .copy_from_slice(&[100.0, -100.0]);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let g = gaussian_head(&head, &mut tape, &bound, x).unwrap();
        assert_eq!(tape.value(g.logvar).data(), &[8.0, -8.0]);
    }

    #[test]
    fn kl_through_head_passes_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ParamSet::new();
        let q = GaussianHeadParams::new(&mut params, "q", ParamGroup::Posterior, 3, 2, &mut rng);
        let p = GaussianHeadParams::new(&mut params, "p", ParamGroup::Prior, 3, 2, &mut rng);
        let x = vec![0.5, -1.0, 0.25];

        let eval = |params: &ParamSet| -> Result<(f64, Vec<Tensor>)> {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let xv = tape.constant(Tensor::vector(x.clone()));
            let gq = gaussian_head(&q, &mut tape, &bound, xv)?;
            let gp = gaussian_head(&p, &mut tape, &bound, xv)?;
            let kl = tape.kl_diag(gq, gp)?;
            let grads = tape.backward(kl)?;
            // value route cross-check
            let vq = GaussianDiag::new(
                tape.value(gq.mean).data().to_vec(),
                tape.value(gq.logvar).data().to_vec(),
            )?;
            let vp = GaussianDiag::new(
                tape.value(gp.mean).data().to_vec(),
                tape.value(gp.logvar).data().to_vec(),
            )?;
            assert!((kl_diag(&vq, &vp)? - tape.value(kl).data()[0]).abs() < 1e-12);
            Ok((tape.value(kl).data()[0], bound.collect(params, &grads)))
        };
        let (_, analytic) = eval(&params).unwrap();
        let report = grad_check(
            &params,
            &analytic,
            |p| eval(p).map(|r| r.0),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
