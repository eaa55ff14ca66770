//! Central finite-difference check of analytic gradients.

use crate::error::Result;

use super::{ParamGroup, ParamSet, Tensor};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Pass threshold on the per-parameter maximum relative error.
    pub tol: f64,
    /// Magnitude below which errors are measured absolutely.
    pub floor: f64,
    /// Check at most this many entries per parameter (evenly strided).
    pub max_entries: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tol: 1e-4,
            floor: 1e-4,
            max_entries: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub group: ParamGroup,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_err < self.tol)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| p.max_rel_err >= self.tol)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_err)
            .fold(0.0, f64::max)
    }

    /// Worst error per parameter group, in group order.
    pub fn by_group(&self) -> Vec<(ParamGroup, f64)> {
        let mut out: Vec<(ParamGroup, f64)> = Vec::new();
        for p in &self.params {
            match out.iter_mut().find(|(g, _)| *g == p.group) {
                Some((_, e)) => *e = e.max(p.max_rel_err),
                None => out.push((p.group, p.max_rel_err)),
            }
        }
        out
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `value` at `params`.
/// `value` must be deterministic (freeze any sampling noise).
pub fn grad_check(
    params: &ParamSet,
    analytic: &[Tensor],
    mut value: impl FnMut(&ParamSet) -> Result<f64>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        tol: cfg.tol,
        params: Vec::with_capacity(params.len()),
    };

    for (idx, (id, entry)) in params.ids().zip(params.entries()).enumerate() {
        let n = entry.value.len();
        let stride = match cfg.max_entries {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let mut check = ParamCheck {
            name: entry.name.clone(),
            group: entry.group,
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            checked: 0,
        };
        for i in (0..n).step_by(stride) {
            let orig = entry.value.data()[i];
            probe.get_mut(id).data_mut()[i] = orig + cfg.step;
            let plus = value(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig - cfg.step;
            let minus = value(&probe)?;
            probe.get_mut(id).data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic[idx].data()[i];
            let err = relative_error(a, numeric, cfg.floor);
            if err > check.max_rel_err || check.checked == 0 {
                check.max_rel_err = err;
                check.worst_index = i;
                check.analytic = a;
                check.numeric = numeric;
            }
            check.checked += 1;
        }
        report.params.push(check);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> (ParamSet, impl Fn(&ParamSet) -> Result<f64>) {
        let mut p = ParamSet::new();
        p.add("a", ParamGroup::Other, Tensor::vector(vec![1.0, -2.0, 0.5]));
        p.add("b", ParamGroup::Other, Tensor::vector(vec![3.0]));
        let f = |p: &ParamSet| -> Result<f64> {
            let a = p.entries()[0].value.data();
            let b = p.entries()[1].value.data()[0];
            Ok(a.iter().map(|x| x * x).sum::<f64>() + 2.0 * b * b + a[0] * b)
        };
        (p, f)
    }

    fn quadratic_grad(p: &ParamSet) -> Vec<Tensor> {
        let a = p.entries()[0].value.data();
        let b = p.entries()[1].value.data()[0];
        vec![
            Tensor::vector(vec![2.0 * a[0] + b, 2.0 * a[1], 2.0 * a[2]]),
            Tensor::vector(vec![4.0 * b + a[0]]),
        ]
    }

    #[test]
    fn quadratic_passes_tightly() {
        let (p, f) = quadratic();
        let cfg = GradCheckConfig {
            tol: 1e-6,
            ..Default::default()
        };
        let report = grad_check(&p, &quadratic_grad(&p), f, &cfg).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn corrupted_partial_is_reported_by_name() {
        let (p, f) = quadratic();
        let mut g = quadratic_grad(&p);
        g[1].data_mut()[0] += 0.1;
        let report = grad_check(&p, &g, f, &GradCheckConfig::default()).unwrap();
        assert!(!report.passed());
        let failed: Vec<_> = report.failures().map(|c| c.name.as_str()).collect();
        assert_eq!(failed, vec!["b"]);
    }
}
