//! Central finite-difference checks of tape gradients.

use rand::seq::index::sample;
use rand::Rng;

use super::{Grads, ParamId, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Entries probed per parameter (all entries when the parameter is smaller).
    pub probes_per_param: usize,
    /// Absolute floor in the relative-error denominator.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            probes_per_param: 12,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.probes.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Probe> {
        self.probes
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `grad` (analytic, from the tape) with central differences of
/// `loss` at randomly chosen entries of every parameter.
pub fn check_gradients<R, L, G>(
    params: &mut ParamSet,
    loss: L,
    grad: G,
    cfg: &GradCheckConfig,
    rng: &mut R,
) -> GradCheckReport
where
    R: Rng + ?Sized,
    L: Fn(&ParamSet) -> f64,
    G: Fn(&ParamSet) -> Grads,
{
    let analytic = grad(params);
    let ids: Vec<ParamId> = params.iter().map(|(id, _)| id).collect();
    let mut report = GradCheckReport::default();
    for id in ids {
        let n = params.value(id).len();
        let picks = sample(rng, n, cfg.probes_per_param.min(n)).into_vec();
        for index in picks {
            let original = params.value(id).data()[index];
            params.value_mut(id).data_mut()[index] = original + cfg.step;
            let plus = loss(params);
            params.value_mut(id).data_mut()[index] = original - cfg.step;
            let minus = loss(params);
            params.value_mut(id).data_mut()[index] = original;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic.get(id).data()[index];
            report.probes.push(Probe {
                param: params.get(id).name.clone(),
                index,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric, cfg.floor),
            });
        }
    }
    report
}
