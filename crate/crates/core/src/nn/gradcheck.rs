//! Central finite-difference check of the analytic gradients.

use super::model::TransformerModel;
use super::train::{batch_loss, loss_and_grad, Sample, TrainError};

#[derive(Debug, Clone)]
pub struct GroupError {
    pub name: String,
    pub params: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

/// Relative error with a floor on the denominator so that entries whose
/// true gradient is numerically zero compare on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares every parameter's analytic gradient against
/// `(L(θ+h) − L(θ−h)) / 2h`. Intended for small models; cost is two
/// forward passes per parameter.
pub fn check_gradients(
    model: &TransformerModel,
    batch: &[Sample<'_>],
    pad: Option<u32>,
    h: f64,
) -> Result<GradCheckReport, TrainError> {
    let (_, grads) = loss_and_grad(model, batch, pad)?;
    let analytic: Vec<(String, Vec<f64>)> = grads
        .named()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();

    let mut probe = model.clone();
    let mut groups = Vec::with_capacity(analytic.len());
    for (gi, (name, a)) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..a.len() {
            let orig = probe.params.tensors_mut()[gi].data()[i];
            probe.params.tensors_mut()[gi].data_mut()[i] = orig + h;
            let up = batch_loss(&probe, batch, pad)?;
            probe.params.tensors_mut()[gi].data_mut()[i] = orig - h;
            let down = batch_loss(&probe, batch, pad)?;
            probe.params.tensors_mut()[gi].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(a[i], numeric));
        }
        groups.push(GroupError {
            name: name.clone(),
            params: a.len(),
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport { groups })
}
