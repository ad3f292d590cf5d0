use super::{Network, NnError, Real, Result, Tensor};

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReport {
    /// max over parameters of `|a − n| / max(|a|, |n|, 1e-8)`
    pub max_relative_error: f64,
    /// flat index across all parameters, in [`Network::params`] order
    pub worst_parameter_index: usize,
    pub parameters_checked: usize,
    /// Parameters whose ±ε probes changed a max-pool winner. The loss is not
    /// differentiable across such a switch, so the central difference there
    /// says nothing about the analytic gradient.
    pub kink_crossings: usize,
    /// `max_relative_error` restricted to parameters without a kink crossing.
    pub max_relative_error_smooth: f64,
}

pub(crate) fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Runs backpropagation on one sample and checks every parameter gradient
/// against `(L(p+ε) − L(p−ε)) / 2ε`.
pub fn gradient_check<T: Real>(
    net: &Network<T>,
    input: &Tensor<T>,
    label: usize,
    epsilon: f64,
) -> Result<GradientReport> {
    let (_, analytic, _) = net.loss_and_gradients(input, label)?;
    compare_gradients(net, input, label, epsilon, &analytic)
}

/// Same as [`gradient_check`] but against caller-supplied analytic gradients.
pub fn compare_gradients<T: Real>(
    net: &Network<T>,
    input: &Tensor<T>,
    label: usize,
    epsilon: f64,
    analytic: &[Tensor<T>],
) -> Result<GradientReport> {
    if !(1e-5..=1e-2).contains(&epsilon) {
        return Err(NnError::InvalidArgument(format!(
            "epsilon {epsilon} outside [1e-5, 1e-2]"
        )));
    }
    let shapes: Vec<Vec<usize>> = net.params().iter().map(|p| p.shape().to_vec()).collect();
    if analytic.len() != shapes.len()
        || analytic.iter().zip(&shapes).any(|(a, s)| a.shape() != s.as_slice())
    {
        return Err(NnError::InvalidArgument(
            "analytic gradients do not match the parameter layout".into(),
        ));
    }
    let mut probe = net.clone();
    let mut report = GradientReport {
        max_relative_error: 0.0,
        worst_parameter_index: 0,
        parameters_checked: 0,
        kink_crossings: 0,
        max_relative_error_smooth: 0.0,
    };
    let baseline = net.forward(input)?;
    let mut flat = 0;
    for (t, grad) in analytic.iter().enumerate() {
        for j in 0..grad.len() {
            let original = probe.params()[t].data()[j];
            let up = T::narrow(original.widen() + epsilon);
            let down = T::narrow(original.widen() - epsilon);
            probe.params_mut()[t].data_mut()[j] = up;
            let (loss_up, trace_up) = probe.loss(input, label)?;
            probe.params_mut()[t].data_mut()[j] = down;
            let (loss_down, trace_down) = probe.loss(input, label)?;
            probe.params_mut()[t].data_mut()[j] = original;
            let kink = !baseline.same_pool_winners(&trace_up)
                || !baseline.same_pool_winners(&trace_down);
            // divide by the step actually taken after rounding to T
            let numeric = (loss_up - loss_down) / (up.widen() - down.widen());
            let err = relative_error(grad.data()[j].widen(), numeric);
            if err > report.max_relative_error || report.parameters_checked == 0 {
                report.max_relative_error = err;
                report.worst_parameter_index = flat;
            }
            if kink {
                report.kink_crossings += 1;
            } else {
                report.max_relative_error_smooth = report.max_relative_error_smooth.max(err);
            }
            report.parameters_checked += 1;
            flat += 1;
        }
    }
    Ok(report)
}
