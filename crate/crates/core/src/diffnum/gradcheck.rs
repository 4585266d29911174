use serde::Serialize;

use super::network::Sequential;
use super::tensor::Tensor;
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
/// Gradients below this magnitude are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct ParamReport {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a relu kink or pooling tie.
    pub excluded: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradReport {
    pub params: Vec<ParamReport>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compare analytic parameter and input gradients of `loss(net(input))`
/// against central differences. `loss` returns the scalar and its gradient
/// w.r.t. the network output. `stride` > 1 samples every n-th coordinate of
/// large tensors.
pub fn finite_diff_check<F>(
    net: &mut Sequential,
    input: &Tensor,
    loss: F,
    tolerance: f64,
    stride: usize,
) -> Result<GradReport>
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    let stride = stride.max(1);
    net.zero_grad();
    let out = net.forward(input, true)?;
    let (_, g_out) = loss(&out);
    let g_in = net.backward(&g_out)?;
    let base_sig = net.branch_signature();

    let analytic: Vec<Vec<f64>> = net
        .named_params()
        .iter()
        .map(|(_, p)| p.grad().map(|g| g.to_vec()).unwrap_or_default())
        .collect();
    let names: Vec<String> = net.named_params().into_iter().map(|(n, _)| n).collect();

    let eval = |net: &mut Sequential, x: &Tensor| -> Result<(f64, Vec<u64>)> {
        let y = net.forward(x, false)?;
        Ok((loss(&y).0, net.branch_signature()))
    };

    let mut reports = Vec::new();
    for (pi, name) in names.iter().enumerate() {
        let mut rep = ParamReport {
            name: name.clone(),
            checked: 0,
            excluded: 0,
            max_rel_error: 0.0,
        };
        let len = analytic[pi].len();
        for i in (0..len).step_by(stride) {
            let orig = net.params_mut()[pi].data()[i];
            net.params_mut()[pi].data_mut()[i] = orig + FD_STEP;
            let (lp, sp) = eval(net, input)?;
            net.params_mut()[pi].data_mut()[i] = orig - FD_STEP;
            let (lm, sm) = eval(net, input)?;
            net.params_mut()[pi].data_mut()[i] = orig;
            if sp != base_sig || sm != base_sig {
                rep.excluded += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            rep.max_rel_error = rep.max_rel_error.max(relative_error(analytic[pi][i], numeric));
            rep.checked += 1;
        }
        reports.push(rep);
    }

    let mut rep = ParamReport {
        name: "input".into(),
        checked: 0,
        excluded: 0,
        max_rel_error: 0.0,
    };
    let mut x = input.clone();
    for i in (0..x.len()).step_by(stride) {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + FD_STEP;
        let (lp, sp) = eval(net, &x)?;
        x.data_mut()[i] = orig - FD_STEP;
        let (lm, sm) = eval(net, &x)?;
        x.data_mut()[i] = orig;
        if sp != base_sig || sm != base_sig {
            rep.excluded += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * FD_STEP);
        rep.max_rel_error = rep.max_rel_error.max(relative_error(g_in.data()[i], numeric));
        rep.checked += 1;
    }
    reports.push(rep);

    let max_rel_error = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    Ok(GradReport {
        params: reports,
        max_rel_error,
        tolerance,
        passed: max_rel_error < tolerance,
    })
}

/// Central-difference check of an arbitrary scalar function of a vector.
/// Returns the largest relative error against `analytic`.
pub fn check_scalar_fn<F>(x: &[f64], analytic: &[f64], mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = x.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let lp = f(&x);
        x[i] = orig - FD_STEP;
        let lm = f(&x);
        x[i] = orig;
        worst = worst.max(relative_error(analytic[i], (lp - lm) / (2.0 * FD_STEP)));
    }
    worst
}

/// `0.5 * sum(y^2)`; a convenient smooth probe loss for checks.
pub fn half_sq_loss(y: &Tensor) -> (f64, Tensor) {
    let v = 0.5 * y.data().iter().map(|a| a * a).sum::<f64>();
    (v, y.clone())
}
