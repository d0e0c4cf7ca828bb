//! Central finite-difference checks of the reverse pass.

use super::graph::{Graph, NodeId};
use super::{ParamId, ParamStore, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps vanishing gradients
/// from turning rounding noise into huge relative errors.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Checks the gradient of `build` with respect to each tracked input.
///
/// `build` receives one variable node per input in order and returns a
/// single-element root.
pub fn check_inputs<F>(
    inputs: &[(Vec<usize>, Vec<f64>)],
    step: f64,
    floor: f64,
    build: F,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph<'_, f64>, &[NodeId]) -> Result<NodeId, TensorError>,
{
    let eval = |values: &[Vec<f64>]| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let ids = inputs
            .iter()
            .zip(values)
            .map(|((shape, _), v)| g.input(shape, v.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let root = build(&mut g, &ids)?;
        Ok(g.scalar(root))
    };

    let mut g = Graph::new();
    let ids = inputs.iter().map(|(s, v)| g.variable(s, v.clone())).collect::<Result<Vec<_>, _>>()?;
    let root = build(&mut g, &ids)?;
    let grads = g.backward(root)?;

    let mut values: Vec<Vec<f64>> = inputs.iter().map(|(_, v)| v.clone()).collect();
    let mut report = GradCheckReport { checked: 0, max_relative_error: 0.0 };
    for (k, &id) in ids.iter().enumerate() {
        let analytic = grads.wrt(id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; values[k].len()]);
        for j in 0..values[k].len() {
            let orig = values[k][j];
            values[k][j] = orig + step;
            let up = eval(&values)?;
            values[k][j] = orig - step;
            let down = eval(&values)?;
            values[k][j] = orig;
            let numeric = (up - down) / (2.0 * step);
            report.checked += 1;
            report.max_relative_error = report.max_relative_error.max(relative_error(analytic[j], numeric, floor));
        }
    }
    Ok(report)
}

/// Checks parameter gradients at the given `(parameter, flat index)` coordinates.
pub fn check_params<F>(
    store: &mut ParamStore<f64>,
    coords: &[(ParamId, usize)],
    step: f64,
    floor: f64,
    build: F,
) -> Result<GradCheckReport, TensorError>
where
    F: for<'s> Fn(&mut Graph<'s, f64>, &'s ParamStore<f64>) -> Result<NodeId, TensorError>,
{
    let analytic = {
        let s: &ParamStore<f64> = store;
        let mut g = Graph::new();
        let root = build(&mut g, s)?;
        let grads = g.backward(root)?;
        g.param_grads(&grads, s)
    };
    let eval = |s: &ParamStore<f64>| -> Result<f64, TensorError> {
        let mut g = Graph::new();
        let root = build(&mut g, s)?;
        Ok(g.scalar(root))
    };
    let mut report = GradCheckReport { checked: 0, max_relative_error: 0.0 };
    for &(id, j) in coords {
        let orig = store.values(id)[j];
        store.get_mut(id).values_mut()[j] = orig + step;
        let up = eval(store)?;
        store.get_mut(id).values_mut()[j] = orig - step;
        let down = eval(store)?;
        store.get_mut(id).values_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * step);
        report.checked += 1;
        report.max_relative_error = report.max_relative_error.max(relative_error(analytic.get(id)[j], numeric, floor));
    }
    Ok(report)
}
