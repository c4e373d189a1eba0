//! Central finite-difference verification of tape gradients.

use crate::autodiff::{ParamStore, Tape, Var};

pub const STEP: f64 = 1e-5;

/// Denominator floor so that vanishing gradients compare on an absolute
/// scale instead of amplifying rounding noise.
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub worst_relative_error: f64,
    pub worst_entry: String,
    pub entries_checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Compares the gradient of the scalar `f` with respect to every parameter
/// whose name starts with one of `prefixes` (all parameters when empty).
/// At most `max_per_param` evenly spaced entries of each matrix are probed.
pub fn check_gradients<F>(params: &ParamStore, prefixes: &[&str], max_per_param: usize, f: F) -> GradCheckReport
where
    F: Fn(&Tape, &ParamStore) -> Var,
{
    let tape = Tape::new();
    let out = f(&tape, params);
    let grads = tape.backward(out);
    let analytic = tape.param_grads(&grads);

    let mut report = GradCheckReport {
        worst_relative_error: 0.0,
        worst_entry: String::new(),
        entries_checked: 0,
    };
    let eval = |p: &ParamStore| {
        let t = Tape::new();
        let v = f(&t, p);
        t.scalar(v)
    };
    let mut probe = params.clone();
    for name in params.names() {
        if !prefixes.is_empty() && !prefixes.iter().any(|p| name.starts_with(p)) {
            continue;
        }
        let Some(g) = analytic.get(name) else {
            continue;
        };
        let n = g.len();
        let stride = n.div_ceil(max_per_param.max(1)).max(1);
        for k in (0..n).step_by(stride) {
            let (r, c) = (k / g.ncols(), k % g.ncols());
            let orig = params.get(name)[[r, c]];
            probe.get_mut(name).expect("cloned")[[r, c]] = orig + STEP;
            let plus = eval(&probe);
            probe.get_mut(name).expect("cloned")[[r, c]] = orig - STEP;
            let minus = eval(&probe);
            probe.get_mut(name).expect("cloned")[[r, c]] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let err = relative_error(g[[r, c]], numeric);
            report.entries_checked += 1;
            if err > report.worst_relative_error || report.worst_entry.is_empty() {
                report.worst_relative_error = err;
                report.worst_entry = format!("{name}[{r},{c}] analytic={} numeric={numeric}", g[[r, c]]);
            }
        }
    }
    report
}
