use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(parameter index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: for<'a> Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out).item();
    if !value.is_finite() {
        return Err(Error::NonFinite {
            what: "grad_check objective".into(),
        });
    }
    Ok(value)
}

/// Compares the tape gradient of the scalar `f` at `params` with
/// `(f(x + h) - f(x - h)) / 2h` coordinate by coordinate.
///
/// The relative error of a coordinate is
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64) -> Result<GradCheck>
where
    F: for<'a> Fn(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-4).contains(&h) {
        return Err(Error::Domain {
            op: "grad_check",
            detail: format!("step {h:e} outside [1e-7, 1e-4]"),
        });
    }

    let analytic: Vec<Tensor> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
        let out = f(&mut tape, &vars)?;
        if !tape.value(out).item().is_finite() {
            return Err(Error::NonFinite {
                what: "grad_check objective".into(),
            });
        }
        let mut grads = tape.backward(out)?;
        vars.iter()
            .zip(params)
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect()
    };

    let mut work = params.to_vec();
    let mut numeric_grads: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
    let mut max_rel_error = 0.0;
    let mut worst = None;
    let mut coordinates = 0;
    for p in 0..work.len() {
        for c in 0..work[p].len() {
            let original = work[p].data()[c];
            work[p].data_mut()[c] = original + h;
            let plus = evaluate(&f, &work)?;
            work[p].data_mut()[c] = original - h;
            let minus = evaluate(&f, &work)?;
            work[p].data_mut()[c] = original;

            let numeric = (plus - minus) / (2.0 * h);
            numeric_grads[p].data_mut()[c] = numeric;
            let exact = analytic[p].data()[c];
            let denom = exact.abs().max(numeric.abs()).max(1e-8);
            let rel = (exact - numeric).abs() / denom;
            coordinates += 1;
            if rel > max_rel_error || worst.is_none() {
                max_rel_error = rel.max(max_rel_error);
                worst = Some((p, c));
            }
        }
    }

    Ok(GradCheck {
        max_rel_error,
        worst,
        coordinates,
        analytic,
        numeric: numeric_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_quadratic() {
        let report = grad_check(|t, v| t.mul(v[0], v[0]), &[Tensor::scalar(3.0)], 1e-6).unwrap();
        assert!(report.max_rel_error <= 1e-8, "{}", report.max_rel_error);
        assert!((report.analytic[0].item() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let report = grad_check(
            |t, _v| Ok(t.leaf(Tensor::scalar(4.0))),
            &[Tensor::vector(vec![1.0, 2.0])],
            1e-6,
        )
        .unwrap();
        assert_eq!(report.analytic[0].data(), &[0.0, 0.0]);
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn matmul_gradient_against_differences() {
        let a = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![2.0], vec![3.0]]).unwrap();
        let report = grad_check(
            |t, v| {
                let c = t.matmul(v[0], v[1])?;
                t.sum_all(c)
            },
            &[a, b],
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-8);
        assert!((report.analytic[0].data()[0] - 2.0).abs() < 1e-12);
        assert!((report.analytic[0].data()[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_gradient_against_differences() {
        let x = Tensor::vector(vec![1.0, 2.0, 2.0]);
        let w = Tensor::vector(vec![0.3, -0.7, 1.1]);
        let report = grad_check(
            |t, v| {
                let y = t.l2_normalize(v[0])?;
                t.dot(y, v[1])
            },
            &[x, w],
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-6, "{}", report.max_rel_error);
    }

    #[test]
    fn non_finite_objective_is_reported() {
        let err = grad_check(
            |t, v| {
                let e = t.exp(v[0])?;
                t.sum_all(e)
            },
            &[Tensor::scalar(1e6)],
            1e-6,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn step_outside_range_rejected() {
        assert!(grad_check(|t, v| t.sum_all(v[0]), &[Tensor::scalar(1.0)], 1e-2).is_err());
    }
}
