use super::{Gradients, NnError, ParamStore, Result, SeededRng};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    /// `(parameter, index, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares analytic gradients against central differences over a seeded
/// sample of at most `samples_per_param` coordinates per parameter.
///
/// `loss_fn` must be deterministic; it is called once at the base point and
/// twice per sampled coordinate. Parameters are restored before returning.
pub fn grad_check<F>(params: &mut ParamStore, epsilon: f64, samples_per_param: usize, seed: u64, mut loss_fn: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(f64, Gradients)>,
{
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(NnError::Check(format!("epsilon {epsilon} outside [1e-6, 1e-3]")));
    }
    let (base, analytic) = loss_fn(params)?;
    if !base.is_finite() {
        return Err(NnError::Check(format!("non-finite loss {base}")));
    }
    let mut rng = SeededRng::new(seed);
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        coordinates_checked: 0,
        worst: None,
    };
    for name in names {
        let n = params.get(&name)?.len();
        let mut coords: Vec<usize> = (0..n).collect();
        if n > samples_per_param {
            rng.shuffle(&mut coords);
            coords.truncate(samples_per_param);
            coords.sort_unstable();
        }
        for idx in coords {
            let orig = params.get(&name)?.data()[idx];
            let plus = (f64::from(orig) + epsilon) as f32;
            let minus = (f64::from(orig) - epsilon) as f32;
            params.get_mut(&name)?.data_mut()[idx] = plus;
            let lp = loss_fn(params);
            params.get_mut(&name)?.data_mut()[idx] = minus;
            let lm = loss_fn(params);
            params.get_mut(&name)?.data_mut()[idx] = orig;
            let (lp, lm) = (lp?.0, lm?.0);
            if !lp.is_finite() || !lm.is_finite() {
                return Err(NnError::Check(format!("non-finite loss perturbing `{name}`[{idx}]")));
            }
            let span = f64::from(plus) - f64::from(minus);
            let numeric = (lp - lm) / span;
            let ga = analytic.get(&name).map_or(0.0, |g| g[idx]);
            let rel = (ga - numeric).abs() / ga.abs().max(numeric.abs()).max(1e-8);
            report.coordinates_checked += 1;
            if rel > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = rel.max(report.max_relative_error);
                report.worst = Some((name.clone(), idx, ga, numeric));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Graph, Tensor};

    fn sum_of_squares(params: &ParamStore) -> Result<(f64, Gradients)> {
        let view = params.view();
        let mut g = Graph::new(&view);
        let w = g.param("w")?;
        let sq = g.mul(w, w)?;
        let loss = g.sum(sq);
        let back = g.backward(loss)?;
        Ok((g.scalar(loss), back.param_grads(&g)))
    }

    #[test]
    fn quadratic_oracle() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
        let (_, grads) = sum_of_squares(&s).unwrap();
        assert_eq!(grads.get("w").unwrap(), &[2.0, 4.0]);
        let report = grad_check(&mut s, 1e-3, 10, 0, sum_of_squares).unwrap();
        assert_eq!(report.coordinates_checked, 2);
        assert!(report.max_relative_error < 1e-5, "{report:?}");
        assert_eq!(s.get("w").unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn constant_loss_is_below_floor() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(vec![0.3, -0.7]).unwrap()).unwrap();
        let report = grad_check(&mut s, 1e-4, 10, 0, |_| Ok((3.5, Gradients::new()))).unwrap();
        assert_eq!(report.max_relative_error, 0.0);
    }

    #[test]
    fn rejects_bad_epsilon_and_nan_loss() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::vector(vec![0.3]).unwrap()).unwrap();
        assert!(grad_check(&mut s, 1e-2, 10, 0, |_| Ok((0.0, Gradients::new()))).is_err());
        assert!(matches!(
            grad_check(&mut s, 1e-4, 10, 0, |_| Ok((f64::NAN, Gradients::new()))),
            Err(NnError::Check(_))
        ));
    }
}
