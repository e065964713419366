//! Clamped B-spline bases and least-squares fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ridge added to the normal equations before refinement.
pub const RIDGE: f64 = 1e-10;
const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SplineSpec {
    pub degree: usize,
    pub interior_knots: usize,
}

impl SplineSpec {
    pub fn new(degree: usize, interior_knots: usize) -> Self {
        Self { degree, interior_knots }
    }

    pub fn n_basis(&self) -> usize {
        self.degree + 1 + self.interior_knots
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.degree) {
            return Err(Error::config("degree", format!("{} not in 1..=3", self.degree)));
        }
        Ok(())
    }

    /// Degrees {1,2,3} x interior knots {0,1}.
    pub fn default_candidates() -> Vec<SplineSpec> {
        let mut v = Vec::new();
        for degree in 1..=3 {
            for knots in 0..=1 {
                v.push(SplineSpec::new(degree, knots));
            }
        }
        v
    }
}

/// Clamped knot vector with uniform interior knots on `[t_min, t_max]`.
pub fn clamped_knots(spec: &SplineSpec, t_min: f64, t_max: f64) -> Vec<f64> {
    let d = spec.degree;
    let mut knots = vec![t_min; d + 1];
    let segments = spec.interior_knots + 1;
    for i in 1..segments {
        knots.push(t_min + (t_max - t_min) * i as f64 / segments as f64);
    }
    knots.extend(std::iter::repeat_n(t_max, d + 1));
    knots
}

fn validate_knots(spec: &SplineSpec, knots: &[f64]) -> Result<()> {
    let d = spec.degree;
    let need = spec.n_basis() + d + 1;
    if knots.len() != need {
        return Err(Error::MalformedKnots(format!(
            "expected {need} knots for degree {d} with {} interior, got {}",
            spec.interior_knots,
            knots.len()
        )));
    }
    if knots.iter().any(|k| !k.is_finite()) {
        return Err(Error::MalformedKnots("non-finite knot".into()));
    }
    if knots.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::MalformedKnots("knots must be nondecreasing".into()));
    }
    let (lo, hi) = (knots[0], knots[knots.len() - 1]);
    if knots[..=d].iter().any(|&k| k != lo) || knots[knots.len() - d - 1..].iter().any(|&k| k != hi) {
        return Err(Error::MalformedKnots(
            "end knots must have multiplicity degree+1".into(),
        ));
    }
    if hi <= lo {
        return Err(Error::MalformedKnots("empty domain".into()));
    }
    Ok(())
}

/// Knot span used for `t`: the last span with `knots[s] <= t`, restricted to
/// non-degenerate spans. Points outside the domain use the first or last span.
fn find_span(d: usize, n_basis: usize, knots: &[f64], t: f64) -> usize {
    let mut span = d;
    for s in d..n_basis {
        if knots[s] <= t && knots[s] < knots[s + 1] {
            span = s;
        }
    }
    span
}

/// Cox-de Boor values of the `degree + 1` functions nonzero on `span`,
/// evaluated at `t` (which may lie outside the span).
fn nonzero_basis(d: usize, knots: &[f64], span: usize, t: f64) -> Vec<f64> {
    let mut n = vec![0.0; d + 1];
    let mut left = vec![0.0; d + 1];
    let mut right = vec![0.0; d + 1];
    n[0] = 1.0;
    for j in 1..=d {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// All basis values at `t`. Inside the domain they are nonnegative and sum
/// to one; outside it the terminal polynomial pieces are continued.
pub fn bspline_basis(spec: &SplineSpec, knots: &[f64], t: f64) -> Result<Vec<f64>> {
    validate_knots(spec, knots)?;
    Ok(basis_unchecked(spec, knots, t))
}

fn basis_unchecked(spec: &SplineSpec, knots: &[f64], t: f64) -> Vec<f64> {
    let d = spec.degree;
    let m = spec.n_basis();
    let span = find_span(d, m, knots, t);
    let local = nonzero_basis(d, knots, span, t);
    let mut out = vec![0.0; m];
    out[span - d..=span].copy_from_slice(&local);
    out
}

/// Least-squares spline fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFit {
    pub spec: SplineSpec,
    pub knot_vector: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub fit_domain: (f64, f64),
}

impl SplineFit {
    pub fn eval(&self, t: f64) -> f64 {
        basis_unchecked(&self.spec, &self.knot_vector, t)
            .iter()
            .zip(&self.coefficients)
            .map(|(b, c)| b * c)
            .sum()
    }

    pub fn residuals(&self, times: &[f64], values: &[f64]) -> Vec<f64> {
        times.iter().zip(values).map(|(&t, &v)| v - self.eval(t)).collect()
    }
}

/// Fit `spec` to `(times, values)` through ridge-stabilised normal equations,
/// refined against the unregularised system.
pub fn fit_points(times: &[f64], values: &[f64], spec: &SplineSpec) -> Result<SplineFit> {
    spec.validate()?;
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: values.len(),
        });
    }
    let m = spec.n_basis();
    if times.len() < m {
        return Err(Error::InsufficientObservations {
            have: times.len(),
            need: m,
        });
    }
    let t_min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if t_max <= t_min {
        return Err(Error::InsufficientObservations { have: 1, need: m });
    }
    let knots = clamped_knots(spec, t_min, t_max);
    let mut design = DMatrix::<f64>::zeros(times.len(), m);
    for (i, &t) in times.iter().enumerate() {
        for (j, b) in basis_unchecked(spec, &knots, t).into_iter().enumerate() {
            design[(i, j)] = b;
        }
    }
    let y = DVector::from_column_slice(values);
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * &y;
    let mut regularised = gram.clone();
    for i in 0..m {
        regularised[(i, i)] += RIDGE;
    }
    let chol = regularised.cholesky().ok_or(Error::InsufficientObservations {
        have: times.len(),
        need: m,
    })?;
    let mut coef = chol.solve(&rhs);
    for _ in 0..REFINEMENT_STEPS {
        let r = &rhs - &gram * &coef;
        coef += chol.solve(&r);
    }
    Ok(SplineFit {
        spec: *spec,
        knot_vector: knots,
        coefficients: coef.iter().copied().collect(),
        fit_domain: (t_min, t_max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook recursive Cox-de Boor with the closed right end.
    fn naive_basis(i: usize, p: usize, knots: &[f64], t: f64) -> f64 {
        if p == 0 {
            let last = knots[knots.len() - 1];
            let in_span = knots[i] <= t && t < knots[i + 1];
            let at_end = t == last && knots[i] < knots[i + 1] && knots[i + 1] == last;
            return if in_span || at_end { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let a = knots[i + p] - knots[i];
        if a > 0.0 {
            v += (t - knots[i]) / a * naive_basis(i, p - 1, knots, t);
        }
        let b = knots[i + p + 1] - knots[i + 1];
        if b > 0.0 {
            v += (knots[i + p + 1] - t) / b * naive_basis(i + 1, p - 1, knots, t);
        }
        v
    }

    #[test]
    fn linear_hats_at_midpoint() {
        let spec = SplineSpec::new(1, 0);
        let k = clamped_knots(&spec, 0.0, 1.0);
        assert_eq!(k, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(bspline_basis(&spec, &k, 0.5).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn matches_recursive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for spec in SplineSpec::default_candidates()
            .into_iter()
            .chain([SplineSpec::new(2, 3)])
        {
            let k = clamped_knots(&spec, 0.0, 7.0);
            for _ in 0..20 {
                let t = rng.random_range(0.0..=7.0);
                let fast = bspline_basis(&spec, &k, t).unwrap();
                for (i, v) in fast.iter().enumerate() {
                    let slow = naive_basis(i, spec.degree, &k, t);
                    assert!((v - slow).abs() < 1e-12, "{spec:?} t={t} i={i}: {v} vs {slow}");
                }
            }
            let end = bspline_basis(&spec, &k, 7.0).unwrap();
            assert!((end[spec.n_basis() - 1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_of_unity_inside_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for spec in SplineSpec::default_candidates() {
            let k = clamped_knots(&spec, -1.0, 11.0);
            for _ in 0..100 {
                let t = rng.random_range(-1.0..=11.0);
                let b = bspline_basis(&spec, &k, t).unwrap();
                assert!(b.iter().all(|&v| v >= -1e-15));
                assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn malformed_knots_are_rejected() {
        let spec = SplineSpec::new(2, 0);
        assert!(bspline_basis(&spec, &[0.0, 0.0, 1.0, 1.0], 0.5).is_err());
        assert!(bspline_basis(&spec, &[0.0, 0.0, 0.0, 1.0, 0.5, 1.0], 0.5).is_err());
        assert!(bspline_basis(&spec, &[0.0, 0.0, 0.1, 1.0, 1.0, 1.0], 0.5).is_err());
        assert!(bspline_basis(&spec, &[1.0; 6], 0.5).is_err());
    }

    #[test]
    fn exact_linear_fit() {
        let fit = fit_points(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0], &SplineSpec::new(1, 0)).unwrap();
        for (t, v) in [(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)] {
            assert!((fit.eval(t) - v).abs() < 1e-9);
        }
    }

    #[test]
    fn polynomials_lie_in_the_span() {
        let cubic = |t: f64| 0.5 * t * t * t - 2.0 * t * t + t - 4.0;
        let times: Vec<f64> = (0..8).map(f64::from).collect();
        let values: Vec<f64> = times.iter().map(|&t| cubic(t)).collect();
        for knots in 0..=1 {
            let fit = fit_points(&times, &values, &SplineSpec::new(3, knots)).unwrap();
            let worst = fit
                .residuals(&times, &values)
                .iter()
                .fold(0.0f64, |a, r| a.max(r.abs()));
            assert!(worst < 1e-8, "{worst}");
            // polynomial continuation beyond the domain
            assert!((fit.eval(10.0) - cubic(10.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn underdetermined_fit_is_rejected() {
        let err = fit_points(&[0.0, 1.0], &[1.0, 2.0], &SplineSpec::new(2, 0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientObservations { have: 2, need: 3 }));
    }
}
