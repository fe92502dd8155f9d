use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::ImageBuf;
use crate::error::{Error, Result};
use crate::model::{GradFn, LossGrad};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::path::{PathSpec, Scheme};

/// Per-pixel Integrated Gradients plus completeness bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct AttributionMap<T = f64> {
    /// Shaped like the input image.
    pub values: Tensor<T>,
    /// Σ values, accumulated in index order.
    pub sum: T,
    pub loss_baseline: T,
    pub loss_target: T,
    /// |sum − (loss_target − loss_baseline)|.
    pub completeness_gap: T,
    pub label: usize,
    pub steps: usize,
    pub scheme: Scheme,
    pub logits_baseline: Vec<T>,
    pub logits_target: Vec<T>,
}

impl<T: Scalar> AttributionMap<T> {
    pub fn delta_loss(&self) -> T {
        self.loss_target - self.loss_baseline
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompletenessReport {
    pub gap: f64,
    pub rel_gap: f64,
}

/// Denominator floor for the relative gap.
pub const REL_GAP_FLOOR: f64 = 1e-12;

pub fn completeness_report<T: Scalar>(att: &AttributionMap<T>) -> CompletenessReport {
    let gap = att.completeness_gap.to_f64_lossy();
    let delta = att.delta_loss().to_f64_lossy().abs();
    CompletenessReport {
        gap,
        rel_gap: gap / delta.max(REL_GAP_FLOOR),
    }
}

fn evaluate<T: Scalar, G: GradFn<T> + ?Sized>(
    gradfn: &G,
    spec: &PathSpec<T>,
    label: usize,
    nodes: &[usize],
) -> Result<Vec<LossGrad<T>>> {
    nodes
        .par_iter()
        .map(|&s| {
            let wrap = |e: Error| Error::PathStep {
                step: s,
                source: Box::new(e),
            };
            let point = spec.point(s).map_err(wrap)?;
            let lg = gradfn.loss_grad(&point, label).map_err(wrap)?;
            if lg.grad.shape() != point.tensor().shape() {
                return Err(wrap(Error::DimensionMismatch {
                    op: "gradient",
                    left: lg.grad.shape().to_vec(),
                    right: point.tensor().shape().to_vec(),
                }));
            }
            Ok(lg)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn add_into<T: Scalar>(acc: &mut [T], g: &[T]) {
    for (a, &v) in acc.iter_mut().zip(g) {
        *a = *a + v;
    }
}

/// Integrated Gradients of `l(F(x), label)` from the baseline to the target.
///
/// `IG_i = (x1_i − x0_i) · Σ_s w_s ∂l/∂x_i(γ(s/N))`, oriented so that the
/// attributions sum to `l(x1) − l(x0)` as `N → ∞`. Node gradients may be
/// evaluated in parallel; the reduction order is fixed, and for the
/// trapezoid rule it pairs node `s` with node `N − s` so that swapping
/// baseline and target negates every value exactly.
pub fn integrated_gradients<T: Scalar, G: GradFn<T> + ?Sized>(
    gradfn: &G,
    spec: &PathSpec<T>,
    label: usize,
) -> Result<AttributionMap<T>> {
    let n = spec.steps();
    let nodes: Vec<usize> = spec.node_indices().collect();
    let mut evals = evaluate(gradfn, spec, label, &nodes)?;
    let len = spec.baseline().data().len();
    let mut acc = vec![T::zero(); len];

    let (baseline_eval, target_eval) = match spec.scheme() {
        Scheme::RiemannRight => {
            for lg in &evals {
                add_into(&mut acc, lg.grad.data());
            }
            let base = evaluate(gradfn, spec, label, &[0])?.remove(0);
            (base, evals.pop().expect("N ≥ 1 nodes"))
        }
        Scheme::Trapezoid => {
            let (first, last) = (&evals[0], &evals[n]);
            let half = T::of(0.5);
            for ((a, &g0), &gn) in acc.iter_mut().zip(first.grad.data()).zip(last.grad.data()) {
                *a = (g0 + gn) * half;
            }
            for j in 1..=n / 2 {
                if 2 * j == n {
                    add_into(&mut acc, evals[j].grad.data());
                } else {
                    let (lo, hi) = (evals[j].grad.data(), evals[n - j].grad.data());
                    for ((a, &x), &y) in acc.iter_mut().zip(lo).zip(hi) {
                        *a = *a + (x + y);
                    }
                }
            }
            let last = evals.pop().expect("N+1 nodes");
            (evals.swap_remove(0), last)
        }
    };

    let steps = T::of(n as f64);
    let x0 = spec.baseline().data();
    let x1 = spec.target().data();
    let values: Vec<T> = acc
        .iter()
        .zip(x0.iter().zip(x1))
        .map(|(&a, (&b, &t))| (t - b) * (a / steps))
        .collect();
    let values = Tensor::from_vec(&spec.baseline().dims(), values)?;
    Ok(finish(
        values,
        label,
        n,
        spec.scheme(),
        baseline_eval,
        target_eval,
    ))
}

fn finish<T: Scalar>(
    values: Tensor<T>,
    label: usize,
    steps: usize,
    scheme: Scheme,
    baseline: LossGrad<T>,
    target: LossGrad<T>,
) -> AttributionMap<T> {
    let sum = values.sum();
    let gap = (sum - (target.loss - baseline.loss)).abs();
    AttributionMap {
        values,
        sum,
        loss_baseline: baseline.loss,
        loss_target: target.loss,
        completeness_gap: gap,
        label,
        steps,
        scheme,
        logits_baseline: baseline.logits.0,
        logits_target: target.logits.0,
    }
}

/// Integrated Gradients along a piecewise-linear path through `waypoints`,
/// with `steps` nodes per segment. Segment attributions add up.
pub fn integrated_gradients_polyline<T: Scalar, G: GradFn<T> + ?Sized>(
    gradfn: &G,
    waypoints: &[ImageBuf<T>],
    steps: usize,
    scheme: Scheme,
    label: usize,
) -> Result<AttributionMap<T>> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidArgument(
            "polyline needs at least two waypoints".into(),
        ));
    }
    let mut segments = Vec::with_capacity(waypoints.len() - 1);
    for pair in waypoints.windows(2) {
        let spec = PathSpec::new(pair[0].clone(), pair[1].clone(), steps, scheme)?;
        segments.push(integrated_gradients(gradfn, &spec, label)?);
    }
    let mut values = segments[0].values.clone();
    for seg in &segments[1..] {
        values = values.zip_with(&seg.values, |a, b| a + b)?;
    }
    let last = segments.pop().expect("at least one segment");
    let first = if segments.is_empty() {
        last.clone()
    } else {
        segments.swap_remove(0)
    };
    let sum = values.sum();
    Ok(AttributionMap {
        sum,
        completeness_gap: (sum - (last.loss_target - first.loss_baseline)).abs(),
        values,
        loss_baseline: first.loss_baseline,
        loss_target: last.loss_target,
        label,
        steps,
        scheme,
        logits_baseline: first.logits_baseline,
        logits_target: last.logits_target,
    })
}

/// Numerical witness of the sensitivity axiom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityProbe {
    pub delta_loss: f64,
    pub ig_sum: f64,
    pub gap: f64,
    /// Loss differences at or below this are treated as zero.
    pub epsilon: f64,
    pub consistent: bool,
}

/// Checks that a non-negligible loss change receives a non-zero attribution
/// of the same sign. When the quadrature gap is as large as the loss change
/// itself the sign is not informative and only non-zero-ness is required.
pub fn sensitivity_probe<T: Scalar, G: GradFn<T> + ?Sized>(
    gradfn: &G,
    x0: &ImageBuf<T>,
    x1: &ImageBuf<T>,
    label: usize,
    steps: usize,
    scheme: Scheme,
) -> Result<SensitivityProbe> {
    let spec = PathSpec::new(x0.clone(), x1.clone(), steps, scheme)?;
    let att = integrated_gradients(gradfn, &spec, label)?;
    let delta = att.delta_loss().to_f64_lossy();
    let ig_sum = att.sum.to_f64_lossy();
    let gap = att.completeness_gap.to_f64_lossy();
    let scale = 1.0 + att.loss_baseline.to_f64_lossy().abs() + att.loss_target.to_f64_lossy().abs();
    let epsilon = 1e3 * T::epsilon().to_f64_lossy() * scale;
    let consistent = if delta.abs() <= epsilon {
        true
    } else if gap >= delta.abs() {
        ig_sum != 0.0
    } else {
        ig_sum != 0.0 && ig_sum.signum() == delta.signum()
    };
    Ok(SensitivityProbe {
        delta_loss: delta,
        ig_sum,
        gap,
        epsilon,
        consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::test_image::noise_image;
    use crate::model::ScalarLoss;

    fn scalar_image(v: f64) -> ImageBuf {
        ImageBuf::from_vec(1, 1, vec![v, v, v]).unwrap()
    }

    /// l(x) = x₀², ignoring the other two channels.
    fn square() -> ScalarLoss<impl Fn(&[f64]) -> (f64, Vec<f64>) + Sync> {
        ScalarLoss::new([1, 1, 3], |x: &[f64]| {
            (x[0] * x[0], vec![2.0 * x[0], 0.0, 0.0])
        })
    }

    fn linear(w: Vec<f64>) -> ScalarLoss<impl Fn(&[f64]) -> (f64, Vec<f64>) + Sync> {
        let dims = [2, 3, 3];
        ScalarLoss::new(dims, move |x: &[f64]| {
            (x.iter().zip(&w).map(|(a, b)| a * b).sum(), w.clone())
        })
    }

    #[test]
    fn quadratic_oracle() {
        let g = square();
        let r = PathSpec::new(
            scalar_image(0.0),
            scalar_image(1.0),
            4,
            Scheme::RiemannRight,
        )
        .unwrap();
        let att = integrated_gradients(&g, &r, 0).unwrap();
        assert!((att.sum - 1.25).abs() < 1e-12);
        assert!((att.completeness_gap - 0.25).abs() < 1e-12);
        let t = PathSpec::new(scalar_image(0.0), scalar_image(1.0), 4, Scheme::Trapezoid).unwrap();
        let att = integrated_gradients(&g, &t, 0).unwrap();
        assert!((att.sum - 1.0).abs() < 1e-12);
        assert!(att.completeness_gap < 1e-12);
    }

    #[test]
    fn linear_exactness() {
        let w: Vec<f64> = (0..18).map(|i| (i as f64 - 8.5) * 0.3).collect();
        let g = linear(w.clone());
        let (a, b) = (noise_image(2, 3, 1), noise_image(2, 3, 2));
        for scheme in [Scheme::RiemannRight, Scheme::Trapezoid] {
            for n in [1, 5, 50] {
                let spec = PathSpec::new(a.clone(), b.clone(), n, scheme).unwrap();
                let att = integrated_gradients(&g, &spec, 0).unwrap();
                for (i, wi) in w.iter().enumerate() {
                    let expect = wi * (b.data()[i] - a.data()[i]);
                    assert!((att.values.data()[i] - expect).abs() < 1e-12);
                }
                assert!(completeness_report(&att).gap < 1e-12);
            }
        }
    }

    #[test]
    fn empty_path() {
        let g = linear(vec![1.0; 18]);
        let a = noise_image(2, 3, 1);
        let spec = PathSpec::new(a.clone(), a, 10, Scheme::Trapezoid).unwrap();
        let att = integrated_gradients(&g, &spec, 0).unwrap();
        assert!(att.values.data().iter().all(|&v| v == 0.0));
        assert_eq!(att.completeness_gap, 0.0);
        let rep = completeness_report(&att);
        assert_eq!(rep.rel_gap, 0.0);
    }

    #[test]
    fn rel_gap_floor_when_loss_unchanged() {
        // l = x_r − x_g: swapping two equal-magnitude changes keeps l fixed.
        let g = ScalarLoss::new([1, 1, 3], |x: &[f64]| (x[0] - x[1], vec![1.0, -1.0, 0.0]));
        let a = ImageBuf::from_vec(1, 1, vec![0.2, 0.2, 0.0]).unwrap();
        let b = ImageBuf::from_vec(1, 1, vec![0.7, 0.7, 0.0]).unwrap();
        let spec = PathSpec::new(a, b, 3, Scheme::Trapezoid).unwrap();
        let att = integrated_gradients(&g, &spec, 0).unwrap();
        assert!(att.values.data()[0] > 0.0 && att.values.data()[1] < 0.0);
        let rep = completeness_report(&att);
        assert!(rep.rel_gap.is_finite());
        assert_eq!(rep.rel_gap, rep.gap / REL_GAP_FLOOR);
    }

    #[test]
    fn step_errors_carry_index() {
        let g = ScalarLoss::new([1, 1, 3], |x: &[f64]| {
            if x[0] > 0.6 {
                (f64::NAN, vec![f64::NAN; 3])
            } else {
                (x[0], vec![1.0, 0.0, 0.0])
            }
        });
        let spec = PathSpec::new(
            scalar_image(0.0),
            scalar_image(1.0),
            4,
            Scheme::RiemannRight,
        )
        .unwrap();
        let err = integrated_gradients(&g, &spec, 0).unwrap_err();
        assert!(matches!(err, Error::PathStep { step: 3, .. }), "{err}");
    }

    #[test]
    fn swap_negates_exactly() {
        let g = ScalarLoss::new([2, 2, 3], |x: &[f64]| {
            let l = x.iter().map(|v| v.sin() * v * v).sum();
            let grad = x
                .iter()
                .map(|v| v.cos() * v * v + 2.0 * v * v.sin())
                .collect();
            (l, grad)
        });
        let (a, b) = (noise_image(2, 2, 4), noise_image(2, 2, 5));
        for n in [1, 2, 7, 50] {
            let f = integrated_gradients(
                &g,
                &PathSpec::new(a.clone(), b.clone(), n, Scheme::Trapezoid).unwrap(),
                0,
            )
            .unwrap();
            let r = integrated_gradients(
                &g,
                &PathSpec::new(b.clone(), a.clone(), n, Scheme::Trapezoid).unwrap(),
                0,
            )
            .unwrap();
            for (x, y) in f.values.data().iter().zip(r.values.data()) {
                assert_eq!(*x, -*y);
            }
            assert_eq!(f.sum, -r.sum);
        }
    }

    #[test]
    fn polyline_matches_line_for_conservative_field() {
        let g = square();
        let way = [scalar_image(0.0), scalar_image(0.9), scalar_image(0.4)];
        let att = integrated_gradients_polyline(&g, &way, 8, Scheme::Trapezoid, 0).unwrap();
        // Trapezoid is exact for linear gradients: 0.4² − 0.
        assert!((att.sum - 0.16).abs() < 1e-12);
        assert!((att.loss_target - 0.16).abs() < 1e-15);
    }

    #[test]
    fn sensitivity_examples() {
        let g = square();
        let x = scalar_image(0.3);
        let p = sensitivity_probe(&g, &x, &x, 0, 10, Scheme::Trapezoid).unwrap();
        assert_eq!((p.delta_loss, p.ig_sum), (0.0, 0.0));
        assert!(p.consistent);

        // N = 1 right Riemann: sum = 2·1 = 2 against Δl = 1, gap 1.
        let p = sensitivity_probe(
            &g,
            &scalar_image(0.0),
            &scalar_image(1.0),
            0,
            1,
            Scheme::RiemannRight,
        )
        .unwrap();
        assert!((p.ig_sum - 2.0).abs() < 1e-15);
        assert!((p.gap - 1.0).abs() < 1e-15);
        assert!(p.consistent);
    }
}
