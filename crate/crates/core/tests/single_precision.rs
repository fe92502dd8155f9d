use qig::codec::{degrade_jpeg, resize_bicubic, QualityLevel};
use qig::ig::{completeness_report, integrated_gradients, split_polarity, PathSpec, Scheme};
use qig::model::{GradFn, ScorerConfig};
use qig::{Image32, Image64, Scorer32, Scorer64};

fn config() -> ScorerConfig {
    ScorerConfig {
        input_dims: [8, 8, 3],
        hidden: vec![],
        embed_dim: 6,
        classes: 3,
        temperature: 3.0,
    }
}

fn image() -> Image64 {
    let v = (0..192).map(|i| ((i * 37 % 101) as f64) / 100.0).collect();
    Image64::from_vec(8, 8, v).unwrap()
}

#[test]
fn f32_pipeline_tracks_f64() {
    let m64 = Scorer64::random(&config(), 9).unwrap();
    let m32: Scorer32 = Scorer32::random(&config(), 9).unwrap();
    let x0 = image();
    let x1 = degrade_jpeg(&x0, QualityLevel::Quality(25)).unwrap();
    let (y0, y1): (Image32, Image32) = (x0.cast(), x1.cast());
    assert!(
        (degrade_jpeg(&y0, QualityLevel::Quality(25)).unwrap().data()[5] - x1.data()[5] as f32)
            .abs()
            < 1e-4
    );

    let a64 = integrated_gradients(
        &m64,
        &PathSpec::new(x0, x1, 50, Scheme::Trapezoid).unwrap(),
        2,
    )
    .unwrap();
    let a32 = integrated_gradients(
        &m32,
        &PathSpec::new(y0.clone(), y1, 50, Scheme::Trapezoid).unwrap(),
        2,
    )
    .unwrap();
    let scale = a64.values.max_abs();
    for (a, b) in a32.values.data().iter().zip(a64.values.data()) {
        assert!((*a as f64 - b).abs() <= 1e-4 * scale.max(1e-3));
    }
    assert!(completeness_report(&a32).rel_gap < 0.02);
    let pol = split_polarity(&a32).unwrap();
    assert!(pol.negative.data().iter().all(|v| (-1.0..=0.0).contains(v)));
    assert_eq!(resize_bicubic(&y0, 4, 4).unwrap().dims(), [4, 4, 3]);
    assert_eq!(GradFn::<f32>::num_classes(&m32), 3);
}
