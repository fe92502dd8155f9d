//! Self-checks of the numerical core, one per acceptance property.
//!
//! Each check returns a [`CheckResult`] instead of panicking so the CLI can
//! print a table and the test suite can assert on it.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::codec::test_image::{noise_image, pinned_test_image, Lcg};
use crate::codec::{
    dct8x8, degrade_jpeg, idct8x8, psnr, quant_table, resize_bicubic, tap_weights, ImageBuf,
    QualityLevel, BASE_CHROMA, BASE_LUMA, DEFAULT_A,
};
use crate::error::Result;
use crate::harness::{
    provider_connect, sweep_precision, Dataset, Metric, PrecisionRow, PrecisionTable, ProviderSpec,
    SweepConfig, SyntheticRecipe,
};
use crate::ig::{completeness_report, integrated_gradients, split_values, PathSpec, Scheme};
use crate::model::{gradient_check, LinearScorer, ScalarLoss, ScorerConfig, ScorerModel};
use crate::tensor::Tensor;
use crate::viz::{
    emit_chart_svg, emit_table, render_overlay, ChartSpec, OverlaySpec, Polarity, TableFormat,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    /// Acceptance criterion number.
    pub criterion: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<28} {} ({:.2}s)",
            if self.passed { "pass" } else { "FAIL" },
            self.criterion,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(
    criterion: u8,
    name: &'static str,
    budget: Duration,
    f: impl FnOnce() -> Result<(bool, String)>,
) -> CheckResult {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (passed, mut detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    let in_time = elapsed <= budget;
    if !in_time {
        detail.push_str(&format!("; over the {:.0}s budget", budget.as_secs_f64()));
    }
    CheckResult {
        criterion,
        name,
        passed: passed && in_time,
        detail,
        seconds: elapsed.as_secs_f64(),
    }
}

fn random_image(rng: &mut Lcg, h: usize, w: usize) -> Result<ImageBuf> {
    ImageBuf::from_vec(h, w, (0..h * w * 3).map(|_| rng.next_unit()).collect())
}

/// Linear losses have constant gradients, so every rule is exact.
pub fn linear_exactness(seed: u64) -> CheckResult {
    timed(1, "linear exactness", Duration::from_secs(1), || {
        let mut rng = Lcg(seed);
        let dims = [4, 5, 3];
        let n = 60;
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let w: Vec<f64> = (0..n).map(|_| 4.0 * rng.next_unit() - 2.0).collect();
            let c = rng.next_unit();
            let wc = w.clone();
            let loss = ScalarLoss::new(dims, move |x: &[f64]| {
                (
                    c + x.iter().zip(&wc).map(|(a, b)| a * b).sum::<f64>(),
                    wc.clone(),
                )
            });
            let x0 = random_image(&mut rng, 4, 5)?;
            let x1 = random_image(&mut rng, 4, 5)?;
            for steps in [1, 5, 50] {
                for scheme in [Scheme::RiemannRight, Scheme::Trapezoid] {
                    let spec = PathSpec::new(x0.clone(), x1.clone(), steps, scheme)?;
                    let att = integrated_gradients(&loss, &spec, 0)?;
                    for (i, wi) in w.iter().enumerate().take(n) {
                        let want = wi * (x1.data()[i] - x0.data()[i]);
                        worst = worst.max((att.values.data()[i] - want).abs());
                    }
                }
            }
        }
        Ok((
            worst < 1e-12,
            format!("max |IG_i - w_i dx_i| = {worst:.2e}"),
        ))
    })
}

fn power_loss(p: i32) -> ScalarLoss<impl Fn(&[f64]) -> (f64, Vec<f64>) + Sync> {
    ScalarLoss::new([1, 1, 3], move |x: &[f64]| {
        (x[0].powi(p), vec![p as f64 * x[0].powi(p - 1), 0.0, 0.0])
    })
}

fn gap_slope(p: i32, scheme: Scheme) -> Result<f64> {
    let x0 = ImageBuf::filled(1, 1, [0.0; 3])?;
    let x1 = ImageBuf::from_vec(1, 1, vec![1.0, 0.0, 0.0])?;
    let loss = power_loss(p);
    let pts: Vec<(f64, f64)> = [4usize, 8, 16, 32, 64]
        .iter()
        .map(|&n| {
            let att =
                integrated_gradients(&loss, &PathSpec::new(x0.clone(), x1.clone(), n, scheme)?, 0)?;
            Ok(((n as f64).ln(), att.completeness_gap.ln()))
        })
        .collect::<Result<_>>()?;
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Quadratic oracle at N = 4, then convergence orders of both rules.
///
/// The trapezoid rule integrates the quadratic's linear gradient exactly,
/// so its order is measured on `x³` instead.
pub fn quadrature_convergence() -> CheckResult {
    timed(
        2,
        "completeness convergence",
        Duration::from_secs(1),
        || {
            let x0 = ImageBuf::filled(1, 1, [0.0; 3])?;
            let x1 = ImageBuf::from_vec(1, 1, vec![1.0, 0.0, 0.0])?;
            let sq = power_loss(2);
            let r = integrated_gradients(
                &sq,
                &PathSpec::new(x0.clone(), x1.clone(), 4, Scheme::RiemannRight)?,
                0,
            )?;
            let t = integrated_gradients(&sq, &PathSpec::new(x0, x1, 4, Scheme::Trapezoid)?, 0)?;
            let riemann = gap_slope(2, Scheme::RiemannRight)?;
            let trapezoid = gap_slope(3, Scheme::Trapezoid)?;
            let ok = (r.sum - 1.25).abs() < 1e-12
                && (t.sum - 1.0).abs() < 1e-12
                && (riemann + 1.0).abs() <= 0.3
                && (trapezoid + 2.0).abs() <= 0.3;
            Ok((
                ok,
                format!(
                    "N=4 sums {:.12}/{:.12}; slopes riemann {riemann:.3}, trapezoid {trapezoid:.3}",
                    r.sum, t.sum
                ),
            ))
        },
    )
}

/// IG on ten (original, q25) pairs from the held-out set of `recipe`.
pub fn completeness_micro(model: &ScorerModel, eval: &Dataset) -> CheckResult {
    timed(
        3,
        "completeness on micro-model",
        Duration::from_secs(120),
        || {
            let items = eval.items();
            let mut worst = 0.0f64;
            let mut shrinking = 0;
            for k in 0..10 {
                let item = &items[k * items.len() / 10];
                let x0 = item.image.clone();
                let x1 = degrade_jpeg(&x0, QualityLevel::Quality(25))?;
                let a = integrated_gradients(
                    model,
                    &PathSpec::new(x0.clone(), x1.clone(), 50, Scheme::Trapezoid)?,
                    item.label,
                )?;
                let b = integrated_gradients(
                    model,
                    &PathSpec::new(x0, x1, 300, Scheme::Trapezoid)?,
                    item.label,
                )?;
                worst = worst.max(completeness_report(&a).rel_gap);
                if b.completeness_gap <= a.completeness_gap {
                    shrinking += 1;
                }
            }
            Ok((
                worst < 0.02 && shrinking >= 9,
                format!(
                    "max rel_gap(N=50) = {:.3}%; gap(300) <= gap(50) in {shrinking}/10",
                    100.0 * worst
                ),
            ))
        },
    )
}

/// Analytic backprop against central differences on random ReLU scorers.
pub fn gradient_agreement(seed: u64) -> CheckResult {
    timed(4, "gradient check", Duration::from_secs(60), || {
        let cfg = ScorerConfig {
            input_dims: [8, 8, 3],
            hidden: vec![16],
            embed_dim: 8,
            classes: 4,
            temperature: 10.0,
        };
        let mut worst = 0.0f64;
        let mut kinks = 0;
        for k in 0..10u64 {
            let model = ScorerModel::<f64>::random(&cfg, seed.wrapping_mul(1000).wrapping_add(k))?;
            let image = noise_image(8, 8, seed.wrapping_add(k));
            let r = gradient_check(&model, &image, (k % 4) as usize, 1e-5)?;
            worst = worst.max(r.max_rel_err);
            kinks += r.kink_pixels.len();
        }
        Ok((
            worst < 1e-5,
            format!("max rel err {worst:.2e} ({kinks} kink pixels excluded)"),
        ))
    })
}

pub fn codec_identities(seed: u64) -> CheckResult {
    timed(5, "codec identities", Duration::from_secs(5), || {
        let mut rng = Lcg(seed);
        let (mut round, mut parseval) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let data: Vec<f64> = (0..64).map(|_| rng.next_unit() - 0.5).collect();
            let block = Tensor::from_vec(&[8, 8], data)?;
            let coef = dct8x8(&block)?;
            let back = idct8x8(&coef)?;
            for (a, b) in back.data().iter().zip(block.data()) {
                round = round.max((a - b).abs());
            }
            parseval = parseval.max((coef.l2_norm() - block.l2_norm()).abs());
        }
        let q50 = quant_table(50)?;
        let q100 = quant_table(100)?;
        let tables = q50.luma == BASE_LUMA
            && q50.chroma == BASE_CHROMA
            && q100
                .luma
                .iter()
                .chain(&q100.chroma)
                .flatten()
                .all(|&v| v == 1);
        let img = pinned_test_image();
        let p: Vec<f64> = [95, 75, 50, 25]
            .iter()
            .map(|&q| psnr(&img, &degrade_jpeg(&img, QualityLevel::Quality(q))?))
            .collect::<Result<_>>()?;
        let ordered = p.windows(2).all(|w| w[0] >= w[1]);
        Ok((
            round < 1e-12 && parseval < 1e-12 && tables && ordered,
            format!(
                "round trip {round:.1e}, Parseval {parseval:.1e}, tables {}, PSNR {:.2}/{:.2}/{:.2}/{:.2} dB",
                if tables { "ok" } else { "wrong" },
                p[0],
                p[1],
                p[2],
                p[3]
            ),
        ))
    })
}

pub fn resize_identities(seed: u64) -> CheckResult {
    timed(6, "resize identities", Duration::from_secs(5), || {
        let constant = ImageBuf::filled(7, 5, [0.3, 0.62, 0.91])?;
        let up = resize_bicubic(&constant, 19, 11)?;
        let down = resize_bicubic(&constant, 3, 2)?;
        let exact = up
            .data()
            .chunks(3)
            .chain(down.data().chunks(3))
            .all(|px| px == [0.3, 0.62, 0.91]);
        let img = noise_image(9, 13, seed);
        let same = resize_bicubic(&img, 9, 13)?;
        let ident = same
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let mut rng = Lcg(seed ^ 0x5a5a);
        let partition = (0..1000)
            .map(|_| (tap_weights(rng.next_unit(), DEFAULT_A).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        Ok((
            exact && ident < 1e-12 && partition < 1e-12,
            format!(
                "constant {}, identity {ident:.1e}, partition of unity {partition:.1e}",
                if exact { "exact" } else { "drifted" }
            ),
        ))
    })
}

/// Macro precision on the held-out set must fall from original to q25.
pub fn degradation_trend(model: &ScorerModel, eval: &Dataset) -> CheckResult {
    timed(7, "degradation trend", Duration::from_secs(300), || {
        let row = trend_row(model, eval)?;
        let s = &row.scores;
        let rises: Vec<f64> = s
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|&d| d > 0.0)
            .collect();
        let ok =
            s[0] - s[3] >= 0.05 && (rises.is_empty() || (rises.len() == 1 && rises[0] <= 0.02));
        Ok((
            ok,
            format!(
                "macro precision {:.4} {:.4} {:.4} {:.4}",
                s[0], s[1], s[2], s[3]
            ),
        ))
    })
}

pub fn trend_row(model: &ScorerModel, eval: &Dataset) -> Result<PrecisionRow> {
    let cfg = SweepConfig {
        qualities: QualityLevel::default_sweep(),
        metric: Metric::MacroPrecision,
        ..Default::default()
    };
    sweep_precision(model, "micro", eval, &cfg)
}

/// Baseline/target swap and polarity bounds.
pub fn symmetry_and_polarity(seed: u64) -> CheckResult {
    timed(8, "symmetry and polarity", Duration::from_secs(30), || {
        let cfg = ScorerConfig {
            input_dims: [8, 8, 3],
            hidden: vec![16],
            embed_dim: 8,
            classes: 4,
            temperature: 10.0,
        };
        let mut swaps_exact = true;
        for k in 0..5u64 {
            let model = ScorerModel::<f64>::random(&cfg, seed.wrapping_add(k))?;
            let a = noise_image(8, 8, seed.wrapping_add(10 + k));
            let b = degrade_jpeg(&a, QualityLevel::Quality(25))?;
            let fwd = integrated_gradients(
                &model,
                &PathSpec::new(a.clone(), b.clone(), 50, Scheme::Trapezoid)?,
                1,
            )?;
            let rev =
                integrated_gradients(&model, &PathSpec::new(b, a, 50, Scheme::Trapezoid)?, 1)?;
            swaps_exact &= fwd
                .values
                .data()
                .iter()
                .zip(rev.values.data())
                .all(|(x, y)| *x == -*y);
        }
        let mut rng = Lcg(seed ^ 0xfeed);
        let mut bounded = true;
        for _ in 0..1000 {
            let n = 1 + (48.0 * rng.next_unit()) as usize;
            let scale = 10f64.powf(6.0 * rng.next_unit() - 3.0);
            let v: Vec<f64> = (0..n)
                .map(|_| scale * (2.0 * rng.next_unit() - 1.0))
                .collect();
            let p = split_values(&Tensor::from_vec(&[n], v)?)?;
            bounded &= p.negative.data().iter().all(|x| (-1.0..=0.0).contains(x))
                && p.positive.data().iter().all(|x| (0.0..=1.0).contains(x));
        }
        Ok((
            swaps_exact && bounded,
            format!(
                "swap negation {}, polarity bounds {} on 1000 maps",
                if swaps_exact { "exact" } else { "inexact" },
                if bounded { "hold" } else { "violated" }
            ),
        ))
    })
}

fn sample_table() -> Result<PrecisionTable> {
    let mut t = PrecisionTable::new(QualityLevel::default_sweep())?;
    t.push(PrecisionRow {
        model_name: "ResNet50".into(),
        scores: vec![0.7141, 0.5457, 0.4689, 0.3562],
    })?;
    t.push(PrecisionRow {
        model_name: "micro".into(),
        scores: vec![0.99, 0.98, 0.9, 0.8],
    })?;
    Ok(t)
}

/// Overlay formula, overlay range, and byte-stable text emission.
pub fn visualization_contract(seed: u64) -> CheckResult {
    timed(9, "visualization contract", Duration::from_secs(10), || {
        let img = noise_image(16, 16, seed);
        let zero = split_values(&Tensor::zeros(&[16, 16, 1])?)?;
        let mut formula = true;
        for polarity in Polarity::ALL {
            let spec = OverlaySpec {
                polarity,
                ..Default::default()
            };
            let out = render_overlay(&img, &zero, &spec)?;
            formula &= out
                .data()
                .iter()
                .zip(img.data())
                .all(|(o, i)| *o == 0.7 * i);
        }
        let mut rng = Lcg(seed ^ 0xabcd);
        let mut in_range = true;
        for _ in 0..200 {
            let v: Vec<f64> = (0..256).map(|_| 8.0 * rng.next_unit() - 4.0).collect();
            let pol = split_values(&Tensor::from_vec(&[16, 16, 1], v)?)?;
            for polarity in Polarity::ALL {
                let spec = OverlaySpec {
                    polarity,
                    ..Default::default()
                };
                in_range &= render_overlay(&img, &pol, &spec)?
                    .data()
                    .iter()
                    .all(|v| (0.0..=1.0).contains(v));
            }
        }
        let emit = || -> Result<(String, String, String, Vec<u8>)> {
            let t = sample_table()?;
            let mut full = Vec::new();
            t.write_csv(&mut full)?;
            Ok((
                emit_table(&t, TableFormat::Csv),
                emit_table(&t, TableFormat::Markdown),
                emit_chart_svg(&t, &ChartSpec::default())?,
                full,
            ))
        };
        let stable = emit()? == emit()?;
        Ok((
            formula && in_range && stable,
            format!(
                "zero overlay {}, range {}, emission {}",
                if formula { "= 0.7*image" } else { "differs" },
                if in_range { "[0,1]" } else { "escapes [0,1]" },
                if stable { "byte-stable" } else { "unstable" }
            ),
        ))
    })
}

/// IG through a spawned mock provider against the same model in process.
///
/// `mock` must accept `--seed/--height/--width/--classes` and serve
/// [`LinearScorer::random`] with those arguments.
pub fn protocol_conformance(mock: &Path, seed: u64) -> CheckResult {
    timed(10, "protocol conformance", Duration::from_secs(10), || {
        let (h, w, classes) = (12, 10, 5);
        let mut spec = ProviderSpec::new(
            [
                mock.to_string_lossy().into_owned(),
                "--seed".into(),
                seed.to_string(),
                "--height".into(),
                h.to_string(),
                "--width".into(),
                w.to_string(),
                "--classes".into(),
                classes.to_string(),
            ]
            .to_vec(),
        );
        spec.input_shape = Some([h, w, 3]);
        let remote = provider_connect(&spec)?;
        let local = LinearScorer::<f64>::random([h, w, 3], classes, seed)?;
        let mut worst = 0.0f64;
        for k in 0..3u64 {
            let x0 = noise_image(h, w, seed.wrapping_add(k));
            let x1 = degrade_jpeg(&x0, QualityLevel::Quality(25))?;
            let spec = PathSpec::new(x0, x1, 50, Scheme::Trapezoid)?;
            let label = (k as usize) % classes;
            let a = integrated_gradients(&remote, &spec, label)?;
            let b = integrated_gradients(&local, &spec, label)?;
            for (x, y) in a.values.data().iter().zip(b.values.data()) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok((
            worst < 1e-6,
            format!("max |IG_remote - IG_local| = {worst:.2e}"),
        ))
    })
}

/// Runs every check. Criterion 10 needs the mock provider executable.
pub fn run_suite(seed: u64, mock: Option<&Path>) -> Vec<CheckResult> {
    let mut out = vec![linear_exactness(seed), quadrature_convergence()];
    let recipe = SyntheticRecipe {
        seed,
        ..Default::default()
    };
    let trained = recipe.fit().and_then(|m| Ok((m, recipe.eval_set()?)));
    match &trained {
        Ok((model, eval)) => out.push(completeness_micro(model, eval)),
        Err(e) => out.push(failed(3, "completeness on micro-model", e)),
    }
    out.push(gradient_agreement(seed));
    out.push(codec_identities(seed));
    out.push(resize_identities(seed));
    match &trained {
        Ok((model, eval)) => out.push(degradation_trend(model, eval)),
        Err(e) => out.push(failed(7, "degradation trend", e)),
    }
    out.push(symmetry_and_polarity(seed));
    out.push(visualization_contract(seed));
    if let Some(mock) = mock {
        out.push(protocol_conformance(mock, seed));
    }
    out
}

fn failed(criterion: u8, name: &'static str, e: &crate::Error) -> CheckResult {
    CheckResult {
        criterion,
        name,
        passed: false,
        detail: format!("training failed: {e}"),
        seconds: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_checks_pass_for_several_seeds() {
        for seed in [0, 1, 7, 12345] {
            for r in [
                linear_exactness(seed),
                gradient_agreement(seed),
                codec_identities(seed),
                resize_identities(seed),
                symmetry_and_polarity(seed),
                visualization_contract(seed),
            ] {
                assert!(r.passed, "{}", r.line());
            }
        }
        let r = quadrature_convergence();
        assert!(r.passed, "{}", r.line());
    }
}
