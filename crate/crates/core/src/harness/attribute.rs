use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{ImageBuf, JpegConfig, QualityLevel};
use crate::error::{Error, Result};
use crate::ig::{integrated_gradients, AttributionMap, PathSpec, Scheme, DEFAULT_STEPS};
use crate::model::{GradFn, Logits};
use crate::scalar::Scalar;

use super::dataset::{Dataset, Item};
use super::sweep::{check_qualities, prepare};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeConfig {
    /// The first entry is the baseline and must be original quality.
    pub qualities: Vec<QualityLevel>,
    pub steps: usize,
    pub scheme: Scheme,
    pub jpeg: JpegConfig,
}

impl Default for AttributeConfig {
    fn default() -> Self {
        Self {
            qualities: QualityLevel::default_sweep(),
            steps: DEFAULT_STEPS,
            scheme: Scheme::default(),
            jpeg: JpegConfig::default(),
        }
    }
}

/// One row of the per-image attribution report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub id: String,
    pub true_label: String,
    /// One per quality, baseline included.
    pub predicted_labels: Vec<String>,
    /// Softmax probability of the true class, one per quality.
    pub predicted_scores: Vec<f64>,
    /// Σ IG from the baseline to each degraded quality.
    pub ig_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityAttribution<T = f64> {
    pub quality: QualityLevel,
    /// The degraded, resized image the path ends at.
    pub target: ImageBuf<T>,
    pub map: AttributionMap<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemAttribution<T = f64> {
    pub record: AttributionRecord,
    pub baseline: ImageBuf<T>,
    pub attributions: Vec<QualityAttribution<T>>,
}

fn describe<T: Scalar>(
    logits: &Logits<T>,
    label: usize,
    names: &[String],
) -> Result<(String, f64)> {
    let pred = logits.predicted()?;
    let name = names.get(pred).cloned().ok_or(Error::LabelOutOfRange {
        label: pred,
        classes: names.len(),
    })?;
    let prob = logits
        .softmax()
        .get(label)
        .copied()
        .ok_or(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        })?;
    Ok((name, prob.to_f64_lossy()))
}

pub fn attribute_item<T: Scalar, G: GradFn<T> + ?Sized>(
    gradfn: &G,
    item: &Item<T>,
    class_names: &[String],
    cfg: &AttributeConfig,
) -> Result<ItemAttribution<T>> {
    let run = || -> Result<ItemAttribution<T>> {
        check_qualities(&cfg.qualities)?;
        let dims = gradfn.input_dims();
        let baseline = prepare(&item.image, QualityLevel::Original, dims, &cfg.jpeg)?;
        let mut attributions = Vec::with_capacity(cfg.qualities.len() - 1);
        for &q in &cfg.qualities[1..] {
            let target = prepare(&item.image, q, dims, &cfg.jpeg)?;
            let spec = PathSpec::new(baseline.clone(), target.clone(), cfg.steps, cfg.scheme)?;
            let map = integrated_gradients(gradfn, &spec, item.label)?;
            attributions.push(QualityAttribution {
                quality: q,
                target,
                map,
            });
        }
        let base_logits = match attributions.first() {
            Some(a) => Logits(a.map.logits_baseline.clone()),
            None => gradfn.logits(&baseline)?,
        };
        let mut predicted_labels = Vec::with_capacity(cfg.qualities.len());
        let mut predicted_scores = Vec::with_capacity(cfg.qualities.len());
        let all = std::iter::once(base_logits).chain(
            attributions
                .iter()
                .map(|a| Logits(a.map.logits_target.clone())),
        );
        for logits in all {
            let (name, p) = describe(&logits, item.label, class_names)?;
            predicted_labels.push(name);
            predicted_scores.push(p);
        }
        let true_label = class_names
            .get(item.label)
            .cloned()
            .ok_or(Error::LabelOutOfRange {
                label: item.label,
                classes: class_names.len(),
            })?;
        let record = AttributionRecord {
            id: item.id.clone(),
            true_label,
            predicted_labels,
            predicted_scores,
            ig_values: attributions
                .iter()
                .map(|a| a.map.sum.to_f64_lossy())
                .collect(),
        };
        Ok(ItemAttribution {
            record,
            baseline,
            attributions,
        })
    };
    run().map_err(|e| Error::Item {
        id: item.id.clone(),
        source: Box::new(e),
    })
}

/// Attributes every item; results come back in dataset order.
pub fn attribute_batch<T: Scalar, G: GradFn<T> + ?Sized>(
    gradfn: &G,
    dataset: &Dataset<T>,
    cfg: &AttributeConfig,
) -> Result<Vec<ItemAttribution<T>>> {
    dataset
        .items()
        .par_iter()
        .map(|item| attribute_item(gradfn, item, dataset.class_names(), cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn column_key(q: QualityLevel) -> String {
    q.to_string()
}

/// `id,true_label,pred_*,score_*,ig_*`, one row per record.
pub fn write_records<W: Write>(
    qualities: &[QualityLevel],
    records: &[AttributionRecord],
    out: W,
) -> Result<()> {
    check_qualities(qualities)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "true_label".to_string()];
    header.extend(qualities.iter().map(|&q| format!("pred_{}", column_key(q))));
    header.extend(
        qualities
            .iter()
            .map(|&q| format!("score_{}", column_key(q))),
    );
    header.extend(
        qualities[1..]
            .iter()
            .map(|&q| format!("ig_{}", column_key(q))),
    );
    w.write_record(&header)?;
    for r in records {
        if r.predicted_labels.len() != qualities.len()
            || r.predicted_scores.len() != qualities.len()
            || r.ig_values.len() + 1 != qualities.len()
        {
            return Err(Error::InvalidArgument(format!(
                "record {} does not match {} qualities",
                r.id,
                qualities.len()
            )));
        }
        let mut row = vec![r.id.clone(), r.true_label.clone()];
        row.extend(r.predicted_labels.iter().cloned());
        row.extend(r.predicted_scores.iter().map(|s| s.to_string()));
        row.extend(r.ig_values.iter().map(|s| s.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<(Vec<QualityLevel>, Vec<AttributionRecord>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let qualities = header
        .iter()
        .filter_map(|h| h.strip_prefix("pred_"))
        .map(|q| q.parse::<QualityLevel>())
        .collect::<Result<Vec<_>>>()?;
    check_qualities(&qualities)?;
    let nq = qualities.len();
    if header.len() != 2 + 3 * nq - 1 {
        return Err(Error::Format("attribution csv header".into()));
    }
    let mut records = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| Error::Format(format!("attribution csv row {}: bad number", i + 2)))
        };
        records.push(AttributionRecord {
            id: rec[0].to_string(),
            true_label: rec[1].to_string(),
            predicted_labels: (2..2 + nq).map(|j| rec[j].to_string()).collect(),
            predicted_scores: (2 + nq..2 + 2 * nq).map(num).collect::<Result<_>>()?,
            ig_values: (2 + 2 * nq..1 + 3 * nq).map(num).collect::<Result<_>>()?,
        });
    }
    Ok((qualities, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::test_image::noise_image;
    use crate::model::LinearScorer;

    fn setup() -> (LinearScorer, Dataset) {
        let model = LinearScorer::<f64>::random([8, 8, 3], 3, 11).unwrap();
        let items = (0..3)
            .map(|i| Item {
                id: format!("im{i}"),
                image: noise_image(16, 16, 40 + i),
                label: i as usize,
            })
            .collect();
        let names = ["cat", "dog", "ship"].map(String::from).to_vec();
        (model, Dataset::new(items, names).unwrap())
    }

    #[test]
    fn record_shape_and_completeness() {
        let (model, ds) = setup();
        let out = attribute_batch(&model, &ds, &AttributeConfig::default()).unwrap();
        assert_eq!(out.len(), 3);
        for (ia, item) in out.iter().zip(ds.items()) {
            let r = &ia.record;
            assert_eq!(r.id, item.id);
            assert_eq!(r.predicted_labels.len(), 4);
            assert_eq!(r.predicted_scores.len(), 4);
            assert_eq!(r.ig_values.len(), 3);
            // Recompute endpoint losses independently of the engine.
            let l0 = model.loss_grad(&ia.baseline, item.label).unwrap().loss;
            for (a, &ig) in ia.attributions.iter().zip(&r.ig_values) {
                let l1 = model.loss_grad(&a.target, item.label).unwrap().loss;
                assert!((ig - (l1 - l0)).abs() <= a.map.completeness_gap + 1e-12);
            }
            // The reported score is the softmax at the true class.
            let p = model.logits(&ia.baseline).unwrap().softmax()[item.label];
            assert_eq!(r.predicted_scores[0], p);
        }
    }

    #[test]
    fn original_twice_gives_zero() {
        let (model, ds) = setup();
        let cfg = AttributeConfig {
            qualities: vec![QualityLevel::Original, QualityLevel::Original],
            ..Default::default()
        };
        let out = attribute_item(&model, &ds.items()[0], ds.class_names(), &cfg).unwrap();
        assert_eq!(out.record.ig_values, vec![0.0]);
    }

    #[test]
    fn csv_round_trip_and_determinism() {
        let (model, ds) = setup();
        let cfg = AttributeConfig::default();
        let write = || {
            let recs: Vec<_> = attribute_batch(&model, &ds, &cfg)
                .unwrap()
                .into_iter()
                .map(|a| a.record)
                .collect();
            let mut buf = Vec::new();
            write_records(&cfg.qualities, &recs, &mut buf).unwrap();
            (recs, buf)
        };
        let (recs, a) = write();
        let (_, b) = write();
        assert_eq!(a, b);
        let text = String::from_utf8(a.clone()).unwrap();
        assert!(text.starts_with(
            "id,true_label,pred_original,pred_75,pred_50,pred_25,\
             score_original,score_75,score_50,score_25,ig_75,ig_50,ig_25\n"
        ));
        let (q, back) = read_records(a.as_slice()).unwrap();
        assert_eq!(q, cfg.qualities);
        assert_eq!(back, recs);
    }

    #[test]
    fn errors_carry_item_id() {
        let (model, ds) = setup();
        let cfg = AttributeConfig {
            steps: 0,
            ..Default::default()
        };
        match attribute_batch(&model, &ds, &cfg) {
            Err(Error::Item { id, .. }) => assert_eq!(id, "im0"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
