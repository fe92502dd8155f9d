use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{degrade_jpeg_with, resize_bicubic, ImageBuf, JpegConfig, QualityLevel};
use crate::error::{Error, Result};
use crate::model::GradFn;
use crate::scalar::Scalar;

use super::dataset::Dataset;
use super::metrics::Metric;

/// Degrades at native resolution, then resizes to the model input.
pub fn prepare<T: Scalar>(
    image: &ImageBuf<T>,
    quality: QualityLevel,
    input_dims: [usize; 3],
    jpeg: &JpegConfig,
) -> Result<ImageBuf<T>> {
    let degraded = degrade_jpeg_with(image, quality, jpeg)?;
    if degraded.dims() == input_dims {
        Ok(degraded)
    } else {
        resize_bicubic(&degraded, input_dims[0], input_dims[1])
    }
}

pub(crate) fn check_qualities(qualities: &[QualityLevel]) -> Result<()> {
    match qualities.first() {
        Some(q) if q.is_original() => Ok(()),
        Some(_) => Err(Error::InvalidArgument(
            "quality list must start with original".into(),
        )),
        None => Err(Error::Empty("quality list")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub qualities: Vec<QualityLevel>,
    pub metric: Metric,
    pub jpeg: JpegConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            qualities: QualityLevel::default_sweep(),
            metric: Metric::default(),
            jpeg: JpegConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRow {
    pub model_name: String,
    /// Aligned with the table's quality list.
    pub scores: Vec<f64>,
}

/// Score per model and quality, original quality first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionTable {
    qualities: Vec<QualityLevel>,
    rows: Vec<PrecisionRow>,
}

impl PrecisionTable {
    pub fn new(qualities: Vec<QualityLevel>) -> Result<Self> {
        check_qualities(&qualities)?;
        Ok(Self {
            qualities,
            rows: Vec::new(),
        })
    }

    pub fn push(&mut self, row: PrecisionRow) -> Result<()> {
        if row.scores.len() != self.qualities.len() {
            return Err(Error::DimensionMismatch {
                op: "precision row",
                left: vec![row.scores.len()],
                right: vec![self.qualities.len()],
            });
        }
        if row.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("precision score"));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn qualities(&self) -> &[QualityLevel] {
        &self.qualities
    }

    pub fn rows(&self) -> &[PrecisionRow] {
        &self.rows
    }

    pub fn score(&self, model: &str, quality: QualityLevel) -> Option<f64> {
        let col = self.qualities.iter().position(|&q| q == quality)?;
        let row = self.rows.iter().find(|r| r.model_name == model)?;
        Some(row.scores[col])
    }

    /// `model,Original,Quality 75,…` with scores at full precision.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["model".to_string()];
        header.extend(self.qualities.iter().map(|q| q.label()));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.model_name.clone()];
            rec.extend(row.scores.iter().map(|s| s.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.get(0).map(str::trim) != Some("model") {
            return Err(Error::Format(
                "precision csv must start with a model column".into(),
            ));
        }
        let qualities = header
            .iter()
            .skip(1)
            .map(|h| h.parse::<QualityLevel>())
            .collect::<Result<Vec<_>>>()?;
        let mut table = Self::new(qualities)?;
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Format(format!("precision csv row {}: {what}", i + 2));
            if rec.len() != header.len() {
                return Err(bad("wrong number of fields"));
            }
            let scores = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad("bad score")))
                .collect::<Result<Vec<_>>>()?;
            table.push(PrecisionRow {
                model_name: rec[0].to_string(),
                scores,
            })?;
        }
        Ok(table)
    }
}

/// Predicted class of every item at every quality, `[quality][item]`.
pub fn classify_sweep<T: Scalar, G: GradFn<T> + ?Sized>(
    gradfn: &G,
    dataset: &Dataset<T>,
    qualities: &[QualityLevel],
    jpeg: &JpegConfig,
) -> Result<Vec<Vec<usize>>> {
    let dims = gradfn.input_dims();
    let per_item: Vec<Vec<usize>> = dataset
        .items()
        .par_iter()
        .map(|item| {
            qualities
                .iter()
                .map(|&q| {
                    let x = prepare(&item.image, q, dims, jpeg)?;
                    gradfn.logits(&x)?.predicted()
                })
                .collect::<Result<Vec<usize>>>()
                .map_err(|e| Error::Item {
                    id: item.id.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    Ok((0..qualities.len())
        .map(|qi| per_item.iter().map(|p| p[qi]).collect())
        .collect())
}

/// One table row: the metric at each quality level.
pub fn sweep_precision<T: Scalar, G: GradFn<T> + ?Sized>(
    gradfn: &G,
    model_name: &str,
    dataset: &Dataset<T>,
    cfg: &SweepConfig,
) -> Result<PrecisionRow> {
    check_qualities(&cfg.qualities)?;
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if dataset.num_classes() != gradfn.num_classes() {
        return Err(Error::Dataset(format!(
            "dataset has {} classes, model has {}",
            dataset.num_classes(),
            gradfn.num_classes()
        )));
    }
    let truths: Vec<usize> = dataset.items().iter().map(|it| it.label).collect();
    let preds = classify_sweep(gradfn, dataset, &cfg.qualities, &cfg.jpeg)?;
    let scores = preds
        .iter()
        .map(|p| cfg.metric.score(p, &truths, dataset.num_classes()))
        .collect::<Result<_>>()?;
    Ok(PrecisionRow {
        model_name: model_name.to_string(),
        scores,
    })
}
