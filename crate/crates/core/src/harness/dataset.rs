//! Labelled image collections: on-disk ingestion and the synthetic generator.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::codec::{read_image, write_image, ImageBuf};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Item<T = f64> {
    pub id: String,
    pub image: ImageBuf<T>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T = f64> {
    items: Vec<Item<T>>,
    class_names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    /// Checks label range, id uniqueness and a shared image shape.
    pub fn new(items: Vec<Item<T>>, class_names: Vec<String>) -> Result<Self> {
        let classes = class_names.len();
        let mut seen = HashSet::with_capacity(items.len());
        let dims = items.first().map(|i| i.image.dims());
        for item in &items {
            if item.label >= classes {
                return Err(Error::Dataset(format!(
                    "item {:?} has label {} but only {classes} classes",
                    item.id, item.label
                )));
            }
            if !seen.insert(item.id.as_str()) {
                return Err(Error::DuplicateId(item.id.clone()));
            }
            if Some(item.image.dims()) != dims {
                return Err(Error::Dataset(format!(
                    "item {:?} has shape {:?}, expected {:?}",
                    item.id,
                    item.image.dims(),
                    dims.unwrap_or_default()
                )));
            }
        }
        Ok(Self { items, class_names })
    }

    pub fn items(&self) -> &[Item<T>] {
        &self.items
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn image_dims(&self) -> Option<[usize; 3]> {
        self.items.first().map(|i| i.image.dims())
    }

    /// Keeps only the items whose index passes `keep`.
    pub fn filter_indexed(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self {
            items: self
                .items
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, it)| it.clone())
                .collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Writes `labels.csv` plus one PPM per item into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("labels.csv");
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["filename", "class_name"])?;
        for item in &self.items {
            let file = format!("{}.ppm", item.id);
            write_image(dir.join(&file), &item.image)?;
            w.write_record([file.as_str(), self.class_names[item.label].as_str()])?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        Ok(())
    }
}

/// Reads `dir/labels.csv` (`filename,class_name`) and the images it names.
/// Class indices follow first appearance in the CSV; item ids are filenames
/// without extension.
pub fn load_dataset<T: Scalar>(dir: impl AsRef<Path>) -> Result<Dataset<T>> {
    let dir = dir.as_ref();
    let csv_path = dir.join("labels.csv");
    let mut reader = csv::Reader::from_path(&csv_path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", csv_path.display())))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Dataset(format!("labels.csv lacks a {name:?} column")))
    };
    let (fcol, ccol) = (col("filename")?, col("class_name")?);

    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let filename = record.get(fcol).unwrap_or("").trim().to_string();
        let class = record.get(ccol).unwrap_or("").trim().to_string();
        if filename.is_empty() || class.is_empty() {
            return Err(Error::Dataset(format!(
                "labels.csv row {line}: empty field"
            )));
        }
        if !seen.insert(filename.clone()) {
            return Err(Error::DuplicateId(filename));
        }
        let path = dir.join(&filename);
        let image = read_image(&path)
            .map_err(|e| Error::Dataset(format!("labels.csv row {line} ({filename}): {e}")))?;
        let next = class_names.len();
        let label = *class_index.entry(class.clone()).or_insert_with(|| {
            class_names.push(class);
            next
        });
        let id = Path::new(&filename)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(&filename)
            .to_string();
        items.push(Item { id, image, label });
    }
    if items.is_empty() {
        return Err(Error::Dataset(format!(
            "{} lists no images",
            csv_path.display()
        )));
    }
    Dataset::new(items, class_names)
}

/// Names used for synthetic classes, cycling with a numeric suffix past ten.
const SYNTH_NAMES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Seeded synthetic classification set.
///
/// Each class carries two cues. The strong one is a phase-locked sinusoidal
/// grating with a class-specific angle and a period of 2.4 to 3.2 pixels,
/// drawn at low contrast. Being close to the Nyquist limit, it is the first
/// thing coarse JPEG quantization removes. The weak one is a linear colour
/// ramp pointing roughly along the class direction, jittered enough that
/// neighbouring classes overlap; it survives compression. A random soft disk
/// and Gaussian noise of σ = 0.05 complete the image.
pub fn gen_synthetic(seed: u64, classes: usize, per_class: usize, side: usize) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if side < 8 {
        return Err(Error::InvalidArgument(format!(
            "side must be at least 8, got {side}"
        )));
    }
    let class_names: Vec<String> = (0..classes)
        .map(|c| {
            let base = SYNTH_NAMES[c % SYNTH_NAMES.len()];
            match c / SYNTH_NAMES.len() {
                0 => base.to_string(),
                k => format!("{base}{k}"),
            }
        })
        .collect();
    let mut items = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for i in 0..per_class {
            let stream = (c * per_class + i) as u64;
            let mut rng = SeededRng::split(seed, stream);
            let image = synth_image(&mut rng, c, classes, side)?;
            items.push(Item {
                id: format!("synth_{c:02}_{i:04}"),
                image,
                label: c,
            });
        }
    }
    Dataset::new(items, class_names)
}

fn synth_image(rng: &mut SeededRng, class: usize, classes: usize, side: usize) -> Result<ImageBuf> {
    use std::f64::consts::PI;

    // Class-defining grating, phase-locked so a linear template can find it.
    let angle = PI * class as f64 / classes as f64 + 0.02 * (rng.uniform() - 0.5);
    // Periods between 2.4 and 3.2 pixels.
    let period = 2.4 + 0.8 * (class % 3) as f64 / 2.0;
    let freq = 2.0 * PI / period * (1.0 + 0.01 * (rng.uniform() - 0.5));
    let phase = PI * (class as f64 * 0.37).fract() * 2.0 + 0.4 * (rng.uniform() - 0.5);
    let contrast = 0.04 + 0.02 * rng.uniform();
    let tint = [
        0.8 + 0.4 * rng.uniform(),
        0.8 + 0.4 * rng.uniform(),
        0.8 + 0.4 * rng.uniform(),
    ];

    // Class-independent background.
    let base: [f64; 3] = [
        0.3 + 0.4 * rng.uniform(),
        0.3 + 0.4 * rng.uniform(),
        0.3 + 0.4 * rng.uniform(),
    ];
    // Weak low-frequency cue: the ramp points roughly along the class
    // direction, with enough jitter that neighbouring classes overlap.
    let ramp_angle = 2.0 * PI * class as f64 / classes as f64 + 0.9 * rng.standard_normal();
    let ramp = 0.08 * (1.0 + rng.uniform());
    let (cx, cy) = (rng.uniform(), rng.uniform());
    let radius = 0.15 + 0.2 * rng.uniform();
    let disk_shift = 0.25 * (rng.uniform() - 0.5);

    // libm keeps the images bit-identical across optimization levels.
    let (ca, sa) = (libm::cos(angle), libm::sin(angle));
    let (cr, sr) = (libm::cos(ramp_angle), libm::sin(ramp_angle));
    let s = side as f64;
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let (fx, fy) = (x as f64 / s, y as f64 / s);
            let grating = contrast * libm::sin(freq * (x as f64 * ca + y as f64 * sa) + phase);
            let bg = ramp * ((fx - 0.5) * cr + (fy - 0.5) * sr);
            let d2 = (fx - cx).powi(2) + (fy - cy).powi(2);
            let disk = disk_shift / (1.0 + libm::exp((d2.sqrt() - radius) * 30.0));
            for c in 0..3 {
                let v = base[c] + bg + disk + tint[c] * grating + 0.05 * rng.standard_normal();
                data.push(v.clamp(0.0, 1.0));
            }
        }
    }
    ImageBuf::from_vec(side, side, data)
}
