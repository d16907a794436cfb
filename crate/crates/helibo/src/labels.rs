//! Dataset label conversion: min/max corner annotations in pixels to
//! normalized center-format text labels, one file per image.
//!
//! Input is CSV with columns
//! `image, class_id, x_min, y_min, x_max, y_max, img_w, img_h`; output is
//! one `<image>.txt` per image with lines
//! `<class_id> <x_center> <y_center> <width> <height>` at six decimal
//! places. An optional seeded 80/20-style split writes `train.txt` and
//! `val.txt` image lists next to the labels.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::Deserialize;
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("degenerate box: ({x_min}, {y_min})-({x_max}, {y_max})")]
    DegenerateBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("corners exceed the {img_w}x{img_h} image: ({x_min}, {y_min})-({x_max}, {y_max})")]
    OutOfBounds {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        img_w: u32,
        img_h: u32,
    },
    #[error("invalid validation fraction {0}; expected [0, 1)")]
    InvalidSplit(f64),
    #[error("reading {path}: {source}")]
    Csv {
        path: String,
        source: Box<csv::Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One annotated object in corner format, pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerAnnotation {
    pub class_id: u32,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub img_w: u32,
    pub img_h: u32,
}

/// Normalized center-format label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedLabel {
    pub class_id: u32,
    pub x_center: f64,
    pub y_center: f64,
    pub width: f64,
    pub height: f64,
}

impl fmt::Display for NormalizedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class_id, self.x_center, self.y_center, self.width, self.height
        )
    }
}

/// Corner pixels -> normalized center format. All outputs land in (0, 1].
pub fn convert_annotation(a: &CornerAnnotation) -> Result<NormalizedLabel, LabelError> {
    if !(a.x_min < a.x_max && a.y_min < a.y_max) {
        return Err(LabelError::DegenerateBox {
            x_min: a.x_min,
            y_min: a.y_min,
            x_max: a.x_max,
            y_max: a.y_max,
        });
    }
    if a.x_min < 0.0
        || a.y_min < 0.0
        || a.x_max > f64::from(a.img_w)
        || a.y_max > f64::from(a.img_h)
    {
        return Err(LabelError::OutOfBounds {
            x_min: a.x_min,
            y_min: a.y_min,
            x_max: a.x_max,
            y_max: a.y_max,
            img_w: a.img_w,
            img_h: a.img_h,
        });
    }
    let w = f64::from(a.img_w);
    let h = f64::from(a.img_h);
    Ok(NormalizedLabel {
        class_id: a.class_id,
        x_center: (a.x_min + a.x_max) / (2.0 * w),
        y_center: (a.y_min + a.y_max) / (2.0 * h),
        width: (a.x_max - a.x_min) / w,
        height: (a.y_max - a.y_min) / h,
    })
}

/// Inverse map back to corner pixels, for round-trip checks.
pub fn denormalize(l: &NormalizedLabel, img_w: u32, img_h: u32) -> CornerAnnotation {
    let w = f64::from(img_w);
    let h = f64::from(img_h);
    CornerAnnotation {
        class_id: l.class_id,
        x_min: (l.x_center - l.width / 2.0) * w,
        y_min: (l.y_center - l.height / 2.0) * h,
        x_max: (l.x_center + l.width / 2.0) * w,
        y_max: (l.y_center + l.height / 2.0) * h,
        img_w,
        img_h,
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    image: String,
    class_id: u32,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    img_w: u32,
    img_h: u32,
}

/// Convert every `.csv` under `input` into per-image label files under
/// `output`. Images are processed in sorted order and rows in file order,
/// so the output bytes are stable. With `val_fraction`, a seeded shuffle
/// also writes `train.txt`/`val.txt` image lists.
pub fn convert_directory(
    input: &Path,
    output: &Path,
    val_fraction: Option<f64>,
    split_seed: u64,
) -> Result<usize, LabelError> {
    let mut by_image: BTreeMap<String, Vec<NormalizedLabel>> = BTreeMap::new();
    let mut csv_paths: Vec<_> = fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csv_paths.sort();
    for path in &csv_paths {
        let mut reader =
            csv::Reader::from_path(path).map_err(|source| LabelError::Csv {
                path: path.display().to_string(),
                source: Box::new(source),
            })?;
        for row in reader.deserialize::<CsvRow>() {
            let row = row.map_err(|source| LabelError::Csv {
                path: path.display().to_string(),
                source: Box::new(source),
            })?;
            let label = convert_annotation(&CornerAnnotation {
                class_id: row.class_id,
                x_min: row.x_min,
                y_min: row.y_min,
                x_max: row.x_max,
                y_max: row.y_max,
                img_w: row.img_w,
                img_h: row.img_h,
            })?;
            by_image.entry(row.image).or_default().push(label);
        }
    }

    fs::create_dir_all(output)?;
    for (image, labels) in &by_image {
        let stem = Path::new(image)
            .file_stem()
            .map_or_else(|| image.clone(), |s| s.to_string_lossy().into_owned());
        let mut file = fs::File::create(output.join(format!("{stem}.txt")))?;
        for label in labels {
            writeln!(file, "{label}")?;
        }
    }

    if let Some(frac) = val_fraction {
        if !(0.0..1.0).contains(&frac) {
            return Err(LabelError::InvalidSplit(frac));
        }
        let mut images: Vec<&String> = by_image.keys().collect();
        let mut rng = seed::stream(split_seed, "label-split", &[]);
        images.shuffle(&mut rng);
        let n_val = (images.len() as f64 * frac).round() as usize;
        let mut val = fs::File::create(output.join("val.txt"))?;
        let mut train = fs::File::create(output.join("train.txt"))?;
        for (i, image) in images.iter().enumerate() {
            if i < n_val {
                writeln!(val, "{image}")?;
            } else {
                writeln!(train, "{image}")?;
            }
        }
    }
    Ok(by_image.len())
}
