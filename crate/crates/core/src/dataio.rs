//! Data ingestion: IDX-format image/label files, boundary-record encoding
//! into the activation range, synthetic desk-scale datasets and a text cache
//! format.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

/// Encoded values live in [-0.9, 0.9]; keeps tanh targets reachable.
pub const VALUE_LIMIT: f64 = 0.9;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad magic number in {path}: expected {expected}, found {found}")]
    BadMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error("truncated file {path}: wanted {wanted} bytes, found {found}")]
    Truncated {
        path: String,
        wanted: usize,
        found: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("unsupported downsample factor {0} (allowed: 1, 2, 4)")]
    BadDownsample(usize),
    #[error("image side {side} is not divisible by downsample factor {factor}")]
    IndivisibleSide { side: usize, factor: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("dataset parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One boundary record: clamped input values and target output values.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// A collection of boundary records with uniform dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub source: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Text cache, same conventions as the checkpoint format: one record per
    /// line, `input_dim` then `output_dim` shortest-round-trip decimals.
    pub fn to_cache_string(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        out.push_str("thermolearn-dataset v1\n");
        let _ = writeln!(out, "source {}", self.source);
        let _ = writeln!(out, "input_dim {}", self.input_dim);
        let _ = writeln!(out, "output_dim {}", self.output_dim);
        let _ = writeln!(out, "records {}", self.records.len());
        for r in &self.records {
            let mut first = true;
            for v in r.input.iter().chain(r.target.iter()) {
                if !first {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
                first = false;
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn from_cache_string(text: &str) -> Result<Dataset, DataError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut take = |what: &str| {
            lines.next().ok_or_else(|| DataError::Parse {
                line: 0,
                message: format!("unexpected end of file, expected {what}"),
            })
        };
        let (ln, header) = take("header")?;
        if header.trim() != "thermolearn-dataset v1" {
            return Err(DataError::Parse {
                line: ln,
                message: format!("unrecognized header {header:?}"),
            });
        }
        let source = {
            let (ln, line) = take("source")?;
            line.strip_prefix("source ")
                .ok_or_else(|| DataError::Parse {
                    line: ln,
                    message: "expected `source <tag>`".into(),
                })?
                .trim()
                .to_string()
        };
        let mut parse_usize = |key: &'static str| -> Result<usize, DataError> {
            let (ln, line) = take(key)?;
            let mut toks = line.split_whitespace();
            if toks.next() != Some(key) {
                return Err(DataError::Parse {
                    line: ln,
                    message: format!("expected `{key} <count>`"),
                });
            }
            toks.next()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| DataError::Parse {
                    line: ln,
                    message: format!("bad {key} value"),
                })
        };
        let input_dim = parse_usize("input_dim")?;
        let output_dim = parse_usize("output_dim")?;
        let n_records = parse_usize("records")?;
        let mut records = Vec::with_capacity(n_records);
        for _ in 0..n_records {
            let (ln, line) = take("record")?;
            let values = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|e| DataError::Parse {
                        line: ln,
                        message: format!("bad real {t:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != input_dim + output_dim {
                return Err(DataError::Parse {
                    line: ln,
                    message: format!(
                        "record has {} values, expected {}",
                        values.len(),
                        input_dim + output_dim
                    ),
                });
            }
            records.push(Record {
                input: values[..input_dim].to_vec(),
                target: values[input_dim..].to_vec(),
            });
        }
        let (ln, end) = take("end")?;
        if end.trim() != "end" {
            return Err(DataError::Parse {
                line: ln,
                message: "missing end marker".into(),
            });
        }
        Ok(Dataset {
            records,
            input_dim,
            output_dim,
            source,
        })
    }

    /// Split off the first `fraction` of the records as a training set,
    /// keeping the rest for evaluation. No shuffling; callers wanting a
    /// random split should permute beforehand.
    pub fn split(&self, fraction: f64) -> Result<(Dataset, Dataset), DataError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(DataError::Invalid(format!(
                "split fraction must lie in [0, 1], got {fraction}"
            )));
        }
        let k = (self.records.len() as f64 * fraction).round() as usize;
        let make = |records: Vec<Record>, tag: &str| Dataset {
            records,
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            source: format!("{}/{tag}", self.source),
        };
        Ok((
            make(self.records[..k].to_vec(), "train"),
            make(self.records[k..].to_vec(), "held-out"),
        ))
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_cache_string()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Dataset, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Dataset::from_cache_string(&text)
    }
}

/// Raw IDX payload before encoding.
#[derive(Debug, Clone)]
pub struct RawImages {
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Read a big-endian IDX image/label file pair and cross-check the counts.
pub fn read_idx(path_images: &Path, path_labels: &Path) -> Result<RawImages, DataError> {
    let image_bytes = read_all(path_images)?;
    let label_bytes = read_all(path_labels)?;

    let img_name = path_images.display().to_string();
    let lbl_name = path_labels.display().to_string();

    let magic = read_u32_be(&image_bytes, 0, &img_name)?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            path: img_name,
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_u32_be(&image_bytes, 4, &img_name)? as usize;
    let rows = read_u32_be(&image_bytes, 8, &img_name)? as usize;
    let cols = read_u32_be(&image_bytes, 12, &img_name)? as usize;
    let wanted = 16 + count * rows * cols;
    if image_bytes.len() < wanted {
        return Err(DataError::Truncated {
            path: img_name,
            wanted,
            found: image_bytes.len(),
        });
    }

    let magic = read_u32_be(&label_bytes, 0, &lbl_name)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::BadMagic {
            path: lbl_name,
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let label_count = read_u32_be(&label_bytes, 4, &lbl_name)? as usize;
    if label_bytes.len() < 8 + label_count {
        return Err(DataError::Truncated {
            path: lbl_name,
            wanted: 8 + label_count,
            found: label_bytes.len(),
        });
    }
    if label_count != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }

    Ok(RawImages {
        images: image_bytes[16..16 + count * rows * cols].to_vec(),
        labels: label_bytes[8..8 + count].to_vec(),
        count,
        rows,
        cols,
    })
}

/// Map a pixel intensity in [0, 255] linearly onto [-0.9, 0.9].
pub fn encode_pixel(p: f64) -> f64 {
    p / 255.0 * (2.0 * VALUE_LIMIT) - VALUE_LIMIT
}

/// Inverse of `encode_pixel`, back onto the [0, 255] scale.
pub fn decode_pixel(v: f64) -> f64 {
    (v + VALUE_LIMIT) / (2.0 * VALUE_LIMIT) * 255.0
}

/// Encode raw images into boundary records. Downsampling (factor 1, 2 or 4)
/// takes the mean over pixel blocks before the linear map; labels become
/// one-hot targets at +0.9 with -0.9 elsewhere.
pub fn encode(raw: &RawImages, downsample_factor: usize) -> Result<Dataset, DataError> {
    if ![1, 2, 4].contains(&downsample_factor) {
        return Err(DataError::BadDownsample(downsample_factor));
    }
    if !raw.rows.is_multiple_of(downsample_factor) || !raw.cols.is_multiple_of(downsample_factor) {
        return Err(DataError::IndivisibleSide {
            side: raw.rows,
            factor: downsample_factor,
        });
    }
    let out_rows = raw.rows / downsample_factor;
    let out_cols = raw.cols / downsample_factor;
    let input_dim = out_rows * out_cols;
    let n_classes = 10usize;
    let block = (downsample_factor * downsample_factor) as f64;

    let mut records = Vec::with_capacity(raw.count);
    for k in 0..raw.count {
        let image = &raw.images[k * raw.rows * raw.cols..(k + 1) * raw.rows * raw.cols];
        let mut input = Vec::with_capacity(input_dim);
        for br in 0..out_rows {
            for bc in 0..out_cols {
                let mut acc = 0.0;
                for dr in 0..downsample_factor {
                    for dc in 0..downsample_factor {
                        let r = br * downsample_factor + dr;
                        let c = bc * downsample_factor + dc;
                        acc += image[r * raw.cols + c] as f64;
                    }
                }
                input.push(encode_pixel(acc / block));
            }
        }
        let label = raw.labels[k] as usize;
        if label >= n_classes {
            return Err(DataError::Invalid(format!(
                "label {label} out of range for record {k}"
            )));
        }
        let mut target = vec![-VALUE_LIMIT; n_classes];
        target[label] = VALUE_LIMIT;
        records.push(Record { input, target });
    }
    Ok(Dataset {
        records,
        input_dim,
        output_dim: n_classes,
        source: format!("idx:{}x{}/{downsample_factor}", raw.rows, raw.cols),
    })
}

/// Synthetic desk-scale dataset: class prototypes at distinct random corners
/// of the [-0.9, 0.9] cube plus clipped Gaussian jitter, round-robin class
/// assignment, one-hot targets. Linearly separable at the default
/// `sigma = 0.2`.
pub fn synth(
    n_records: usize,
    input_dim: usize,
    n_classes: usize,
    sigma: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if input_dim == 0 || n_classes == 0 {
        return Err(DataError::Invalid(
            "input_dim and n_classes must be positive".into(),
        ));
    }
    if input_dim < 64 && n_classes > (1usize << input_dim) {
        return Err(DataError::Invalid(format!(
            "{n_classes} classes exceed the {input_dim}-cube corner count"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corners: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
    let mut used = std::collections::HashSet::new();
    while corners.len() < n_classes {
        let signs: Vec<bool> = (0..input_dim).map(|_| rng.random::<bool>()).collect();
        if used.insert(signs.clone()) {
            corners.push(
                signs
                    .iter()
                    .map(|&s| if s { VALUE_LIMIT } else { -VALUE_LIMIT })
                    .collect(),
            );
        }
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut records = Vec::with_capacity(n_records);
    for k in 0..n_records {
        let class = k % n_classes;
        let input = corners[class]
            .iter()
            .map(|&c| {
                let jitter: f64 = normal.sample(&mut rng);
                (c + sigma * jitter).clamp(-VALUE_LIMIT, VALUE_LIMIT)
            })
            .collect();
        let mut target = vec![-VALUE_LIMIT; n_classes];
        target[class] = VALUE_LIMIT;
        records.push(Record { input, target });
    }
    Ok(Dataset {
        records,
        input_dim,
        output_dim: n_classes,
        source: format!("synth:{input_dim}d/{n_classes}c/s{seed}"),
    })
}

fn read_all(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(buf)
}

fn read_u32_be(bytes: &[u8], offset: usize, path: &str) -> Result<u32, DataError> {
    if bytes.len() < offset + 4 {
        return Err(DataError::Truncated {
            path: path.to_string(),
            wanted: offset + 4,
            found: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}
