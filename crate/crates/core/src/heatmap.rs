//! Center heatmaps: Gaussian peak rendering, local-maximum decoding and the
//! focal-loss objective over a predicted/ground-truth heatmap pair.

use thiserror::Error;

/// Clamp applied to predictions before taking logarithms.
pub const LOG_EPSILON: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatmapError {
    #[error("image size {width}x{height} is not divisible by downsample factor {downsample}")]
    NotDivisible {
        width: u32,
        height: u32,
        downsample: u32,
    },
    #[error("downsample factor and class count must be positive")]
    ZeroDimension,
    #[error("center ({col}, {row}) class {class} lies outside the {cols}x{rows}x{classes} grid")]
    CenterOutOfGrid {
        col: usize,
        row: usize,
        class: usize,
        cols: usize,
        rows: usize,
        classes: usize,
    },
    #[error("gaussian sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("heatmap value {value} at index {index} is outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("expected {expected} values, got {actual}")]
    WrongLength { expected: usize, actual: usize },
    #[error("prediction and ground truth heatmaps have different configurations")]
    ConfigMismatch,
    #[error("focal loss needs at least one object")]
    NoObjects,
    #[error("focal exponents must be positive (alpha={alpha}, beta={beta})")]
    InvalidFocalParams { alpha: f64, beta: f64 },
    #[error("peak window must be a positive odd integer, got {0}")]
    InvalidWindow(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeatmapConfig {
    image_width: u32,
    image_height: u32,
    downsample: u32,
    num_classes: u32,
}

impl HeatmapConfig {
    pub fn new(
        image_width: u32,
        image_height: u32,
        downsample: u32,
        num_classes: u32,
    ) -> Result<Self, HeatmapError> {
        if downsample == 0 || num_classes == 0 {
            return Err(HeatmapError::ZeroDimension);
        }
        if !image_width.is_multiple_of(downsample) || !image_height.is_multiple_of(downsample) {
            return Err(HeatmapError::NotDivisible {
                width: image_width,
                height: image_height,
                downsample,
            });
        }
        Ok(Self {
            image_width,
            image_height,
            downsample,
            num_classes,
        })
    }

    pub fn cols(&self) -> usize {
        (self.image_width / self.downsample) as usize
    }

    pub fn rows(&self) -> usize {
        (self.image_height / self.downsample) as usize
    }

    pub fn classes(&self) -> usize {
        self.num_classes as usize
    }

    pub fn downsample(&self) -> u32 {
        self.downsample
    }

    pub fn len(&self) -> usize {
        self.cols() * self.rows() * self.classes()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn index(&self, cell: GridCell) -> usize {
        (cell.class * self.rows() + cell.row) * self.cols() + cell.col
    }
}

/// A cell of the down-sampled grid in a given class channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridCell {
    pub class: usize,
    pub row: usize,
    pub col: usize,
}

/// A Gaussian peak to render.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakSpec {
    pub col: usize,
    pub row: usize,
    pub class: usize,
    pub sigma: f64,
}

/// Dense `classes x rows x cols` grid with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    config: HeatmapConfig,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(config: HeatmapConfig) -> Self {
        Self {
            config,
            values: vec![0.0; config.len()],
        }
    }

    /// Values laid out class-major, then row-major.
    pub fn from_values(config: HeatmapConfig, values: Vec<f64>) -> Result<Self, HeatmapError> {
        if values.len() != config.len() {
            return Err(HeatmapError::WrongLength {
                expected: config.len(),
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(HeatmapError::ValueOutOfRange { index, value });
        }
        Ok(Self { config, values })
    }

    pub fn config(&self) -> &HeatmapConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, cell: GridCell) -> f64 {
        self.values[self.config.index(cell)]
    }
}

/// Renders one Gaussian per center; overlapping peaks of a class combine by
/// element-wise maximum.
pub fn render_gaussian(
    centers: &[PeakSpec],
    config: HeatmapConfig,
) -> Result<Heatmap, HeatmapError> {
    let (cols, rows, classes) = (config.cols(), config.rows(), config.classes());
    for c in centers {
        if c.col >= cols || c.row >= rows || c.class >= classes {
            return Err(HeatmapError::CenterOutOfGrid {
                col: c.col,
                row: c.row,
                class: c.class,
                cols,
                rows,
                classes,
            });
        }
        if !(c.sigma > 0.0 && c.sigma.is_finite()) {
            return Err(HeatmapError::InvalidSigma(c.sigma));
        }
    }

    let mut hm = Heatmap::zeros(config);
    for c in centers {
        let denom = 2.0 * c.sigma * c.sigma;
        let channel = &mut hm.values[c.class * rows * cols..(c.class + 1) * rows * cols];
        for row in 0..rows {
            let dy = row as f64 - c.row as f64;
            for col in 0..cols {
                let dx = col as f64 - c.col as f64;
                let g = (-(dx * dx + dy * dy) / denom).exp();
                let slot = &mut channel[row * cols + col];
                if g > *slot {
                    *slot = g;
                }
            }
        }
    }
    Ok(hm)
}

/// A decoded local maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub cell: GridCell,
    pub score: f64,
}

/// Cells at or above `threshold` that dominate their `window x window`
/// neighborhood. Equal values are ordered by lowest row, then lowest column,
/// so a plateau yields a single peak. Output is sorted by descending score,
/// then by class, row and column.
pub fn extract_peaks(
    hm: &Heatmap,
    threshold: f64,
    window: usize,
) -> Result<Vec<Peak>, HeatmapError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(HeatmapError::InvalidWindow(window));
    }
    let cfg = hm.config;
    let (cols, rows) = (cfg.cols(), cfg.rows());
    let half = window / 2;
    let mut peaks = Vec::new();

    for class in 0..cfg.classes() {
        for row in 0..rows {
            for col in 0..cols {
                let cell = GridCell { class, row, col };
                let value = hm.get(cell);
                if !(value >= threshold) {
                    continue;
                }
                let dominates = (row.saturating_sub(half)..=(row + half).min(rows - 1)).all(|r| {
                    (col.saturating_sub(half)..=(col + half).min(cols - 1)).all(|c| {
                        if (r, c) == (row, col) {
                            return true;
                        }
                        let other = hm.get(GridCell {
                            class,
                            row: r,
                            col: c,
                        });
                        value > other || (value == other && (row, col) < (r, c))
                    })
                });
                if dominates {
                    peaks.push(Peak { cell, score: value });
                }
            }
        }
    }

    peaks.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.cell.cmp(&b.cell)));
    Ok(peaks)
}

/// Exponents of the focal loss: `alpha` on the prediction term, `beta` on
/// the ground-truth penalty reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 4.0,
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Focal loss over all cells, normalized by the number of objects and
/// negated so that it is non-negative. Cells whose ground truth equals
/// exactly 1 are positives.
pub fn focal_loss(
    pred: &Heatmap,
    gt: &Heatmap,
    params: FocalParams,
    num_objects: usize,
) -> Result<f64, HeatmapError> {
    if pred.config != gt.config {
        return Err(HeatmapError::ConfigMismatch);
    }
    if num_objects == 0 {
        return Err(HeatmapError::NoObjects);
    }
    if !(params.alpha > 0.0 && params.beta > 0.0) {
        return Err(HeatmapError::InvalidFocalParams {
            alpha: params.alpha,
            beta: params.beta,
        });
    }

    let mut acc = CompensatedSum::default();
    for (&p, &y) in pred.values.iter().zip(&gt.values) {
        let p = p.clamp(LOG_EPSILON, 1.0 - LOG_EPSILON);
        let term = if y == 1.0 {
            (1.0 - p).powf(params.alpha) * p.ln()
        } else {
            (1.0 - y).powf(params.beta) * p.powf(params.alpha) * (1.0 - p).ln()
        };
        acc.add(term);
    }
    Ok((-acc.total() / num_objects as f64).max(0.0))
}
