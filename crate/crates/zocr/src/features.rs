//! Zonal feature extraction: a 90x60 glyph is split into a 9x6 grid of
//! 10x10 zones and each zone is reduced to one value by averaging its
//! per-line foreground counts along the chosen orientation. The 54 zone
//! features can be extended with 9 row and 6 column aggregates to 69.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::raster::BinaryRaster;
use crate::segment::{GLYPH_HEIGHT, GLYPH_WIDTH};

/// Zone grid rows (90 / 10).
pub const ZONE_ROWS: usize = 9;
/// Zone grid columns (60 / 10).
pub const ZONE_COLS: usize = 6;
/// Zone side length in pixels.
pub const ZONE_SIZE: usize = 10;
/// Zone feature count (9 * 6).
pub const BASE_FEATURES: usize = ZONE_ROWS * ZONE_COLS;
/// Zone features plus the 9 + 6 row/column aggregates.
pub const FULL_FEATURES: usize = BASE_FEATURES + ZONE_ROWS + ZONE_COLS;
/// Diagonal lines in a 10x10 zone.
pub const DIAGONAL_LINES: usize = 2 * ZONE_SIZE - 1;

/// Line direction a zone is scanned along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// 19 top-left to bottom-right diagonals (constant `col - row`).
    Diagonal,
    /// 10 rows.
    Horizontal,
    /// 10 columns.
    Vertical,
}

impl Orientation {
    /// All three orientations, in the comparison-table order.
    pub const ALL: [Orientation; 3] = [Orientation::Vertical, Orientation::Horizontal, Orientation::Diagonal];

    /// Number of scan lines per zone for this orientation.
    pub fn line_count(self) -> usize {
        match self {
            Orientation::Diagonal => DIAGONAL_LINES,
            Orientation::Horizontal | Orientation::Vertical => ZONE_SIZE,
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Orientation::Diagonal => "diagonal",
            Orientation::Horizontal => "horizontal",
            Orientation::Vertical => "vertical",
        };
        f.write_str(s)
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" => Ok(Orientation::Diagonal),
            "horizontal" => Ok(Orientation::Horizontal),
            "vertical" => Ok(Orientation::Vertical),
            other => Err(Error::Config(format!(
                "unknown orientation {other:?}; expected diagonal, horizontal or vertical"
            ))),
        }
    }
}

/// How per-line counts are reduced to the zone feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum AveragingMode {
    /// Divide the total count by the number of lines (19 or 10).
    #[default]
    AllLines,
    /// Divide by the number of lines that contain foreground; 0 for an
    /// empty zone.
    NonEmptyLines,
}

impl fmt::Display for AveragingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AveragingMode::AllLines => "all-lines",
            AveragingMode::NonEmptyLines => "non-empty",
        };
        f.write_str(s)
    }
}

impl FromStr for AveragingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-lines" => Ok(AveragingMode::AllLines),
            "non-empty" => Ok(AveragingMode::NonEmptyLines),
            other => Err(Error::Config(format!(
                "unknown averaging mode {other:?}; expected all-lines or non-empty"
            ))),
        }
    }
}

/// An extracted feature vector.
///
/// Layout: `values[0..54]` are the zone features in zone-row-major order
/// (zone `(zr, zc)` at index `6*zr + zc`); with aggregates, `values[54..63]`
/// are the 9 row aggregates top to bottom and `values[63..69]` the 6
/// column aggregates left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub orientation: Orientation,
    pub with_aggregates: bool,
    pub values: Vec<f64>,
}

impl FeatureVector {
    /// Expected vector length for the aggregates flag.
    pub fn expected_len(with_aggregates: bool) -> usize {
        if with_aggregates {
            FULL_FEATURES
        } else {
            BASE_FEATURES
        }
    }
}

/// Splits a 90x60 glyph into its 54 zones, zone-row-major.
pub fn zone_partition(glyph: &BinaryRaster) -> Result<Vec<BinaryRaster>> {
    if glyph.height() != GLYPH_HEIGHT || glyph.width() != GLYPH_WIDTH {
        return Err(Error::GlyphSize { height: glyph.height(), width: glyph.width() });
    }
    let mut zones = Vec::with_capacity(BASE_FEATURES);
    for zr in 0..ZONE_ROWS {
        for zc in 0..ZONE_COLS {
            let mut zone = BinaryRaster::zeros(ZONE_SIZE, ZONE_SIZE);
            for r in 0..ZONE_SIZE {
                for c in 0..ZONE_SIZE {
                    if glyph.get(zr * ZONE_SIZE + r, zc * ZONE_SIZE + c) == 1 {
                        zone.set(r, c, 1);
                    }
                }
            }
            zones.push(zone);
        }
    }
    Ok(zones)
}

/// Per-line foreground counts of a 10x10 zone: 19 diagonal sums
/// (line `k` holds the pixels with `col - row + 9 == k`), or the 10 row
/// or column sums.
pub fn zone_sub_features(zone: &BinaryRaster, orientation: Orientation) -> Result<Vec<usize>> {
    if zone.height() != ZONE_SIZE || zone.width() != ZONE_SIZE {
        return Err(Error::ZoneSize { height: zone.height(), width: zone.width() });
    }
    let mut sums = vec![0usize; orientation.line_count()];
    for r in 0..ZONE_SIZE {
        for c in 0..ZONE_SIZE {
            if zone.get(r, c) == 1 {
                let k = match orientation {
                    Orientation::Diagonal => c + ZONE_SIZE - 1 - r,
                    Orientation::Horizontal => r,
                    Orientation::Vertical => c,
                };
                sums[k] += 1;
            }
        }
    }
    Ok(sums)
}

/// Reduces a zone to its single feature value.
pub fn zone_feature(zone: &BinaryRaster, orientation: Orientation, mode: AveragingMode) -> Result<f64> {
    let sums = zone_sub_features(zone, orientation)?;
    let total: usize = sums.iter().sum();
    let denom = match mode {
        AveragingMode::AllLines => sums.len(),
        AveragingMode::NonEmptyLines => sums.iter().filter(|&&s| s > 0).count(),
    };
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(total as f64 / denom as f64)
}

/// Extracts the full feature vector of a 90x60 glyph: 54 zone features,
/// optionally extended with the 9 row and 6 column aggregates (each the
/// mean of the zone features in that zone row or column).
pub fn extract_features(
    glyph: &BinaryRaster,
    orientation: Orientation,
    with_aggregates: bool,
    mode: AveragingMode,
) -> Result<FeatureVector> {
    let zones = zone_partition(glyph)?;
    let mut values = Vec::with_capacity(FeatureVector::expected_len(with_aggregates));
    for zone in &zones {
        values.push(zone_feature(zone, orientation, mode)?);
    }
    if with_aggregates {
        for zr in 0..ZONE_ROWS {
            let row = &values[zr * ZONE_COLS..(zr + 1) * ZONE_COLS];
            values.push(row.iter().sum::<f64>() / ZONE_COLS as f64);
        }
        for zc in 0..ZONE_COLS {
            let mut sum = 0.0;
            for zr in 0..ZONE_ROWS {
                sum += values[zr * ZONE_COLS + zc];
            }
            values.push(sum / ZONE_ROWS as f64);
        }
    }
    Ok(FeatureVector { orientation, with_aggregates, values })
}

/// Per-dimension min-max scaling to `[0, 1]`, fitted on a training set.
/// A constant dimension maps to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl Normalizer {
    /// Fits per-dimension minima and maxima over `vectors`.
    pub fn fit(vectors: &[Vec<f64>]) -> Result<Self> {
        let first = vectors.first().ok_or(Error::EmptyTrainingSet)?;
        let dim = first.len();
        let mut mins = vec![f64::INFINITY; dim];
        let mut maxs = vec![f64::NEG_INFINITY; dim];
        for v in vectors {
            for (i, &x) in v.iter().enumerate() {
                mins[i] = mins[i].min(x);
                maxs[i] = maxs[i].max(x);
            }
        }
        Ok(Self { mins, maxs })
    }

    /// Scales one vector in place.
    pub fn apply(&self, values: &mut [f64]) {
        for (i, x) in values.iter_mut().enumerate() {
            let range = self.maxs[i] - self.mins[i];
            *x = if range > 0.0 { (*x - self.mins[i]) / range } else { 0.0 };
        }
    }
}

/// Renders feature vectors as delimited text for debugging: `#` header
/// lines describing orientation and layout, then one comma-separated
/// vector per line, prefixed with its label when one is given.
pub fn export_delimited(
    orientation: Orientation,
    mode: AveragingMode,
    with_aggregates: bool,
    rows: &[(Option<String>, FeatureVector)],
) -> String {
    let mut out = String::new();
    out.push_str("# zocr features\n");
    out.push_str(&format!(
        "# orientation={orientation} mode={mode} aggregates={with_aggregates}\n"
    ));
    out.push_str(
        "# layout: 54 zone features zone-row-major (zone (r,c) at 6*r+c)",
    );
    if with_aggregates {
        out.push_str(", then 9 row aggregates top-to-bottom, then 6 column aggregates left-to-right");
    }
    out.push('\n');
    let labelled = rows.iter().any(|(l, _)| l.is_some());
    if labelled {
        out.push_str("# columns: label, values...\n");
    } else {
        out.push_str("# columns: values...\n");
    }
    for (label, fv) in rows {
        let mut fields: Vec<String> = Vec::with_capacity(fv.values.len() + 1);
        if let Some(l) = label {
            fields.push(l.clone());
        }
        fields.extend(fv.values.iter().map(|v| format!("{v}")));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
