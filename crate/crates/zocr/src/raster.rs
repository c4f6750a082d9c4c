//! Raster types and the preprocessing chain: binarize, edge detect,
//! dilate, fill holes.
//!
//! All operations are pure functions; rasters are plain row-major pixel
//! buffers and every stage preserves width and height.

use crate::error::{Error, Result};

/// A grayscale image with intensities in `[0, 255]`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayRaster {
    /// Builds a raster, checking that `pixels` has exactly `width * height`
    /// entries and that both dimensions are at least 1.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be at least 1x1, got {height}x{width}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "pixel count {} does not match {}x{}",
                pixels.len(),
                height,
                width
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// A raster filled with a single intensity.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width >= 1 && height >= 1);
        Self { width, height, pixels: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }
}

/// A binary image: 0 = background, 1 = foreground (character ink).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRaster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl BinaryRaster {
    /// Builds a raster, checking dimensions and that every pixel is 0 or 1.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be at least 1x1, got {height}x{width}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "pixel count {} does not match {}x{}",
                pixels.len(),
                height,
                width
            )));
        }
        if let Some(bad) = pixels.iter().find(|&&p| p > 1) {
            return Err(Error::InvalidRaster(format!(
                "binary raster pixel value {bad} is not 0 or 1"
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// An all-background raster.
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1);
        Self { width, height, pixels: vec![0; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(value <= 1);
        self.pixels[row * self.width + col] = value;
    }

    /// Number of foreground pixels.
    pub fn count_foreground(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }

    /// True when `self` is a pixelwise subset of `other` (same dimensions).
    pub fn is_subset_of(&self, other: &BinaryRaster) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.pixels.iter().zip(&other.pixels).all(|(&a, &b)| a <= b)
    }
}

/// Otsu's threshold: maximizes between-class variance over all 256
/// candidate thresholds `t`, where the classes are `{p < t}` and
/// `{p >= t}`. Ties pick the lowest `t`, so a uniform image gets `t = 0`
/// and binarizes to all-background.
pub fn otsu_threshold(img: &GrayRaster) -> u8 {
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    let total = img.pixels().len() as f64;
    let total_sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();

    let mut best_t = 0u8;
    let mut best_var = f64::NEG_INFINITY;
    let mut count_below = 0.0;
    let mut sum_below = 0.0;
    for t in 0..=255usize {
        // classes: {p < t} and {p >= t}
        if t > 0 {
            count_below += hist[t - 1] as f64;
            sum_below += (t - 1) as f64 * hist[t - 1] as f64;
        }
        let w0 = count_below / total;
        let w1 = 1.0 - w0;
        if count_below == 0.0 || count_below == total {
            continue;
        }
        let mu0 = sum_below / count_below;
        let mu1 = (total_sum - sum_below) / (total - count_below);
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    best_t
}

/// Converts a grayscale image to binary: a pixel is foreground iff its
/// intensity is strictly below the threshold (dark ink on light paper).
/// With no explicit threshold, Otsu's method picks one from the histogram.
pub fn binarize(img: &GrayRaster, threshold: Option<u8>) -> BinaryRaster {
    let t = threshold.unwrap_or_else(|| otsu_threshold(img));
    let pixels = img.pixels().iter().map(|&p| u8::from(p < t)).collect();
    BinaryRaster { width: img.width(), height: img.height(), pixels }
}

const SOBEL_X: [[i32; 3]; 3] = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
const SOBEL_Y: [[i32; 3]; 3] = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];

/// Marks pixels where the Sobel gradient magnitude `|Gx| + |Gy|` is
/// nonzero. Borders are handled by replicating edge rows/columns.
pub fn sobel_edges(img: &BinaryRaster) -> BinaryRaster {
    let (w, h) = (img.width(), img.height());
    let mut out = BinaryRaster::zeros(w, h);
    let sample = |r: isize, c: isize| -> i32 {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        img.get(r, c) as i32
    };
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut gx = 0;
            let mut gy = 0;
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let v = sample(r + dr, c + dc);
                    gx += SOBEL_X[(dr + 1) as usize][(dc + 1) as usize] * v;
                    gy += SOBEL_Y[(dr + 1) as usize][(dc + 1) as usize] * v;
                }
            }
            if gx.abs() + gy.abs() > 0 {
                out.set(r as usize, c as usize, 1);
            }
        }
    }
    out
}

/// Morphological dilation with a 3x3 square structuring element,
/// clipped at the raster borders.
pub fn dilate(img: &BinaryRaster) -> BinaryRaster {
    let (w, h) = (img.width(), img.height());
    let mut out = BinaryRaster::zeros(w, h);
    for r in 0..h {
        for c in 0..w {
            let r0 = r.saturating_sub(1);
            let r1 = (r + 1).min(h - 1);
            let c0 = c.saturating_sub(1);
            let c1 = (c + 1).min(w - 1);
            'probe: for nr in r0..=r1 {
                for nc in c0..=c1 {
                    if img.get(nr, nc) == 1 {
                        out.set(r, c, 1);
                        break 'probe;
                    }
                }
            }
        }
    }
    out
}

/// Fills holes: every background region that is not 4-connected to the
/// raster border becomes foreground.
pub fn fill_holes(img: &BinaryRaster) -> BinaryRaster {
    let (w, h) = (img.width(), img.height());
    // BFS from all border background pixels; unreached background is a hole.
    let mut exterior = vec![false; w * h];
    let mut queue = std::collections::VecDeque::new();
    let push = |r: usize, c: usize, ext: &mut [bool], q: &mut std::collections::VecDeque<(usize, usize)>| {
        let i = r * w + c;
        if img.get(r, c) == 0 && !ext[i] {
            ext[i] = true;
            q.push_back((r, c));
        }
    };
    for c in 0..w {
        push(0, c, &mut exterior, &mut queue);
        push(h - 1, c, &mut exterior, &mut queue);
    }
    for r in 0..h {
        push(r, 0, &mut exterior, &mut queue);
        push(r, w - 1, &mut exterior, &mut queue);
    }
    while let Some((r, c)) = queue.pop_front() {
        let mut visit = |nr: usize, nc: usize, q: &mut std::collections::VecDeque<(usize, usize)>| {
            let i = nr * w + nc;
            if img.get(nr, nc) == 0 && !exterior[i] {
                exterior[i] = true;
                q.push_back((nr, nc));
            }
        };
        if r > 0 {
            visit(r - 1, c, &mut queue);
        }
        if r + 1 < h {
            visit(r + 1, c, &mut queue);
        }
        if c > 0 {
            visit(r, c - 1, &mut queue);
        }
        if c + 1 < w {
            visit(r, c + 1, &mut queue);
        }
    }
    let pixels = (0..w * h)
        .map(|i| if img.pixels()[i] == 1 || !exterior[i] { 1 } else { 0 })
        .collect();
    BinaryRaster { width: w, height: h, pixels }
}

/// The full preprocessing chain: binarize (Otsu), Sobel edges, dilate,
/// fill holes. Produces an image ready for segmentation.
pub fn preprocess(img: &GrayRaster) -> BinaryRaster {
    preprocess_with_threshold(img, None)
}

/// Same as [`preprocess`] but with an explicit binarization threshold.
pub fn preprocess_with_threshold(img: &GrayRaster, threshold: Option<u8>) -> BinaryRaster {
    fill_holes(&dilate(&sobel_edges(&binarize(img, threshold))))
}
