//! Machine-rendered letter corpus for tests and demos: a 5x7 bitmap
//! font scaled up to glyph size, with optional jitter (1-pixel
//! translations and sparse pixel flips) to fake handwriting variation.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pgm;
use crate::raster::GrayRaster;

pub const LETTERS: [char; 26] = [
    'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J', 'K', 'L', 'M', 'N', 'O', 'P', 'Q', 'R',
    'S', 'T', 'U', 'V', 'W', 'X', 'Y', 'Z',
];

// Rows top to bottom, bit 4 the leftmost column.
const FONT: [[u8; 7]; 26] = [
    [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001], // A
    [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110], // B
    [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110], // C
    [0b11100, 0b10010, 0b10001, 0b10001, 0b10001, 0b10010, 0b11100], // D
    [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111], // E
    [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000], // F
    [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111], // G
    [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001], // H
    [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110], // I
    [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100], // J
    [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001], // K
    [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111], // L
    [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001], // M
    [0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001, 0b10001], // N
    [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110], // O
    [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000], // P
    [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101], // Q
    [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001], // R
    [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110], // S
    [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100], // T
    [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110], // U
    [0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b01010, 0b00100], // V
    [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010], // W
    [0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b01010, 0b10001], // X
    [0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100], // Y
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111], // Z
];

pub const FONT_ROWS: usize = 7;
pub const FONT_COLS: usize = 5;

/// The 7 bitmap rows of one uppercase letter.
pub fn glyph_rows(letter: char) -> Option<[u8; 7]> {
    LETTERS.iter().position(|&l| l == letter).map(|i| FONT[i])
}

/// How letters are scaled onto the gray canvas.
#[derive(Debug, Clone, Copy)]
pub struct RenderSpec {
    /// Pixels per font cell.
    pub scale: usize,
    /// White border around the letter cell.
    pub margin: usize,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self { scale: 10, margin: 8 }
    }
}

impl RenderSpec {
    pub fn cell_width(&self) -> usize {
        FONT_COLS * self.scale
    }

    pub fn cell_height(&self) -> usize {
        FONT_ROWS * self.scale
    }
}

fn stamp_letter(px: &mut [u8], canvas_w: usize, rows: &[u8; 7], spec: &RenderSpec, x0: usize, y0: usize) {
    for (r, bits) in rows.iter().enumerate() {
        for c in 0..FONT_COLS {
            if bits & (1 << (FONT_COLS - 1 - c)) != 0 {
                for dr in 0..spec.scale {
                    for dc in 0..spec.scale {
                        px[(y0 + r * spec.scale + dr) * canvas_w + x0 + c * spec.scale + dc] = 0;
                    }
                }
            }
        }
    }
}

fn letter_rows(letter: char) -> Result<[u8; 7]> {
    glyph_rows(letter)
        .ok_or_else(|| Error::Config(format!("no glyph for character {letter:?}; only A-Z render")))
}

/// Renders one letter, ink 0 on white 255.
pub fn render_letter_gray(letter: char, spec: &RenderSpec) -> Result<GrayRaster> {
    let rows = letter_rows(letter)?;
    let w = spec.cell_width() + 2 * spec.margin;
    let h = spec.cell_height() + 2 * spec.margin;
    let mut px = vec![255u8; w * h];
    stamp_letter(&mut px, w, &rows, spec, spec.margin, spec.margin);
    GrayRaster::new(w, h, px)
}

/// Renders one letter with handwriting-style jitter: the whole glyph
/// shifts by up to one pixel in each axis, and each pixel of the
/// letter cell flips with 2% probability. Draws from `rng` in a fixed
/// order, so equal seeds give equal images.
pub fn render_jittered_letter(
    letter: char,
    spec: &RenderSpec,
    rng: &mut impl Rng,
) -> Result<GrayRaster> {
    assert!(spec.margin >= 1, "jitter needs at least a 1-pixel margin");
    let rows = letter_rows(letter)?;
    let w = spec.cell_width() + 2 * spec.margin;
    let h = spec.cell_height() + 2 * spec.margin;
    let dx = rng.gen_range(-1i32..=1);
    let dy = rng.gen_range(-1i32..=1);
    let x0 = (spec.margin as i32 + dx) as usize;
    let y0 = (spec.margin as i32 + dy) as usize;
    let mut px = vec![255u8; w * h];
    stamp_letter(&mut px, w, &rows, spec, x0, y0);
    for r in y0..y0 + spec.cell_height() {
        for c in x0..x0 + spec.cell_width() {
            if rng.gen::<f64>() < 0.02 {
                let p = &mut px[r * w + c];
                *p = if *p == 0 { 255 } else { 0 };
            }
        }
    }
    GrayRaster::new(w, h, px)
}

/// Writes a deterministic train/test corpus under
/// `<root>/<letter>/<copy>.pgm`, jittering every copy. Train and test
/// copies come from one RNG stream, so the two splits never coincide.
pub fn write_split_corpus(
    train_root: &Path,
    test_root: &Path,
    train_copies: usize,
    test_copies: usize,
    seed: u64,
    spec: &RenderSpec,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    for letter in LETTERS {
        for (root, copies, offset) in
            [(train_root, train_copies, 0), (test_root, test_copies, train_copies)]
        {
            let dir = root.join(letter.to_string());
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            for copy in 0..copies {
                let img = render_jittered_letter(letter, spec, &mut rng)?;
                pgm::save_pgm(&dir.join(format!("{:02}.pgm", offset + copy)), &img)?;
            }
        }
    }
    Ok(())
}

/// Renders one line of letters on a page, `spacing` white pixels
/// between neighboring letter cells.
pub fn render_page_gray(text: &str, spec: &RenderSpec, spacing: usize) -> Result<GrayRaster> {
    let letters: Vec<[u8; 7]> = text.chars().map(letter_rows).collect::<Result<_>>()?;
    if letters.is_empty() {
        return Err(Error::Config("page text is empty".into()));
    }
    let n = letters.len();
    let w = 2 * spec.margin + n * spec.cell_width() + (n - 1) * spacing;
    let h = 2 * spec.margin + spec.cell_height();
    let mut px = vec![255u8; w * h];
    for (i, rows) in letters.iter().enumerate() {
        let x0 = spec.margin + i * (spec.cell_width() + spacing);
        stamp_letter(&mut px, w, rows, spec, x0, spec.margin);
    }
    GrayRaster::new(w, h, px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::preprocess;
    use crate::segment::{label_components, segment_page};

    #[test]
    fn every_letter_preprocesses_to_one_component() {
        let spec = RenderSpec::default();
        for letter in LETTERS {
            let img = render_letter_gray(letter, &spec).unwrap();
            let page = preprocess(&img);
            let comps: Vec<_> = label_components(&page)
                .into_iter()
                .filter(|c| c.pixels.len() >= 8)
                .collect();
            assert_eq!(comps.len(), 1, "letter {letter} split into {} components", comps.len());
        }
    }

    #[test]
    fn all_letter_bitmaps_are_distinct() {
        for (i, a) in FONT.iter().enumerate() {
            for (j, b) in FONT.iter().enumerate().skip(i + 1) {
                assert_ne!(a, b, "letters {} and {} share a bitmap", LETTERS[i], LETTERS[j]);
            }
        }
    }

    #[test]
    fn unknown_characters_are_rejected() {
        let spec = RenderSpec::default();
        assert!(render_letter_gray('a', &spec).is_err());
        assert!(render_page_gray("A1Z", &spec, 20).is_err());
    }

    #[test]
    fn jitter_is_reproducible_for_equal_seeds() {
        let spec = RenderSpec::default();
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let a = render_jittered_letter('Q', &spec, &mut r1).unwrap();
        let b = render_jittered_letter('Q', &spec, &mut r2).unwrap();
        assert_eq!(a.pixels(), b.pixels());
        let c = render_jittered_letter('Q', &spec, &mut r1).unwrap();
        assert_ne!(a.pixels(), c.pixels(), "stream advanced, jitter should differ");
    }

    #[test]
    fn corpus_writes_are_deterministic() {
        let spec = RenderSpec::default();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        for d in [&d1, &d2] {
            write_split_corpus(&d.path().join("train"), &d.path().join("test"), 2, 1, 11, &spec)
                .unwrap();
        }
        for rel in ["train/A/00.pgm", "train/Z/01.pgm", "test/M/02.pgm"] {
            let a = fs::read(d1.path().join(rel)).unwrap();
            let b = fs::read(d2.path().join(rel)).unwrap();
            assert_eq!(a, b, "{rel} differs between identically seeded writes");
            assert!(!a.is_empty());
        }
        // train and test splits hold different images
        let train = fs::read(d1.path().join("train/A/00.pgm")).unwrap();
        let test = fs::read(d1.path().join("test/A/02.pgm")).unwrap();
        assert_ne!(train, test);
    }

    #[test]
    fn page_segments_left_to_right() {
        let spec = RenderSpec::default();
        let page = render_page_gray("ABCJXZ", &spec, 24).unwrap();
        let pre = preprocess(&page);
        let glyphs = segment_page(&pre, 8);
        assert_eq!(glyphs.len(), 6);
        for pair in glyphs.windows(2) {
            assert!(pair[0].bbox.x0 < pair[1].bbox.x0, "reading order violated");
        }
    }
}
