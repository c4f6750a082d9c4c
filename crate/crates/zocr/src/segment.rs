//! Page decomposition: connected-component labelling, reading order,
//! and size normalization of each character to 90x60 pixels.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::raster::BinaryRaster;

/// Normalized glyph height in pixels (rows).
pub const GLYPH_HEIGHT: usize = 90;
/// Normalized glyph width in pixels (columns).
pub const GLYPH_WIDTH: usize = 60;

/// Inclusive bounding box in page coordinates; `x` is the column axis,
/// `y` the row axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    /// Number of rows shared by the vertical extents of two boxes.
    pub fn vertical_overlap(&self, other: &BoundingBox) -> usize {
        let top = self.y0.max(other.y0);
        let bottom = self.y1.min(other.y1);
        if bottom >= top {
            bottom - top + 1
        } else {
            0
        }
    }
}

/// One connected foreground component of a page.
#[derive(Debug, Clone)]
pub struct Component {
    /// 1-based label, assigned in first-encounter raster-scan order.
    pub label: u32,
    pub bbox: BoundingBox,
    /// Foreground pixels as (row, col) page coordinates.
    pub pixels: Vec<(usize, usize)>,
}

/// A segmented character: its component label, page bounding box, and
/// the 90x60 normalized raster. The glyph contains at least one
/// foreground pixel whenever the source strokes are thick enough to
/// survive nearest-neighbor subsampling (always, for crops no larger
/// than 90x60).
#[derive(Debug, Clone)]
pub struct GlyphBox {
    pub label: u32,
    pub bbox: BoundingBox,
    pub glyph: BinaryRaster,
}

/// Finds the 8-connected foreground components of a page. Labels run
/// 1..=k in first-encounter raster-scan order; every foreground pixel
/// lands in exactly one component.
pub fn label_components(page: &BinaryRaster) -> Vec<Component> {
    let (w, h) = (page.width(), page.height());
    let mut seen = vec![false; w * h];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..w * h {
        if page.pixels()[start] == 0 || seen[start] {
            continue;
        }
        let label = components.len() as u32 + 1;
        let mut pixels = Vec::new();
        let (mut min_r, mut max_r) = (h, 0usize);
        let (mut min_c, mut max_c) = (w, 0usize);
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / w, i % w);
            pixels.push((r, c));
            min_r = min_r.min(r);
            max_r = max_r.max(r);
            min_c = min_c.min(c);
            max_c = max_c.max(c);
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let ni = nr as usize * w + nc as usize;
                    if page.pixels()[ni] == 1 && !seen[ni] {
                        seen[ni] = true;
                        queue.push_back(ni);
                    }
                }
            }
        }
        components.push(Component {
            label,
            bbox: BoundingBox { x0: min_c, y0: min_r, x1: max_c, y1: max_r },
            pixels,
        });
    }
    components
}

/// Sorts components into reading order: boxes whose vertical extents
/// overlap by at least half of the smaller height share a text line
/// (taking the transitive closure); lines go top to bottom, and within
/// a line boxes go left to right.
pub fn order_glyphs(components: Vec<Component>) -> Vec<Component> {
    let n = components.len();
    if n <= 1 {
        return components;
    }

    // union-find over the shares-a-line relation
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in i + 1..n {
            let a = &components[i].bbox;
            let b = &components[j].bbox;
            let overlap = a.vertical_overlap(b);
            let smaller = a.height().min(b.height());
            if overlap * 2 >= smaller {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }

    let mut lines: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        lines.entry(root).or_default().push(i);
    }
    let mut line_groups: Vec<Vec<usize>> = lines.into_values().collect();
    line_groups.sort_by_key(|members| {
        let top = members.iter().map(|&i| components[i].bbox.y0).min().unwrap();
        let left = members.iter().map(|&i| components[i].bbox.x0).min().unwrap();
        let label = members.iter().map(|&i| components[i].label).min().unwrap();
        (top, left, label)
    });

    let mut index_order = Vec::with_capacity(n);
    for mut members in line_groups {
        members.sort_by_key(|&i| (components[i].bbox.x0, components[i].label));
        index_order.extend(members);
    }

    let mut slots: Vec<Option<Component>> = components.into_iter().map(Some).collect();
    index_order
        .into_iter()
        .map(|i| slots[i].take().expect("each index taken once"))
        .collect()
}

/// Rescales a component to the fixed 90x60 glyph size by
/// nearest-neighbor sampling of its cropped bounding box.
pub fn normalize_glyph(component: &Component) -> Result<GlyphBox> {
    if component.pixels.is_empty() {
        return Err(Error::EmptyGlyph);
    }
    let bbox = component.bbox;
    let (crop_h, crop_w) = (bbox.height(), bbox.width());

    // rasterize just this component's pixels into the crop
    let mut crop = BinaryRaster::zeros(crop_w, crop_h);
    for &(r, c) in &component.pixels {
        crop.set(r - bbox.y0, c - bbox.x0, 1);
    }

    let mut glyph = BinaryRaster::zeros(GLYPH_WIDTH, GLYPH_HEIGHT);
    for r in 0..GLYPH_HEIGHT {
        let src_r = r * crop_h / GLYPH_HEIGHT;
        for c in 0..GLYPH_WIDTH {
            let src_c = c * crop_w / GLYPH_WIDTH;
            if crop.get(src_r, src_c) == 1 {
                glyph.set(r, c, 1);
            }
        }
    }
    Ok(GlyphBox { label: component.label, bbox, glyph })
}

/// Full segmentation: label components, drop those with fewer than
/// `min_pixels` foreground pixels (specks), order them for reading, and
/// normalize each to 90x60.
pub fn segment_page(page: &BinaryRaster, min_pixels: usize) -> Vec<GlyphBox> {
    let components: Vec<Component> = label_components(page)
        .into_iter()
        .filter(|c| c.pixels.len() >= min_pixels)
        .collect();
    order_glyphs(components)
        .iter()
        .map(|c| normalize_glyph(c).expect("components are nonempty"))
        .collect()
}
