//! Binary-mask geometry: connected components, boundaries, Moore contour
//! tracing and calibrated morphometry (perimeter, area, Feret extents).
//!
//! Foreground components use 8-connectivity; boundary membership uses
//! 4-connectivity. Pixel coordinates are `(col, row)` with rows growing
//! downwards, so "clockwise" refers to the image as displayed.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("mask dimensions must be positive, got {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("mask buffer holds {actual} pixels, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("mask contains {0} connected components, expected exactly one")]
    NotSingleComponent(usize),
    #[error("calibration factors must be finite and strictly positive")]
    InvalidCalibration,
}

/// Integer pixel coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub col: usize,
    pub row: usize,
}

impl Pixel {
    pub const fn new(col: usize, row: usize) -> Self {
        Pixel { col, row }
    }
}

/// Row-major boolean raster of one frame's nerve region.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    /// All-background mask.
    pub fn new(width: usize, height: usize) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidDimensions { width, height });
        }
        Ok(BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        })
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidDimensions { width, height });
        }
        if bits.len() != width * height {
            return Err(GeometryError::BufferLength {
                expected: width * height,
                actual: bits.len(),
            });
        }
        Ok(BinaryMask { width, height, bits })
    }

    /// Builds a mask from rows of `'#'` (foreground) and any other character.
    /// Handy for fixtures; every row must have the same length.
    pub fn from_ascii(rows: &[&str]) -> Result<Self, GeometryError> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let bits: Vec<bool> = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        Self::from_bits(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> bool {
        col < self.width && row < self.height && self.bits[row * self.width + col]
    }

    /// Signed lookup; anything outside the raster is background.
    #[inline]
    pub fn get_signed(&self, col: isize, row: isize) -> bool {
        col >= 0 && row >= 0 && self.get(col as usize, row as usize)
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        assert!(
            col < self.width && row < self.height,
            "pixel ({col},{row}) out of bounds"
        );
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Foreground pixels in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = Pixel> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Pixel::new(i % self.width, i / self.width))
    }

    /// Pixel-wise AND count.
    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a && b).count()
    }

    /// Pixel-wise OR count.
    pub fn union_count(&self, other: &BinaryMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a || b).count()
    }
}

/// Physical size of one pixel along each image axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration<T> {
    pub mm_per_px_x: T,
    pub mm_per_px_y: T,
}

impl<T: Scalar> Calibration<T> {
    pub fn new(mm_per_px_x: T, mm_per_px_y: T) -> Result<Self, GeometryError> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        if !ok(mm_per_px_x) || !ok(mm_per_px_y) {
            return Err(GeometryError::InvalidCalibration);
        }
        Ok(Calibration {
            mm_per_px_x,
            mm_per_px_y,
        })
    }

    pub fn isotropic(mm_per_px: T) -> Result<Self, GeometryError> {
        Self::new(mm_per_px, mm_per_px)
    }

    /// One millimetre per pixel; distances then read directly in pixels.
    pub fn unit() -> Self {
        Calibration {
            mm_per_px_x: T::one(),
            mm_per_px_y: T::one(),
        }
    }

    pub fn diagonal(&self) -> T {
        self.mm_per_px_x.hypot(self.mm_per_px_y)
    }

    /// Calibrated Euclidean length of an integer displacement.
    #[inline]
    pub fn length(&self, dcol: i64, drow: i64) -> T {
        let dx = T::lit(dcol as f64) * self.mm_per_px_x;
        let dy = T::lit(drow as f64) * self.mm_per_px_y;
        dx.hypot(dy)
    }
}

/// Unordered set of pixel coordinates (boundary points for distance metrics).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PointSet2D {
    pub points: Vec<Pixel>,
}

impl PointSet2D {
    pub fn new(points: Vec<Pixel>) -> Self {
        PointSet2D { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl FromIterator<Pixel> for PointSet2D {
    fn from_iter<I: IntoIterator<Item = Pixel>>(iter: I) -> Self {
        PointSet2D::new(iter.into_iter().collect())
    }
}

/// Closed boundary cycle; consecutive points (cyclically) are 8-neighbours.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<Pixel>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Cyclic steps `(dcol, drow)` between consecutive points.
    pub fn steps(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let n = self.points.len();
        let count = if n < 2 { 0 } else { n };
        (0..count).map(move |i| {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            (b.col as i64 - a.col as i64, b.row as i64 - a.row as i64)
        })
    }
}

const NEIGHBOURS_8: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// 8-connected components, largest first. Ties keep raster order of each
/// component's first (top-left) pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<BinaryMask> {
    let (w, h) = (mask.width, mask.height);
    let mut label = vec![usize::MAX; w * h];
    let mut sizes: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..w * h {
        if !mask.bits[start] || label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        label[start] = id;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (c, r) = ((idx % w) as isize, (idx / w) as isize);
            for (dc, dr) in NEIGHBOURS_8 {
                let (nc, nr) = (c + dc, r + dr);
                if mask.get_signed(nc, nr) {
                    let n = nr as usize * w + nc as usize;
                    if label[n] == usize::MAX {
                        label[n] = id;
                        queue.push_back(n);
                    }
                }
            }
        }
        sizes.push(size);
    }

    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // stable: equal sizes stay in discovery (raster) order
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));

    let mut rank = vec![0; sizes.len()];
    for (pos, &id) in order.iter().enumerate() {
        rank[id] = pos;
    }
    let mut out: Vec<BinaryMask> = (0..sizes.len())
        .map(|_| BinaryMask {
            width: w,
            height: h,
            bits: vec![false; w * h],
        })
        .collect();
    for (idx, &id) in label.iter().enumerate() {
        if id != usize::MAX {
            out[rank[id]].bits[idx] = true;
        }
    }
    out
}

pub fn largest_component(mask: &BinaryMask) -> Option<BinaryMask> {
    connected_components(mask).into_iter().next()
}

/// Foreground pixels with at least one background or out-of-bounds 4-neighbour.
pub fn boundary_pixels(mask: &BinaryMask) -> PointSet2D {
    mask.foreground()
        .filter(|p| {
            let (c, r) = (p.col as isize, p.row as isize);
            !(mask.get_signed(c - 1, r)
                && mask.get_signed(c + 1, r)
                && mask.get_signed(c, r - 1)
                && mask.get_signed(c, r + 1))
        })
        .collect()
}

// Clockwise on screen (rows grow downwards): E, SE, S, SW, W, NW, N, NE.
const MOORE: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
const WEST: usize = 4;

/// Moore-neighbour tracing of the outer boundary of a single 8-connected blob.
///
/// Starts at the topmost-then-leftmost pixel and walks clockwise; stops when
/// the start pixel is about to be left in the same direction as the first
/// move (Jacob's criterion), so pixels on one-pixel-wide necks may appear
/// twice in the cycle.
pub fn trace_contour(component: &BinaryMask) -> Result<Contour, GeometryError> {
    let start = component.foreground().next().ok_or(GeometryError::EmptyMask)?;
    let n_components = connected_components(component).len();
    if n_components > 1 {
        return Err(GeometryError::NotSingleComponent(n_components));
    }

    // First clockwise foreground neighbour after `from` (exclusive).
    let next_from = |p: Pixel, from: usize| -> Option<(Pixel, usize)> {
        (1..=8).map(|k| (from + k) % 8).find_map(|d| {
            let (dc, dr) = MOORE[d];
            let (c, r) = (p.col as isize + dc, p.row as isize + dr);
            component
                .get_signed(c, r)
                .then(|| (Pixel::new(c as usize, r as usize), d))
        })
    };

    let mut points = vec![start];
    // every neighbour to the west and in the row above the start is background
    let Some((mut current, first_dir)) = next_from(start, WEST) else {
        return Ok(Contour { points });
    };
    let mut dir = first_dir;
    loop {
        // the last background pixel examined before `current`, seen from `current`
        let backtrack = if dir % 2 == 0 { (dir + 6) % 8 } else { (dir + 5) % 8 };
        let (next, next_dir) = next_from(current, backtrack).expect("a pixel reached by tracing has a neighbour");
        if current == start && next_dir == first_dir {
            break;
        }
        points.push(current);
        current = next;
        dir = next_dir;
    }
    Ok(Contour { points })
}

/// Freeman chain length: axial steps weigh one calibrated pixel, diagonal
/// steps the calibrated pixel diagonal.
pub fn chain_perimeter<T: Scalar>(contour: &Contour, calib: &Calibration<T>) -> T {
    let diag = calib.diagonal();
    contour
        .steps()
        .map(|(dc, dr)| match (dc != 0, dr != 0) {
            (true, true) => diag,
            (true, false) => calib.mm_per_px_x,
            (false, true) => calib.mm_per_px_y,
            (false, false) => T::zero(),
        })
        .sum()
}

pub fn pixel_area<T: Scalar>(mask: &BinaryMask, calib: &Calibration<T>) -> T {
    T::from_count(mask.count()) * calib.mm_per_px_x * calib.mm_per_px_y
}

/// Axis-aligned bounding-box extents `(width_mm, height_mm)`, inclusive of
/// both end pixels.
pub fn feret_extents<T: Scalar>(mask: &BinaryMask, calib: &Calibration<T>) -> Result<(T, T), GeometryError> {
    let mut it = mask.foreground();
    let first = it.next().ok_or(GeometryError::EmptyMask)?;
    let (mut c0, mut c1, mut r0, mut r1) = (first.col, first.col, first.row, first.row);
    for p in it {
        c0 = c0.min(p.col);
        c1 = c1.max(p.col);
        r0 = r0.min(p.row);
        r1 = r1.max(p.row);
    }
    Ok((
        T::from_count(c1 - c0 + 1) * calib.mm_per_px_x,
        T::from_count(r1 - r0 + 1) * calib.mm_per_px_y,
    ))
}
