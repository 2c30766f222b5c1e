//! Grid geometry: Morton paths for tuples and the child-index bit projection
//! used when a tree is lifted to a larger attribute set.
//!
//! A tuple over `d` attributes is a point on a `2^h x ... x 2^h` grid. Its
//! Morton path lists, per subdivision level, the child index formed by
//! concatenating one bit of every coordinate, most significant bits first.
//! Attribute 0 contributes the most significant bit of each child index, so
//! for `d = 2` the four children of a node cover, in order, the quadrants
//! `(0x, 0y)`, `(0x, 1y)`, `(1x, 0y)`, `(1x, 1y)`.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Hard cap on dimensions so a child group always fits a machine word.
pub const MAX_DIMS: usize = 16;

/// Hard cap on tree height so coordinates fit `u64`.
pub const MAX_HEIGHT: usize = 63;

/// Shape of the encoding grid: `d` attributes, `h` levels of subdivision,
/// side `2^h` per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridParams {
    dims: usize,
    height: usize,
}

impl GridParams {
    pub fn new(dims: usize, height: usize) -> Result<Self> {
        if dims == 0 || dims > MAX_DIMS {
            return Err(Error::InvalidGridParams(format!(
                "dimension count {dims} outside 1..={MAX_DIMS}"
            )));
        }
        if height == 0 || height > MAX_HEIGHT {
            return Err(Error::InvalidGridParams(format!(
                "height {height} outside 1..={MAX_HEIGHT}"
            )));
        }
        Ok(GridParams { dims, height })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Grid side `2^h`.
    pub fn side(&self) -> u64 {
        1u64 << self.height
    }

    /// Children per internal node, `2^d`.
    pub fn fanout(&self) -> usize {
        1usize << self.dims
    }
}

/// Root-to-cell path of child indices, one per level, each in `[0, 2^d)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MortonPath {
    codes: Vec<u16>,
}

impl MortonPath {
    pub fn codes(&self) -> &[u16] {
        &self.codes
    }
}

/// Encode a point as its Morton path.
///
/// The code at level `t` concatenates bit `h-1-t` of every coordinate,
/// attribute 0 in the most significant position.
pub fn morton_encode(point: &[u64], params: GridParams) -> Result<MortonPath> {
    if point.len() != params.dims() {
        return Err(Error::DimensionMismatch {
            expected: params.dims(),
            got: point.len(),
        });
    }
    for (attribute, &value) in point.iter().enumerate() {
        if value >= params.side() {
            return Err(Error::CoordinateOutOfRange {
                attribute,
                value,
                side: params.side(),
            });
        }
    }
    let d = params.dims();
    let h = params.height();
    let mut codes = Vec::with_capacity(h);
    for t in 0..h {
        let mut code = 0u16;
        for (j, &value) in point.iter().enumerate() {
            let bit = (value >> (h - 1 - t)) & 1;
            code |= (bit as u16) << (d - 1 - j);
        }
        codes.push(code);
    }
    Ok(MortonPath { codes })
}

/// Inverse of [`morton_encode`]: recover the point from its path.
pub fn morton_decode(path: &MortonPath, params: GridParams) -> Result<Vec<u64>> {
    decode_codes(&path.codes, params)
}

/// Decode a raw code sequence of length `h` back into coordinates.
pub fn decode_codes(codes: &[u16], params: GridParams) -> Result<Vec<u64>> {
    if codes.len() != params.height() {
        return Err(Error::DimensionMismatch {
            expected: params.height(),
            got: codes.len(),
        });
    }
    let d = params.dims();
    let mut point = vec![0u64; d];
    for &code in codes {
        for (j, coord) in point.iter_mut().enumerate() {
            let bit = (code >> (d - 1 - j)) & 1;
            *coord = (*coord << 1) | bit as u64;
        }
    }
    Ok(point)
}

/// Positions of an ordered attribute subset within a superset, with the
/// precomputed table mapping a `2^d` child index to the `2^{d'}` child index
/// obtained by keeping only the subset's bits.
///
/// The table is built on first use and cached; concurrent readers are fine
/// once built.
#[derive(Debug)]
pub struct AttributeMask {
    dims: usize,
    positions: Vec<usize>,
    table: OnceLock<Vec<u16>>,
}

impl AttributeMask {
    /// `positions` are the indices, strictly increasing, at which the subset
    /// attributes appear in the superset of `dims` attributes.
    pub fn new(dims: usize, positions: Vec<usize>) -> Result<Self> {
        if dims == 0 || dims > MAX_DIMS {
            return Err(Error::InvalidGridParams(format!(
                "dimension count {dims} outside 1..={MAX_DIMS}"
            )));
        }
        if positions.is_empty() {
            return Err(Error::Schema("attribute mask selects no attributes".into()));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) || *positions.last().unwrap() >= dims {
            return Err(Error::Schema(format!(
                "attribute mask positions {positions:?} not strictly increasing below {dims}"
            )));
        }
        Ok(AttributeMask {
            dims,
            positions,
            table: OnceLock::new(),
        })
    }

    /// Superset dimension count.
    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Subset dimension count.
    pub fn projected_dims(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    fn table(&self) -> &[u16] {
        self.table.get_or_init(|| {
            (0..1usize << self.dims)
                .map(|i| project_bits(i, self.dims, &self.positions))
                .collect()
        })
    }

    /// Project a child index through the mask via the cached table.
    pub fn project(&self, child: usize) -> usize {
        debug_assert!(child < 1 << self.dims);
        self.table()[child] as usize
    }
}

/// Bit extraction done directly: keep the bits of `child` at the masked
/// positions, order preserved. Attribute `j` lives at bit `d-1-j`.
fn project_bits(child: usize, dims: usize, positions: &[usize]) -> u16 {
    let dp = positions.len();
    let mut out = 0u16;
    for (k, &p) in positions.iter().enumerate() {
        let bit = (child >> (dims - 1 - p)) & 1;
        out |= (bit as u16) << (dp - 1 - k);
    }
    out
}

/// Project a child index in `[0, 2^d)` to the subset dimensions.
pub fn project_child_index(child: usize, mask: &AttributeMask) -> usize {
    mask.project(child)
}

/// Mask for `subset` inside `superset`, both sorted under the same global
/// attribute order.
pub fn mask_between(subset: &[usize], superset: &[usize]) -> Result<AttributeMask> {
    let mut positions = Vec::with_capacity(subset.len());
    for &a in subset {
        match superset.iter().position(|&b| b == a) {
            Some(p) => positions.push(p),
            None => {
                return Err(Error::Schema(format!(
                    "attribute {a} missing from target attribute set"
                )))
            }
        }
    }
    AttributeMask::new(superset.len(), positions)
}
