//! Succinct quadtree storage.
//!
//! A tree over a `d`-dimensional grid of side `2^h` is serialized level by
//! level, one `2^d`-bit group per represented node, root first. A 1-bit at a
//! non-last level marks a nonempty child that owns the next group of the next
//! level; a 0-bit child is an empty subgrid. At the last level the group bits
//! are the cell values themselves. A group of all zeros is an impossible
//! configuration for a nonempty node and is reused to mark a *full* subgrid
//! (every cell set), so dense regions collapse to a single group.
//!
//! Navigation is constant time through a rank directory per level: the child
//! group index at level `t+1` is the rank of the pointing 1-bit among level
//! `t`'s bits.

use std::io::{Read, Write};

use crate::bits::{BitBuf, RankBits};
use crate::error::{Error, Result};
use crate::grid::{decode_codes, morton_encode, GridParams, MortonPath};

/// Ternary node value: empty subgrid, full subgrid, or mixed (internal).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeValue {
    Zero,
    One,
    Half,
}

/// Handle to a represented node: its depth and group index within the level.
/// Valid only for the tree that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId {
    level: usize,
    group: usize,
}

impl NodeId {
    pub fn level(&self) -> usize {
        self.level
    }
}

/// Result of descending one child edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Child {
    /// Nonempty child node (possibly a full leaf).
    Node(NodeId),
    /// Empty subgrid.
    Empty,
    /// Cell value at the last level.
    Cell(bool),
}

/// Immutable level-wise bit-group encoding of a quadtree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompactQuadtree {
    params: GridParams,
    /// One rank-indexed bit sequence per level; empty iff the tree is empty.
    levels: Vec<RankBits>,
    points: u128,
    has_full_leaves: bool,
}

impl CompactQuadtree {
    pub fn params(&self) -> GridParams {
        self.params
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Whether any all-zero group (full leaf) is present. Trees without full
    /// leaves are plain trees in the sense of the eager join engine.
    pub fn has_full_leaves(&self) -> bool {
        self.has_full_leaves
    }

    pub fn root(&self) -> Option<NodeId> {
        if self.is_empty() {
            None
        } else {
            Some(NodeId { level: 0, group: 0 })
        }
    }

    /// Value of the whole grid: `Zero` for an empty tree, otherwise the value
    /// of the root node.
    pub fn root_value(&self) -> NodeValue {
        match self.root() {
            None => NodeValue::Zero,
            Some(id) => self.value(id),
        }
    }

    fn group_ones(&self, id: NodeId) -> u64 {
        let fanout = self.params.fanout();
        let level = &self.levels[id.level];
        let start = id.group * fanout;
        level.rank1(start + fanout) - level.rank1(start)
    }

    /// Node value: `One` iff the subgrid is full (all-zero group), `Half`
    /// otherwise. Handles never denote empty subgrids.
    pub fn value(&self, id: NodeId) -> NodeValue {
        if self.group_ones(id) == 0 {
            NodeValue::One
        } else {
            NodeValue::Half
        }
    }

    /// Descend to child `i`. Must only be called on nodes with value `Half`.
    pub fn child_at(&self, id: NodeId, i: usize) -> Child {
        let fanout = self.params.fanout();
        assert!(i < fanout, "child index {i} out of range");
        assert!(
            self.value(id) == NodeValue::Half,
            "child_at called on a leaf node"
        );
        let level = &self.levels[id.level];
        let pos = id.group * fanout + i;
        let bit = level.get(pos);
        if id.level == self.params.height() - 1 {
            Child::Cell(bit)
        } else if !bit {
            Child::Empty
        } else {
            let group = (level.rank1(pos + 1) - 1) as usize;
            Child::Node(NodeId {
                level: id.level + 1,
                group,
            })
        }
    }

    /// Number of represented cells; full leaves are counted arithmetically.
    pub fn count(&self) -> u128 {
        self.points
    }

    /// Iterator over the represented cells in Morton order. Full leaves are
    /// expanded lazily.
    pub fn points(&self) -> Points<'_> {
        Points::new(self)
    }

    /// First `limit` cells (all of them when `limit` is `None`).
    pub fn enumerate(&self, limit: Option<usize>) -> Vec<Vec<u64>> {
        match limit {
            Some(k) => self.points().take(k).collect(),
            None => self.points().collect(),
        }
    }

    pub fn stats(&self) -> TreeStats {
        let fanout = self.params.fanout();
        let per_level = self
            .levels
            .iter()
            .map(|l| LevelStats {
                groups: l.len() / fanout,
                one_bits: l.count_ones(),
            })
            .collect::<Vec<_>>();
        let total_bits = per_level.iter().map(|l| l.groups * fanout).sum();
        let total_ones = per_level.iter().map(|l| l.one_bits).sum();
        TreeStats {
            per_level,
            total_bits,
            total_ones,
            points: self.points,
        }
    }

    fn recount(params: GridParams, levels: &[RankBits]) -> u128 {
        let fanout = params.fanout();
        let h = params.height();
        let mut total = 0u128;
        for (t, level) in levels.iter().enumerate() {
            let groups = level.len() / fanout;
            for g in 0..groups {
                let ones = level.rank1((g + 1) * fanout) - level.rank1(g * fanout);
                if ones == 0 {
                    total = total.saturating_add(cells_below(params.dims(), h - t));
                } else if t == h - 1 {
                    total += ones as u128;
                }
            }
        }
        total
    }

    fn scan_full_leaves(params: GridParams, levels: &[RankBits]) -> bool {
        let fanout = params.fanout();
        levels.iter().any(|level| {
            (0..level.len() / fanout)
                .any(|g| level.rank1((g + 1) * fanout) - level.rank1(g * fanout) == 0)
        })
    }

    /// Serialize in the QDX1 format.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        let h = self.params.height();
        w.write_all(b"QDX1")?;
        w.write_all(&[1u8, self.params.dims() as u8, h as u8])?;
        let flags: u8 = if self.is_empty() { 1 } else { 0 };
        w.write_all(&[flags])?;
        let points: u64 = self
            .points
            .try_into()
            .map_err(|_| Error::Format("point count exceeds u64".into()))?;
        w.write_all(&points.to_le_bytes())?;
        let fanout = self.params.fanout();
        for t in 0..h {
            let groups = self.levels.get(t).map_or(0, |l| l.len() / fanout) as u32;
            w.write_all(&groups.to_le_bytes())?;
        }
        for level in &self.levels {
            w.write_all(&level.to_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.save(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Load and validate a QDX1 payload, rebuilding the rank directories.
    pub fn load<R: Read>(r: &mut R) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|_| Error::Format("truncated header".into()))?;
        if &header[0..4] != b"QDX1" {
            return Err(Error::Format("bad magic, not a QDX1 index".into()));
        }
        if header[4] != 1 {
            return Err(Error::Format(format!("unsupported version {}", header[4])));
        }
        let params = GridParams::new(header[5] as usize, header[6] as usize)
            .map_err(|e| Error::Format(format!("bad grid parameters: {e}")))?;
        let flags = header[7];
        let points = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let h = params.height();
        let fanout = params.fanout();

        let mut counts = Vec::with_capacity(h);
        for _ in 0..h {
            let mut buf = [0u8; 4];
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format("truncated group counts".into()))?;
            counts.push(u32::from_le_bytes(buf) as usize);
        }
        let empty = flags & 1 == 1;
        if empty {
            if counts.iter().any(|&c| c != 0) || points != 0 {
                return Err(Error::Format("empty flag with nonzero content".into()));
            }
            let mut rest = Vec::new();
            r.read_to_end(&mut rest)?;
            if !rest.is_empty() {
                return Err(Error::Format("trailing bytes after empty index".into()));
            }
            return Ok(CompactQuadtree {
                params,
                levels: Vec::new(),
                points: 0,
                has_full_leaves: false,
            });
        }
        if counts[0] != 1 {
            return Err(Error::Format(format!(
                "level 0 must hold exactly one group, found {}",
                counts[0]
            )));
        }
        let mut levels = Vec::with_capacity(h);
        for &groups in &counts {
            let nbits = groups * fanout;
            let mut bytes = vec![0u8; nbits.div_ceil(8)];
            r.read_exact(&mut bytes)
                .map_err(|_| Error::Format("truncated level bits".into()))?;
            let buf = BitBuf::from_bytes(&bytes, nbits)
                .ok_or_else(|| Error::Format("corrupt level padding".into()))?;
            levels.push(RankBits::build(buf));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format("trailing bytes after level bits".into()));
        }
        // Link consistency: each 1-bit above the last level owns one group.
        for t in 0..h.saturating_sub(1) {
            let expected = levels[t].count_ones() as usize;
            if counts[t + 1] != expected {
                return Err(Error::Format(format!(
                    "level {} declares {} groups, level {} has {} one-bits",
                    t + 1,
                    counts[t + 1],
                    t,
                    expected
                )));
            }
        }
        let recount = Self::recount(params, &levels);
        if recount != points as u128 {
            return Err(Error::Format(format!(
                "header declares {points} points, bits encode {recount}"
            )));
        }
        let has_full_leaves = Self::scan_full_leaves(params, &levels);
        Ok(CompactQuadtree {
            params,
            levels,
            points: points as u128,
            has_full_leaves,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::load(&mut &bytes[..])
    }
}

fn cells_below(dims: usize, levels: usize) -> u128 {
    let bits = dims * levels;
    if bits >= 128 {
        u128::MAX
    } else {
        1u128 << bits
    }
}

/// Per-level size figures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelStats {
    pub groups: usize,
    pub one_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeStats {
    pub per_level: Vec<LevelStats>,
    pub total_bits: usize,
    pub total_ones: u64,
    pub points: u128,
}

/// Heap-shaped tree used as an output buffer before freezing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MutNode {
    Zero,
    One,
    Internal(Vec<MutNode>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutableQuadtree {
    params: GridParams,
    root: MutNode,
}

impl MutableQuadtree {
    pub fn new(params: GridParams) -> Self {
        MutableQuadtree {
            params,
            root: MutNode::Zero,
        }
    }

    pub fn from_node(params: GridParams, root: MutNode) -> Self {
        MutableQuadtree { params, root }
    }

    pub fn params(&self) -> GridParams {
        self.params
    }

    pub fn root(&self) -> &MutNode {
        &self.root
    }

    /// Set the cell addressed by a Morton path.
    pub fn insert(&mut self, path: &MortonPath) {
        fn ins(node: &mut MutNode, codes: &[u16], fanout: usize) {
            if codes.is_empty() {
                *node = MutNode::One;
                return;
            }
            match node {
                MutNode::One => {} // subgrid already full
                MutNode::Zero => {
                    *node = MutNode::Internal(vec![MutNode::Zero; fanout]);
                    ins(node, codes, fanout);
                }
                MutNode::Internal(children) => {
                    ins(&mut children[codes[0] as usize], &codes[1..], fanout);
                }
            }
        }
        debug_assert_eq!(path.codes().len(), self.params.height());
        ins(&mut self.root, path.codes(), self.params.fanout());
    }

    /// Bottom-up canonicalization: collapse all-zero children to an empty
    /// leaf and all-full children to a full leaf. Idempotent.
    pub fn canonicalize(&mut self) {
        fn canon(node: &mut MutNode) {
            if let MutNode::Internal(children) = node {
                for c in children.iter_mut() {
                    canon(c);
                }
                if children.iter().all(|c| matches!(c, MutNode::Zero)) {
                    *node = MutNode::Zero;
                } else if children.iter().all(|c| matches!(c, MutNode::One)) {
                    *node = MutNode::One;
                }
            }
        }
        canon(&mut self.root);
    }

    /// Canonicalize and freeze into the compact level-wise encoding.
    pub fn compact(mut self) -> CompactQuadtree {
        self.canonicalize();
        let params = self.params;
        let h = params.height();
        let fanout = params.fanout();

        enum Pending<'a> {
            Node(&'a [MutNode]),
            Full,
        }

        let mut current: Vec<Pending> = match &self.root {
            MutNode::Zero => Vec::new(),
            MutNode::One => vec![Pending::Full],
            MutNode::Internal(children) => vec![Pending::Node(children)],
        };
        if current.is_empty() {
            return CompactQuadtree {
                params,
                levels: Vec::new(),
                points: 0,
                has_full_leaves: false,
            };
        }

        let mut levels = Vec::with_capacity(h);
        for t in 0..h {
            let mut bits = BitBuf::new();
            let mut next = Vec::new();
            for entry in &current {
                match entry {
                    Pending::Full => {
                        for _ in 0..fanout {
                            bits.push(false);
                        }
                    }
                    Pending::Node(children) => {
                        debug_assert_eq!(children.len(), fanout);
                        for child in children.iter() {
                            match child {
                                MutNode::Zero => bits.push(false),
                                MutNode::One => {
                                    bits.push(true);
                                    if t < h - 1 {
                                        next.push(Pending::Full);
                                    }
                                }
                                MutNode::Internal(grand) => {
                                    debug_assert!(t < h - 1, "internal node below cell level");
                                    bits.push(true);
                                    next.push(Pending::Node(grand));
                                }
                            }
                        }
                    }
                }
            }
            levels.push(RankBits::build(bits));
            current = next;
        }
        debug_assert!(current.is_empty());

        let points = CompactQuadtree::recount(params, &levels);
        let has_full_leaves = CompactQuadtree::scan_full_leaves(params, &levels);
        CompactQuadtree {
            params,
            levels,
            points,
            has_full_leaves,
        }
    }

    /// Rebuild the mutable form of a compact tree by navigation.
    pub fn from_compact(tree: &CompactQuadtree) -> Self {
        fn rebuild(tree: &CompactQuadtree, id: NodeId) -> MutNode {
            match tree.value(id) {
                NodeValue::One => MutNode::One,
                NodeValue::Zero => unreachable!("handles never denote empty subgrids"),
                NodeValue::Half => {
                    let children = (0..tree.params().fanout())
                        .map(|i| match tree.child_at(id, i) {
                            Child::Empty => MutNode::Zero,
                            Child::Cell(false) => MutNode::Zero,
                            Child::Cell(true) => MutNode::One,
                            Child::Node(c) => rebuild(tree, c),
                        })
                        .collect();
                    MutNode::Internal(children)
                }
            }
        }
        let root = match tree.root() {
            None => MutNode::Zero,
            Some(id) => rebuild(tree, id),
        };
        MutableQuadtree {
            params: tree.params(),
            root,
        }
    }
}

/// Build the canonical tree of a point set. Duplicates collapse (relations
/// are sets).
pub fn build(points: &[Vec<u64>], params: GridParams) -> Result<CompactQuadtree> {
    let mut tree = MutableQuadtree::new(params);
    for point in points {
        let path = morton_encode(point, params)?;
        tree.insert(&path);
    }
    Ok(tree.compact())
}

enum Frame {
    Node { id: NodeId, next: usize },
    Full { next: usize },
}

/// Morton-order stream of cells; see [`CompactQuadtree::points`].
pub struct Points<'a> {
    tree: &'a CompactQuadtree,
    stack: Vec<Frame>,
    prefix: Vec<u16>,
}

impl<'a> Points<'a> {
    fn new(tree: &'a CompactQuadtree) -> Self {
        let stack = match tree.root() {
            None => Vec::new(),
            Some(id) => match tree.value(id) {
                NodeValue::One => vec![Frame::Full { next: 0 }],
                _ => vec![Frame::Node { id, next: 0 }],
            },
        };
        Points {
            tree,
            stack,
            prefix: Vec::new(),
        }
    }
}

impl<'a> Iterator for Points<'a> {
    type Item = Vec<u64>;

    fn next(&mut self) -> Option<Vec<u64>> {
        let params = self.tree.params();
        let fanout = params.fanout();
        let h = params.height();
        loop {
            let depth = self.stack.len().checked_sub(1)?;
            let frame = self.stack.last_mut()?;
            let next = match frame {
                Frame::Node { next, .. } | Frame::Full { next } => next,
            };
            if *next == fanout {
                self.stack.pop();
                self.prefix.pop();
                continue;
            }
            let i = *next;
            *next += 1;
            match self.stack.last().unwrap() {
                Frame::Node { id, .. } => match self.tree.child_at(*id, i) {
                    Child::Cell(true) => {
                        self.prefix.push(i as u16);
                        let point = decode_codes(&self.prefix, params).expect("full-length path");
                        self.prefix.pop();
                        return Some(point);
                    }
                    Child::Cell(false) | Child::Empty => continue,
                    Child::Node(cid) => {
                        self.prefix.push(i as u16);
                        let frame = match self.tree.value(cid) {
                            NodeValue::One => Frame::Full { next: 0 },
                            _ => Frame::Node { id: cid, next: 0 },
                        };
                        self.stack.push(frame);
                    }
                },
                Frame::Full { .. } => {
                    if depth == h - 1 {
                        self.prefix.push(i as u16);
                        let point = decode_codes(&self.prefix, params).expect("full-length path");
                        self.prefix.pop();
                        return Some(point);
                    }
                    self.prefix.push(i as u16);
                    self.stack.push(Frame::Full { next: 0 });
                }
            }
        }
    }
}
