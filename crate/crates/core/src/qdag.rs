//! Qdags: a quadtree position plus a child-index mapping that simulates the
//! tree lifted to a larger attribute set without materializing it.
//!
//! A qdag over attributes `A` (with `|A| = d`) navigates a base tree of
//! dimension `d' <= d` through a map of `2^d` entries: child `i` of the
//! virtual node is child `map[i]` of the base node, under the same map. The
//! identity map makes a qdag of any plain tree; `extend` composes a bit
//! projection into the map to add attributes, in `O(2^d)` time regardless of
//! relation size.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::grid::mask_between;
use crate::quadtree::{Child, CompactQuadtree, NodeId, NodeValue};

/// Position of a qdag inside its base tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasePos {
    Node(NodeId),
    Empty,
    Cell(bool),
}

/// A base-tree position, a child mapping, and the virtual attribute set.
#[derive(Clone)]
pub struct Qdag<'t> {
    tree: &'t CompactQuadtree,
    base: BasePos,
    map: Rc<[u16]>,
    /// Virtual attribute set, sorted under the global attribute order.
    attrs: Rc<[usize]>,
}

impl<'t> Qdag<'t> {
    /// Identity qdag: the completion is the base tree itself. `attrs` names
    /// the tree's dimensions, one per attribute, sorted.
    pub fn from_tree(tree: &'t CompactQuadtree, attrs: &[usize]) -> Result<Self> {
        if attrs.len() != tree.params().dims() {
            return Err(Error::Schema(format!(
                "relation has {} attributes but its tree stores {} dimensions",
                attrs.len(),
                tree.params().dims()
            )));
        }
        if attrs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Schema(
                "attribute sets must be sorted and duplicate-free".into(),
            ));
        }
        let fanout = tree.params().fanout();
        let base = match tree.root() {
            None => BasePos::Empty,
            Some(id) => BasePos::Node(id),
        };
        Ok(Qdag {
            tree,
            base,
            map: (0..fanout as u16).collect(),
            attrs: attrs.into(),
        })
    }

    pub fn attrs(&self) -> &[usize] {
        &self.attrs
    }

    pub fn base_tree(&self) -> &'t CompactQuadtree {
        self.tree
    }

    pub fn map(&self) -> &[u16] {
        &self.map
    }

    /// Fan-out of the virtual tree, `2^{|attrs|}`.
    pub fn fanout(&self) -> usize {
        1usize << self.attrs.len()
    }

    pub fn value(&self) -> NodeValue {
        match self.base {
            BasePos::Empty => NodeValue::Zero,
            BasePos::Cell(b) => {
                if b {
                    NodeValue::One
                } else {
                    NodeValue::Zero
                }
            }
            BasePos::Node(id) => self.tree.value(id),
        }
    }

    /// Child `i` of the virtual node: child `map[i]` of the base node, same
    /// map. Must only be called when `value()` is `Half`.
    pub fn child_at(&self, i: usize) -> Qdag<'t> {
        assert!(i < self.fanout(), "child index {i} out of range");
        let id = match self.base {
            BasePos::Node(id) => id,
            _ => panic!("child_at called on a leaf qdag"),
        };
        let base = match self.tree.child_at(id, self.map[i] as usize) {
            Child::Node(c) => BasePos::Node(c),
            Child::Empty => BasePos::Empty,
            Child::Cell(b) => BasePos::Cell(b),
        };
        Qdag {
            tree: self.tree,
            base,
            map: Rc::clone(&self.map),
            attrs: Rc::clone(&self.attrs),
        }
    }

    /// Lift to a superset of attributes: the completion becomes the relation
    /// crossed with every value of the new attributes.
    pub fn extend(&self, target: &[usize]) -> Result<Qdag<'t>> {
        Ok(self.extend_instrumented(target)?.0)
    }

    /// Same as [`Qdag::extend`], also reporting the number of map writes
    /// performed (always `2^{|target|}`).
    pub fn extend_instrumented(&self, target: &[usize]) -> Result<(Qdag<'t>, usize)> {
        if target.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Schema(
                "attribute sets must be sorted and duplicate-free".into(),
            ));
        }
        let mask = mask_between(&self.attrs, target)?;
        let fanout = 1usize << target.len();
        let mut map = Vec::with_capacity(fanout);
        let mut writes = 0usize;
        for i in 0..fanout {
            map.push(self.map[mask.project(i)]);
            writes += 1;
        }
        Ok((
            Qdag {
                tree: self.tree,
                base: self.base,
                map: map.into(),
                attrs: target.into(),
            },
            writes,
        ))
    }
}
