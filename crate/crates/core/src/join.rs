//! Eager multiway intersection of qdags and the multijoin driver.
//!
//! `and_n` walks all operands in lockstep over the virtual output grid,
//! emitting a node only while every operand is nonempty, and prunes subtrees
//! whose children all come back empty. `multijoin` lifts each relation to the
//! union attribute set first, so the intersection of the lifted trees is
//! exactly the join. Work is instrumented as [`JoinStats`]: the width of the
//! widest level of the non-pruned recursion tree is the quantity the output
//! size of the query bounds.

use std::collections::BTreeSet;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::grid::GridParams;
use crate::qdag::Qdag;
use crate::quadtree::{CompactQuadtree, MutNode, MutableQuadtree, NodeValue};

/// Work accounting for one evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinStats {
    /// Nonzero recursion nodes generated per depth (`0..=h`; depth `h` counts
    /// output cells).
    pub per_level: Vec<u64>,
    /// Total nonzero recursion nodes, the non-pruned output size.
    pub nodes_expanded: u64,
    /// Widest level of the non-pruned recursion tree.
    pub max_level_width: u64,
    /// Child evaluations performed: fan-out per expanded node.
    pub recursion_steps: u64,
}

#[derive(Debug)]
pub(crate) struct StatsRecorder {
    per_level: Vec<u64>,
    steps: u64,
}

impl StatsRecorder {
    pub(crate) fn new(height: usize) -> Self {
        StatsRecorder {
            per_level: vec![0; height + 1],
            steps: 0,
        }
    }

    /// A recursion node whose value is not zero.
    pub(crate) fn nonzero(&mut self, depth: usize) {
        self.per_level[depth] += 1;
    }

    /// A recursion node that generates children.
    pub(crate) fn expanded(&mut self, fanout: usize) {
        self.steps += fanout as u64;
    }

    pub(crate) fn finish(self) -> JoinStats {
        let nodes_expanded = self.per_level.iter().sum();
        let max_level_width = self.per_level.iter().copied().max().unwrap_or(0);
        JoinStats {
            per_level: self.per_level,
            nodes_expanded,
            max_level_width,
            recursion_steps: self.steps,
        }
    }
}

impl JoinStats {
    pub(crate) fn merge(&mut self, other: &JoinStats) {
        if self.per_level.len() < other.per_level.len() {
            self.per_level.resize(other.per_level.len(), 0);
        }
        for (a, b) in self.per_level.iter_mut().zip(&other.per_level) {
            *a += b;
        }
        self.nodes_expanded = self.per_level.iter().sum();
        self.max_level_width = self.per_level.iter().copied().max().unwrap_or(0);
        self.recursion_steps += other.recursion_steps;
    }
}

fn check_operands(qdags: &[Qdag<'_>]) -> Result<(GridParams, usize)> {
    let first = &qdags[0];
    let height = first.base_tree().params().height();
    for q in qdags {
        if q.attrs() != first.attrs() {
            return Err(Error::Schema(format!(
                "operands cover different attribute sets {:?} vs {:?}",
                first.attrs(),
                q.attrs()
            )));
        }
        if q.base_tree().params().height() != height {
            return Err(Error::Schema(format!(
                "operands use different grid heights {} vs {}",
                height,
                q.base_tree().params().height()
            )));
        }
        if q.base_tree().has_full_leaves() {
            return Err(Error::Schema(
                "eager intersection requires plain trees; trees with full \
                 leaves are evaluated lazily"
                    .into(),
            ));
        }
    }
    let params = GridParams::new(first.attrs().len(), height)?;
    Ok((params, first.attrs().len()))
}

/// Intersect the completions of qdags sharing one attribute set, freezing
/// the canonical output tree.
pub fn and_n(qdags: &[Qdag<'_>]) -> Result<(CompactQuadtree, JoinStats)> {
    if qdags.is_empty() {
        return Err(Error::Schema(
            "intersection of zero operands is not defined".into(),
        ));
    }
    let (params, _) = check_operands(qdags)?;
    let h = params.height();
    let fanout = params.fanout();
    let mut stats = StatsRecorder::new(h);

    fn rec(
        qdags: &[Qdag<'_>],
        depth: usize,
        h: usize,
        fanout: usize,
        stats: &mut StatsRecorder,
    ) -> MutNode {
        if qdags.iter().any(|q| q.value() == NodeValue::Zero) {
            return MutNode::Zero;
        }
        if depth == h {
            // Cells: every operand holds a set cell here.
            stats.nonzero(depth);
            return MutNode::One;
        }
        debug_assert!(qdags.iter().all(|q| q.value() == NodeValue::Half));
        stats.nonzero(depth);
        stats.expanded(fanout);
        let children: Vec<MutNode> = (0..fanout)
            .map(|i| {
                let kids: Vec<Qdag<'_>> = qdags.iter().map(|q| q.child_at(i)).collect();
                rec(&kids, depth + 1, h, fanout, stats)
            })
            .collect();
        // Pruning: a node whose children all vanished is an empty leaf.
        if children.iter().all(|c| matches!(c, MutNode::Zero)) {
            return MutNode::Zero;
        }
        MutNode::Internal(children)
    }

    let root = rec(qdags, 0, h, fanout, &mut stats);
    let tree = MutableQuadtree::from_node(params, root).compact();
    Ok((tree, stats.finish()))
}

/// Natural join of relations stored as trees: lift every operand to the
/// union attribute set, then intersect. Inputs holding full leaves are routed
/// through the lazy evaluator, which handles generalized leaf values.
pub fn multijoin(
    relations: &[(Rc<CompactQuadtree>, Vec<usize>)],
) -> Result<(CompactQuadtree, JoinStats)> {
    if relations.is_empty() {
        return Err(Error::Schema(
            "join of zero relations is not defined".into(),
        ));
    }
    let height = relations[0].0.params().height();
    for (tree, _) in relations {
        if tree.params().height() != height {
            return Err(Error::Schema(format!(
                "relations use different grid heights {} vs {}",
                height,
                tree.params().height()
            )));
        }
    }
    let attrs: Vec<usize> = relations
        .iter()
        .flat_map(|(_, a)| a.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    if relations.iter().any(|(tree, _)| tree.has_full_leaves()) {
        return crate::lqdag::eval_join_lazy(relations, &attrs);
    }

    let mut qdags = Vec::with_capacity(relations.len());
    for (tree, rel_attrs) in relations {
        qdags.push(Qdag::from_tree(tree, rel_attrs)?.extend(&attrs)?);
    }
    and_n(&qdags)
}
