//! Lazy evaluation of join/union/complement formulas.
//!
//! A formula is compiled into an expression tree of functors QTREE, NOT,
//! AND, OR and EXTEND whose nodes can be navigated like a quadtree: `lvalue`
//! reports whether the subgrid a node denotes is empty, full, mixed, or not
//! yet determined (the diamond value, for AND/OR nodes whose operands are
//! both undecided), and `lchild_at` produces the expression for one child.
//! Child expressions are deferred: building one touches no base tree, and a
//! zero or one discovered on one operand prunes whole octants of the output
//! without the other operands ever being read. `scompletion` unfolds the
//! expression into the non-pruned output tree, treating diamonds as mixed,
//! and a final compaction yields the canonical result.
//!
//! NOT is only ever applied to stored trees: normalization rewrites JOIN and
//! DIFF into the core functors and pushes complements down to the leaves,
//! cancelling double negations on the way.

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::rc::Rc;

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::grid::{mask_between, AttributeMask, GridParams};
use crate::join::{JoinStats, StatsRecorder};
use crate::qdag::BasePos;
use crate::quadtree::{Child, CompactQuadtree, MutNode, MutableQuadtree, NodeValue};
use crate::query::QueryAst;

/// Node value of a lazy expression. `Diamond` marks a node whose value only
/// its children can decide; the super-completion treats it as mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LazyValue {
    Zero,
    One,
    Half,
    Diamond,
}

fn from_node_value(v: NodeValue) -> LazyValue {
    match v {
        NodeValue::Zero => LazyValue::Zero,
        NodeValue::One => LazyValue::One,
        NodeValue::Half => LazyValue::Half,
    }
}

/// Per-base-tree access counts for one evaluation, bucketed by the top-level
/// output child being processed when the access happened.
#[derive(Debug, Clone, Default)]
pub struct AccessCounters {
    totals: Vec<u64>,
    per_octant: Vec<BTreeMap<usize, u64>>,
}

impl AccessCounters {
    fn new(trees: usize) -> Self {
        AccessCounters {
            totals: vec![0; trees],
            per_octant: vec![BTreeMap::new(); trees],
        }
    }

    pub fn tree_count(&self) -> usize {
        self.totals.len()
    }

    /// All accesses to one base tree.
    pub fn total(&self, tree: usize) -> u64 {
        self.totals[tree]
    }

    /// Accesses to one base tree made while the evaluation was inside the
    /// given top-level child of the output grid.
    pub fn under_octant(&self, tree: usize, octant: usize) -> u64 {
        self.per_octant[tree].get(&octant).copied().unwrap_or(0)
    }

    fn append(&mut self, other: AccessCounters) {
        self.totals.extend(other.totals);
        self.per_octant.extend(other.per_octant);
    }
}

/// Evaluation context: shared counters plus the current output octant.
pub struct EvalCtx {
    counters: RefCell<AccessCounters>,
    octant: Cell<Option<usize>>,
}

impl EvalCtx {
    pub fn new(trees: usize) -> Self {
        EvalCtx {
            counters: RefCell::new(AccessCounters::new(trees)),
            octant: Cell::new(None),
        }
    }

    fn record(&self, tree: usize) {
        let mut c = self.counters.borrow_mut();
        c.totals[tree] += 1;
        if let Some(o) = self.octant.get() {
            *c.per_octant[tree].entry(o).or_insert(0) += 1;
        }
    }

    fn set_octant(&self, octant: Option<usize>) {
        self.octant.set(octant);
    }

    pub fn into_counters(self) -> AccessCounters {
        self.counters.into_inner()
    }
}

/// A navigable position inside one base tree.
#[derive(Clone)]
struct TreePos {
    tree: Rc<CompactQuadtree>,
    tree_idx: usize,
    base: BasePos,
}

impl TreePos {
    fn root(tree: Rc<CompactQuadtree>, tree_idx: usize) -> Self {
        let base = match tree.root() {
            None => BasePos::Empty,
            Some(id) => BasePos::Node(id),
        };
        TreePos {
            tree,
            tree_idx,
            base,
        }
    }

    fn value(&self, ctx: &EvalCtx) -> NodeValue {
        match self.base {
            BasePos::Empty => NodeValue::Zero,
            BasePos::Cell(b) => {
                if b {
                    NodeValue::One
                } else {
                    NodeValue::Zero
                }
            }
            BasePos::Node(id) => {
                ctx.record(self.tree_idx);
                self.tree.value(id)
            }
        }
    }

    fn child(&self, i: usize, ctx: &EvalCtx) -> TreePos {
        let id = match self.base {
            BasePos::Node(id) => id,
            _ => panic!("child of a leaf tree position"),
        };
        ctx.record(self.tree_idx);
        let base = match self.tree.child_at(id, i) {
            Child::Node(c) => BasePos::Node(c),
            Child::Empty => BasePos::Empty,
            Child::Cell(b) => BasePos::Cell(b),
        };
        TreePos {
            tree: Rc::clone(&self.tree),
            tree_idx: self.tree_idx,
            base,
        }
    }
}

#[derive(Clone)]
enum Fnode {
    QTree(TreePos),
    Not(TreePos),
    And(LqdagExpr, LqdagExpr),
    Or(LqdagExpr, LqdagExpr),
    Extend(LqdagExpr, Rc<AttributeMask>),
}

enum ExprState {
    Resolved(Fnode),
    /// Deferred child: resolved on demand so that pruned octants never touch
    /// the operand trees.
    ChildOf(LqdagExpr, usize),
}

struct ExprInner {
    attrs: Rc<[usize]>,
    height: usize,
    /// Functor count, used to order operand evaluation (cheapest first).
    size: usize,
    /// Whether the expression bottoms out in a single tree position.
    atomic: bool,
    state: RefCell<ExprState>,
    value: Cell<Option<LazyValue>>,
}

/// Lazy expression handle; clones share the node and its memoized state.
#[derive(Clone)]
pub struct LqdagExpr {
    inner: Rc<ExprInner>,
}

fn check_attrs(attrs: &[usize]) -> Result<()> {
    if attrs.is_empty() || attrs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Schema(
            "attribute sets must be nonempty, sorted and duplicate-free".into(),
        ));
    }
    Ok(())
}

impl LqdagExpr {
    fn direct(
        attrs: Rc<[usize]>,
        height: usize,
        size: usize,
        atomic: bool,
        node: Fnode,
    ) -> LqdagExpr {
        LqdagExpr {
            inner: Rc::new(ExprInner {
                attrs,
                height,
                size,
                atomic,
                state: RefCell::new(ExprState::Resolved(node)),
                value: Cell::new(None),
            }),
        }
    }

    pub fn qtree(tree: Rc<CompactQuadtree>, tree_idx: usize, attrs: &[usize]) -> Result<LqdagExpr> {
        check_attrs(attrs)?;
        if attrs.len() != tree.params().dims() {
            return Err(Error::Schema(format!(
                "{} attributes over a {}-dimensional tree",
                attrs.len(),
                tree.params().dims()
            )));
        }
        let height = tree.params().height();
        let pos = TreePos::root(tree, tree_idx);
        Ok(Self::direct(
            attrs.into(),
            height,
            1,
            true,
            Fnode::QTree(pos),
        ))
    }

    /// Complement of a stored tree over the full grid of its attribute set.
    pub fn not(tree: Rc<CompactQuadtree>, tree_idx: usize, attrs: &[usize]) -> Result<LqdagExpr> {
        check_attrs(attrs)?;
        if attrs.len() != tree.params().dims() {
            return Err(Error::Schema(format!(
                "{} attributes over a {}-dimensional tree",
                attrs.len(),
                tree.params().dims()
            )));
        }
        let height = tree.params().height();
        let pos = TreePos::root(tree, tree_idx);
        Ok(Self::direct(attrs.into(), height, 1, true, Fnode::Not(pos)))
    }

    pub fn and(a: LqdagExpr, b: LqdagExpr) -> Result<LqdagExpr> {
        Self::binary(a, b, true)
    }

    pub fn or(a: LqdagExpr, b: LqdagExpr) -> Result<LqdagExpr> {
        Self::binary(a, b, false)
    }

    fn binary(a: LqdagExpr, b: LqdagExpr, is_and: bool) -> Result<LqdagExpr> {
        if a.attrs() != b.attrs() {
            return Err(Error::Schema(format!(
                "operands cover different attribute sets {:?} vs {:?}",
                a.attrs(),
                b.attrs()
            )));
        }
        if a.inner.height != b.inner.height {
            return Err(Error::Schema("operands use different grid heights".into()));
        }
        let attrs = Rc::clone(&a.inner.attrs);
        let height = a.inner.height;
        let size = 1 + a.inner.size + b.inner.size;
        let node = if is_and {
            Fnode::And(a, b)
        } else {
            Fnode::Or(a, b)
        };
        Ok(Self::direct(attrs, height, size, false, node))
    }

    /// Lift to a superset of attributes. Lifting to the same set is the
    /// expression itself.
    pub fn extend(inner: LqdagExpr, target: &[usize]) -> Result<LqdagExpr> {
        check_attrs(target)?;
        if target == inner.attrs() {
            return Ok(inner);
        }
        let mask = Rc::new(mask_between(inner.attrs(), target)?);
        let height = inner.inner.height;
        let size = 1 + inner.inner.size;
        let atomic = inner.inner.atomic;
        Ok(Self::direct(
            target.into(),
            height,
            size,
            atomic,
            Fnode::Extend(inner, mask),
        ))
    }

    fn deferred(parent: &LqdagExpr, index: usize) -> LqdagExpr {
        LqdagExpr {
            inner: Rc::new(ExprInner {
                attrs: Rc::clone(&parent.inner.attrs),
                height: parent.inner.height,
                size: parent.inner.size,
                atomic: parent.inner.atomic,
                state: RefCell::new(ExprState::ChildOf(parent.clone(), index)),
                value: Cell::new(None),
            }),
        }
    }

    pub fn attrs(&self) -> &[usize] {
        &self.inner.attrs
    }

    pub fn height(&self) -> usize {
        self.inner.height
    }

    pub fn fanout(&self) -> usize {
        1usize << self.inner.attrs.len()
    }

    /// Parenthesized rendering of the functor tree, for inspection. Deferred
    /// children render as `(CHILD i ...)` until resolved.
    pub fn shape(&self, labels: &[String]) -> String {
        let label = |idx: usize| {
            labels
                .get(idx)
                .cloned()
                .unwrap_or_else(|| format!("t{idx}"))
        };
        match &*self.inner.state.borrow() {
            ExprState::ChildOf(p, i) => format!("(CHILD {i} {})", p.shape(labels)),
            ExprState::Resolved(node) => match node {
                Fnode::QTree(pos) => format!("(QTREE {})", label(pos.tree_idx)),
                Fnode::Not(pos) => format!("(NOT {})", label(pos.tree_idx)),
                Fnode::And(a, b) => format!("(AND {} {})", a.shape(labels), b.shape(labels)),
                Fnode::Or(a, b) => format!("(OR {} {})", a.shape(labels), b.shape(labels)),
                Fnode::Extend(inner, _) => format!("(EXTEND {})", inner.shape(labels)),
            },
        }
    }
}

fn resolve(e: &LqdagExpr, ctx: &EvalCtx) -> Fnode {
    {
        let state = e.inner.state.borrow();
        if let ExprState::Resolved(node) = &*state {
            return node.clone();
        }
    }
    let (parent, index) = {
        let state = e.inner.state.borrow();
        match &*state {
            ExprState::ChildOf(p, i) => (p.clone(), *i),
            ExprState::Resolved(_) => unreachable!(),
        }
    };
    let node = resolve_child(&parent, index, ctx);
    *e.inner.state.borrow_mut() = ExprState::Resolved(node.clone());
    node
}

/// One step of the per-functor child rules, with determined operands dropped.
fn resolve_child(parent: &LqdagExpr, i: usize, ctx: &EvalCtx) -> Fnode {
    match resolve(parent, ctx) {
        Fnode::QTree(pos) => Fnode::QTree(pos.child(i, ctx)),
        Fnode::Not(pos) => Fnode::Not(pos.child(i, ctx)),
        Fnode::Extend(inner, mask) => {
            let inner_child = LqdagExpr::deferred(&inner, mask.project(i));
            Fnode::Extend(inner_child, mask)
        }
        Fnode::And(a, b) => {
            // The parent was descended, so both operand values are memoized.
            let va = lvalue(&a, ctx);
            let vb = lvalue(&b, ctx);
            if va == LazyValue::One {
                resolve_child(&b, i, ctx)
            } else if vb == LazyValue::One {
                resolve_child(&a, i, ctx)
            } else {
                Fnode::And(LqdagExpr::deferred(&a, i), LqdagExpr::deferred(&b, i))
            }
        }
        Fnode::Or(a, b) => {
            let va = lvalue(&a, ctx);
            let vb = lvalue(&b, ctx);
            if va == LazyValue::Zero {
                resolve_child(&b, i, ctx)
            } else if vb == LazyValue::Zero {
                resolve_child(&a, i, ctx)
            } else {
                Fnode::Or(LqdagExpr::deferred(&a, i), LqdagExpr::deferred(&b, i))
            }
        }
    }
}

/// Cheapest-first operand order: expressions that bottom out in a single
/// tree position come first, then by functor count.
fn eval_order<'x>(a: &'x LqdagExpr, b: &'x LqdagExpr) -> (&'x LqdagExpr, &'x LqdagExpr) {
    let ka = (!a.inner.atomic, a.inner.size);
    let kb = (!b.inner.atomic, b.inner.size);
    if kb < ka {
        (b, a)
    } else {
        (a, b)
    }
}

/// Lazy node value, memoized per expression node.
pub fn lvalue(e: &LqdagExpr, ctx: &EvalCtx) -> LazyValue {
    if let Some(v) = e.inner.value.get() {
        return v;
    }
    let node = resolve(e, ctx);
    let v = match &node {
        Fnode::QTree(pos) => from_node_value(pos.value(ctx)),
        Fnode::Not(pos) => match pos.value(ctx) {
            NodeValue::Zero => LazyValue::One,
            NodeValue::One => LazyValue::Zero,
            NodeValue::Half => LazyValue::Half,
        },
        Fnode::Extend(inner, _) => lvalue(inner, ctx),
        Fnode::And(a, b) => {
            let (x, y) = eval_order(a, b);
            let vx = lvalue(x, ctx);
            if vx == LazyValue::Zero {
                LazyValue::Zero
            } else {
                let vy = lvalue(y, ctx);
                if vy == LazyValue::Zero {
                    LazyValue::Zero
                } else if vx == LazyValue::One {
                    vy
                } else if vy == LazyValue::One {
                    vx
                } else {
                    LazyValue::Diamond
                }
            }
        }
        Fnode::Or(a, b) => {
            let (x, y) = eval_order(a, b);
            let vx = lvalue(x, ctx);
            if vx == LazyValue::One {
                LazyValue::One
            } else {
                let vy = lvalue(y, ctx);
                if vy == LazyValue::One {
                    LazyValue::One
                } else if vx == LazyValue::Zero {
                    vy
                } else if vy == LazyValue::Zero {
                    vx
                } else {
                    LazyValue::Diamond
                }
            }
        }
    };
    e.inner.value.set(Some(v));
    v
}

/// Expression for child `i`. Construction is free of tree accesses; the
/// functor rules apply when the child is first evaluated. Must only be
/// called on nodes whose value is mixed or undetermined.
pub fn lchild_at(e: &LqdagExpr, i: usize) -> LqdagExpr {
    assert!(i < e.fanout(), "child index {i} out of range");
    if let Some(v) = e.inner.value.get() {
        assert!(
            matches!(v, LazyValue::Half | LazyValue::Diamond),
            "child of a node with determined value {v:?}"
        );
    }
    LqdagExpr::deferred(e, i)
}

/// Unfold the expression into its non-pruned output tree, treating diamonds
/// as mixed. Returns the buffer (callers compact it) and work stats.
pub fn scompletion(e: &LqdagExpr, ctx: &EvalCtx) -> (MutableQuadtree, JoinStats) {
    let params = GridParams::new(e.attrs().len(), e.inner.height)
        .expect("expression dimensions validated at construction");
    let mut rec = StatsRecorder::new(params.height());

    fn sc(
        e: &LqdagExpr,
        depth: usize,
        h: usize,
        fanout: usize,
        ctx: &EvalCtx,
        rec: &mut StatsRecorder,
    ) -> MutNode {
        match lvalue(e, ctx) {
            LazyValue::Zero => MutNode::Zero,
            LazyValue::One => {
                rec.nonzero(depth);
                MutNode::One
            }
            LazyValue::Half | LazyValue::Diamond => {
                assert!(depth < h, "undetermined value at cell level");
                rec.nonzero(depth);
                rec.expanded(fanout);
                let children = (0..fanout)
                    .map(|i| {
                        if depth == 0 {
                            ctx.set_octant(Some(i));
                        }
                        let child = lchild_at(e, i);
                        sc(&child, depth + 1, h, fanout, ctx, rec)
                    })
                    .collect();
                if depth == 0 {
                    ctx.set_octant(None);
                }
                MutNode::Internal(children)
            }
        }
    }

    let root = sc(e, 0, params.height(), params.fanout(), ctx, &mut rec);
    (MutableQuadtree::from_node(params, root), rec.finish())
}

/// Registry of the base trees a formula reads, one entry per distinct
/// relation label.
#[derive(Default)]
pub struct AtomTable {
    labels: Vec<String>,
    trees: Vec<Rc<CompactQuadtree>>,
}

impl AtomTable {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn intern(&mut self, label: &str, tree: &Rc<CompactQuadtree>) -> usize {
        if let Some(i) = self.labels.iter().position(|l| l == label) {
            return i;
        }
        self.labels.push(label.to_string());
        self.trees.push(Rc::clone(tree));
        self.labels.len() - 1
    }
}

pub struct Normalized {
    pub expr: LqdagExpr,
    pub atoms: AtomTable,
}

type MatAtom = (String, Rc<CompactQuadtree>, Vec<usize>);

fn lookup_relation(
    catalog: &Catalog,
    mats: &[MatAtom],
    name: &str,
) -> Option<(Rc<CompactQuadtree>, Vec<usize>)> {
    mats.iter()
        .find(|(l, _, _)| l == name)
        .map(|(_, t, a)| (Rc::clone(t), a.clone()))
        .or_else(|| {
            catalog
                .relation(name)
                .map(|r| (Rc::clone(r.tree()), r.attrs().to_vec()))
        })
}

fn union_attrs(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                out.push(x);
                i += 1;
                j += 1;
            }
            (Some(&x), Some(&y)) if x < y => {
                out.push(x);
                i += 1;
            }
            (Some(_), Some(&y)) => {
                out.push(y);
                j += 1;
            }
            (Some(&x), None) => {
                out.push(x);
                i += 1;
            }
            (None, Some(&y)) => {
                out.push(y);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

fn require_equal_attrs(a: &LqdagExpr, b: &LqdagExpr, op: &str) -> Result<()> {
    if a.attrs() != b.attrs() {
        return Err(Error::Schema(format!(
            "{op} operands cover different attribute sets {:?} vs {:?}; \
             they are not auto-extended",
            a.attrs(),
            b.attrs()
        )));
    }
    Ok(())
}

fn build_expr(
    ast: &QueryAst,
    negate: bool,
    catalog: &Catalog,
    mats: &[MatAtom],
    atoms: &mut AtomTable,
) -> Result<LqdagExpr> {
    match ast {
        QueryAst::Relation(name) => {
            let (tree, attrs) = lookup_relation(catalog, mats, name)
                .ok_or_else(|| Error::Schema(format!("unknown relation {name}")))?;
            let idx = atoms.intern(name, &tree);
            if negate {
                LqdagExpr::not(tree, idx, &attrs)
            } else {
                LqdagExpr::qtree(tree, idx, &attrs)
            }
        }
        QueryAst::Not(inner) => build_expr(inner, !negate, catalog, mats, atoms),
        QueryAst::And(list) => {
            let mut exprs = Vec::with_capacity(list.len());
            for item in list {
                exprs.push(build_expr(item, negate, catalog, mats, atoms)?);
            }
            let mut it = exprs.into_iter();
            let mut acc = it.next().expect("parser enforces arity");
            for rhs in it {
                require_equal_attrs(&acc, &rhs, "AND")?;
                acc = if negate {
                    LqdagExpr::or(acc, rhs)?
                } else {
                    LqdagExpr::and(acc, rhs)?
                };
            }
            Ok(acc)
        }
        QueryAst::Or(a, b) => {
            let l = build_expr(a, negate, catalog, mats, atoms)?;
            let r = build_expr(b, negate, catalog, mats, atoms)?;
            require_equal_attrs(&l, &r, "OR")?;
            if negate {
                LqdagExpr::and(l, r)
            } else {
                LqdagExpr::or(l, r)
            }
        }
        QueryAst::Join(list) => {
            let mut it = list.iter();
            let mut acc = build_expr(
                it.next().expect("parser enforces arity"),
                negate,
                catalog,
                mats,
                atoms,
            )?;
            for item in it {
                let rhs = build_expr(item, negate, catalog, mats, atoms)?;
                let target = union_attrs(acc.attrs(), rhs.attrs());
                if target.len() > crate::grid::MAX_DIMS {
                    return Err(Error::Schema(format!(
                        "join spans {} attributes, more than the supported {}",
                        target.len(),
                        crate::grid::MAX_DIMS
                    )));
                }
                let l = LqdagExpr::extend(acc, &target)?;
                let r = LqdagExpr::extend(rhs, &target)?;
                acc = if negate {
                    LqdagExpr::or(l, r)?
                } else {
                    LqdagExpr::and(l, r)?
                };
            }
            Ok(acc)
        }
        QueryAst::Diff(a, b) => {
            let l = build_expr(a, negate, catalog, mats, atoms)?;
            let r = build_expr(b, !negate, catalog, mats, atoms)?;
            require_equal_attrs(&l, &r, "DIFF")?;
            if negate {
                LqdagExpr::or(l, r)
            } else {
                LqdagExpr::and(l, r)
            }
        }
        QueryAst::Project(..) => Err(Error::Schema(
            "projection is evaluated eagerly on a materialized result, \
             not inside a normalized formula"
                .into(),
        )),
    }
}

/// Compile a projection-free query into the functor algebra, pushing NOT
/// down to the stored trees and rewriting JOIN and DIFF.
pub fn normalize(ast: &QueryAst, catalog: &Catalog) -> Result<Normalized> {
    let mut atoms = AtomTable::default();
    let expr = build_expr(ast, false, catalog, &[], &mut atoms)?;
    Ok(Normalized { expr, atoms })
}

/// Output of a full evaluation.
pub struct EvalOutput {
    pub tree: CompactQuadtree,
    /// Attribute ids of the result, sorted; coordinate `k` belongs to
    /// `attrs[k]`.
    pub attrs: Vec<usize>,
    pub stats: JoinStats,
    pub counters: AccessCounters,
    /// Base-tree labels aligned with the counter indices.
    pub atom_labels: Vec<String>,
}

type FormulaResult = (
    CompactQuadtree,
    Vec<usize>,
    JoinStats,
    AccessCounters,
    Vec<String>,
);

fn eval_formula(ast: &QueryAst, catalog: &Catalog, mats: &[MatAtom]) -> Result<FormulaResult> {
    let mut atoms = AtomTable::default();
    let expr = build_expr(ast, false, catalog, mats, &mut atoms)?;
    let attrs = expr.attrs().to_vec();
    let ctx = EvalCtx::new(atoms.len());
    let (buffer, stats) = scompletion(&expr, &ctx);
    Ok((
        buffer.compact(),
        attrs,
        stats,
        ctx.into_counters(),
        atoms.labels().to_vec(),
    ))
}

/// Replace every projection subtree by a materialized atom, innermost first.
fn stage_projections(
    ast: &QueryAst,
    catalog: &Catalog,
    mats: &mut Vec<MatAtom>,
    staged: &mut Vec<(JoinStats, AccessCounters, Vec<String>)>,
) -> Result<QueryAst> {
    Ok(match ast {
        QueryAst::Relation(n) => QueryAst::Relation(n.clone()),
        QueryAst::Not(inner) => {
            QueryAst::Not(Box::new(stage_projections(inner, catalog, mats, staged)?))
        }
        QueryAst::And(list) => QueryAst::And(
            list.iter()
                .map(|e| stage_projections(e, catalog, mats, staged))
                .collect::<Result<_>>()?,
        ),
        QueryAst::Join(list) => QueryAst::Join(
            list.iter()
                .map(|e| stage_projections(e, catalog, mats, staged))
                .collect::<Result<_>>()?,
        ),
        QueryAst::Or(a, b) => QueryAst::Or(
            Box::new(stage_projections(a, catalog, mats, staged)?),
            Box::new(stage_projections(b, catalog, mats, staged)?),
        ),
        QueryAst::Diff(a, b) => QueryAst::Diff(
            Box::new(stage_projections(a, catalog, mats, staged)?),
            Box::new(stage_projections(b, catalog, mats, staged)?),
        ),
        QueryAst::Project(names, inner) => {
            let inner = stage_projections(inner, catalog, mats, staged)?;
            let (tree, attrs, stats, counters, labels) = eval_formula(&inner, catalog, mats)?;
            staged.push((stats, counters, labels));
            let mut target = Vec::with_capacity(names.len());
            for n in names {
                let id = catalog
                    .attr_id(n)
                    .ok_or_else(|| Error::Schema(format!("unknown attribute {n}")))?;
                if attrs.binary_search(&id).is_err() {
                    return Err(Error::Schema(format!(
                        "attribute {n} is not produced by the projected expression"
                    )));
                }
                target.push(id);
            }
            target.sort_unstable();
            target.dedup();
            let projected = project(&tree, &attrs, &target)?;
            let label = format!("#{}", mats.len());
            mats.push((label.clone(), Rc::new(projected), target));
            QueryAst::Relation(label)
        }
    })
}

/// Evaluate a query: normalize, unfold lazily, compact. Projections are
/// materialized eagerly, innermost first, and fed back as atoms.
pub fn evaluate(ast: &QueryAst, catalog: &Catalog) -> Result<EvalOutput> {
    let mut mats = Vec::new();
    let mut staged = Vec::new();
    let rewritten = stage_projections(ast, catalog, &mut mats, &mut staged)?;
    let (tree, attrs, mut stats, mut counters, mut labels) =
        eval_formula(&rewritten, catalog, &mats)?;
    let mut all_counters = AccessCounters::default();
    let mut all_labels = Vec::new();
    for (stage_stats, stage_counters, stage_labels) in staged {
        stats.merge(&stage_stats);
        all_counters.append(stage_counters);
        all_labels.extend(stage_labels);
    }
    all_counters.append(std::mem::take(&mut counters));
    all_labels.append(&mut labels);
    Ok(EvalOutput {
        tree,
        attrs,
        stats,
        counters: all_counters,
        atom_labels: all_labels,
    })
}

/// Join of stored trees via the lazy path; used when operands hold full
/// leaves, which the eager intersection does not accept.
pub(crate) fn eval_join_lazy(
    relations: &[(Rc<CompactQuadtree>, Vec<usize>)],
    target: &[usize],
) -> Result<(CompactQuadtree, JoinStats)> {
    let mut atoms = AtomTable::default();
    let mut expr: Option<LqdagExpr> = None;
    for (k, (tree, attrs)) in relations.iter().enumerate() {
        let idx = atoms.intern(&format!("operand{k}"), tree);
        let atom = LqdagExpr::qtree(Rc::clone(tree), idx, attrs)?;
        let lifted = LqdagExpr::extend(atom, target)?;
        expr = Some(match expr {
            None => lifted,
            Some(acc) => LqdagExpr::and(acc, lifted)?,
        });
    }
    let expr = expr.expect("caller checked for at least one relation");
    let ctx = EvalCtx::new(atoms.len());
    let (buffer, stats) = scompletion(&expr, &ctx);
    Ok((buffer.compact(), stats))
}

/// Projection onto a subset of attributes: each output child is the union of
/// the input children that project onto it (Morton bit deletion), leaf
/// values copy through, and the result is compacted.
pub fn project(
    tree: &CompactQuadtree,
    source_attrs: &[usize],
    target_attrs: &[usize],
) -> Result<CompactQuadtree> {
    check_attrs(source_attrs)?;
    check_attrs(target_attrs)?;
    if source_attrs.len() != tree.params().dims() {
        return Err(Error::Schema(format!(
            "{} attributes over a {}-dimensional tree",
            source_attrs.len(),
            tree.params().dims()
        )));
    }
    if target_attrs == source_attrs {
        return Ok(tree.clone());
    }
    let mask = mask_between(target_attrs, source_attrs)?;
    let out_params = GridParams::new(target_attrs.len(), tree.params().height())?;
    let out_fanout = out_params.fanout();

    fn or_merge(a: MutNode, b: MutNode) -> MutNode {
        match (a, b) {
            (MutNode::Zero, x) | (x, MutNode::Zero) => x,
            (MutNode::One, _) | (_, MutNode::One) => MutNode::One,
            (MutNode::Internal(xs), MutNode::Internal(ys)) => MutNode::Internal(
                xs.into_iter()
                    .zip(ys)
                    .map(|(x, y)| or_merge(x, y))
                    .collect(),
            ),
        }
    }

    fn go(
        tree: &CompactQuadtree,
        id: crate::quadtree::NodeId,
        mask: &AttributeMask,
        out_fanout: usize,
    ) -> MutNode {
        if tree.value(id) == NodeValue::One {
            return MutNode::One;
        }
        let mut out = vec![MutNode::Zero; out_fanout];
        for j in 0..tree.params().fanout() {
            let sub = match tree.child_at(id, j) {
                Child::Empty | Child::Cell(false) => MutNode::Zero,
                Child::Cell(true) => MutNode::One,
                Child::Node(c) => go(tree, c, mask, out_fanout),
            };
            let slot = mask.project(j);
            let prev = std::mem::replace(&mut out[slot], MutNode::Zero);
            out[slot] = or_merge(prev, sub);
        }
        MutNode::Internal(out)
    }

    let root = match tree.root() {
        None => MutNode::Zero,
        Some(id) => go(tree, id, &mask, out_fanout),
    };
    Ok(MutableQuadtree::from_node(out_params, root).compact())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogBuilder;
    use crate::grid::GridParams;
    use crate::quadtree::build;
    use crate::query::parse_query;
    use std::collections::BTreeSet;

    type RelRows<'a> = (&'a str, &'a [&'a str], Vec<Vec<u64>>);

    fn catalog_from(rels: &[RelRows<'_>]) -> Catalog {
        let mut b = CatalogBuilder::new();
        for (name, attrs, rows) in rels {
            let rows: Vec<Vec<String>> = rows
                .iter()
                .map(|r| r.iter().map(u64::to_string).collect())
                .collect();
            b.add_relation_rows(name, attrs, rows).unwrap();
        }
        b.build().unwrap()
    }

    fn tree_of(points: &[Vec<u64>], d: usize, h: usize) -> Rc<CompactQuadtree> {
        Rc::new(build(points, GridParams::new(d, h).unwrap()).unwrap())
    }

    #[test]
    fn double_negation_cancels() {
        let cat = catalog_from(&[("R", &["A", "B"], vec![vec![0, 1]])]);
        let ast = parse_query("NOT(NOT(R))").unwrap();
        let norm = normalize(&ast, &cat).unwrap();
        assert_eq!(norm.expr.shape(norm.atoms.labels()), "(QTREE R)");
    }

    #[test]
    fn diff_rewrites_to_and_not() {
        let cat = catalog_from(&[
            ("R", &["A", "B"], vec![vec![0, 1]]),
            ("S", &["A", "B"], vec![vec![1, 1]]),
        ]);
        let ast = parse_query("DIFF(R,S)").unwrap();
        let norm = normalize(&ast, &cat).unwrap();
        assert_eq!(
            norm.expr.shape(norm.atoms.labels()),
            "(AND (QTREE R) (NOT S))"
        );
    }

    #[test]
    fn triangle_normalizes_to_nested_and_of_extends() {
        let cat = catalog_from(&[
            ("R", &["A", "B"], vec![vec![0, 1]]),
            ("S", &["B", "C"], vec![vec![1, 0]]),
            ("T", &["A", "C"], vec![vec![0, 0]]),
        ]);
        let ast = parse_query("JOIN(R,S,T)").unwrap();
        let norm = normalize(&ast, &cat).unwrap();
        assert_eq!(
            norm.expr.shape(norm.atoms.labels()),
            "(AND (AND (EXTEND (QTREE R)) (EXTEND (QTREE S))) (EXTEND (QTREE T)))"
        );
    }

    #[test]
    fn demorgan_pushes_not_below_joins() {
        let cat = catalog_from(&[
            ("R", &["A", "B"], vec![vec![0, 1]]),
            ("S", &["B", "C"], vec![vec![1, 0]]),
        ]);
        let ast = parse_query("NOT(JOIN(R,S))").unwrap();
        let norm = normalize(&ast, &cat).unwrap();
        assert_eq!(
            norm.expr.shape(norm.atoms.labels()),
            "(OR (EXTEND (NOT R)) (EXTEND (NOT S)))"
        );
    }

    #[test]
    fn or_of_unequal_schemas_is_rejected() {
        let cat = catalog_from(&[
            ("R", &["A", "B"], vec![vec![0, 1]]),
            ("S", &["B", "C"], vec![vec![1, 0]]),
        ]);
        let ast = parse_query("OR(R,S)").unwrap();
        assert!(normalize(&ast, &cat).is_err());
        let ast = parse_query("AND(R,S)").unwrap();
        assert!(normalize(&ast, &cat).is_err());
    }

    #[test]
    fn unknown_relation_is_reported() {
        let cat = catalog_from(&[("R", &["A"], vec![vec![0]])]);
        let ast = parse_query("JOIN(R,Missing)").unwrap();
        assert!(matches!(normalize(&ast, &cat), Err(Error::Schema(_))));
    }

    #[test]
    fn and_short_circuits_zero_without_touching_the_other_side() {
        let empty = tree_of(&[], 2, 2);
        let other = tree_of(&[vec![1, 2]], 2, 2);
        let a = LqdagExpr::qtree(empty, 0, &[0, 1]).unwrap();
        let b = LqdagExpr::qtree(Rc::clone(&other), 1, &[0, 1]).unwrap();
        let expr = LqdagExpr::and(a, b).unwrap();
        let ctx = EvalCtx::new(2);
        assert_eq!(lvalue(&expr, &ctx), LazyValue::Zero);
        let counters = ctx.into_counters();
        assert_eq!(counters.total(1), 0, "right operand was touched");
    }

    #[test]
    fn not_over_full_leaf_is_zero() {
        let gp = GridParams::new(2, 2).unwrap();
        let all: Vec<Vec<u64>> = (0..4u64)
            .flat_map(|a| (0..4u64).map(move |b| vec![a, b]))
            .collect();
        let full = Rc::new(build(&all, gp).unwrap());
        let expr = LqdagExpr::not(full, 0, &[0, 1]).unwrap();
        let ctx = EvalCtx::new(1);
        assert_eq!(lvalue(&expr, &ctx), LazyValue::Zero);
    }

    #[test]
    fn and_of_two_mixed_operands_is_diamond() {
        let r = tree_of(&[vec![0, 1]], 2, 2);
        let s = tree_of(&[vec![2, 2]], 2, 2);
        let a = LqdagExpr::qtree(r, 0, &[0, 1]).unwrap();
        let b = LqdagExpr::qtree(s, 1, &[0, 1]).unwrap();
        let expr = LqdagExpr::and(a, b).unwrap();
        let ctx = EvalCtx::new(2);
        assert_eq!(lvalue(&expr, &ctx), LazyValue::Diamond);
    }

    #[test]
    fn and_with_full_operand_descends_into_the_other() {
        let gp = GridParams::new(2, 2).unwrap();
        let all: Vec<Vec<u64>> = (0..4u64)
            .flat_map(|a| (0..4u64).map(move |b| vec![a, b]))
            .collect();
        let full = Rc::new(build(&all, gp).unwrap());
        let r = tree_of(&[vec![0, 1], vec![3, 2]], 2, 2);

        let expr = LqdagExpr::and(
            LqdagExpr::qtree(full, 0, &[0, 1]).unwrap(),
            LqdagExpr::qtree(Rc::clone(&r), 1, &[0, 1]).unwrap(),
        )
        .unwrap();
        let ctx = EvalCtx::new(2);
        let (buffer, _) = scompletion(&expr, &ctx);
        assert_eq!(buffer.compact(), *r);
    }

    #[test]
    fn or_with_empty_operand_behaves_like_the_other() {
        let empty = tree_of(&[], 2, 2);
        let r = tree_of(&[vec![0, 1], vec![3, 2]], 2, 2);
        let expr = LqdagExpr::or(
            LqdagExpr::qtree(empty, 0, &[0, 1]).unwrap(),
            LqdagExpr::qtree(Rc::clone(&r), 1, &[0, 1]).unwrap(),
        )
        .unwrap();
        let ctx = EvalCtx::new(2);
        let (buffer, _) = scompletion(&expr, &ctx);
        assert_eq!(buffer.compact(), *r);
    }

    #[test]
    fn extend_child_projects_the_index() {
        // (B,C) lifted to (A,B,C): child 5 (101) projects to inner child 01.
        let s = tree_of(
            &[vec![3, 4], vec![6, 4], vec![6, 5], vec![7, 4], vec![7, 5]],
            2,
            3,
        );
        let atom = LqdagExpr::qtree(Rc::clone(&s), 0, &[1, 2]).unwrap();
        let lifted = LqdagExpr::extend(atom, &[0, 1, 2]).unwrap();
        let ctx = EvalCtx::new(1);
        assert_eq!(lvalue(&lifted, &ctx), LazyValue::Half);
        let child = lchild_at(&lifted, 5);
        // Base child 1 of the root is internal, so this is Half.
        assert_eq!(lvalue(&child, &ctx), LazyValue::Half);
        // The path 5,2,2 reaches the cell for (4,3,4).
        let c2 = lchild_at(&child, 2);
        assert_eq!(lvalue(&c2, &ctx), LazyValue::Half);
        let c3 = lchild_at(&c2, 2);
        assert_eq!(lvalue(&c3, &ctx), LazyValue::One);
    }

    #[test]
    fn scompletion_of_identity_reproduces_the_tree() {
        let r = tree_of(&[vec![0, 1], vec![3, 2], vec![2, 2]], 2, 2);
        let expr = LqdagExpr::qtree(Rc::clone(&r), 0, &[0, 1]).unwrap();
        let ctx = EvalCtx::new(1);
        let (buffer, _) = scompletion(&expr, &ctx);
        assert_eq!(buffer.compact(), *r);
    }

    #[test]
    fn evaluate_triangle_fixture() {
        let cat = catalog_from(&[
            ("R", &["A", "B"], vec![vec![0, 1]]),
            ("S", &["B", "C"], vec![vec![1, 0]]),
            ("T", &["A", "C"], vec![vec![0, 0]]),
        ]);
        let ast = parse_query("JOIN(R,S,T)").unwrap();
        let out = evaluate(&ast, &cat).unwrap();
        assert_eq!(out.tree.enumerate(None), vec![vec![0, 1, 0]]);
        assert_eq!(out.attrs.len(), 3);
    }

    #[test]
    fn or_with_empty_relation_is_bit_exact_identity() {
        let cat = catalog_from(&[
            ("R", &["A", "B"], vec![vec![0, 1], vec![3, 2], vec![2, 2]]),
            ("S", &["A", "B"], vec![]),
        ]);
        let ast = parse_query("OR(R,S)").unwrap();
        let out = evaluate(&ast, &cat).unwrap();
        assert_eq!(
            out.tree.to_bytes(),
            cat.relation("R").unwrap().tree().to_bytes()
        );
    }

    #[test]
    fn conjunction_with_own_complement_is_empty_but_not_free() {
        // Points on even coordinates only: no two share a leaf group, so the
        // tree has no full leaves and one group per internal node path.
        let pts: Vec<Vec<u64>> = (0..8u64)
            .flat_map(|a| (0..8u64).map(move |b| vec![a * 2, b * 2]))
            .take(20)
            .collect();
        let rows: Vec<Vec<u64>> = pts.clone();
        let cat = catalog_from(&[("R", &["A", "B"], rows)]);
        let ast = parse_query("AND(R, NOT(R))").unwrap();
        let out = evaluate(&ast, &cat).unwrap();
        assert!(out.tree.is_empty());
        let groups: usize = cat
            .relation("R")
            .unwrap()
            .tree()
            .stats()
            .per_level
            .iter()
            .map(|l| l.groups)
            .sum();
        assert_eq!(out.stats.nodes_expanded, groups as u64);
    }

    #[test]
    fn project_figure_relation_onto_first_attribute() {
        let pts = crate::quadtree::tests::fig1_points();
        let tree = build(&pts, GridParams::new(2, 4).unwrap()).unwrap();
        let projected = project(&tree, &[0, 1], &[0]).unwrap();
        let got: Vec<u64> = projected.points().map(|p| p[0]).collect();
        assert_eq!(got, vec![3, 4, 5, 6, 7, 8, 14, 15]);
    }

    #[test]
    fn project_to_all_attributes_is_identity() {
        let pts = crate::quadtree::tests::fig1_points();
        let tree = build(&pts, GridParams::new(2, 4).unwrap()).unwrap();
        let projected = project(&tree, &[0, 1], &[0, 1]).unwrap();
        assert_eq!(projected, tree);
    }

    #[test]
    fn project_full_leaf_stays_full() {
        let gp = GridParams::new(2, 2).unwrap();
        let all: Vec<Vec<u64>> = (0..4u64)
            .flat_map(|a| (0..4u64).map(move |b| vec![a, b]))
            .collect();
        let full = build(&all, gp).unwrap();
        let projected = project(&full, &[0, 1], &[1]).unwrap();
        assert_eq!(projected.root_value(), NodeValue::One);
        assert_eq!(projected.count(), 4);
    }

    #[test]
    fn project_rejects_bad_targets() {
        let tree = build(&[vec![0, 0]], GridParams::new(2, 1).unwrap()).unwrap();
        assert!(project(&tree, &[0, 1], &[]).is_err());
        assert!(project(&tree, &[0, 1], &[2]).is_err());
    }

    #[test]
    fn evaluate_staged_projection() {
        let cat = catalog_from(&[
            ("R", &["A", "B"], vec![vec![0, 1], vec![2, 3]]),
            ("S", &["A", "B"], vec![vec![2, 3]]),
        ]);
        let ast = parse_query("PROJECT[A](DIFF(R,S))").unwrap();
        let out = evaluate(&ast, &cat).unwrap();
        assert_eq!(out.tree.enumerate(None), vec![vec![0]]);
        assert_eq!(out.attrs, vec![cat.attr_id("A").unwrap()]);
    }

    #[test]
    fn pruned_octants_do_not_touch_the_joined_relations() {
        // R(A,B) join S(B,C) join NOT(T(A,C)) with T full on its quadrant
        // (0,0): output octants 000 and 010 are pruned from T alone.
        let t_full_quadrant: Vec<Vec<u64>> = (0..4u64)
            .flat_map(|a| (0..4u64).map(move |c| vec![a, c]))
            .collect();
        let cat = catalog_from(&[
            ("R", &["A", "B"], vec![vec![0, 0], vec![1, 2], vec![5, 6]]),
            ("S", &["B", "C"], vec![vec![0, 1], vec![2, 2], vec![6, 5]]),
            ("T", &["A", "C"], t_full_quadrant),
        ]);
        assert_eq!(cat.height(), 3);
        let ast = parse_query("JOIN(R,S,NOT(T))").unwrap();
        let out = evaluate(&ast, &cat).unwrap();
        let idx = |name: &str| {
            out.atom_labels
                .iter()
                .position(|l| l == name)
                .expect("label present")
        };
        for octant in [0b000usize, 0b010] {
            assert_eq!(out.counters.under_octant(idx("R"), octant), 0);
            assert_eq!(out.counters.under_octant(idx("S"), octant), 0);
        }
        // T itself is consulted there.
        assert!(out.counters.under_octant(idx("T"), 0) > 0);
    }

    #[test]
    fn determined_root_values_are_sound() {
        // A zero root value means an empty completion; a one means a full
        // grid. Checked by exhaustive unfolding on small grids.
        let gp = GridParams::new(2, 2).unwrap();
        let all: Vec<Vec<u64>> = (0..4u64)
            .flat_map(|a| (0..4u64).map(move |b| vec![a, b]))
            .collect();
        let full = Rc::new(build(&all, gp).unwrap());
        let empty = tree_of(&[], 2, 2);
        let empty_1d = tree_of(&[], 1, 2);
        let mixed = tree_of(&[vec![0, 1], vec![3, 3]], 2, 2);

        let cases: Vec<LqdagExpr> = vec![
            LqdagExpr::and(
                LqdagExpr::qtree(Rc::clone(&empty), 0, &[0, 1]).unwrap(),
                LqdagExpr::qtree(Rc::clone(&mixed), 1, &[0, 1]).unwrap(),
            )
            .unwrap(),
            LqdagExpr::or(
                LqdagExpr::qtree(Rc::clone(&full), 0, &[0, 1]).unwrap(),
                LqdagExpr::qtree(Rc::clone(&mixed), 1, &[0, 1]).unwrap(),
            )
            .unwrap(),
            LqdagExpr::not(Rc::clone(&full), 0, &[0, 1]).unwrap(),
            LqdagExpr::not(Rc::clone(&empty), 0, &[0, 1]).unwrap(),
            LqdagExpr::extend(
                LqdagExpr::qtree(Rc::clone(&empty_1d), 0, &[0]).unwrap(),
                &[0, 1],
            )
            .unwrap(),
        ];
        for expr in cases {
            let ctx = EvalCtx::new(2);
            let v = lvalue(&expr, &ctx);
            let (buffer, _) = scompletion(&expr, &ctx);
            let tree = buffer.compact();
            match v {
                LazyValue::Zero => assert!(tree.is_empty()),
                LazyValue::One => {
                    assert_eq!(tree.root_value(), NodeValue::One);
                    assert_eq!(tree.count(), 16);
                }
                other => panic!("test cases all have determined roots, got {other:?}"),
            }
        }
    }

    #[test]
    fn evaluate_matches_a_tiny_hand_oracle() {
        // DIFF over a 4x4 grid, checked against explicit set arithmetic.
        let r_rows = vec![vec![0u64, 1], vec![1, 2], vec![3, 3], vec![2, 0]];
        let s_rows = vec![vec![1u64, 2], vec![2, 0]];
        let cat = catalog_from(&[
            ("R", &["A", "B"], r_rows.clone()),
            ("S", &["A", "B"], s_rows.clone()),
        ]);
        let ast = parse_query("DIFF(R,S)").unwrap();
        let out = evaluate(&ast, &cat).unwrap();
        let got: BTreeSet<Vec<u64>> = out.tree.points().collect();
        let r: BTreeSet<Vec<u64>> = r_rows.into_iter().collect();
        let s: BTreeSet<Vec<u64>> = s_rows.into_iter().collect();
        let want: BTreeSet<Vec<u64>> = r.difference(&s).cloned().collect();
        assert_eq!(got, want);
    }
}
