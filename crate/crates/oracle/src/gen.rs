//! Deterministic test-instance generation: databases (uniform or clustered
//! point clouds) and well-formed random formulas in which no relation
//! appears twice.

use std::collections::BTreeMap;

use qdagdb_core::query::QueryAst;

use crate::bruteforce::OracleRel;

/// Tiny deterministic RNG; identical streams on every platform.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform-ish value in `[0, n)`.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    pub fn chance(&mut self, percent: u64) -> bool {
        self.below(100) < percent
    }
}

/// Point distribution of a generated relation.
#[derive(Debug, Clone, Copy)]
pub enum Profile {
    Uniform,
    /// Points scattered inside `clusters` axis-aligned boxes of the given
    /// side length.
    Clustered {
        clusters: usize,
        width: u64,
    },
}

/// Generate one database: for each `(name, attrs)` schema draw `sizes[i]`
/// tuples (duplicates collapse) on a grid of the given side. Deterministic
/// in the seed.
pub fn gen_instance(
    seed: u64,
    profile: Profile,
    schemas: &[(String, Vec<usize>)],
    sizes: &[usize],
    side: u64,
) -> BTreeMap<String, OracleRel> {
    assert_eq!(schemas.len(), sizes.len());
    let mut rng = SplitMix64::new(seed);
    let mut out = BTreeMap::new();
    for ((name, attrs), &size) in schemas.iter().zip(sizes) {
        let d = attrs.len();
        let mut rel = OracleRel::new(attrs.clone(), []);
        match profile {
            Profile::Uniform => {
                for _ in 0..size {
                    rel.tuples.insert((0..d).map(|_| rng.below(side)).collect());
                }
            }
            Profile::Clustered { clusters, width } => {
                let width = width.min(side).max(1);
                let centers: Vec<Vec<u64>> = (0..clusters.max(1))
                    .map(|_| (0..d).map(|_| rng.below(side - width + 1)).collect())
                    .collect();
                for _ in 0..size {
                    let c = &centers[rng.below(centers.len() as u64) as usize];
                    rel.tuples
                        .insert(c.iter().map(|&base| base + rng.below(width)).collect());
                }
            }
        }
        out.insert(name.clone(), rel);
    }
    out
}

/// A random well-formed formula over the given relations, each used at most
/// once. Shapes mix JOIN, AND, OR, DIFF, NOT and PROJECT; OR/DIFF/AND only
/// combine operands with equal attribute sets, which the generator arranges
/// by grouping relations of identical schemas.
pub fn gen_formula(
    rng: &mut SplitMix64,
    schemas: &[(String, Vec<usize>)],
    attr_names: &[String],
) -> QueryAst {
    // Group unused relations by schema so equal-schema operators always have
    // legal operands.
    let mut by_schema: BTreeMap<Vec<usize>, Vec<String>> = BTreeMap::new();
    for (name, attrs) in schemas {
        by_schema
            .entry(attrs.clone())
            .or_default()
            .push(name.clone());
    }

    // A "block" is a formula over one schema built from 1-2 relations of
    // that schema.
    let mut blocks: Vec<(QueryAst, Vec<usize>)> = Vec::new();
    for (attrs, mut names) in by_schema {
        while !names.is_empty() {
            let take = if names.len() >= 2 && rng.chance(40) {
                2
            } else {
                1
            };
            let picked: Vec<String> = (0..take).map(|_| names.remove(0)).collect();
            let mut atoms: Vec<QueryAst> = picked
                .into_iter()
                .map(|n| {
                    let leaf = QueryAst::Relation(n);
                    if rng.chance(20) {
                        QueryAst::Not(Box::new(leaf))
                    } else {
                        leaf
                    }
                })
                .collect();
            let ast = if atoms.len() == 2 {
                let b = atoms.pop().unwrap();
                let a = atoms.pop().unwrap();
                match rng.below(3) {
                    0 => QueryAst::Or(Box::new(a), Box::new(b)),
                    1 => QueryAst::Diff(Box::new(a), Box::new(b)),
                    _ => QueryAst::And(vec![a, b]),
                }
            } else {
                atoms.pop().unwrap()
            };
            blocks.push((ast, attrs.clone()));
        }
    }

    // Join the blocks pairwise until one formula remains.
    while blocks.len() > 1 {
        let b = blocks.remove(rng.below(blocks.len() as u64) as usize);
        let a = blocks.remove(rng.below(blocks.len() as u64) as usize);
        let mut attrs: Vec<usize> = a.1.iter().chain(b.1.iter()).copied().collect();
        attrs.sort_unstable();
        attrs.dedup();
        blocks.push((QueryAst::Join(vec![a.0, b.0]), attrs));
    }
    let (mut ast, attrs) = blocks.pop().expect("at least one relation");

    // Optionally project onto a random nonempty attribute subset.
    if attrs.len() > 1 && rng.chance(30) {
        let keep: Vec<String> = attrs
            .iter()
            .filter(|_| rng.chance(60))
            .map(|&a| attr_names[a].clone())
            .collect();
        if !keep.is_empty() && keep.len() < attrs.len() {
            ast = QueryAst::Project(keep, Box::new(ast));
        }
    }
    ast
}
