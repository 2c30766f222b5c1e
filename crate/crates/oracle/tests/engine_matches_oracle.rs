//! Randomized equivalence between the tree engine and the brute-force
//! evaluator, at smoke-test scale. The acceptance suite in the CLI crate
//! runs the full-volume version of these checks.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use qdagdb_core::catalog::{Catalog, CatalogBuilder};
use qdagdb_core::grid::GridParams;
use qdagdb_core::join::multijoin;
use qdagdb_core::lqdag::evaluate;
use qdagdb_core::quadtree::{build, CompactQuadtree};
use qdagdb_core::query::QueryAst;
use qdagdb_oracle::gen::gen_formula;
use qdagdb_oracle::{agm_bound, eval_bruteforce, gen_instance, OracleRel, Profile, SplitMix64};

const ATTR_NAMES: [&str; 4] = ["A", "B", "C", "D"];

fn attr_name_vec() -> Vec<String> {
    ATTR_NAMES.iter().map(|s| s.to_string()).collect()
}

fn random_schemas(rng: &mut SplitMix64) -> Vec<(String, Vec<usize>)> {
    let total_attrs = 1 + rng.below(4) as usize;
    let n = 1 + rng.below(4) as usize;
    (0..n)
        .map(|i| {
            let arity = 1 + rng.below(total_attrs as u64) as usize;
            let mut attrs: Vec<usize> = (0..total_attrs).collect();
            // Random subset of the requested arity.
            while attrs.len() > arity {
                let k = rng.below(attrs.len() as u64) as usize;
                attrs.remove(k);
            }
            (format!("R{i}"), attrs)
        })
        .collect()
}

fn tree_of(rel: &OracleRel, height: usize) -> Rc<CompactQuadtree> {
    let points: Vec<Vec<u64>> = rel.tuples.iter().cloned().collect();
    let params = GridParams::new(rel.attrs.len(), height).unwrap();
    Rc::new(build(&points, params).unwrap())
}

fn to_catalog(db: &BTreeMap<String, OracleRel>, side: u64) -> Catalog {
    let mut b = CatalogBuilder::new().min_height(side.trailing_zeros() as usize);
    for (name, rel) in db {
        let attr_strs: Vec<&str> = rel.attrs.iter().map(|&a| ATTR_NAMES[a]).collect();
        let rows: Vec<Vec<String>> = rel
            .tuples
            .iter()
            .map(|t| t.iter().map(u64::to_string).collect())
            .collect();
        b.add_relation_rows(name, &attr_strs, rows).unwrap();
    }
    b.build().unwrap()
}

#[test]
fn random_multijoins_match_bruteforce() {
    for seed in 0..60u64 {
        let mut rng = SplitMix64::new(0xA11CE ^ seed);
        let schemas = random_schemas(&mut rng);
        let side = 1u64 << (1 + rng.below(4)); // 2, 4, 8 or 16
        let sizes: Vec<usize> = schemas.iter().map(|_| rng.below(51) as usize).collect();
        let db = gen_instance(seed, Profile::Uniform, &schemas, &sizes, side);

        let height = side.trailing_zeros() as usize;
        let relations: Vec<(Rc<CompactQuadtree>, Vec<usize>)> = schemas
            .iter()
            .map(|(name, attrs)| (tree_of(&db[name], height), attrs.clone()))
            .collect();
        let (out, stats) = multijoin(&relations).unwrap();
        let got: BTreeSet<Vec<u64>> = out.points().collect();

        let ast = QueryAst::Join(
            schemas
                .iter()
                .map(|(n, _)| QueryAst::Relation(n.clone()))
                .collect(),
        );
        let ast = if schemas.len() == 1 {
            QueryAst::Relation(schemas[0].0.clone())
        } else {
            ast
        };
        let want = eval_bruteforce(&ast, &db, &attr_name_vec(), side).unwrap();
        assert_eq!(got, want.tuples, "seed {seed}");

        // Output-size witness: the widest recursion level never beats the
        // worst-case output bound.
        let bound = agm_bound(
            &schemas.iter().map(|(_, a)| a.clone()).collect::<Vec<_>>(),
            &schemas
                .iter()
                .map(|(n, _)| db[n].tuples.len() as u64)
                .collect::<Vec<_>>(),
        )
        .unwrap();
        assert!(
            bound.admits(stats.max_level_width as u128),
            "seed {seed}: width {} exceeds the output bound {}",
            stats.max_level_width,
            bound.value()
        );
    }
}

#[test]
fn random_formulas_match_bruteforce() {
    let names = attr_name_vec();
    for seed in 0..60u64 {
        let mut rng = SplitMix64::new(0xF0CACC1A ^ seed);
        let schemas = random_schemas(&mut rng);
        let side = 1u64 << (1 + rng.below(4));
        let sizes: Vec<usize> = schemas.iter().map(|_| rng.below(51) as usize).collect();
        let db = gen_instance(
            seed.wrapping_mul(31),
            Profile::Uniform,
            &schemas,
            &sizes,
            side,
        );
        let ast = gen_formula(&mut rng, &schemas, &names);

        let catalog = to_catalog(&db, side);
        let engine = evaluate(&ast, &catalog).unwrap();
        let got: BTreeSet<Vec<u64>> = engine.tree.points().collect();

        let want = eval_bruteforce(&ast, &db, &names, side).unwrap();
        assert_eq!(got, want.tuples, "seed {seed}, formula {ast:?}");
        let got_names: Vec<&str> = engine.attrs.iter().map(|&a| catalog.attr_name(a)).collect();
        let want_names: Vec<&str> = want.attrs.iter().map(|&a| ATTR_NAMES[a]).collect();
        assert_eq!(got_names, want_names, "seed {seed}");
    }
}

#[test]
fn level_widths_equal_trimmed_join_sizes() {
    // For plain trees, the nonzero recursion nodes at depth j are exactly
    // the j-bit-prefix tuples present in every lifted operand, i.e. the
    // join of the database with every coordinate truncated to its first j
    // bits. This pins the per-level instrumentation to an independent
    // quantity, computed by brute force.
    let names = attr_name_vec();
    let mut exercised = 0u32;
    for seed in 0..150u64 {
        let mut rng = SplitMix64::new(0x7E1A ^ seed);
        let schemas = random_schemas(&mut rng);
        let side = 1u64 << (2 + rng.below(3)); // 4, 8 or 16
        let sizes: Vec<usize> = schemas.iter().map(|_| rng.below(20) as usize).collect();
        let db = gen_instance(seed.wrapping_mul(131), Profile::Uniform, &schemas, &sizes, side);
        let height = side.trailing_zeros() as usize;
        let relations: Vec<(Rc<CompactQuadtree>, Vec<usize>)> = schemas
            .iter()
            .map(|(name, attrs)| (tree_of(&db[name], height), attrs.clone()))
            .collect();
        if relations.iter().any(|(t, _)| t.has_full_leaves()) {
            continue;
        }
        let (_, stats) = multijoin(&relations).unwrap();
        let ast = QueryAst::Join(
            schemas
                .iter()
                .map(|(n, _)| QueryAst::Relation(n.clone()))
                .collect(),
        );
        let ast = if schemas.len() == 1 {
            QueryAst::Relation(schemas[0].0.clone())
        } else {
            ast
        };
        for j in 0..=height {
            let shift = height - j;
            let trimmed: BTreeMap<String, OracleRel> = db
                .iter()
                .map(|(n, rel)| {
                    (
                        n.clone(),
                        OracleRel::new(
                            rel.attrs.clone(),
                            rel.tuples
                                .iter()
                                .map(|t| t.iter().map(|&v| v >> shift).collect::<Vec<u64>>()),
                        ),
                    )
                })
                .collect();
            let want = eval_bruteforce(&ast, &trimmed, &names, 1u64 << j).unwrap();
            assert_eq!(
                stats.per_level[j] as usize,
                want.tuples.len(),
                "seed {seed}: level {j} width disagrees with the trimmed join"
            );
        }
        exercised += 1;
    }
    assert!(exercised > 30, "too few plain-tree instances: {exercised}");
}

#[test]
fn dense_triangle_reaches_the_output_bound() {
    // R = S = T = the full k x k grid: the triangle output is exactly
    // k^3 = n^(3/2) for n = k^2 tuples per relation, the worst case the
    // fractional cover bound allows.
    let k = 4u64;
    let square: Vec<Vec<u64>> = (0..k).flat_map(|a| (0..k).map(move |b| vec![a, b])).collect();
    let n = square.len() as u64;
    let height = 3usize; // embed the dense square in a sparser 8x8 grid
    let gp = GridParams::new(2, height).unwrap();
    let tree = Rc::new(build(&square, gp).unwrap());
    let relations = vec![
        (Rc::clone(&tree), vec![0, 1]),
        (Rc::clone(&tree), vec![1, 2]),
        (Rc::clone(&tree), vec![0, 2]),
    ];
    let (out, stats) = multijoin(&relations).unwrap();
    assert_eq!(out.count(), (k * k * k) as u128);
    let bound = agm_bound(&[vec![0, 1], vec![1, 2], vec![0, 2]], &[n, n, n]).unwrap();
    assert!(bound.admits(out.count()));
    assert!(!bound.admits(out.count() + 1), "the instance is tight");
    assert!(bound.admits(stats.max_level_width as u128));
}

#[test]
fn eager_and_lazy_join_paths_agree_bit_for_bit() {
    // The same join evaluated through the qdag intersection and through the
    // lazy formula engine must freeze to identical bytes.
    for seed in 0..40u64 {
        let mut rng = SplitMix64::new(0xD0D0 ^ seed);
        let schemas = random_schemas(&mut rng);
        if schemas.len() < 2 {
            continue;
        }
        let side = 1u64 << (1 + rng.below(3)); // keep trees plain more often
        let sizes: Vec<usize> = schemas.iter().map(|_| rng.below(30) as usize).collect();
        let db = gen_instance(seed.wrapping_mul(97), Profile::Uniform, &schemas, &sizes, side);

        let height = side.trailing_zeros() as usize;
        let relations: Vec<(Rc<CompactQuadtree>, Vec<usize>)> = schemas
            .iter()
            .map(|(name, attrs)| (tree_of(&db[name], height), attrs.clone()))
            .collect();
        let (eager, eager_stats) = multijoin(&relations).unwrap();

        let catalog = to_catalog(&db, side);
        let ast = QueryAst::Join(
            schemas
                .iter()
                .map(|(n, _)| QueryAst::Relation(n.clone()))
                .collect(),
        );
        let lazy = evaluate(&ast, &catalog).unwrap();
        assert_eq!(
            eager.to_bytes(),
            lazy.tree.to_bytes(),
            "seed {seed}: evaluation paths disagree"
        );
        assert_eq!(
            eager_stats.nodes_expanded, lazy.stats.nodes_expanded,
            "seed {seed}: evaluation paths expand different node counts"
        );
    }
}

#[test]
fn clustered_instances_bound_the_level_width() {
    // With c clusters of side s, the tree has at most c * 2^d internal
    // nodes at the depth where cells reach the cluster size.
    let side = 64u64;
    let width = 4u64;
    let clusters = 3usize;
    let schemas = vec![("R".to_string(), vec![0, 1])];
    for seed in 0..20u64 {
        let db = gen_instance(
            seed,
            Profile::Clustered { clusters, width },
            &schemas,
            &[200],
            side,
        );
        let rel = &db["R"];
        let height = side.trailing_zeros() as usize;
        let tree = tree_of(rel, height);
        let stats = tree.stats();
        let depth = (side / width).trailing_zeros() as usize;
        let fanout = 4usize;
        assert!(
            stats.per_level[depth].groups <= clusters * fanout,
            "seed {seed}: {} groups at depth {depth}",
            stats.per_level[depth].groups
        );
    }
}
