//! Brute-force query evaluation over explicit tuple sets.
//!
//! Complements enumerate the full `[0, side)^d` universe and joins extend
//! every operand to the union attribute set before intersecting, so every
//! step is plain set arithmetic. A universe guard keeps the enumeration at
//! desk scale.

use std::collections::{BTreeMap, BTreeSet};

use qdagdb_core::query::QueryAst;
use qdagdb_core::Error;

type Result<T> = std::result::Result<T, Error>;

/// Largest universe (`side^d`) the evaluator will enumerate.
pub const MAX_UNIVERSE: u128 = 1 << 24;

/// A relation as an explicit tuple set. `attrs` are sorted attribute ids;
/// coordinate `k` of each tuple belongs to `attrs[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleRel {
    pub attrs: Vec<usize>,
    pub tuples: BTreeSet<Vec<u64>>,
}

impl OracleRel {
    pub fn new(attrs: Vec<usize>, tuples: impl IntoIterator<Item = Vec<u64>>) -> Self {
        OracleRel {
            attrs,
            tuples: tuples.into_iter().collect(),
        }
    }
}

fn check_universe(side: u64, dims: usize) -> Result<()> {
    let mut total = 1u128;
    for _ in 0..dims {
        total = total.saturating_mul(side as u128);
        if total > MAX_UNIVERSE {
            return Err(Error::Data(format!(
                "universe {side}^{dims} exceeds the enumeration guard"
            )));
        }
    }
    Ok(())
}

fn require_equal(a: &OracleRel, b: &OracleRel, op: &str) -> Result<()> {
    if a.attrs != b.attrs {
        return Err(Error::Schema(format!(
            "{op} operands cover different attribute sets {:?} vs {:?}",
            a.attrs, b.attrs
        )));
    }
    Ok(())
}

fn complement(rel: &OracleRel, side: u64) -> Result<OracleRel> {
    check_universe(side, rel.attrs.len())?;
    let mut tuples = BTreeSet::new();
    let mut current = vec![0u64; rel.attrs.len()];
    loop {
        if !rel.tuples.contains(&current) {
            tuples.insert(current.clone());
        }
        // Odometer increment over the universe.
        let mut k = rel.attrs.len();
        loop {
            if k == 0 {
                return Ok(OracleRel {
                    attrs: rel.attrs.clone(),
                    tuples,
                });
            }
            k -= 1;
            current[k] += 1;
            if current[k] < side {
                break;
            }
            current[k] = 0;
        }
    }
}

/// Cross product with the full domain of every attribute missing from the
/// relation, in target attribute order.
fn extend_to(rel: &OracleRel, target: &[usize], side: u64) -> Result<OracleRel> {
    let missing: Vec<usize> = target
        .iter()
        .copied()
        .filter(|a| !rel.attrs.contains(a))
        .collect();
    check_universe(side, missing.len())?;
    let blowup = (side as u128).pow(missing.len() as u32);
    if blowup.saturating_mul(rel.tuples.len().max(1) as u128) > MAX_UNIVERSE {
        return Err(Error::Data(
            "extended relation exceeds the enumeration guard".into(),
        ));
    }
    // Where each target coordinate comes from: a source column or a free
    // missing-attribute slot.
    enum Src {
        Col(usize),
        Free(usize),
    }
    let plan: Vec<Src> = target
        .iter()
        .map(|a| match rel.attrs.iter().position(|x| x == a) {
            Some(k) => Src::Col(k),
            None => Src::Free(missing.iter().position(|x| x == a).unwrap()),
        })
        .collect();

    let mut tuples = BTreeSet::new();
    let mut free = vec![0u64; missing.len()];
    for tuple in &rel.tuples {
        free.iter_mut().for_each(|v| *v = 0);
        loop {
            tuples.insert(
                plan.iter()
                    .map(|s| match s {
                        Src::Col(k) => tuple[*k],
                        Src::Free(k) => free[*k],
                    })
                    .collect(),
            );
            let mut k = missing.len();
            let mut done = true;
            while k > 0 {
                k -= 1;
                free[k] += 1;
                if free[k] < side {
                    done = false;
                    break;
                }
                free[k] = 0;
            }
            if done {
                break;
            }
        }
    }
    Ok(OracleRel {
        attrs: target.to_vec(),
        tuples,
    })
}

fn union_attrs(rels: &[OracleRel]) -> Vec<usize> {
    rels.iter()
        .flat_map(|r| r.attrs.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Evaluate a query over explicit tuple sets. `attr_names` is the global
/// attribute order used to resolve projection lists.
pub fn eval_bruteforce(
    ast: &QueryAst,
    rels: &BTreeMap<String, OracleRel>,
    attr_names: &[String],
    side: u64,
) -> Result<OracleRel> {
    match ast {
        QueryAst::Relation(name) => rels
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Schema(format!("unknown relation {name}"))),
        QueryAst::Not(inner) => {
            let r = eval_bruteforce(inner, rels, attr_names, side)?;
            complement(&r, side)
        }
        QueryAst::And(list) => {
            let evaluated: Vec<OracleRel> = list
                .iter()
                .map(|e| eval_bruteforce(e, rels, attr_names, side))
                .collect::<Result<_>>()?;
            let mut out = evaluated[0].clone();
            for r in &evaluated[1..] {
                require_equal(&out, r, "AND")?;
                out.tuples = out.tuples.intersection(&r.tuples).cloned().collect();
            }
            Ok(out)
        }
        QueryAst::Or(a, b) => {
            let ra = eval_bruteforce(a, rels, attr_names, side)?;
            let rb = eval_bruteforce(b, rels, attr_names, side)?;
            require_equal(&ra, &rb, "OR")?;
            Ok(OracleRel {
                attrs: ra.attrs,
                tuples: ra.tuples.union(&rb.tuples).cloned().collect(),
            })
        }
        QueryAst::Diff(a, b) => {
            let ra = eval_bruteforce(a, rels, attr_names, side)?;
            let rb = eval_bruteforce(b, rels, attr_names, side)?;
            require_equal(&ra, &rb, "DIFF")?;
            Ok(OracleRel {
                attrs: ra.attrs,
                tuples: ra.tuples.difference(&rb.tuples).cloned().collect(),
            })
        }
        QueryAst::Join(list) => {
            let evaluated: Vec<OracleRel> = list
                .iter()
                .map(|e| eval_bruteforce(e, rels, attr_names, side))
                .collect::<Result<_>>()?;
            let target = union_attrs(&evaluated);
            let mut out = extend_to(&evaluated[0], &target, side)?;
            for r in &evaluated[1..] {
                let ext = extend_to(r, &target, side)?;
                out.tuples = out.tuples.intersection(&ext.tuples).cloned().collect();
            }
            Ok(out)
        }
        QueryAst::Project(names, inner) => {
            let r = eval_bruteforce(inner, rels, attr_names, side)?;
            let mut target = Vec::with_capacity(names.len());
            for n in names {
                let id = attr_names
                    .iter()
                    .position(|a| a == n)
                    .ok_or_else(|| Error::Schema(format!("unknown attribute {n}")))?;
                if !r.attrs.contains(&id) {
                    return Err(Error::Schema(format!(
                        "attribute {n} is not produced by the projected expression"
                    )));
                }
                target.push(id);
            }
            target.sort_unstable();
            target.dedup();
            let cols: Vec<usize> = target
                .iter()
                .map(|a| r.attrs.iter().position(|x| x == a).unwrap())
                .collect();
            Ok(OracleRel {
                attrs: target,
                tuples: r
                    .tuples
                    .iter()
                    .map(|t| cols.iter().map(|&k| t[k]).collect())
                    .collect(),
            })
        }
    }
}
