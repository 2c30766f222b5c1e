//! Worst-case output bound of a full join: the product of relation sizes
//! raised to an optimal fractional edge cover of the query hypergraph.
//!
//! The cover LP (minimize the weighted log-sizes subject to covering every
//! attribute, weights nonnegative) is solved exactly over rationals by
//! enumerating basic solutions: with at most a handful of relations and
//! attributes the candidate count is tiny, and exact arithmetic keeps the
//! acceptance comparisons free of float tolerances. Comparisons against the
//! (generally irrational) bound value clear denominators and compare integer
//! powers.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use qdagdb_core::Error;

type Result<T> = std::result::Result<T, Error>;

/// An optimal fractional edge cover together with the relation sizes,
/// supporting exact "is `m` within the bound" queries.
#[derive(Debug, Clone)]
pub struct AgmBound {
    sizes: Vec<u64>,
    weights: Vec<BigRational>,
}

impl AgmBound {
    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    /// Bound value as a float, for display.
    pub fn value(&self) -> f64 {
        if self.sizes.contains(&0) {
            return 0.0;
        }
        self.log2().exp2()
    }

    pub fn log2(&self) -> f64 {
        if self.sizes.contains(&0) {
            return f64::NEG_INFINITY;
        }
        self.sizes
            .iter()
            .zip(&self.weights)
            .map(|(&s, w)| w.to_f64().unwrap() * (s as f64).log2())
            .sum()
    }

    /// Exact test: `m <= prod sizes[i]^weights[i]`.
    pub fn admits(&self, m: u128) -> bool {
        if self.sizes.contains(&0) {
            return m == 0;
        }
        if m == 0 {
            return true;
        }
        let scale = common_scale(&self.weights);
        let lhs = BigUint::from(m).pow(scale);
        lhs <= product_pow(&self.sizes, &self.weights, scale)
    }
}

fn common_scale(weights: &[BigRational]) -> u32 {
    let mut l = BigInt::one();
    for w in weights {
        l = l.lcm(w.denom());
    }
    l.to_u32().expect("cover denominators stay small")
}

fn product_pow(sizes: &[u64], weights: &[BigRational], scale: u32) -> BigUint {
    let mut acc = BigUint::one();
    for (&s, w) in sizes.iter().zip(weights) {
        let e = w * BigRational::from_integer(BigInt::from(scale));
        debug_assert!(e.is_integer());
        let e = e.to_integer().to_u32().expect("scaled exponent fits u32");
        if e > 0 {
            acc *= BigUint::from(s).pow(e);
        }
    }
    acc
}

/// Exact comparison of two candidate covers by bound value.
fn cmp_covers(a: &[BigRational], b: &[BigRational], sizes: &[u64]) -> Ordering {
    let mut l = BigInt::one();
    for w in a.iter().chain(b) {
        l = l.lcm(w.denom());
    }
    let scale = l.to_u32().expect("cover denominators stay small");
    product_pow(sizes, a, scale).cmp(&product_pow(sizes, b, scale))
}

/// Solve a square rational system by Gaussian elimination; `None` when
/// singular.
fn solve(mut a: Vec<Vec<BigRational>>, mut b: Vec<BigRational>) -> Option<Vec<BigRational>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let pivot_row = a[col].clone();
        let pivot_val = pivot_row[col].clone();
        let pivot_rhs = b[col].clone();
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &pivot_val;
            for (c, pv) in pivot_row.iter().enumerate().skip(col) {
                let v = pv * &factor;
                a[r][c] = &a[r][c] - v;
            }
            let v = &pivot_rhs * &factor;
            b[r] = &b[r] - v;
        }
    }
    (0..n)
        .map(|i| {
            if a[i][i].is_zero() {
                None
            } else {
                Some(&b[i] / &a[i][i])
            }
        })
        .collect()
}

/// Optimal fractional edge cover bound for the hypergraph given by the
/// relation attribute sets and their cardinalities.
pub fn agm_bound(schemas: &[Vec<usize>], sizes: &[u64]) -> Result<AgmBound> {
    if schemas.is_empty() || schemas.len() != sizes.len() {
        return Err(Error::Schema(
            "bound needs one size per relation, at least one relation".into(),
        ));
    }
    for s in schemas {
        if s.is_empty() {
            return Err(Error::Schema("relation with no attributes".into()));
        }
    }
    let mut attrs: Vec<usize> = schemas.iter().flatten().copied().collect();
    attrs.sort_unstable();
    attrs.dedup();

    // An empty relation caps the output at zero: the all-ones cover is
    // feasible and its product vanishes.
    if sizes.contains(&0) {
        return Ok(AgmBound {
            sizes: sizes.to_vec(),
            weights: vec![BigRational::one(); schemas.len()],
        });
    }

    let n = schemas.len();
    // Constraint rows in `coeff . x >= rhs` form: coverage per attribute,
    // then nonnegativity per relation.
    let mut rows: Vec<(Vec<BigRational>, BigRational)> = Vec::new();
    for &a in &attrs {
        let coeffs = schemas
            .iter()
            .map(|s| {
                if s.contains(&a) {
                    BigRational::one()
                } else {
                    BigRational::zero()
                }
            })
            .collect();
        rows.push((coeffs, BigRational::one()));
    }
    for i in 0..n {
        let mut coeffs = vec![BigRational::zero(); n];
        coeffs[i] = BigRational::one();
        rows.push((coeffs, BigRational::zero()));
    }

    let feasible = |x: &[BigRational]| {
        rows.iter().all(|(coeffs, rhs)| {
            let lhs: BigRational = coeffs
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .fold(BigRational::zero(), |a, b| a + b);
            lhs >= *rhs
        }) && x.iter().all(|v| !v.is_negative())
    };

    // Enumerate basic solutions: every choice of n tight constraints.
    let mut best: Option<Vec<BigRational>> = None;
    let mut choice: Vec<usize> = (0..n).collect();
    loop {
        let a: Vec<Vec<BigRational>> = choice.iter().map(|&r| rows[r].0.clone()).collect();
        let b: Vec<BigRational> = choice.iter().map(|&r| rows[r].1.clone()).collect();
        if let Some(x) = solve(a, b) {
            if feasible(&x) {
                let better = match &best {
                    None => true,
                    Some(cur) => cmp_covers(&x, cur, sizes) == Ordering::Less,
                };
                if better {
                    best = Some(x);
                }
            }
        }
        // Next combination of `n` row indices in lexicographic order.
        let total = rows.len();
        let mut k = n;
        loop {
            if k == 0 {
                let best = best.expect("the all-ones cover is always feasible");
                return Ok(AgmBound {
                    sizes: sizes.to_vec(),
                    weights: best,
                });
            }
            k -= 1;
            if choice[k] + (n - k) < total {
                choice[k] += 1;
                for j in k + 1..n {
                    choice[j] = choice[j - 1] + 1;
                }
                break;
            }
        }
    }
}
