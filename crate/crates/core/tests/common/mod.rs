//! Reference implementations used as test oracles. Kept deliberately naive.
#![allow(dead_code)]

use hwnas_core::search::{Direction, ObjectiveSpec};

/// Flip maximized objectives so everything is minimized.
pub fn as_min(p: &[f64], specs: &[ObjectiveSpec]) -> Vec<f64> {
    p.iter()
        .zip(specs)
        .map(|(&v, s)| if s.direction == Direction::Maximize { -v } else { v })
        .collect()
}

pub fn brute_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Rank by repeatedly peeling off the points no remaining point dominates.
pub fn brute_ranks(points: &[Vec<f64>], specs: &[ObjectiveSpec]) -> Vec<usize> {
    let p: Vec<Vec<f64>> = points.iter().map(|x| as_min(x, specs)).collect();
    let mut rank = vec![usize::MAX; p.len()];
    let mut left: Vec<usize> = (0..p.len()).collect();
    let mut r = 0;
    while !left.is_empty() {
        let front: Vec<usize> =
            left.iter().copied().filter(|&i| !left.iter().any(|&j| brute_dominates(&p[j], &p[i]))).collect();
        for &i in &front {
            rank[i] = r;
        }
        left.retain(|i| !front.contains(i));
        r += 1;
    }
    rank
}

/// Textbook crowding distance for one front (given as point indices).
pub fn brute_crowding(points: &[Vec<f64>], front: &[usize], n_obj: usize) -> Vec<f64> {
    let mut d = vec![0.0; front.len()];
    for m in 0..n_obj {
        let vals: Vec<f64> = front.iter().map(|&i| points[i][m]).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            continue;
        }
        for (k, &v) in vals.iter().enumerate() {
            if v == lo || v == hi {
                d[k] = f64::INFINITY;
                continue;
            }
            // nearest neighbours on either side
            let below = vals.iter().cloned().filter(|&w| w < v).fold(f64::NEG_INFINITY, f64::max);
            let above = vals.iter().cloned().filter(|&w| w > v).fold(f64::INFINITY, f64::min);
            d[k] += (above - below) / (hi - lo);
        }
    }
    d
}

pub fn mixed_specs(n: usize) -> Vec<ObjectiveSpec> {
    (0..n)
        .map(|i| {
            let dir = if i % 2 == 0 { Direction::Minimize } else { Direction::Maximize };
            ObjectiveSpec::new(&format!("f{i}"), dir)
        })
        .collect()
}
