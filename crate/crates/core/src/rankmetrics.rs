//! Rank and distribution distances: classical and generalized Kendall tau,
//! the tau-distance to the ideal cache, total variation and the Kendall
//! diameter of a state space.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::StateSpace;
use crate::error::{Error, Result};
use crate::model::{CacheState, ItemId, RankWeights};

/// Default cap on pair evaluations for the exact diameter.
pub const DEFAULT_PAIR_CAP: u128 = 100_000_000;

/// Item positions; position 0 means the item is absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionMap {
    sigma: Vec<usize>,
    support: Vec<ItemId>,
}

impl PositionMap {
    /// Positions of `slots` (front = position 1) over a library of `n` items.
    pub fn from_slots(n: usize, slots: &[ItemId]) -> Self {
        let mut sigma = vec![0; n + 1];
        for (j, &x) in slots.iter().enumerate() {
            sigma[x as usize] = j + 1;
        }
        Self {
            sigma,
            support: slots.to_vec(),
        }
    }

    /// Full permutation map: `perm[j]` sits at position `j+1`.
    pub fn from_permutation(perm: &[ItemId]) -> Self {
        Self::from_slots(perm.len(), perm)
    }

    pub fn position(&self, item: ItemId) -> usize {
        self.sigma[item as usize]
    }

    /// Items with a nonzero position, front first.
    pub fn support(&self) -> &[ItemId] {
        &self.support
    }

    pub fn n(&self) -> usize {
        self.sigma.len() - 1
    }
}

/// Order key of a position: absent items rank after every cached one and tie
/// with each other, so pairs they leave undetermined cost nothing.
fn rank(pos: usize) -> usize {
    if pos == 0 {
        usize::MAX
    } else {
        pos
    }
}

/// Number of pairs with `s1(i) > s1(j)` and `s2(i) < s2(j)`.
pub fn kendall_classic(s1: &PositionMap, s2: &PositionMap) -> u64 {
    let mut count = 0;
    // s2(i) < s2(j) needs i in supp(s2); s1(i) > s1(j) needs j in supp(s1).
    for &i in s2.support() {
        for &j in s1.support() {
            if i != j && rank(s1.position(i)) > rank(s1.position(j)) && rank(s2.position(i)) < rank(s2.position(j)) {
                count += 1;
            }
        }
    }
    count
}

fn qbar(w: &RankWeights, a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        (w.q(a) - w.q(b)) / (a as f64 - b as f64)
    }
}

/// Sum over pairs with `s1(i) < s1(j)` and `s2(i) > s2(j)` of
/// `w_i w_j qbar_i qbar_j`, where `qbar` uses position 0 for absence.
pub fn kendall_generalized(s1: &PositionMap, s2: &PositionMap, w: &RankWeights) -> f64 {
    let mut total = 0.0;
    // s1(i) < s1(j) needs i in supp(s1); s2(i) > s2(j) needs j in supp(s2).
    for &i in s1.support() {
        let (a1, a2) = (s1.position(i), s2.position(i));
        for &j in s2.support() {
            let (b1, b2) = (s1.position(j), s2.position(j));
            if i != j && rank(a1) < rank(b1) && rank(a2) > rank(b2) {
                total += w.w(i) * w.w(j) * qbar(w, a1, a2) * qbar(w, b1, b2);
            }
        }
    }
    total
}

/// Generalized distance between two ordered slot lists.
pub fn kendall_slots(x: &[ItemId], y: &[ItemId], n: usize, w: &RankWeights) -> f64 {
    kendall_generalized(&PositionMap::from_slots(n, x), &PositionMap::from_slots(n, y), w)
}

/// Expected generalized distance from the projected state to `cstar` under
/// the state distribution `pi`.
pub fn tau_distance(pi: &[f64], space: &StateSpace, weights: &RankWeights, cstar: &CacheState) -> f64 {
    let n = space.n();
    let target = PositionMap::from_slots(n, &cstar.real_items().collect::<Vec<_>>());
    (0..space.len())
        .filter(|&i| pi[i] != 0.0)
        .map(|i| {
            let x = PositionMap::from_slots(n, &space.projection(i));
            pi[i] * kendall_generalized(&x, &target, weights)
        })
        .sum()
}

/// Per-state distances to `cstar`, for repeated tau evaluations.
pub fn distances_to(space: &StateSpace, weights: &RankWeights, cstar: &CacheState) -> Vec<f64> {
    let n = space.n();
    let target = PositionMap::from_slots(n, &cstar.real_items().collect::<Vec<_>>());
    (0..space.len())
        .map(|i| kendall_generalized(&PositionMap::from_slots(n, &space.projection(i)), &target, weights))
        .collect()
}

/// Half the L1 distance.
pub fn tv_distance(mu: &[f64], nu: &[f64]) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::InvalidInput(format!("length mismatch: {} vs {}", mu.len(), nu.len())));
    }
    Ok(0.5 * mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaMode {
    Exact,
    /// Lower bound from structured candidates plus random pairs.
    Heuristic { random_pairs: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappa {
    pub value: f64,
    /// False when the value is only a lower bound.
    pub exact: bool,
}

/// Largest generalized distance between projections of two states.
pub fn kappa_diameter(space: &StateSpace, weights: &RankWeights, mode: KappaMode) -> Result<Kappa> {
    kappa_diameter_capped(space, weights, mode, DEFAULT_PAIR_CAP)
}

pub fn kappa_diameter_capped(space: &StateSpace, weights: &RankWeights, mode: KappaMode, cap: u128) -> Result<Kappa> {
    let projections = (0..space.len()).map(|i| space.projection(i)).collect();
    kappa_of_projections(projections, space.n(), weights, mode, cap)
}

/// Diameter over an explicit list of ordered real contents.
pub fn kappa_of_projections(
    mut projections: Vec<Vec<ItemId>>,
    n: usize,
    weights: &RankWeights,
    mode: KappaMode,
    cap: u128,
) -> Result<Kappa> {
    projections.sort();
    projections.dedup();
    let maps: Vec<PositionMap> = projections.iter().map(|p| PositionMap::from_slots(n, p)).collect();
    match mode {
        KappaMode::Exact => {
            let k = maps.len() as u128;
            if k * k > cap {
                return Err(Error::TooLarge {
                    what: "pair evaluations for the exact diameter".into(),
                    count: k * k,
                    cap,
                });
            }
            let value = (0..maps.len())
                .into_par_iter()
                .map(|a| {
                    (a + 1..maps.len())
                        .map(|b| kendall_generalized(&maps[a], &maps[b], weights))
                        .fold(0.0, f64::max)
                })
                .reduce(|| 0.0, f64::max);
            Ok(Kappa { value, exact: true })
        }
        KappaMode::Heuristic { random_pairs, seed } => {
            let m = projections.first().map_or(0, |p| p.len()) as ItemId;
            let top: Vec<ItemId> = (1..=m).collect();
            let bottom: Vec<ItemId> = (0..m).map(|i| n as ItemId - i).collect();
            let mut candidates = Vec::new();
            for c in [top.clone(), top.iter().rev().copied().collect(), bottom.clone(), bottom.iter().rev().copied().collect()] {
                if projections.binary_search(&c).is_ok() {
                    candidates.push(PositionMap::from_slots(n, &c));
                }
            }
            let mut value: f64 = 0.0;
            for a in &candidates {
                for b in &candidates {
                    value = value.max(kendall_generalized(a, b, weights));
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..random_pairs {
                let (Some(a), Some(b)) = (maps.choose(&mut rng), maps.choose(&mut rng)) else {
                    break;
                };
                value = value.max(kendall_generalized(a, b, weights));
                for c in &candidates {
                    value = value.max(kendall_generalized(a, c, weights));
                }
            }
            Ok(Kappa { value, exact: false })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::enumerate_states;
    use crate::model::{Policy, PolicyConfig};

    fn perm(p: &[ItemId]) -> PositionMap {
        PositionMap::from_permutation(p)
    }

    #[test]
    fn classic_examples() {
        assert_eq!(kendall_classic(&perm(&[1, 2, 3]), &perm(&[1, 2, 3])), 0);
        assert_eq!(kendall_classic(&perm(&[1, 2, 3]), &perm(&[3, 2, 1])), 3);
        assert_eq!(kendall_classic(&perm(&[1, 2, 3, 4]), &perm(&[1, 3, 2, 4])), 1);
    }

    #[test]
    fn generalized_identity_is_zero() {
        let w = RankWeights::standard(4);
        assert_eq!(kendall_generalized(&perm(&[2, 1, 4, 3]), &perm(&[2, 1, 4, 3]), &w), 0.0);
    }

    fn permutations(n: ItemId) -> Vec<Vec<ItemId>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            let mut next = Vec::new();
            for p in &out {
                for x in (1..=n).filter(|x| !p.contains(x)) {
                    let mut q: Vec<ItemId> = p.clone();
                    q.push(x);
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }

    #[test]
    fn unit_weights_reduce_to_classic() {
        let w = RankWeights::unit(4);
        let all = permutations(4);
        assert_eq!(all.len(), 24);
        for a in &all {
            for b in &all {
                let (x, y) = (perm(a), perm(b));
                assert_eq!(kendall_generalized(&x, &y, &w), kendall_classic(&x, &y) as f64);
            }
        }
    }

    #[test]
    fn partial_maps_rank_absent_items_last() {
        let w = RankWeights::unit(3);
        let cstar = [1, 2];
        // Holding 1 but not 2 agrees with c* on the pair; the free slot costs nothing.
        assert_eq!(kendall_slots(&[1], &cstar, 3, &w), 0.0);
        // 3 cached ahead of the missing 2.
        assert_eq!(kendall_slots(&[1, 3], &cstar, 3, &w), 1.0);
        // 2 ahead of the missing 1, and 3 ahead of it too.
        assert_eq!(kendall_slots(&[2, 3], &cstar, 3, &w), 2.0);
        let pw = RankWeights::standard(3);
        // w3 w2 (q2/2)^2 for the single inversion.
        let q2 = 1.0 + 2f64.ln();
        assert!((kendall_slots(&[1, 3], &cstar, 3, &pw) - 2.0 * (q2 / 2.0).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn unit_weights_reduce_to_classic_on_partial_maps() {
        let w = RankWeights::unit(4);
        let all: Vec<Vec<ItemId>> = permutations(4).into_iter().map(|p| p[..2].to_vec()).collect();
        for a in &all {
            for b in &all {
                let (x, y) = (PositionMap::from_slots(4, a), PositionMap::from_slots(4, b));
                assert_eq!(kendall_generalized(&x, &y, &w), kendall_classic(&x, &y) as f64);
            }
        }
    }

    #[test]
    fn top_inversions_cost_more() {
        let w = RankWeights::standard(4);
        let base = perm(&[1, 2, 3, 4]);
        let top = kendall_generalized(&perm(&[2, 1, 3, 4]), &base, &w);
        let bottom = kendall_generalized(&perm(&[1, 2, 4, 3]), &base, &w);
        assert!(top > bottom, "{top} vs {bottom}");
        // The same pair swapped lower down costs more: zeta grows with position.
        let same_pair_low = kendall_generalized(&perm(&[3, 4, 2, 1]), &perm(&[3, 4, 1, 2]), &w);
        assert!(same_pair_low > top);
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((tv_distance(&[0.7, 0.3], &[0.5, 0.5]).unwrap() - 0.2).abs() < 1e-15);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn kappa_examples() {
        let c = PolicyConfig::new(Policy::Lru, 3).unwrap();
        let s = enumerate_states(&c, 3).unwrap();
        let k = kappa_diameter(&s, &RankWeights::unit(3), KappaMode::Exact).unwrap();
        assert_eq!(k.value, 3.0);
        let one = PolicyConfig::new(Policy::Lru, 1).unwrap();
        let s1 = enumerate_states(&one, 1).unwrap();
        assert_eq!(kappa_diameter(&s1, &RankWeights::unit(1), KappaMode::Exact).unwrap().value, 0.0);
        let h = kappa_diameter(&s, &RankWeights::unit(3), KappaMode::Heuristic { random_pairs: 10, seed: 1 }).unwrap();
        assert!(h.value <= k.value && !h.exact);
    }
}
