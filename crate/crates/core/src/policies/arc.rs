use crate::model::ItemId;

use super::{move_to_front, position};

/// Adaptive Replacement Cache over lists `[T1, T2, B1, B2]` (front = MRU)
/// with adaptation target `p` and capacity `c`.
///
/// The adaptation step is `max(1, |B2|/|B1|)` in integer arithmetic so that
/// `p` stays in `0..=c`. Replacement only runs once `|T1|+|T2| = c`.
pub fn step_arc(lists: [&mut Vec<ItemId>; 4], p: &mut usize, c: usize, item: ItemId) -> bool {
    let [t1, t2, b1, b2] = lists;

    if let Some(j) = position(t1, item) {
        t1.remove(j);
        t2.insert(0, item);
        return true;
    }
    if let Some(j) = position(t2, item) {
        move_to_front(t2, j);
        return true;
    }

    if let Some(j) = position(b1, item) {
        let delta = (b2.len() / b1.len()).max(1);
        *p = (*p + delta).min(c);
        // Remove first: replacement may push onto this list and shift `j`.
        b1.remove(j);
        replace(t1, t2, b1, b2, *p, c, false);
        t2.insert(0, item);
        return false;
    }
    if let Some(j) = position(b2, item) {
        let delta = (b1.len() / b2.len()).max(1);
        *p = p.saturating_sub(delta);
        b2.remove(j);
        replace(t1, t2, b1, b2, *p, c, true);
        t2.insert(0, item);
        return false;
    }

    if t1.len() + b1.len() == c {
        if t1.len() < c {
            b1.pop();
            replace(t1, t2, b1, b2, *p, c, false);
        } else {
            t1.pop();
        }
    } else {
        let total = t1.len() + t2.len() + b1.len() + b2.len();
        if total >= c {
            if total == 2 * c {
                b2.pop();
            }
            replace(t1, t2, b1, b2, *p, c, false);
        }
    }
    t1.insert(0, item);
    false
}

fn replace(
    t1: &mut Vec<ItemId>,
    t2: &mut Vec<ItemId>,
    b1: &mut Vec<ItemId>,
    b2: &mut Vec<ItemId>,
    p: usize,
    c: usize,
    in_b2: bool,
) {
    if t1.len() + t2.len() < c {
        return;
    }
    if !t1.is_empty() && (t1.len() > p || (in_b2 && t1.len() == p)) {
        let x = t1.pop().expect("non-empty");
        b1.insert(0, x);
    } else {
        let x = t2.pop().expect("cache is full");
        b2.insert(0, x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(c: usize, reqs: &[ItemId]) -> ([Vec<ItemId>; 4], usize, Vec<bool>) {
        let mut l: [Vec<ItemId>; 4] = Default::default();
        let mut p = 0;
        let mut hits = Vec::new();
        for &x in reqs {
            let [a, b, d, e] = &mut l;
            hits.push(step_arc([a, b, d, e], &mut p, c, x));
        }
        (l, p, hits)
    }

    #[test]
    fn first_request_goes_to_t1() {
        let (l, _, hits) = run(2, &[1]);
        assert_eq!(l[0], vec![1]);
        assert_eq!(hits, vec![false]);
    }

    #[test]
    fn t1_hit_moves_to_t2() {
        let (l, _, hits) = run(2, &[1, 1]);
        assert!(l[0].is_empty());
        assert_eq!(l[1], vec![1]);
        assert_eq!(hits, vec![false, true]);
    }

    #[test]
    fn full_t1_drops_its_lru_outright() {
        let (l, _, _) = run(2, &[1, 2, 3]);
        assert_eq!(l[0], vec![3, 2]);
        assert!(l[2].is_empty());
    }

    #[test]
    fn b1_ghost_hit_raises_p() {
        let (l, p, _) = run(2, &[1, 1, 2, 3]);
        assert_eq!((l[0].clone(), l[1].clone(), l[2].clone()), (vec![3], vec![1], vec![2]));
        assert_eq!(p, 0);
        let (l, p, hits) = run(2, &[1, 1, 2, 3, 2]);
        assert_eq!(p, 1);
        assert_eq!(l, [vec![3], vec![2], vec![], vec![1]]);
        assert!(!hits[4]);
    }

    #[test]
    fn ghost_hit_removes_the_requested_ghost() {
        // T2's LRU is demoted onto B2 while the hit ghost sits behind it.
        let mut l: [Vec<ItemId>; 4] = [vec![], vec![1, 2], vec![], vec![3, 4]];
        let mut p = 0;
        let [a, b, d, e] = &mut l;
        step_arc([a, b, d, e], &mut p, 2, 4);
        assert_eq!(l, [vec![], vec![4, 1], vec![], vec![2, 3]]);
    }

    #[test]
    fn ghost_hit_step_uses_ratio() {
        // Grow B2 larger than B1, then hit in B1: p rises by |B2|/|B1|.
        let mut l: [Vec<ItemId>; 4] = [vec![], vec![1, 2, 3], vec![9], vec![4, 5, 6]];
        let mut p = 0;
        let [a, b, d, e] = &mut l;
        step_arc([a, b, d, e], &mut p, 4, 9);
        assert_eq!(p, 3);
    }
}
