use crate::error::{invalid, Result};
use crate::model::{AlruLayout, CacheState, ItemId};

use super::{move_to_front, position, push_front};

const C2: usize = 0;
const C1: usize = 1;
const M2: usize = 2;
const M1: usize = 3;

/// Dynamic A-LRU partition weight `m / (m + max(0, t-T)/c)`.
pub fn alru_beta(t: u64, m: usize, t0: u64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(invalid(format!("schedule constant c must be positive, got {c}")));
    }
    let excess = t.saturating_sub(t0) as f64;
    Ok(m as f64 / (m as f64 + excess / c))
}

/// A-LRU over levels `[C2, C1, M2, M1]` sized by `layout`.
///
/// - C2 is the promoted real segment and C1 the admission segment.
/// - M1 records every request; M2 holds identities evicted from C2.
/// - A request found in M1 or M2 enters C2, pushing C2's evictee into M2.
/// - A C1 hit promotes into C2; C2's last item drops to the front of C1.
/// - Empty segments are skipped, so `beta = 1` is LRU and `beta = 0` is 2-LRU.
pub fn step_alru(state: &mut CacheState, layout: AlruLayout, item: ItemId) -> bool {
    let lv = &mut state.levels;
    let in_c2 = position(&lv[C2].slots, item);
    let in_c1 = position(&lv[C1].slots, item);
    let in_meta = lv[M1].contains(item) || lv[M2].contains(item);

    if let Some(j) = in_c2 {
        move_to_front(&mut lv[C2].slots, j);
    } else if let Some(j) = in_c1 {
        if layout.c2 >= 1 {
            lv[C1].slots.remove(j);
            if let Some(down) = push_front(&mut lv[C2].slots, layout.c2, item) {
                lv[C1].slots.insert(0, down);
            }
        } else {
            move_to_front(&mut lv[C1].slots, j);
        }
    } else if in_meta && layout.c2 >= 1 {
        if let Some(j) = position(&lv[M2].slots, item) {
            lv[M2].slots.remove(j);
        }
        if let Some(evicted) = push_front(&mut lv[C2].slots, layout.c2, item) {
            push_front(&mut lv[M2].slots, layout.m2, evicted);
        }
    } else {
        push_front(&mut lv[C1].slots, layout.c1, item);
    }

    match position(&lv[M1].slots, item) {
        Some(j) => move_to_front(&mut lv[M1].slots, j),
        None => {
            push_front(&mut lv[M1].slots, layout.m1, item);
        }
    }
    in_c2.is_some() || in_c1.is_some()
}

/// Resizes segments to `layout`. Real items that no longer fit keep their
/// identities at the front of the adjacent meta segment in recency order;
/// nothing is promoted into a grown real segment.
pub fn repartition_alru(state: &mut CacheState, layout: AlruLayout) {
    let lv = &mut state.levels;
    spill(lv, C2, M2, layout.c2, layout.m2);
    spill(lv, C1, M1, layout.c1, layout.m1);
    lv[M2].slots.truncate(layout.m2);
    lv[M1].slots.truncate(layout.m1);
}

fn spill(lv: &mut [crate::model::Level], real: usize, meta: usize, real_cap: usize, meta_cap: usize) {
    if lv[real].slots.len() <= real_cap {
        return;
    }
    let overflow = lv[real].slots.split_off(real_cap);
    let keep: Vec<ItemId> = lv[meta]
        .slots
        .iter()
        .copied()
        .filter(|x| !overflow.contains(x))
        .collect();
    let mut merged = overflow;
    merged.extend(keep);
    merged.truncate(meta_cap);
    lv[meta].slots = merged;
}
