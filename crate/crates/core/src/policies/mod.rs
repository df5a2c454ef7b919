//! Single-request transition functions for the eight eviction policies.
//!
//! Every step function mutates a state in place and returns the hit flag,
//! which is true iff the requested item sat in a real level before the step.
//! Levels are filled before anything is evicted (cold start).

mod alru;
mod arc;

pub use alru::{alru_beta, repartition_alru, step_alru};
pub use arc::step_arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{AlruBeta, AlruLayout, CacheState, ItemId, Policy, PolicyConfig};

fn position(slots: &[ItemId], item: ItemId) -> Option<usize> {
    slots.iter().position(|&x| x == item)
}

/// Inserts at the front and drops whatever falls past `cap`.
/// Returns the evicted item, if any.
pub(crate) fn push_front(slots: &mut Vec<ItemId>, cap: usize, item: ItemId) -> Option<ItemId> {
    if cap == 0 {
        return Some(item);
    }
    slots.insert(0, item);
    if slots.len() > cap {
        slots.pop()
    } else {
        None
    }
}

pub(crate) fn move_to_front(slots: &mut [ItemId], j: usize) {
    slots[..=j].rotate_right(1);
}

/// LRU: a hit moves the item to the front; a miss inserts at the front and
/// evicts the last item.
pub fn step_lru(slots: &mut Vec<ItemId>, cap: usize, item: ItemId) -> bool {
    match position(slots, item) {
        Some(j) => {
            move_to_front(slots, j);
            true
        }
        None => {
            push_front(slots, cap, item);
            false
        }
    }
}

/// FIFO: a hit leaves the order untouched; a miss inserts at the front.
pub fn step_fifo(slots: &mut Vec<ItemId>, cap: usize, item: ItemId) -> bool {
    if slots.contains(&item) {
        return true;
    }
    push_front(slots, cap, item);
    false
}

/// RANDOM with the replaced slot supplied by the caller (0-based).
/// During cold start the item is appended and `slot` is ignored.
pub fn step_random_at(slots: &mut Vec<ItemId>, cap: usize, item: ItemId, slot: usize) -> bool {
    if slots.contains(&item) {
        return true;
    }
    if slots.len() < cap {
        slots.push(item);
    } else {
        slots[slot] = item;
    }
    false
}

/// RANDOM: a miss replaces a uniformly chosen slot.
pub fn step_random<R: Rng + ?Sized>(slots: &mut Vec<ItemId>, cap: usize, item: ItemId, rng: &mut R) -> bool {
    if slots.contains(&item) {
        return true;
    }
    let slot = if slots.len() < cap { 0 } else { rng.random_range(0..cap) };
    step_random_at(slots, cap, item, slot)
}

/// CLIMB: a hit swaps the item with its predecessor; a miss takes the last
/// position.
pub fn step_climb(slots: &mut Vec<ItemId>, cap: usize, item: ItemId) -> bool {
    match position(slots, item) {
        Some(j) => {
            if j > 0 {
                slots.swap(j, j - 1);
            }
            true
        }
        None => {
            if slots.len() < cap {
                slots.push(item);
            } else {
                *slots.last_mut().expect("cap >= 1") = item;
            }
            false
        }
    }
}

/// k-LRU over `levels[0..k]`, all of capacity `cap`; the last level is real.
///
/// Every level holding the item moves it to the front. A level not holding
/// it admits it at the front when the level below held it before the
/// request; level 1 always admits.
pub fn step_klru(levels: &mut [Vec<ItemId>], cap: usize, item: ItemId) -> bool {
    let k = levels.len();
    let before: Vec<Option<usize>> = levels.iter().map(|l| position(l, item)).collect();
    for l in 0..k {
        match before[l] {
            Some(j) => move_to_front(&mut levels[l], j),
            None if l == 0 || before[l - 1].is_some() => {
                push_front(&mut levels[l], cap, item);
            }
            None => {}
        }
    }
    before[k - 1].is_some()
}

/// LRU(m) over `levels[0..h]` with capacities `caps`; level `h-1` is the top.
///
/// A hit below the top promotes the item to the front of the next level and
/// demotes that level's last item to the front of the current one.
pub fn step_lrum(levels: &mut [Vec<ItemId>], caps: &[usize], item: ItemId) -> bool {
    let h = levels.len();
    let found = levels
        .iter()
        .enumerate()
        .find_map(|(l, slots)| position(slots, item).map(|j| (l, j)));
    match found {
        Some((l, j)) if l + 1 == h => {
            move_to_front(&mut levels[l], j);
            true
        }
        Some((l, j)) => {
            levels[l].remove(j);
            let (lower, upper) = levels.split_at_mut(l + 1);
            let next = &mut upper[0];
            if next.len() >= caps[l + 1] {
                let demoted = next.pop().expect("cap >= 1");
                lower[l].insert(0, demoted);
            }
            next.insert(0, item);
            true
        }
        None => {
            push_front(&mut levels[0], caps[0], item);
            false
        }
    }
}

/// Policy-private state beyond the cache levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Aux {
    /// ARC adaptation target.
    pub arc_p: usize,
    /// Requests served so far (dynamic A-LRU schedule).
    pub t: u64,
}

/// Applies one request to `state` under `config`; `draw(m)` picks the slot
/// RANDOM replaces. Dynamic A-LRU repartitions first when its layout changes.
pub fn step_with(
    config: &PolicyConfig,
    state: &mut CacheState,
    aux: &mut Aux,
    item: ItemId,
    draw: &mut dyn FnMut(usize) -> usize,
) -> bool {
    let m = config.m();
    match config.policy() {
        Policy::Lru => step_lru(&mut state.levels[0].slots, m, item),
        Policy::Fifo => step_fifo(&mut state.levels[0].slots, m, item),
        Policy::Climb => step_climb(&mut state.levels[0].slots, m, item),
        Policy::Random => {
            let slots = &mut state.levels[0].slots;
            if slots.contains(&item) || slots.len() < m {
                step_random_at(slots, m, item, 0)
            } else {
                step_random_at(slots, m, item, draw(m))
            }
        }
        Policy::KLru { .. } => {
            let mut levels: Vec<Vec<ItemId>> = state.levels.iter_mut().map(|l| std::mem::take(&mut l.slots)).collect();
            let hit = step_klru(&mut levels, m, item);
            for (level, slots) in state.levels.iter_mut().zip(levels) {
                level.slots = slots;
            }
            hit
        }
        Policy::LruM { caps } => {
            let mut levels: Vec<Vec<ItemId>> = state.levels.iter_mut().map(|l| std::mem::take(&mut l.slots)).collect();
            let hit = step_lrum(&mut levels, caps, item);
            for (level, slots) in state.levels.iter_mut().zip(levels) {
                level.slots = slots;
            }
            hit
        }
        Policy::Arc => {
            let [t1, t2, b1, b2] = &mut state.levels[..] else {
                unreachable!("ARC state has four levels")
            };
            step_arc([&mut t1.slots, &mut t2.slots, &mut b1.slots, &mut b2.slots], &mut aux.arc_p, m, item)
        }
        Policy::Alru(AlruBeta::Fixed(beta)) => step_alru(state, AlruLayout::from_beta(*beta, m), item),
        Policy::Alru(AlruBeta::Dynamic { t0, c }) => {
            aux.t += 1;
            let beta = alru_beta(aux.t, m, *t0, *c).expect("validated schedule");
            let layout = AlruLayout::from_beta(beta, m);
            repartition_alru(state, layout);
            step_alru(state, layout, item)
        }
    }
}

/// A running policy: configuration, current state and private bookkeeping.
#[derive(Debug, Clone)]
pub struct PolicyInstance {
    config: PolicyConfig,
    state: CacheState,
    aux: Aux,
    rng: ChaCha8Rng,
}

impl PolicyInstance {
    /// Empty cache seeded from the configuration.
    pub fn new(config: PolicyConfig) -> Self {
        let state = config.empty_state();
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed());
        Self {
            config,
            state,
            aux: Aux::default(),
            rng,
        }
    }

    /// Starts from an explicit state (and ARC target `arc_p`).
    pub fn with_state(config: PolicyConfig, state: CacheState, aux: Aux) -> Self {
        let mut inst = Self::new(config);
        inst.state = state;
        inst.aux = aux;
        inst
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn state(&self) -> &CacheState {
        &self.state
    }

    pub fn aux(&self) -> Aux {
        self.aux
    }

    /// Serves one request; returns the hit flag.
    pub fn step(&mut self, item: ItemId) -> bool {
        let rng = &mut self.rng;
        step_with(&self.config, &mut self.state, &mut self.aux, item, &mut |m| rng.random_range(0..m))
    }

    /// Serves a request sequence and returns the number of hits.
    pub fn run(&mut self, items: &[ItemId]) -> u64 {
        items.iter().map(|&x| self.step(x) as u64).sum()
    }
}
