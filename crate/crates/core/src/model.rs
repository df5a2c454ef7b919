//! Core domain types: items, popularity laws, cache states, policy
//! configurations and rank weights.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Item identifier; 1 is the most popular item under the canonical ordering.
pub type ItemId = u32;

const SUM_TOL: f64 = 1e-12;

/// Request probabilities for items `1..=n`, sorted non-increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityDist {
    probs: Vec<f64>,
}

impl PopularityDist {
    /// Validates and wraps an explicit probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("empty probability vector"));
        }
        if probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(invalid("probabilities must be strictly positive"));
        }
        if probs.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("probabilities must be non-increasing"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL * probs.len().max(1) as f64 {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes arbitrary positive weights and sorts them non-increasing.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(invalid("weights must be strictly positive"));
        }
        weights.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = weights.iter().sum();
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of requesting `item`.
    #[inline]
    pub fn p(&self, item: ItemId) -> f64 {
        self.probs[item as usize - 1]
    }
}

/// Zipf law `p_i = A / i^alpha` over `n` items.
pub fn make_zipf(n: usize, alpha: f64) -> Result<PopularityDist> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let raw: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-alpha)).collect();
    // Summing smallest-first keeps the normalization error near one ulp.
    let total: f64 = raw.iter().rev().sum();
    Ok(PopularityDist {
        probs: raw.into_iter().map(|r| r / total).collect(),
    })
}

/// Whether a level holds cached data or only identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelKind {
    Real,
    Meta,
}

/// One ordered cache level; index 0 is the front.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Level {
    pub kind: LevelKind,
    pub slots: Vec<ItemId>,
}

impl Level {
    pub fn real(slots: Vec<ItemId>) -> Self {
        Self { kind: LevelKind::Real, slots }
    }

    pub fn meta(slots: Vec<ItemId>) -> Self {
        Self { kind: LevelKind::Meta, slots }
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.slots.contains(&item)
    }
}

/// Ordered multi-level cache occupancy. Level order per policy:
///
/// | policy | levels |
/// |---|---|
/// | LRU, FIFO, RANDOM, CLIMB | `[cache]` |
/// | k-LRU | `[meta 1, .., meta k-1, real k]` |
/// | LRU(m) | `[level 1, .., level h]` (level h is the top) |
/// | ARC | `[T1, T2, B1, B2]` |
/// | A-LRU | `[C2, C1, M2, M1]` |
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheState {
    pub levels: Vec<Level>,
}

impl CacheState {
    pub fn single(slots: Vec<ItemId>) -> Self {
        Self {
            levels: vec![Level::real(slots)],
        }
    }

    /// Items held in real levels, in level order.
    pub fn real_items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.levels
            .iter()
            .filter(|l| l.kind == LevelKind::Real)
            .flat_map(|l| l.slots.iter().copied())
    }

    pub fn is_cached(&self, item: ItemId) -> bool {
        self.levels
            .iter()
            .any(|l| l.kind == LevelKind::Real && l.contains(item))
    }
}

impl fmt::Display for CacheState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, level) in self.levels.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            if level.kind == LevelKind::Meta {
                f.write_str("m")?;
            }
            f.write_str("(")?;
            for (j, item) in level.slots.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{item}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// The c* occupancy: a single real level holding items `1..=m`.
pub fn ideal_vector(dist: &PopularityDist, m: usize) -> Result<CacheState> {
    if m == 0 || m > dist.n() {
        return Err(invalid(format!("need 1 <= m <= n, got m={m}, n={}", dist.n())));
    }
    Ok(CacheState::single((1..=m as ItemId).collect()))
}

/// Partition parameter of A-LRU: fixed, or decaying from LRU toward 2-LRU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlruBeta {
    Fixed(f64),
    Dynamic { t0: u64, c: f64 },
}

/// Eviction policy and its structural parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Lru,
    Fifo,
    Random,
    Climb,
    KLru { k: usize },
    LruM { caps: Vec<usize> },
    Arc,
    Alru(AlruBeta),
}

/// Discriminant of [`Policy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    Lru,
    Fifo,
    Random,
    Climb,
    KLru,
    LruM,
    Arc,
    Alru,
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Lru => PolicyKind::Lru,
            Policy::Fifo => PolicyKind::Fifo,
            Policy::Random => PolicyKind::Random,
            Policy::Climb => PolicyKind::Climb,
            Policy::KLru { .. } => PolicyKind::KLru,
            Policy::LruM { .. } => PolicyKind::LruM,
            Policy::Arc => PolicyKind::Arc,
            Policy::Alru(_) => PolicyKind::Alru,
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Lru => f.write_str("lru"),
            Policy::Fifo => f.write_str("fifo"),
            Policy::Random => f.write_str("random"),
            Policy::Climb => f.write_str("climb"),
            Policy::KLru { k } => write!(f, "klru:{k}"),
            Policy::LruM { caps } => {
                let caps: Vec<String> = caps.iter().map(|c| c.to_string()).collect();
                write!(f, "lrum:{}", caps.join(","))
            }
            Policy::Arc => f.write_str("arc"),
            Policy::Alru(AlruBeta::Fixed(beta)) => write!(f, "alru:{beta}"),
            Policy::Alru(AlruBeta::Dynamic { t0, c }) => write!(f, "alru:dyn:{t0},{c}"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    /// Parses `lru|fifo|random|climb|klru:k|lrum:m1,m2,..|arc|alru:beta|alru:dyn:T,c`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || invalid(format!("unknown policy '{s}'"));
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s.as_str(), None),
        };
        let policy = match (head, rest) {
            ("lru", None) => Policy::Lru,
            ("fifo", None) => Policy::Fifo,
            ("random", None) => Policy::Random,
            ("climb", None) => Policy::Climb,
            ("arc", None) => Policy::Arc,
            ("klru", Some(k)) => Policy::KLru {
                k: k.parse().map_err(|_| bad())?,
            },
            ("lrum", Some(list)) => Policy::LruM {
                caps: list
                    .split(',')
                    .map(|c| c.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad())?,
            },
            ("alru", Some(rest)) => match rest.strip_prefix("dyn:") {
                Some(params) => {
                    let (t0, c) = params.split_once(',').ok_or_else(bad)?;
                    Policy::Alru(AlruBeta::Dynamic {
                        t0: t0.trim().parse().map_err(|_| bad())?,
                        c: c.trim().parse().map_err(|_| bad())?,
                    })
                }
                None => Policy::Alru(AlruBeta::Fixed(rest.parse().map_err(|_| bad())?)),
            },
            _ => return Err(bad()),
        };
        Ok(policy)
    }
}

/// A policy together with its real-cache capacity and randomness seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyConfigRepr", into = "PolicyConfigRepr")]
pub struct PolicyConfig {
    policy: Policy,
    m: usize,
    rng_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct PolicyConfigRepr {
    policy: String,
    m: usize,
    #[serde(default)]
    rng_seed: u64,
}

impl TryFrom<PolicyConfigRepr> for PolicyConfig {
    type Error = Error;
    fn try_from(r: PolicyConfigRepr) -> Result<Self> {
        Ok(PolicyConfig::new(r.policy.parse()?, r.m)?.with_seed(r.rng_seed))
    }
}

impl From<PolicyConfig> for PolicyConfigRepr {
    fn from(c: PolicyConfig) -> Self {
        Self {
            policy: c.policy.to_string(),
            m: c.m,
            rng_seed: c.rng_seed,
        }
    }
}

impl PolicyConfig {
    /// Validates the parameters of `policy` for a real capacity of `m`.
    pub fn new(policy: Policy, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("cache capacity m must be at least 1"));
        }
        match &policy {
            Policy::KLru { k } if *k == 0 => return Err(invalid("k-LRU needs k >= 1")),
            Policy::LruM { caps } => {
                if caps.is_empty() || caps.contains(&0) {
                    return Err(invalid("LRU(m) capacities must be positive"));
                }
                let total: usize = caps.iter().sum();
                if total != m {
                    return Err(invalid(format!("LRU(m) capacities sum to {total}, expected m={m}")));
                }
            }
            Policy::Alru(AlruBeta::Fixed(beta)) if !(0.0..=1.0).contains(beta) => {
                return Err(invalid(format!("A-LRU beta must lie in [0,1], got {beta}")));
            }
            Policy::Alru(AlruBeta::Dynamic { c, .. }) if !(*c > 0.0) => {
                return Err(invalid(format!("A-LRU schedule needs c > 0, got {c}")));
            }
            _ => {}
        }
        Ok(Self {
            policy,
            m,
            rng_seed: 0,
        })
    }

    /// LRU(m) with the given per-level capacities; `m` is their sum.
    pub fn lrum(caps: Vec<usize>) -> Result<Self> {
        let m = caps.iter().sum();
        Self::new(Policy::LruM { caps }, m)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn kind(&self) -> PolicyKind {
        self.policy.kind()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Number of levels in a state of this policy.
    pub fn level_count(&self) -> usize {
        match &self.policy {
            Policy::KLru { k } => *k,
            Policy::LruM { caps } => caps.len(),
            Policy::Arc | Policy::Alru(_) => 4,
            _ => 1,
        }
    }

    /// Kinds of each level, in storage order.
    pub fn level_kinds(&self) -> Vec<LevelKind> {
        use LevelKind::*;
        match &self.policy {
            Policy::KLru { k } => {
                let mut kinds = vec![Meta; k - 1];
                kinds.push(Real);
                kinds
            }
            Policy::LruM { caps } => vec![Real; caps.len()],
            Policy::Arc | Policy::Alru(_) => vec![Real, Real, Meta, Meta],
            _ => vec![Real],
        }
    }

    /// Static per-level capacities, or `None` when they vary over time.
    pub fn level_caps(&self) -> Option<Vec<usize>> {
        match &self.policy {
            Policy::KLru { k } => Some(vec![self.m; *k]),
            Policy::LruM { caps } => Some(caps.clone()),
            Policy::Arc | Policy::Alru(AlruBeta::Dynamic { .. }) => None,
            Policy::Alru(AlruBeta::Fixed(beta)) => Some(AlruLayout::from_beta(*beta, self.m).caps()),
            _ => Some(vec![self.m]),
        }
    }

    /// Real levels in rank order, used to read a state as one ordered list.
    pub fn projection_order(&self) -> Vec<usize> {
        match &self.policy {
            Policy::KLru { k } => vec![k - 1],
            Policy::LruM { caps } => (0..caps.len()).rev().collect(),
            Policy::Arc => vec![1, 0],
            Policy::Alru(_) => vec![0, 1],
            _ => vec![0],
        }
    }

    /// Ordered real content of `state` under [`Self::projection_order`].
    pub fn project(&self, state: &CacheState) -> Vec<ItemId> {
        self.projection_order()
            .into_iter()
            .flat_map(|l| state.levels[l].slots.iter().copied())
            .collect()
    }

    /// Empty state with the right level structure.
    pub fn empty_state(&self) -> CacheState {
        CacheState {
            levels: self
                .level_kinds()
                .into_iter()
                .map(|kind| Level { kind, slots: Vec::new() })
                .collect(),
        }
    }

    pub fn label(&self) -> String {
        self.policy.to_string()
    }
}

/// Segment sizes of A-LRU for one value of beta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AlruLayout {
    /// C2 (promoted real segment) size, `floor((1-beta) m)`.
    pub c2: usize,
    /// C1 (admission real segment) size.
    pub c1: usize,
    /// M2 (ghosts of C2 evictees) size, `floor(beta m)`.
    pub m2: usize,
    /// M1 (request history) size.
    pub m1: usize,
}

impl AlruLayout {
    pub fn from_beta(beta: f64, m: usize) -> Self {
        // Guard the floors against representation error such as (1-0.7)*10.
        let c2 = (((1.0 - beta) * m as f64) + 1e-9).floor().clamp(0.0, m as f64) as usize;
        let m2 = ((beta * m as f64) + 1e-9).floor().clamp(0.0, m as f64) as usize;
        Self {
            c2,
            c1: m - c2,
            m2,
            m1: m - m2,
        }
    }

    /// Position bounds `(c1, c2, c3, c4, m1, m2, m3, m4)`, 1-based.
    pub fn bounds(&self) -> [usize; 8] {
        let m = self.c2 + self.c1;
        [
            self.c2.min(1),
            self.c2,
            self.c2 + 1,
            m.max(self.c2 + 1),
            self.m2.min(1),
            self.m2,
            self.m2 + 1,
            m.max(self.m2 + 1),
        ]
    }

    pub fn caps(&self) -> Vec<usize> {
        vec![self.c2, self.c1, self.m2, self.m1]
    }
}

/// Element weights `w`, adjacent-swap costs `zeta` and the derived
/// cumulative position costs `q` (`q[0] = 0`, `q[1] = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankWeights {
    w: Vec<f64>,
    zeta: Vec<f64>,
    q: Vec<f64>,
}

impl RankWeights {
    /// `w[i]` weights item `i+1`; `zeta[j]` is the cost at position `j+1`.
    pub fn new(w: Vec<f64>, zeta: Vec<f64>) -> Result<Self> {
        if w.iter().any(|&x| !(x > 0.0)) {
            return Err(invalid("element weights must be positive"));
        }
        if zeta.is_empty() || zeta.iter().any(|&z| !(z >= 0.0)) {
            return Err(invalid("swap costs must be non-negative"));
        }
        let mut q = vec![0.0, 1.0];
        for &z in &zeta[1..] {
            q.push(q.last().unwrap() + z);
        }
        Ok(Self { w, zeta, q })
    }

    /// `w_i = n-i+1`, `zeta_1 = 0.1`, `zeta_i = ln i`.
    pub fn standard(n: usize) -> Self {
        let w = (1..=n).map(|i| (n - i + 1) as f64).collect();
        let zeta = (1..=n)
            .map(|i| if i == 1 { 0.1 } else { (i as f64).ln() })
            .collect();
        Self::new(w, zeta).expect("default weights are valid")
    }

    /// Unit weights and costs; reduces to the classical Kendall tau.
    pub fn unit(n: usize) -> Self {
        Self::new(vec![1.0; n], vec![1.0; n]).expect("unit weights are valid")
    }

    /// Presence-only costs: reordering inside the cache is free.
    pub fn presence(n: usize) -> Self {
        let zeta = (1..=n).map(|i| if i == 1 { 1.0 } else { 0.0 }).collect();
        Self::new(vec![1.0; n], zeta).expect("presence weights are valid")
    }

    pub fn w(&self, item: ItemId) -> f64 {
        self.w[item as usize - 1]
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    /// Cumulative position cost `q_j`; `j = 0` means absent.
    pub fn q(&self, j: usize) -> f64 {
        self.q[j]
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn positions(&self) -> usize {
        self.q.len() - 1
    }
}

/// Sequence of requests; request `t` (1-based) is `items[t-1]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RequestStream {
    pub items: Vec<ItemId>,
    /// Wall-clock timestamps when read from a trace.
    pub timestamps: Option<Vec<i64>>,
    /// Original keys by dense id (`keys[id-1]`) when read from a trace.
    pub keys: Option<Vec<String>>,
}

impl RequestStream {
    pub fn from_items(items: Vec<ItemId>) -> Self {
        Self {
            items,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `(t, item)` pairs with `t` counting from 1.
    pub fn iter(&self) -> impl Iterator<Item = (u64, ItemId)> + '_ {
        self.items.iter().enumerate().map(|(i, &x)| (i as u64 + 1, x))
    }

    /// Largest item id in the stream.
    pub fn max_item(&self) -> ItemId {
        self.items.iter().copied().max().unwrap_or(0)
    }
}

/// Structural problem found by [`validate_state`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    DuplicateInLevel { level: usize, item: ItemId },
    LevelCountMismatch { expected: usize, found: usize },
    LevelKindMismatch { level: usize },
    CapacityExceeded { level: usize, cap: usize, found: usize },
    InvalidItem { level: usize },
    ArcBound { detail: String },
}

/// Checks level count, kinds, per-level distinctness and capacities.
/// Partially filled levels are allowed (cold start).
pub fn validate_state(state: &CacheState, config: &PolicyConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let kinds = config.level_kinds();
    if state.levels.len() != kinds.len() {
        out.push(Violation::LevelCountMismatch {
            expected: kinds.len(),
            found: state.levels.len(),
        });
        return out;
    }
    for (l, (level, kind)) in state.levels.iter().zip(&kinds).enumerate() {
        if level.kind != *kind {
            out.push(Violation::LevelKindMismatch { level: l });
        }
        if level.slots.contains(&0) {
            out.push(Violation::InvalidItem { level: l });
        }
        let mut seen = level.slots.clone();
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            out.push(Violation::DuplicateInLevel { level: l, item: w[0] });
        }
    }
    let m = config.m();
    match config.level_caps() {
        Some(caps) => {
            for (l, (level, cap)) in state.levels.iter().zip(caps).enumerate() {
                if level.slots.len() > cap {
                    out.push(Violation::CapacityExceeded {
                        level: l,
                        cap,
                        found: level.slots.len(),
                    });
                }
            }
        }
        None => {
            let len = |i: usize| state.levels[i].slots.len();
            if config.kind() == PolicyKind::Arc {
                let checks = [
                    (len(0) + len(1) <= m, "|T1|+|T2| <= m"),
                    (len(0) + len(2) <= m, "|T1|+|B1| <= m"),
                    (len(0) + len(1) + len(2) + len(3) <= 2 * m, "total <= 2m"),
                ];
                for (ok, what) in checks {
                    if !ok {
                        out.push(Violation::ArcBound { detail: what.into() });
                    }
                }
            } else {
                for (level, cap) in [(0, m), (1, m), (2, m), (3, m)] {
                    if len(level) > cap {
                        out.push(Violation::CapacityExceeded { level, cap, found: len(level) });
                    }
                }
            }
        }
    }
    let real: usize = state
        .levels
        .iter()
        .filter(|l| l.kind == LevelKind::Real)
        .map(|l| l.slots.len())
        .sum();
    if config.kind() != PolicyKind::KLru && real > m {
        out.push(Violation::CapacityExceeded {
            level: usize::MAX,
            cap: m,
            found: real,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zipf_examples() {
        let d = make_zipf(4, 0.0).unwrap();
        assert!(d.probs().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let d = make_zipf(4, 1.0).unwrap();
        for (p, e) in d.probs().iter().zip([0.48, 0.24, 0.16, 0.12]) {
            assert!((p - e).abs() < 1e-15, "{p} vs {e}");
        }
        assert_eq!(make_zipf(1, 2.0).unwrap().probs(), &[1.0]);
        assert!(make_zipf(0, 1.0).is_err());
        assert!(make_zipf(3, -1.0).is_err());
    }

    #[test]
    fn ideal_vector_examples() {
        let d = make_zipf(5, 0.8).unwrap();
        assert_eq!(ideal_vector(&d, 3).unwrap(), CacheState::single(vec![1, 2, 3]));
        assert_eq!(ideal_vector(&d, 1).unwrap(), CacheState::single(vec![1]));
        assert_eq!(ideal_vector(&d, 5).unwrap(), CacheState::single(vec![1, 2, 3, 4, 5]));
        assert!(ideal_vector(&d, 6).is_err());
    }

    #[test]
    fn validate_examples() {
        let lru = PolicyConfig::new(Policy::Lru, 3).unwrap();
        assert!(validate_state(&CacheState::single(vec![1, 2, 3]), &lru).is_empty());
        assert_eq!(
            validate_state(&CacheState::single(vec![1, 1, 3]), &lru),
            vec![Violation::DuplicateInLevel { level: 0, item: 1 }]
        );
        let klru = PolicyConfig::new(Policy::KLru { k: 2 }, 2).unwrap();
        let three = CacheState {
            levels: vec![Level::meta(vec![1]), Level::meta(vec![2]), Level::real(vec![3])],
        };
        assert_eq!(
            validate_state(&three, &klru),
            vec![Violation::LevelCountMismatch { expected: 2, found: 3 }]
        );
    }

    #[test]
    fn alru_layout_bounds() {
        let l = AlruLayout::from_beta(0.5, 4);
        assert_eq!(l.bounds(), [1, 2, 3, 4, 1, 2, 3, 4]);
        assert_eq!(AlruLayout::from_beta(1.0, 4).caps(), vec![0, 4, 4, 0]);
        assert_eq!(AlruLayout::from_beta(0.0, 4).caps(), vec![4, 0, 0, 4]);
        assert_eq!(AlruLayout::from_beta(0.7, 10).c2, 3);
    }

    #[test]
    fn policy_roundtrip() {
        for s in ["lru", "fifo", "random", "climb", "klru:2", "lrum:1,3", "arc", "alru:0.5", "alru:dyn:1250,500"] {
            let p: Policy = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("lfu".parse::<Policy>().is_err());
        assert!(PolicyConfig::new(Policy::LruM { caps: vec![1, 3] }, 3).is_err());
    }

    #[test]
    fn rank_weight_q() {
        let w = RankWeights::standard(4);
        assert_eq!(w.q(0), 0.0);
        assert_eq!(w.q(1), 1.0);
        assert!((w.q(2) - (1.0 + 2f64.ln())).abs() < 1e-15);
        assert_eq!(w.w(1), 4.0);
        let u = RankWeights::unit(3);
        assert_eq!((0..=3).map(|j| u.q(j)).collect::<Vec<_>>(), vec![0.0, 1.0, 2.0, 3.0]);
    }
}
