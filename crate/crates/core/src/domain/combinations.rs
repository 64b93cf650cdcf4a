//! Enumeration and indexing of busy-server combinations.

use super::DomainError;

/// Per-class busy-server counts; the discrete core of the planner state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Combination {
    pub counts: Vec<u16>,
}

impl Combination {
    pub fn new(counts: Vec<u16>) -> Self {
        Self { counts }
    }

    pub fn zero(n_classes: usize) -> Self {
        Self { counts: vec![0; n_classes] }
    }

    /// Total busy servers.
    pub fn total(&self) -> u16 {
        self.counts.iter().sum()
    }

    pub fn is_full(&self, n_servers: u16) -> bool {
        self.total() >= n_servers
    }

    /// Successor after committing one more server to `class`.
    ///
    /// Fails when all servers are busy: acceptance is only defined with a
    /// free server available.
    pub fn accept(&self, class: usize, n_servers: u16) -> Result<Combination, DomainError> {
        if self.is_full(n_servers) {
            return Err(DomainError::NoFreeServer);
        }
        let mut counts = self.counts.clone();
        counts[class] += 1;
        Ok(Combination { counts })
    }
}

/// `C(n + k, k)` as u64, the number of k-vectors of non-negative integers
/// summing to at most n.
pub fn combination_count(n_servers: u16, n_classes: usize) -> u64 {
    binomial(n_servers as u64 + n_classes as u64, n_classes as u64)
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // Exact at every step because C(n, i+1) is an integer and the
        // running product is C(n, i) scaled by (n - i).
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    u64::try_from(acc).expect("combination count exceeds u64")
}

/// Every combination with at most `n_servers` busy, in ascending
/// lexicographic order of the count vectors.
pub fn enumerate_combinations(n_servers: u16, n_classes: usize) -> Vec<Combination> {
    assert!(n_servers >= 1 && n_classes >= 1);
    let mut out = Vec::with_capacity(combination_count(n_servers, n_classes) as usize);
    let mut counts = vec![0u16; n_classes];
    fill(&mut out, &mut counts, 0, n_servers);
    out
}

fn fill(out: &mut Vec<Combination>, counts: &mut Vec<u16>, class: usize, budget: u16) {
    if class == counts.len() {
        out.push(Combination { counts: counts.clone() });
        return;
    }
    for v in 0..=budget {
        counts[class] = v;
        fill(out, counts, class + 1, budget - v);
    }
    counts[class] = 0;
}

/// The ordered combination space of an instance, with O(K) rank lookup.
#[derive(Clone, Debug)]
pub struct CombinationSet {
    n_servers: u16,
    n_classes: usize,
    combos: Vec<Combination>,
    /// `suffix_counts[d][b]` = number of d-dimensional count vectors with sum
    /// at most b = C(b + d, d); used by the rank computation.
    suffix_counts: Vec<Vec<u64>>,
}

impl CombinationSet {
    pub fn new(n_servers: u16, n_classes: usize) -> Self {
        let combos = enumerate_combinations(n_servers, n_classes);
        let mut suffix_counts = Vec::with_capacity(n_classes + 1);
        for d in 0..=n_classes {
            let row: Vec<u64> = (0..=n_servers as u64).map(|b| binomial(b + d as u64, d as u64)).collect();
            suffix_counts.push(row);
        }
        Self { n_servers, n_classes, combos, suffix_counts }
    }

    pub fn n_servers(&self) -> u16 {
        self.n_servers
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }

    pub fn combos(&self) -> &[Combination] {
        &self.combos
    }

    pub fn get(&self, index: usize) -> &Combination {
        &self.combos[index]
    }

    /// Rank of a count vector in the lexicographic order, counting how many
    /// valid vectors precede it.
    pub fn index_of(&self, counts: &[u16]) -> Option<usize> {
        if counts.len() != self.n_classes {
            return None;
        }
        let total: u32 = counts.iter().map(|&c| c as u32).sum();
        if total > self.n_servers as u32 {
            return None;
        }
        let mut rank: u64 = 0;
        let mut budget = self.n_servers;
        for (j, &c) in counts.iter().enumerate() {
            let dims = self.n_classes - j - 1;
            for v in 0..c {
                rank += self.suffix_counts[dims][(budget - v) as usize];
            }
            budget -= c;
        }
        Some(rank as usize)
    }

    /// Index of the combination reached from `index` by adding one busy
    /// server of `class`, or `None` when full.
    pub fn accept_index(&self, index: usize, class: usize) -> Option<usize> {
        let combo = &self.combos[index];
        if combo.is_full(self.n_servers) {
            return None;
        }
        let mut counts = combo.counts.clone();
        counts[class] += 1;
        self.index_of(&counts)
    }
}
