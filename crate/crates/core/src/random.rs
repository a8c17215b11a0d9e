//! Seeded randomness for the simulation engine.
//!
//! Every random decision taken by miners (tie order, pairing, block winner)
//! goes through a [`Chooser`]. The seeded implementation drives Monte Carlo
//! runs; [`for_each_path`] replays a computation over every decision path so
//! expectations over tie-breaking can be computed exactly on small instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub trait Chooser {
    /// Uniform index in `0..n`. `n` must be at least 1.
    fn below(&mut self, n: usize) -> usize;

    /// Index drawn with probability proportional to `weights`.
    fn weighted(&mut self, weights: &[f64]) -> usize;

    /// Fisher-Yates shuffle driven by [`Chooser::below`].
    fn shuffle<T>(&mut self, items: &mut [T])
    where
        Self: Sized,
    {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// A [`Chooser`] backed by a ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct SeededChooser {
    rng: ChaCha8Rng,
}

impl SeededChooser {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Chooser for SeededChooser {
    fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        if n == 1 {
            return 0;
        }
        self.rng.random_range(0..n)
    }

    fn weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "weights must have positive mass");
        let mut u = self.rng.random::<f64>() * total;
        let mut last = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            last = i;
            if u < w {
                return i;
            }
            u -= w;
        }
        last
    }
}

/// Seeded RNG for non-engine draws (participants, fee samples).
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a base seed with stream labels into an independent 64-bit seed.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    let mut state = splitmix(base ^ 0x6a09_e667_f3bc_c908);
    for &label in labels {
        state = splitmix(state ^ splitmix(label.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    state
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
struct Decision {
    taken: usize,
    arity: usize,
}

/// Chooser that follows a scripted prefix of decisions and takes the first
/// option past it, recording each branching point.
#[derive(Debug, Default)]
pub struct ScriptedChooser {
    script: Vec<usize>,
    decisions: Vec<Decision>,
    probability: f64,
}

impl ScriptedChooser {
    fn start(script: Vec<usize>) -> Self {
        Self {
            script,
            decisions: Vec::new(),
            probability: 1.0,
        }
    }

    fn next_position(&mut self, arity: usize) -> usize {
        let depth = self.decisions.len();
        let taken = self.script.get(depth).copied().unwrap_or(0);
        debug_assert!(taken < arity);
        self.decisions.push(Decision { taken, arity });
        taken
    }

    /// Probability of the path taken so far.
    pub fn probability(&self) -> f64 {
        self.probability
    }

    fn successor(&self) -> Option<Vec<usize>> {
        let mut decisions = self.decisions.clone();
        while let Some(last) = decisions.pop() {
            if last.taken + 1 < last.arity {
                let mut script: Vec<usize> = decisions.iter().map(|d| d.taken).collect();
                script.push(last.taken + 1);
                return Some(script);
            }
        }
        None
    }
}

impl Chooser for ScriptedChooser {
    fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        if n == 1 {
            return 0;
        }
        let pos = self.next_position(n);
        self.probability /= n as f64;
        pos
    }

    fn weighted(&mut self, weights: &[f64]) -> usize {
        let support: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
        assert!(!support.is_empty(), "weights must have positive mass");
        if support.len() == 1 {
            return support[0];
        }
        let total: f64 = support.iter().map(|&i| weights[i]).sum();
        let pos = self.next_position(support.len());
        let idx = support[pos];
        self.probability *= weights[idx] / total;
        idx
    }
}

/// Runs `run` once per decision path, passing each result with its path
/// probability to `visit`. Returns `false` (after visiting `max_paths` paths)
/// if the path tree is larger than `max_paths`.
pub fn for_each_path<T>(
    max_paths: usize,
    mut run: impl FnMut(&mut ScriptedChooser) -> T,
    mut visit: impl FnMut(f64, T),
) -> bool {
    let mut script = Vec::new();
    for _ in 0..max_paths {
        let mut chooser = ScriptedChooser::start(script);
        let out = run(&mut chooser);
        visit(chooser.probability(), out);
        match chooser.successor() {
            Some(next) => script = next,
            None => return true,
        }
    }
    false
}
