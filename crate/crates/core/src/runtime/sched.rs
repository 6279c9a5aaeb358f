//! Run-queue management and the three scheduling policies.

use std::collections::{HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Policy, SchedulerConfig};
use crate::event::GoroutineId;

/// What the running goroutine is about to do at a scheduling point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PointKind {
    /// Explicit `yield` or a loop back-edge: FIFO rotates here.
    Rotate,
    /// Any other scheduling point.
    Other,
}

pub(crate) struct Scheduler {
    policy: Policy,
    queue: VecDeque<GoroutineId>,
    rng: ChaCha8Rng,
    yield_probability: f64,
    delay_bound: u32,
    critical_lines: HashSet<u32>,
    /// Remaining skipped decisions per goroutine, indexed by id.
    delays: Vec<u32>,
}

impl Scheduler {
    pub fn new(config: &SchedulerConfig, program_file: &str) -> Self {
        let critical_lines = config
            .critical_points
            .iter()
            .filter(|s| s.file == program_file)
            .map(|s| s.line)
            .collect();
        Scheduler {
            policy: config.policy,
            queue: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            yield_probability: config.yield_probability,
            delay_bound: config.delay_bound,
            critical_lines,
            delays: Vec::new(),
        }
    }

    pub fn make_runnable(&mut self, g: GoroutineId) {
        debug_assert!(!self.queue.contains(&g));
        self.queue.push_back(g);
    }

    #[cfg(test)]
    pub fn runnable(&self) -> impl Iterator<Item = GoroutineId> + '_ {
        self.queue.iter().copied()
    }

    /// Uniform index in `0..n`; no draw is made when `n == 1`.
    pub fn choose(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        if n == 1 {
            0
        } else {
            self.rng.gen_range(0..n)
        }
    }

    /// Whether a source line counts as a critical point for delay injection.
    pub fn is_critical(&self, line: u32) -> bool {
        self.policy == Policy::DelayInject && self.critical_lines.contains(&line)
    }

    /// Flips the perturbation coin for `g` standing at a critical point.
    /// Returns whether `g` is now delayed.
    pub fn maybe_delay(&mut self, g: GoroutineId) -> bool {
        if !self.rng.gen_bool(self.yield_probability) {
            return false;
        }
        let i = g as usize;
        if self.delays.len() <= i {
            self.delays.resize(i + 1, 0);
        }
        self.delays[i] = self.delay_bound;
        true
    }

    fn delay_of(&self, g: GoroutineId) -> u32 {
        self.delays.get(g as usize).copied().unwrap_or(0)
    }

    /// Decision at a scheduling point of the running goroutine `cur`.
    /// Returns the goroutine to run next; if it differs from `cur`, `cur`
    /// has been moved to the back of the run queue.
    pub fn decide(&mut self, cur: GoroutineId, point: PointKind) -> GoroutineId {
        let next = match self.policy {
            Policy::Fifo => {
                if point == PointKind::Rotate {
                    self.queue.pop_front()
                } else {
                    None
                }
            }
            Policy::Random => {
                let i = self.choose(self.queue.len() + 1);
                (i < self.queue.len()).then(|| self.queue.remove(i).expect("index in range"))
            }
            Policy::DelayInject => {
                let mut candidates: Vec<GoroutineId> = self.queue.iter().copied().collect();
                candidates.push(cur);
                let pick = self.pick_delayed(&candidates);
                (pick != cur).then(|| {
                    let i = self.queue.iter().position(|&g| g == pick).expect("candidate queued");
                    self.queue.remove(i).expect("index in range")
                })
            }
        };
        match next {
            Some(g) => {
                self.queue.push_back(cur);
                g
            }
            None => cur,
        }
    }

    /// Decision after the running goroutine blocked or ended.
    pub fn pick_next(&mut self) -> Option<GoroutineId> {
        if self.queue.is_empty() {
            return None;
        }
        match self.policy {
            Policy::Fifo => self.queue.pop_front(),
            Policy::Random => {
                let i = self.choose(self.queue.len());
                self.queue.remove(i)
            }
            Policy::DelayInject => {
                let candidates: Vec<GoroutineId> = self.queue.iter().copied().collect();
                let pick = self.pick_delayed(&candidates);
                let i = self.queue.iter().position(|&g| g == pick).expect("candidate queued");
                self.queue.remove(i)
            }
        }
    }

    /// Uniform pick among candidates that are not being delayed (or among
    /// all of them when every candidate is delayed), then one decision's
    /// worth of delay is consumed.
    fn pick_delayed(&mut self, candidates: &[GoroutineId]) -> GoroutineId {
        let eligible: Vec<GoroutineId> =
            candidates.iter().copied().filter(|&g| self.delay_of(g) == 0).collect();
        let pool = if eligible.is_empty() { candidates.to_vec() } else { eligible };
        let pick = pool[self.choose(pool.len())];
        if let Some(d) = self.delays.get_mut(pick as usize) {
            *d = 0;
        }
        for d in self.delays.iter_mut() {
            *d = d.saturating_sub(1);
        }
        pick
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Site;

    fn config(policy: Policy) -> SchedulerConfig {
        let mut c = SchedulerConfig::fifo(0);
        c.policy = policy;
        c
    }

    #[test]
    fn singleton_is_picked() {
        for policy in [Policy::Fifo, Policy::Random] {
            let mut s = Scheduler::new(&config(policy), "f");
            s.make_runnable(2);
            assert_eq!(s.pick_next(), Some(2));
            assert_eq!(s.pick_next(), None);
        }
    }

    #[test]
    fn fifo_runs_in_creation_order() {
        let mut s = Scheduler::new(&config(Policy::Fifo), "f");
        s.make_runnable(2);
        s.make_runnable(3);
        assert_eq!(s.decide(1, PointKind::Other), 1);
        assert_eq!(s.pick_next(), Some(2));
        assert_eq!(s.pick_next(), Some(3));
    }

    #[test]
    fn fifo_rotates_on_yield() {
        let mut s = Scheduler::new(&config(Policy::Fifo), "f");
        s.make_runnable(2);
        assert_eq!(s.decide(1, PointKind::Rotate), 2);
        assert_eq!(s.runnable().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn delayed_goroutine_is_skipped_until_only_runnable() {
        let mut c = SchedulerConfig::fifo(3);
        c.policy = Policy::DelayInject;
        c.yield_probability = 1.0;
        c.delay_bound = 10;
        c.critical_points.insert(Site { file: "f".into(), line: 4 });
        let mut s = Scheduler::new(&c, "f");
        assert!(s.is_critical(4) && !s.is_critical(5));
        s.make_runnable(2);
        s.maybe_delay(1);
        assert_eq!(s.decide(1, PointKind::Other), 2);
        // 1 is the only runnable left, so it runs despite its delay.
        assert_eq!(s.pick_next(), Some(1));
    }
}
