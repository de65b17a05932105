//! Randomized online rounding: converts a feasible fractional solution into
//! an integral eviction schedule in phases (Cases 1-4), locking fractional
//! volume to pay for speculative evictions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::core::{
    schedule_cost, ColorId, CoreError, EvictionSim, FractionalSolution, Instance,
    IntegralSchedule,
};

/// Numeric slack on the delta-threshold comparisons.
const TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RoundingConfig {
    /// Phase trigger threshold; 0 < delta <= 1/12.
    pub delta: f64,
    pub seed: u64,
    /// Evictions absorb newly arriving same-color items (standard
    /// semantics); disable only for ablation experiments.
    pub appending: bool,
}

impl Default for RoundingConfig {
    fn default() -> Self {
        RoundingConfig {
            delta: 1.0 / 128.0,
            seed: 0,
            appending: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum RoundingError {
    #[error("delta = {0} out of range (need 0 < delta <= 1/12)")]
    BadDelta(f64),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Serialize)]
pub struct EvictedBlock {
    pub color: ColorId,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseRecord {
    pub phase: usize,
    pub t0: usize,
    pub case: u8,
    pub draws: Vec<f64>,
    pub evicted: Vec<EvictedBlock>,
    pub locks_created: usize,
    pub locks_released: usize,
}

#[derive(Debug, Clone)]
pub struct RoundingOutput {
    pub schedule: IntegralSchedule,
    pub cost: usize,
    pub phases: Vec<PhaseRecord>,
    pub config: RoundingConfig,
}

impl RoundingOutput {
    /// Phase log as JSON lines; the header names the RNG algorithm so runs
    /// are reproducible across implementations.
    pub fn phase_log_jsonl(&self) -> String {
        let mut out = format!(
            "{{\"generator\":\"chacha12\",\"seed\":{},\"delta\":{},\"appending\":{}}}\n",
            self.config.seed, self.config.delta, self.config.appending
        );
        for p in &self.phases {
            out.push_str(&serde_json::to_string(p).unwrap());
            out.push('\n');
        }
        out
    }
}

/// Volume locked by an evicted block; dissolved once any owner item starts
/// leaving the fractional buffer (removed weight > delta).
struct Lock {
    owner_color: ColorId,
    owner_items: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

struct Rounder<'a> {
    inst: &'a Instance,
    cfg: RoundingConfig,
    /// Per item: (slot, prefix weight up to and including that slot),
    /// sorted by slot.
    item_sched: Vec<Vec<(usize, f64)>>,
    /// Per slot offset (slot - k - 1): (item, weight), sorted by item.
    slot_sched: Vec<Vec<(usize, f64)>>,
    locked: Vec<f64>,
    locks: Vec<Lock>,
    rng: ChaCha12Rng,
    phases: Vec<PhaseRecord>,
}

impl<'a> Rounder<'a> {
    fn new(inst: &'a Instance, frac: &FractionalSolution, cfg: RoundingConfig) -> Self {
        let n = inst.n();
        let k = inst.k();
        let mut item_raw: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + 1];
        let mut slot_sched: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for b in &frac.batches {
            let mut b = b.clone();
            if b.items.is_empty() {
                b.rehydrate(inst);
            }
            for (r, &i) in b.items.iter().enumerate() {
                let slot = b.start_slot + r;
                item_raw[i].push((slot, b.weight));
                if slot > k && slot <= k + n {
                    slot_sched[slot - k - 1].push((i, b.weight));
                }
            }
        }
        let mut item_sched = Vec::with_capacity(n + 1);
        for mut v in item_raw {
            v.sort_unstable_by_key(|&(s, _)| s);
            let mut acc = 0.0;
            for e in v.iter_mut() {
                acc += e.1;
                e.1 = acc;
            }
            item_sched.push(v);
        }
        for v in slot_sched.iter_mut() {
            v.sort_unstable_by_key(|&(i, _)| i);
        }
        Rounder {
            inst,
            cfg,
            item_sched,
            slot_sched,
            locked: vec![0.0; n + 1],
            locks: Vec::new(),
            rng: ChaCha12Rng::seed_from_u64(cfg.seed),
            phases: Vec::new(),
        }
    }

    /// Volume the fractional solution removed from item i strictly before
    /// slot tau.
    fn removed_before(&self, i: usize, tau: usize) -> f64 {
        let v = &self.item_sched[i];
        match v.partition_point(|&(s, _)| s < tau) {
            0 => 0.0,
            p => v[p - 1].1,
        }
    }

    fn unlocked(&self, i: usize, tau: usize) -> f64 {
        (self.removed_before(i, tau) - self.locked[i]).max(0.0)
    }

    fn at_slot(&self, slot: usize) -> &[(usize, f64)] {
        let k = self.inst.k();
        if slot > k && slot <= k + self.inst.n() {
            &self.slot_sched[slot - k - 1]
        } else {
            &[]
        }
    }

    fn lock_release_scan(&mut self, t0: usize) -> usize {
        let delta = self.cfg.delta;
        let mut kept = Vec::new();
        let mut released = 0;
        for lock in std::mem::take(&mut self.locks) {
            let fire = lock
                .owner_items
                .iter()
                .any(|&i| self.removed_before(i, t0) > delta + TOL);
            if fire {
                for &(i, a) in &lock.entries {
                    self.locked[i] -= a;
                }
                released += 1;
            } else {
                kept.push(lock);
            }
        }
        self.locks = kept;
        released
    }

    fn annul_lock(&mut self, idx: usize) {
        let lock = self.locks.remove(idx);
        for &(i, a) in &lock.entries {
            self.locked[i] -= a;
        }
    }

    // ---- case conditions -------------------------------------------------

    /// Case 1: a buffered item with removed-before-t0 weight >= delta.
    /// Returns the item with maximum removed weight (ties: smallest index).
    fn case1_item(&self, t0: usize, buffer: &[usize]) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for &i in buffer {
            let r = self.removed_before(i, t0);
            if r >= self.cfg.delta - TOL {
                let better = match best {
                    None => true,
                    Some((br, bi)) => r > br || (r == br && i < bi),
                };
                if better {
                    best = Some((r, i));
                }
            }
        }
        best.map(|(_, i)| i)
    }

    /// Case 2: slot-t0 weight on buffered items, as (candidates, total).
    fn case2_candidates(&self, t0: usize, buffer: &[usize]) -> (Vec<(usize, f64)>, f64) {
        let in_buf: std::collections::HashSet<usize> = buffer.iter().copied().collect();
        let cands: Vec<(usize, f64)> = self
            .at_slot(t0)
            .iter()
            .copied()
            .filter(|&(i, _)| in_buf.contains(&i))
            .collect();
        let total = cands.iter().map(|&(_, w)| w).sum();
        (cands, total)
    }

    /// Case 3: > 1/2 of slot-t0's scheduled weight sits on the color the
    /// integral solution just evicted.
    fn case3_color(&self, t0: usize, last_evicted: Option<ColorId>) -> Option<ColorId> {
        let c = last_evicted?;
        let mut total = 0.0;
        let mut on_c = 0.0;
        for &(i, w) in self.at_slot(t0) {
            total += w;
            if self.inst.color(i) == c {
                on_c += w;
            }
        }
        if total > 0.0 && on_c > 0.5 * total {
            Some(c)
        } else {
            None
        }
    }

    fn any_case_1_to_3(&self, t0: usize, buffer: &[usize], last: Option<ColorId>) -> bool {
        if self.case1_item(t0, buffer).is_some() {
            return true;
        }
        let (_, total) = self.case2_candidates(t0, buffer);
        if total >= 2.0 * self.cfg.delta - TOL {
            return true;
        }
        self.case3_color(t0, last).is_some()
    }

    // ---- Case-3 procedure --------------------------------------------------

    /// Chooses blocks by class/subclass lottery and locks the subclass
    /// volume to the winners; also returns the largest block. `draws`
    /// collects the uniform variates used.
    fn case3_procedure(
        &mut self,
        t0: usize,
        buffer: &[usize],
        draws: &mut Vec<f64>,
    ) -> (Vec<ColorId>, ColorId, usize) {
        let m = self.inst.num_colors();
        let mut count = vec![0usize; m];
        let mut items: Vec<Vec<usize>> = vec![Vec::new(); m];
        for &i in buffer {
            let c = self.inst.color(i);
            count[c] += 1;
            items[c].push(i);
        }
        let largest = (0..m)
            .filter(|&c| count[c] > 0)
            .max_by(|&a, &b| count[a].cmp(&count[b]).then(b.cmp(&a)))
            .expect("procedure needs a nonempty buffer");

        // w_c = average unlocked pre-t0 removed volume of the color's items
        let w: Vec<f64> = (0..m)
            .map(|c| {
                if count[c] == 0 {
                    0.0
                } else {
                    items[c].iter().map(|&i| self.unlocked(i, t0)).sum::<f64>()
                        / count[c] as f64
                }
            })
            .collect();

        let max_class = usize::BITS as usize;
        let mut chosen = Vec::new();
        let mut locks_created = 0;
        for s in 0..max_class {
            // class s holds colors with count in [2^s, 2^(s+1))
            let mut class: Vec<ColorId> = (0..m)
                .filter(|&c| count[c] > 0 && count[c] >> s == 1)
                .collect();
            if class.is_empty() {
                continue;
            }
            class.sort_by(|&a, &b| w[b].partial_cmp(&w[a]).unwrap().then(a.cmp(&b)));
            for sub in form_subclasses(&class.iter().map(|&c| w[c]).collect::<Vec<_>>(), self.cfg.delta)
            {
                let members: Vec<ColorId> = sub.iter().map(|&ix| class[ix]).collect();
                let total: f64 = members.iter().map(|&c| w[c]).sum();
                let r = self.rng.random::<f64>();
                draws.push(r);
                let mut target = r * total;
                let mut winner = *members.last().unwrap();
                for &c in &members {
                    if target < w[c] {
                        winner = c;
                        break;
                    }
                    target -= w[c];
                }
                // the winner locks all unlocked subclass volume
                let mut entries = Vec::new();
                for &c in &members {
                    for &i in &items[c] {
                        let a = self.unlocked(i, t0);
                        if a > 0.0 {
                            entries.push((i, a));
                            self.locked[i] += a;
                        }
                    }
                }
                self.locks.push(Lock {
                    owner_color: winner,
                    owner_items: items[winner].clone(),
                    entries,
                });
                locks_created += 1;
                chosen.push(winner);
            }
        }
        (chosen, largest, locks_created)
    }

    // ---- phases ------------------------------------------------------------

    fn run(mut self) -> Result<RoundingOutput, RoundingError> {
        let mut sim = EvictionSim::new(self.inst);
        let mut phase_no = 0;
        while !sim.is_done() {
            phase_no += 1;
            let t0 = sim.next_slot();
            let released = self.lock_release_scan(t0);
            let buffer: Vec<usize> = sim.buffer().to_vec();
            let mut rec = PhaseRecord {
                phase: phase_no,
                t0,
                case: 0,
                draws: Vec::new(),
                evicted: Vec::new(),
                locks_created: 0,
                locks_released: released,
            };
            let appending = self.cfg.appending;
            let evict = |sim: &mut EvictionSim, rec: &mut PhaseRecord, c: ColorId| {
                let count = sim.evict(c, appending).expect("chosen color is buffered");
                rec.evicted.push(EvictedBlock { color: c, count });
            };

            if let Some(item) = self.case1_item(t0, &buffer) {
                rec.case = 1;
                evict(&mut sim, &mut rec, self.inst.color(item));
            } else {
                let (cands, total) = self.case2_candidates(t0, &buffer);
                if total >= 2.0 * self.cfg.delta - TOL {
                    rec.case = 2;
                    let r = self.rng.random::<f64>();
                    rec.draws.push(r);
                    let mut target = r * total;
                    let mut pick = cands.last().unwrap().0;
                    for &(i, w) in &cands {
                        if target < w {
                            pick = i;
                            break;
                        }
                        target -= w;
                    }
                    evict(&mut sim, &mut rec, self.inst.color(pick));
                } else if self.case3_color(t0, sim.last_output_color()).is_some() {
                    rec.case = 3;
                    let mut draws = Vec::new();
                    let (chosen, largest, created) =
                        self.case3_procedure(t0, &buffer, &mut draws);
                    rec.draws = draws;
                    rec.locks_created = created;
                    evict(&mut sim, &mut rec, largest);
                    for c in chosen {
                        if c != largest {
                            evict(&mut sim, &mut rec, c);
                        }
                    }
                } else {
                    rec.case = 4;
                    // largest and second largest blocks at t0
                    let m = self.inst.num_colors();
                    let mut count = vec![0usize; m];
                    for &i in &buffer {
                        count[self.inst.color(i)] += 1;
                    }
                    let mut order: Vec<ColorId> = (0..m).filter(|&c| count[c] > 0).collect();
                    order.sort_by(|&a, &b| count[b].cmp(&count[a]).then(a.cmp(&b)));
                    let largest = order[0];
                    let second = order.get(1).copied();
                    let mut draws = Vec::new();
                    let lock_base = self.locks.len();
                    let (chosen, _, created) = self.case3_procedure(t0, &buffer, &mut draws);
                    rec.draws = draws;
                    rec.locks_created = created;

                    let mut sequence = vec![largest];
                    if let Some(s) = second {
                        sequence.push(s);
                    }
                    for &c in &chosen {
                        if !sequence.contains(&c) {
                            sequence.push(c);
                        }
                    }
                    let mut evicted_colors: Vec<ColorId> = Vec::new();
                    let mut terminated = false;
                    for (pos, &c) in sequence.iter().enumerate() {
                        evict(&mut sim, &mut rec, c);
                        evicted_colors.push(c);
                        // early termination is checked after the largest and
                        // second-largest blocks only
                        let after_headliners = pos < 2 && pos + 1 < sequence.len();
                        if after_headliners {
                            let t_now = sim.next_slot();
                            let buf_now: Vec<usize> = sim.buffer().to_vec();
                            if sim.is_done()
                                || self.any_case_1_to_3(t_now, &buf_now, sim.last_output_color())
                            {
                                terminated = true;
                                break;
                            }
                        }
                    }
                    if terminated {
                        // annul locks owned by chosen-but-unevicted blocks
                        let mut idx = self.locks.len();
                        while idx > lock_base {
                            idx -= 1;
                            if !evicted_colors.contains(&self.locks[idx].owner_color) {
                                self.annul_lock(idx);
                                rec.locks_created -= 1;
                            }
                        }
                    }
                }
            }
            debug_assert!(!rec.evicted.is_empty());
            self.phases.push(rec);
        }
        let schedule = sim.into_schedule();
        let cost = schedule_cost(&schedule, self.inst)?;
        Ok(RoundingOutput {
            schedule,
            cost,
            phases: self.phases,
            config: self.cfg,
        })
    }
}

/// Greedy subclass formation over weights sorted descending: collect until
/// the running total strictly exceeds delta, while the remaining weight is
/// at least delta. Returns index groups.
fn form_subclasses(w: &[f64], delta: f64) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let remaining: f64 = w[start..].iter().sum();
        if remaining < delta - TOL {
            break;
        }
        let mut acc = 0.0;
        let mut end = start;
        while end < w.len() {
            acc += w[end];
            end += 1;
            if acc > delta + TOL {
                break;
            }
        }
        if acc <= delta + TOL {
            break; // exhausted without strictly exceeding delta
        }
        out.push((start..end).collect());
        start = end;
    }
    out
}

/// Rounds a feasible fractional solution into an integral schedule.
pub fn round(
    inst: &Instance,
    frac: &FractionalSolution,
    cfg: RoundingConfig,
) -> Result<RoundingOutput, RoundingError> {
    if !(cfg.delta > 0.0 && cfg.delta <= 1.0 / 12.0) {
        return Err(RoundingError::BadDelta(cfg.delta));
    }
    Rounder::new(inst, frac, cfg).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::validate_schedule;
    use crate::engine::{run as engine_run, EngineConfig};
    use crate::gen::{generate, GenKind, GenSpec};

    fn engine_frac(inst: &Instance) -> FractionalSolution {
        engine_run(inst, &EngineConfig::default()).unwrap().x
    }

    #[test]
    fn empty_instance_costs_zero() {
        let inst = Instance::new(12, &Vec::<&str>::new());
        let out = round(&inst, &FractionalSolution::new(Vec::new()), RoundingConfig::default())
            .unwrap();
        assert_eq!(out.cost, 0);
        assert!(out.phases.is_empty());
    }

    #[test]
    fn single_color_costs_one() {
        let inst = Instance::new(12, &vec!["a"; 8]);
        let frac = engine_frac(&inst);
        let out = round(&inst, &frac, RoundingConfig::default()).unwrap();
        assert_eq!(out.cost, 1);
        validate_schedule(&out.schedule, &inst).unwrap();
    }

    #[test]
    fn bad_delta_is_rejected()  {
        let inst = Instance::new(12, &["a"]);
        let frac = FractionalSolution::new(Vec::new());
        for d in [0.0, -0.1, 0.0834, 1.0] {
            let cfg = RoundingConfig {
                delta: d,
                ..RoundingConfig::default()
            };
            assert!(round(&inst, &frac, cfg).is_err());
        }
    }

    #[test]
    fn random_instances_round_to_valid_schedules() {
        for seed in 0..4u64 {
            let spec = GenSpec::new(GenKind::Uniform, 70, 5, seed);
            let inst = generate(&spec, 16);
            let frac = engine_frac(&inst);
            for rseed in 0..3u64 {
                let cfg = RoundingConfig {
                    seed: rseed,
                    ..RoundingConfig::default()
                };
                let out = round(&inst, &frac, cfg).unwrap();
                validate_schedule(&out.schedule, &inst).unwrap();
                assert!(out.phases.len() <= inst.n());
                assert!(out.cost >= 1);
            }
        }
    }

    #[test]
    fn same_seed_reproduces_schedule() {
        let spec = GenSpec::new(GenKind::Zipf, 90, 6, 3);
        let inst = generate(&spec, 16);
        let frac = engine_frac(&inst);
        let cfg = RoundingConfig {
            seed: 99,
            ..RoundingConfig::default()
        };
        let a = round(&inst, &frac, cfg).unwrap();
        let b = round(&inst, &frac, cfg).unwrap();
        assert_eq!(a.schedule.output, b.schedule.output);
        assert_eq!(a.phase_log_jsonl(), b.phase_log_jsonl());
    }

    #[test]
    fn removal_ahead_of_the_integral_stream_fires_case_1() {
        // both items half-removed at slot 3 and half at slot 4: whichever
        // color the first phase evicts, the survivor enters phase 2 with
        // removed weight 0.5 >= delta strictly before the new t0
        let inst = Instance::new(2, &["a", "b"]);
        let frac = FractionalSolution::new(vec![
            crate::core::Batch::from_items(0, vec![1], 3, 0.5),
            crate::core::Batch::from_items(0, vec![1], 4, 0.5),
            crate::core::Batch::from_items(1, vec![2], 3, 0.5),
            crate::core::Batch::from_items(1, vec![2], 4, 0.5),
        ]);
        let out = round(&inst, &frac, RoundingConfig::default()).unwrap();
        assert_eq!(out.cost, 2);
        assert_eq!(out.phases[0].case, 2);
        assert_eq!(out.phases[1].case, 1, "{:?}", out.phases);
    }

    #[test]
    fn aligned_integral_stream_fires_case_2_throughout() {
        let inst = Instance::new(2, &["a", "a", "b", "b"]);
        let frac = FractionalSolution::new(vec![
            crate::core::Batch::from_items(0, vec![1, 2], 3, 1.0),
            crate::core::Batch::from_items(1, vec![3, 4], 5, 1.0),
        ]);
        let out = round(&inst, &frac, RoundingConfig::default()).unwrap();
        assert_eq!(out.cost, 2);
        assert!(out.phases.iter().all(|p| p.case == 2), "{:?}", out.phases);
    }

    #[test]
    fn subclass_formation_matches_the_greedy_rule() {
        let d = 1.0 / 128.0;
        // three equal weights of d/2: one subclass of all three
        let subs = form_subclasses(&[d / 2.0, d / 2.0, d / 2.0], d);
        assert_eq!(subs, vec![vec![0, 1, 2]]);
        // total below delta: nothing
        assert!(form_subclasses(&[d / 4.0, d / 4.0], d).is_empty());
        // all locked (zero weights): nothing
        assert!(form_subclasses(&[0.0, 0.0], d).is_empty());
        // 1.5d, 0.6d, 0.6d: first subclass {0}, second {1, 2}
        let subs = form_subclasses(&[1.5 * d, 0.6 * d, 0.6 * d], d);
        assert_eq!(subs, vec![vec![0], vec![1, 2]]);
    }
}
