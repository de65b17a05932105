use serde::{Deserialize, Serialize};

use super::instance::{availability, ColorId, Instance};
use super::solution::SOLUTION_FORMAT_VERSION;
use super::CoreError;

/// An integral schedule: the output permutation of item indices. The p-th
/// output (1-based) occupies slot k + p.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegralSchedule {
    pub format_version: u32,
    pub output: Vec<usize>,
}

impl IntegralSchedule {
    pub fn new(output: Vec<usize>) -> Self {
        IntegralSchedule {
            format_version: SOLUTION_FORMAT_VERSION,
            output,
        }
    }

    /// Maximal same-color runs as (color, start position, length).
    pub fn runs(&self, inst: &Instance) -> Vec<(ColorId, usize, usize)> {
        let mut runs = Vec::new();
        for (pos, &i) in self.output.iter().enumerate() {
            let c = inst.color(i);
            match runs.last_mut() {
                Some((rc, _, len)) if *rc == c => *len += 1,
                _ => runs.push((c, pos, 1)),
            }
        }
        runs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
pub enum ScheduleError {
    #[error("output is not a permutation of 1..n (item {item})")]
    NotAPermutation { item: usize },
    #[error("item {item} output at slot {slot}, before its availability slot {needed}")]
    Availability { item: usize, slot: usize, needed: usize },
    #[error("items {earlier} and {later} of one color are output out of input order")]
    ColorOrder { earlier: usize, later: usize },
}

/// Checks that `s` is a valid schedule of `inst` (permutation, availability,
/// per-color input order).
pub fn validate_schedule(s: &IntegralSchedule, inst: &Instance) -> Result<(), ScheduleError> {
    let n = inst.n();
    let mut seen = vec![false; n + 1];
    for (pos, &i) in s.output.iter().enumerate() {
        if i == 0 || i > n || seen[i] {
            return Err(ScheduleError::NotAPermutation { item: i });
        }
        seen[i] = true;
        let slot = inst.k() + pos + 1;
        let needed = availability(i, inst.k());
        if slot < needed {
            return Err(ScheduleError::Availability { item: i, slot, needed });
        }
    }
    if s.output.len() != n {
        return Err(ScheduleError::NotAPermutation { item: 0 });
    }
    let mut last_of_color = vec![0usize; inst.num_colors()];
    for &i in &s.output {
        let c = inst.color(i);
        if last_of_color[c] > i {
            return Err(ScheduleError::ColorOrder {
                earlier: i,
                later: last_of_color[c],
            });
        }
        last_of_color[c] = i;
    }
    Ok(())
}

/// Number of maximal same-color runs of a valid schedule; 0 when empty.
pub fn schedule_cost(s: &IntegralSchedule, inst: &Instance) -> Result<usize, CoreError> {
    validate_schedule(s, inst)?;
    Ok(s.runs(inst).len())
}

/// Read-only view of the simulator state handed to decision sources.
pub struct BufferView<'a> {
    /// Item indices currently buffered, in arrival order.
    pub buffer: &'a [usize],
    /// Index of the next input item (n+1 when exhausted).
    pub next_arrival: usize,
    /// Color of the most recent output, if any.
    pub last_output_color: Option<ColorId>,
}

/// Exact RBM buffer simulator: fill the buffer, evict one color at a time
/// (admitting one arrival per output and appending newly arrived same-color
/// items while an eviction is in progress).
#[derive(Clone)]
pub struct EvictionSim<'a> {
    inst: &'a Instance,
    k: usize,
    next_in: usize,
    buffer: Vec<usize>,
    output: Vec<usize>,
}

impl<'a> EvictionSim<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        Self::with_capacity(inst, inst.k())
    }

    /// Simulator with an explicit buffer capacity (for resource-augmented
    /// runs on the same instance).
    pub fn with_capacity(inst: &'a Instance, k: usize) -> Self {
        let mut sim = EvictionSim {
            inst,
            k,
            next_in: 1,
            buffer: Vec::with_capacity(k),
            output: Vec::with_capacity(inst.n()),
        };
        sim.fill();
        sim
    }

    fn fill(&mut self) {
        while self.buffer.len() < self.k && self.next_in <= self.inst.n() {
            self.buffer.push(self.next_in);
            self.next_in += 1;
        }
    }

    pub fn is_done(&self) -> bool {
        self.buffer.is_empty() && self.next_in > self.inst.n()
    }

    pub fn buffer(&self) -> &[usize] {
        &self.buffer
    }

    pub fn next_arrival(&self) -> usize {
        self.next_in
    }

    pub fn output(&self) -> &[usize] {
        &self.output
    }

    /// Slot index of the next output: k + |output| + 1.
    pub fn next_slot(&self) -> usize {
        self.inst.k() + self.output.len() + 1
    }

    pub fn last_output_color(&self) -> Option<ColorId> {
        self.output.last().map(|&i| self.inst.color(i))
    }

    pub fn view(&self) -> BufferView<'_> {
        BufferView {
            buffer: &self.buffer,
            next_arrival: self.next_in,
            last_output_color: self.last_output_color(),
        }
    }

    /// Evicts every buffered item of `color`, one per slot, admitting one
    /// arrival per output. With `appending`, arrivals of the same color join
    /// the eviction; without, they stay buffered. Returns the number of
    /// items output.
    pub fn evict(&mut self, color: ColorId, appending: bool) -> Result<usize, CoreError> {
        let mut queue: Vec<usize> = Vec::new();
        let mut kept: Vec<usize> = Vec::new();
        for &i in &self.buffer {
            if self.inst.color(i) == color {
                queue.push(i);
            } else {
                kept.push(i);
            }
        }
        if queue.is_empty() {
            return Err(CoreError::ColorNotInBuffer { color });
        }
        self.buffer = kept;
        let mut emitted = 0;
        let mut q = 0;
        while q < queue.len() {
            self.output.push(queue[q]);
            q += 1;
            emitted += 1;
            if self.next_in <= self.inst.n() {
                let arrival = self.next_in;
                self.next_in += 1;
                if appending && self.inst.color(arrival) == color {
                    queue.push(arrival);
                } else {
                    self.buffer.push(arrival);
                }
            }
        }
        Ok(emitted)
    }

    pub fn into_schedule(self) -> IntegralSchedule {
        IntegralSchedule::new(self.output)
    }
}

/// Runs the simulator to completion, asking `decide` for a color whenever
/// the buffer is nonempty. Evictions append arriving same-color items.
pub fn simulate_evictions(
    inst: &Instance,
    mut decide: impl FnMut(&BufferView<'_>) -> ColorId,
) -> Result<IntegralSchedule, CoreError> {
    let mut sim = EvictionSim::new(inst);
    while !sim.is_done() {
        let color = decide(&sim.view());
        sim.evict(color, true)?;
    }
    Ok(sim.into_schedule())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oldest_first(view: &BufferView<'_>, inst: &Instance) -> ColorId {
        inst.color(view.buffer[0])
    }

    #[test]
    fn run_count_examples() {
        let inst = Instance::new(2, &["a", "a", "b", "b", "a"]);
        let s = IntegralSchedule::new(vec![1, 2, 3, 4, 5]);
        assert_eq!(schedule_cost(&s, &inst).unwrap(), 3);
    }

    #[test]
    fn empty_instance_costs_zero() {
        let inst = Instance::new(1, &[] as &[&str]);
        let s = IntegralSchedule::new(vec![]);
        assert_eq!(schedule_cost(&s, &inst).unwrap(), 0);
    }

    #[test]
    fn single_color_pays_one() {
        let inst = Instance::new(3, &["a", "a", "a", "a"]);
        let s = simulate_evictions(&inst, |v| inst.color(v.buffer[0])).unwrap();
        assert_eq!(schedule_cost(&s, &inst).unwrap(), 1);
    }

    #[test]
    fn ababab_oldest_first_costs_three() {
        let inst = Instance::new(2, &["a", "b", "a", "b", "a", "b"]);
        let s = simulate_evictions(&inst, |v| oldest_first(v, &inst)).unwrap();
        // evicting a appends items 3 and 5, then b appends 4 and 6... the
        // appending dynamic yields runs aaa bbb? No: evicting a (buffer
        // {1,2}) outputs 1, admits 3 (same color, appended), outputs 3,
        // admits 4 (b, buffered), outputs 5 after admitting it. Hand
        // simulation gives cost 3 (verified against the brute-force oracle).
        assert_eq!(schedule_cost(&s, &inst).unwrap(), 3);
    }

    #[test]
    fn aabb_oldest_first_costs_two() {
        let inst = Instance::new(2, &["a", "a", "b", "b"]);
        let s = simulate_evictions(&inst, |v| oldest_first(v, &inst)).unwrap();
        assert_eq!(schedule_cost(&s, &inst).unwrap(), 2);
    }

    #[test]
    fn absent_color_is_an_error() {
        let inst = Instance::new(2, &["a", "a"]);
        let mut sim = EvictionSim::new(&inst);
        assert!(sim.evict(99, true).is_err());
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        let inst = Instance::new(2, &["a", "b", "a"]);
        // not a permutation
        assert!(validate_schedule(&IntegralSchedule::new(vec![1, 1, 2]), &inst).is_err());
        // color order violated (item 3 before item 1)
        assert!(matches!(
            validate_schedule(&IntegralSchedule::new(vec![2, 3, 1]), &inst),
            Err(ScheduleError::ColorOrder { .. })
        ));
    }
}
