use serde::{Deserialize, Serialize};

use super::instance::{availability, ColorId, Instance};

/// A batch (I, j): all occurrences of one color between `first` and `last`
/// (inclusive), matched to the contiguous slot interval starting at
/// `start_slot`, at fractional weight `weight`. The r-th item of the batch
/// (r = 1..|I|) sits at slot `start_slot + r - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub color: ColorId,
    pub first: usize,
    pub last: usize,
    pub start_slot: usize,
    pub weight: f64,
    /// Item indices of the batch, input order. Derived from (color, first,
    /// last) on construction; not serialized.
    #[serde(skip)]
    pub items: Vec<usize>,
}

impl Batch {
    /// Builds the batch spanning every occurrence of `color` in
    /// `[first, last]` of `inst`.
    pub fn spanning(
        inst: &Instance,
        color: ColorId,
        first: usize,
        last: usize,
        start_slot: usize,
        weight: f64,
    ) -> Batch {
        let items = derive_items(inst, color, first, last);
        Batch {
            color,
            first,
            last,
            start_slot,
            weight,
            items,
        }
    }

    /// Builds a batch directly from its item list (must be ascending
    /// occurrences of `color`).
    pub fn from_items(color: ColorId, items: Vec<usize>, start_slot: usize, weight: f64) -> Batch {
        assert!(!items.is_empty(), "batch must contain at least one item");
        Batch {
            color,
            first: items[0],
            last: *items.last().unwrap(),
            start_slot,
            weight,
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Slot of the r-th item (0-based rank).
    pub fn slot_of_rank(&self, r: usize) -> usize {
        self.start_slot + r
    }

    pub fn end_slot(&self) -> usize {
        self.start_slot + self.items.len() - 1
    }

    /// Re-derives `items` after deserialization (serde skips the field).
    pub fn rehydrate(&mut self, inst: &Instance) {
        self.items = derive_items(inst, self.color, self.first, self.last);
    }
}

fn derive_items(inst: &Instance, color: ColorId, first: usize, last: usize) -> Vec<usize> {
    inst.occurrences(color)
        .iter()
        .copied()
        .filter(|&i| first <= i && i <= last)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BatchViolation {
    /// `first` or `last` is out of range or not of the batch color.
    EndpointColorMismatch { item: usize },
    /// `items` skips or reorders occurrences of the color in [first, last].
    RunIncomplete,
    /// Item at rank r sits before its availability slot.
    Availability { item: usize, slot: usize, needed: usize },
    /// Batch extends past slot kappa + n.
    SlotRange { end_slot: usize, max_slot: usize },
    /// Weight outside [0, 1] (beyond tolerance).
    WeightRange { weight: f64 },
    EmptyBatch,
}

/// Checks every batch invariant against `inst` on the slot axis of a
/// size-`kappa` buffer; returns all violations (empty = valid).
pub fn validate_batch(b: &Batch, inst: &Instance, kappa: usize) -> Vec<BatchViolation> {
    let n = inst.n();
    let mut out = Vec::new();
    if b.items.is_empty() {
        out.push(BatchViolation::EmptyBatch);
        return out;
    }
    for &endpoint in &[b.first, b.last] {
        if endpoint == 0 || endpoint > n || inst.color(endpoint) != b.color {
            out.push(BatchViolation::EndpointColorMismatch { item: endpoint });
        }
    }
    if out.is_empty() && b.items != derive_items(inst, b.color, b.first, b.last) {
        out.push(BatchViolation::RunIncomplete);
    }
    for (r, &i) in b.items.iter().enumerate() {
        let slot = b.slot_of_rank(r);
        let needed = availability(i, kappa);
        if slot < needed {
            out.push(BatchViolation::Availability { item: i, slot, needed });
        }
    }
    if b.end_slot() > kappa + n {
        out.push(BatchViolation::SlotRange {
            end_slot: b.end_slot(),
            max_slot: kappa + n,
        });
    }
    if !(-super::FEAS_TOL..=1.0 + super::FEAS_TOL).contains(&b.weight) {
        out.push(BatchViolation::WeightRange { weight: b.weight });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst3() -> Instance {
        // three items, all one color, k = 3
        Instance::new(3, &["a", "a", "a"])
    }

    #[test]
    fn full_single_color_batch_is_valid() {
        let inst = inst3();
        let b = Batch::spanning(&inst, 0, 1, 3, 4, 1.0);
        assert_eq!(b.items, vec![1, 2, 3]);
        assert!(validate_batch(&b, &inst, 3).is_empty());
    }

    #[test]
    fn skipping_middle_occurrence_is_incomplete() {
        let inst = inst3();
        let b = Batch::from_items(0, vec![1, 3], 4, 1.0);
        assert!(validate_batch(&b, &inst, 3).contains(&BatchViolation::RunIncomplete));
    }

    #[test]
    fn start_before_availability_is_invalid() {
        let inst = Instance::new(2, &["a", "b", "b", "a"]);
        // item 4 has availability max(3, 5) = 5; start it at 4
        let b = Batch::spanning(&inst, inst.color(4), 4, 4, 4, 1.0);
        let report = validate_batch(&b, &inst, 2);
        assert!(matches!(report[0], BatchViolation::Availability { item: 4, .. }));
    }

    #[test]
    fn overflow_past_slot_axis_is_invalid() {
        let inst = inst3();
        let b = Batch::spanning(&inst, 0, 1, 3, 5, 1.0); // ends at slot 7 > 6
        assert!(validate_batch(&b, &inst, 3)
            .iter()
            .any(|v| matches!(v, BatchViolation::SlotRange { .. })));
    }
}
