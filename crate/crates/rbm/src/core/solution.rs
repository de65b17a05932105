use serde::{Deserialize, Serialize};

use super::batch::{validate_batch, Batch};
use super::instance::{availability, Instance};
use super::{CoreError, FEAS_TOL};

/// A fractional LP solution: a weighted collection of batches.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FractionalSolution {
    pub format_version: u32,
    pub batches: Vec<Batch>,
}

pub const SOLUTION_FORMAT_VERSION: u32 = 1;

impl FractionalSolution {
    pub fn new(batches: Vec<Batch>) -> Self {
        FractionalSolution {
            format_version: SOLUTION_FORMAT_VERSION,
            batches,
        }
    }

    pub fn objective(&self) -> f64 {
        self.batches.iter().map(|b| b.weight).sum()
    }

    /// Per-item total weight, indexed by item (entry 0 unused).
    pub fn coverage(&self, inst: &Instance) -> Vec<f64> {
        let mut cov = vec![0.0; inst.n() + 1];
        for b in &self.batches {
            for &i in &b.items {
                cov[i] += b.weight;
            }
        }
        cov
    }

    /// Per-slot total weight over slots k+1..k+n, indexed by slot offset
    /// (slot j maps to entry j - k - 1).
    pub fn usage(&self, inst: &Instance) -> Vec<f64> {
        let mut usage = vec![0.0; inst.n()];
        let k = inst.k();
        for b in &self.batches {
            for r in 0..b.len() {
                let j = b.slot_of_rank(r);
                if j > k && j <= k + inst.n() {
                    usage[j - k - 1] += b.weight;
                }
            }
        }
        usage
    }

    /// Re-derives batch item lists after deserialization.
    pub fn rehydrate(&mut self, inst: &Instance) {
        for b in &mut self.batches {
            b.rehydrate(inst);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LpViolation {
    Coverage { item: usize, coverage: f64 },
    Usage { slot: usize, usage: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct LpReport {
    pub feasible: bool,
    pub min_coverage: f64,
    pub max_usage: f64,
    pub objective: f64,
    pub violations: Vec<LpViolation>,
}

/// Checks coverage >= 1 and slot usage <= 1 (absolute tolerance
/// [`FEAS_TOL`]). Errors if any batch is individually invalid.
pub fn check_lp_feasibility(
    sol: &FractionalSolution,
    inst: &Instance,
) -> Result<LpReport, CoreError> {
    for (index, b) in sol.batches.iter().enumerate() {
        let violations = validate_batch(b, inst, inst.k());
        if !violations.is_empty() {
            return Err(CoreError::InvalidBatch { index, violations });
        }
    }
    let cov = sol.coverage(inst);
    let usage = sol.usage(inst);
    let mut violations = Vec::new();
    let mut min_coverage = f64::INFINITY;
    for i in 1..=inst.n() {
        min_coverage = min_coverage.min(cov[i]);
        if cov[i] < 1.0 - FEAS_TOL {
            violations.push(LpViolation::Coverage {
                item: i,
                coverage: cov[i],
            });
        }
    }
    let mut max_usage = 0.0f64;
    for (off, &u) in usage.iter().enumerate() {
        max_usage = max_usage.max(u);
        if u > 1.0 + FEAS_TOL {
            violations.push(LpViolation::Usage {
                slot: inst.k() + 1 + off,
                usage: u,
            });
        }
    }
    if inst.n() == 0 {
        min_coverage = 1.0;
    }
    Ok(LpReport {
        feasible: violations.is_empty(),
        min_coverage,
        max_usage,
        objective: sol.objective(),
        violations,
    })
}

/// A dual solution for the buffer size `kappa`: y per item, z per slot
/// kappa+1..kappa+n (stored at offset j - kappa - 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualSolution {
    pub format_version: u32,
    pub kappa: usize,
    /// y[0] unused; y[i] for item i.
    pub y: Vec<f64>,
    /// z at offset j - kappa - 1 for slot j.
    pub z: Vec<f64>,
}

impl DualSolution {
    pub fn new(kappa: usize, y: Vec<f64>, z: Vec<f64>) -> Self {
        DualSolution {
            format_version: SOLUTION_FORMAT_VERSION,
            kappa,
            y,
            z,
        }
    }

    pub fn objective(&self) -> f64 {
        self.y.iter().sum::<f64>() - self.z.iter().sum::<f64>()
    }

    /// Returns the same dual with y and z divided by `scale`.
    pub fn scaled(&self, scale: f64) -> DualSolution {
        DualSolution {
            format_version: self.format_version,
            kappa: self.kappa,
            y: self.y.iter().map(|v| v / scale).collect(),
            z: self.z.iter().map(|v| v / scale).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualCheck {
    pub max_lhs: f64,
    pub argmax_batch: Option<Batch>,
}

/// Exhaustively enumerates every valid batch (color, first occurrence, last
/// occurrence, start slot) on the slot axis of `d.kappa` and returns the
/// maximum dual-constraint left-hand side `sum y_i - sum z_(slot window)`
/// with a witness. `d` is feasible iff `max_lhs <= 1 + tol`.
///
/// Refuses instances with n above `cap` (default 500): the enumeration is
/// Theta(sum_c m_c^2 * n).
pub fn dual_max_violation(
    d: &DualSolution,
    inst: &Instance,
    cap: Option<usize>,
) -> Result<DualCheck, CoreError> {
    let cap = cap.unwrap_or(500);
    let n = inst.n();
    if n > cap {
        return Err(CoreError::DualEnumerationTooLarge { n, cap });
    }
    let kappa = d.kappa;
    // prefix sums of z over slots kappa+1..kappa+n
    let mut zpre = vec![0.0; n + 1];
    for off in 0..n {
        zpre[off + 1] = zpre[off] + d.z.get(off).copied().unwrap_or(0.0);
    }
    let zsum = |j_start: usize, len: usize| -> f64 {
        // window of slots [j_start, j_start + len - 1], offsets into zpre
        let lo = j_start - kappa - 1;
        zpre[lo + len] - zpre[lo]
    };
    let mut best = DualCheck {
        max_lhs: 0.0,
        argmax_batch: None,
    };
    for c in inst.colors() {
        let occ = inst.occurrences(c);
        for a in 0..occ.len() {
            let mut ysum = 0.0;
            // availability lower bound on the start slot grows with the batch
            let mut j_min = kappa + 1;
            for b in a..occ.len() {
                let len = b - a + 1;
                ysum += d.y.get(occ[b]).copied().unwrap_or(0.0);
                // rank of occ[b] in the batch is len, so its slot is
                // j + len - 1 >= availability(occ[b]) constrains j
                j_min = j_min.max(availability(occ[b], kappa) + 1 - len);
                let j_max = kappa + n + 1 - len; // batch must end by kappa+n
                if j_min > j_max {
                    break; // longer batches only shrink the feasible j range further
                }
                for j in j_min..=j_max {
                    let lhs = ysum - zsum(j, len);
                    if lhs > best.max_lhs {
                        best.max_lhs = lhs;
                        best.argmax_batch =
                            Some(Batch::spanning(inst, c, occ[a], occ[b], j, 1.0));
                    }
                }
            }
        }
    }
    Ok(best)
}
