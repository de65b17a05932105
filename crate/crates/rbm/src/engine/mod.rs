//! Online primal-dual engine for the RBM linear relaxation.
//!
//! The engine runs an event-driven continuous process over virtual time mu.
//! Arrived-but-uncovered items live in per-color blocks (active items drive
//! fractional batch growth, frozen items wait, integral blocks get scheduled
//! wholesale at weight 1). Batch weights grow at the fastest rate any
//! candidate batch justifies; six discrete cases fire as thresholds tighten.
//! The run produces a feasible fractional solution x, pseudo-duals
//! (y-hat, z-hat), penalties y-bar, and a scale that turns them into a
//! feasible dual lower bound for the smaller buffer k'.

mod solver;

use serde::Serialize;

use crate::core::{dual_max_violation, CoreError, DualSolution, FractionalSolution, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMode {
    /// Exhaustive for n <= 200, pruned above.
    Auto,
    Exhaustive,
    Pruned,
}

impl CandidateMode {
    pub fn parse(s: &str) -> Option<CandidateMode> {
        Some(match s {
            "auto" => CandidateMode::Auto,
            "exhaustive" => CandidateMode::Exhaustive,
            "pruned" => CandidateMode::Pruned,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Override the derived k' = floor(k - 2k/ln k).
    pub k_prime_override: Option<usize>,
    /// Frozen-block threshold divisor: Case 3 fires when
    /// |B_c^frz| > k/(c_frz ln k). Default 100.
    pub c_frz: f64,
    /// Active-block threshold divisor: Case 4 defrosts when
    /// |B_c^act| < k/(c_act ln k). Default 10.
    pub c_act: f64,
    /// Ended fractional-piece weight that triggers Case 6. Default 1/10.
    pub case6_quota: f64,
    /// Max relative x-hat growth per integration step. Default 0.01.
    pub max_step_growth: f64,
    /// Root-finding tolerance in mu for threshold crossings. Default 1e-10.
    pub root_tol: f64,
    pub candidate_mode: CandidateMode,
    /// Count only interrupted pieces toward the Case-6 quota instead of all
    /// ended fractional pieces.
    pub case6_interrupted_only: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            k_prime_override: None,
            c_frz: 100.0,
            c_act: 10.0,
            case6_quota: 0.1,
            max_step_growth: 0.01,
            root_tol: 1e-10,
            candidate_mode: CandidateMode::Auto,
            case6_interrupted_only: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("engine requires k >= 12, got {0}")]
    KTooSmall(usize),
    #[error("k' override {k_prime} out of range (need 2 <= k' < k = {k})")]
    BadKPrime { k: usize, k_prime: usize },
    #[error("stalled at mu = {mu}, t = {t}: no rising quantity and no pending case; {detail}")]
    Stall { mu: f64, t: usize, detail: String },
    #[error("invariant breached at mu = {mu}: {detail}")]
    Invariant { mu: f64, detail: String },
    #[error("final flush overflowed slot {max_slot}: {detail}")]
    FlushOverflow { max_slot: usize, detail: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// k' = floor(k - 2k/ln k); requires k >= 12 so k' >= 2.
pub fn derive_k_prime(k: usize) -> Result<usize, EngineError> {
    if k < 12 {
        return Err(EngineError::KTooSmall(k));
    }
    let kf = k as f64;
    let kp = (kf - 2.0 * kf / kf.ln()).floor() as usize;
    debug_assert!(kp >= 2);
    Ok(kp)
}

/// Pseudo-dual state at the end of a run. `y_hat[i]`/`z_hat[j-k-1]` are the
/// mu-timestamps at which the coverage pointer passed item i / t passed slot
/// j, clamped at mu_final for indices never passed.
#[derive(Debug, Clone, Serialize)]
pub struct EngineDuals {
    pub format_version: u32,
    pub k: usize,
    pub k_prime: usize,
    pub mu_final: f64,
    /// Indexed by item, entry 0 unused.
    pub y_hat: Vec<f64>,
    /// Indexed by item, entry 0 unused.
    pub y_bar: Vec<f64>,
    /// Indexed by slot offset j - k - 1 over slots k+1..k+n.
    pub z_hat: Vec<f64>,
    /// max(1, max dual violation of the unscaled duals) for kappa = k'.
    pub scale: f64,
}

impl EngineDuals {
    /// The unscaled dual (y-hat + y-bar, z-hat) on the slot axis of `kappa`.
    /// Slots k'+1..k of the smaller axis were never saturated and get z = 0.
    pub fn unscaled_dual(&self, kappa: usize) -> DualSolution {
        let n = self.z_hat.len();
        let y: Vec<f64> = self
            .y_hat
            .iter()
            .zip(&self.y_bar)
            .map(|(a, b)| a + b)
            .collect();
        let mut z = vec![0.0; n];
        for off in 0..n {
            let slot = kappa + 1 + off; // slot on the kappa axis
            if slot > self.k {
                z[off] = self.z_hat[slot - self.k - 1];
            }
        }
        DualSolution::new(kappa, y, z)
    }

    /// Dual objective of the unscaled duals on the k' axis.
    pub fn objective(&self) -> f64 {
        self.unscaled_dual(self.k_prime).objective()
    }
}

/// scale = max(1, max dual-constraint violation of the unscaled duals on the
/// k' slot axis); dividing by it yields a feasible dual.
pub fn compute_scale(
    duals: &EngineDuals,
    inst: &Instance,
    k_prime: usize,
    cap: Option<usize>,
) -> Result<f64, EngineError> {
    let d = duals.unscaled_dual(k_prime);
    let check = dual_max_violation(&d, inst, cap)?;
    Ok(check.max_lhs.max(1.0))
}

/// One trace record; serialized as a JSON line.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEvent {
    pub mu: f64,
    pub event: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slot: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl TraceEvent {
    pub(crate) fn new(mu: f64, event: &'static str) -> Self {
        TraceEvent {
            mu,
            event,
            color: None,
            slot: None,
            item: None,
            value: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EngineStats {
    pub case_counts: [usize; 6],
    pub resets: usize,
    pub max_x_hat: f64,
    /// Largest fractional active block / whole block observed.
    pub max_act_fractional: usize,
    pub max_block_fractional: usize,
    pub advances: usize,
    pub candidates: usize,
    pub pieces: usize,
    /// Runtime invariant checks that failed (empty on a healthy run).
    pub invariant_failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EngineOutput {
    pub k: usize,
    pub k_prime: usize,
    pub x: FractionalSolution,
    pub duals: EngineDuals,
    pub trace: Vec<TraceEvent>,
    pub stats: EngineStats,
}

impl EngineOutput {
    /// Trace as JSON lines, one event per line.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for ev in &self.trace {
            out.push_str(&serde_json::to_string(ev).unwrap());
            out.push('\n');
        }
        out
    }
}

/// Runs the engine to completion on `inst` (buffer size `inst.k()`).
/// The returned duals carry scale = 1; call [`compute_scale`] to certify
/// them (it needs the exhaustive enumerator, guarded by instance size).
pub fn run(inst: &Instance, cfg: &EngineConfig) -> Result<EngineOutput, EngineError> {
    let k = inst.k();
    let k_prime = match cfg.k_prime_override {
        Some(kp) => {
            if kp < 2 || kp >= k {
                return Err(EngineError::BadKPrime { k, k_prime: kp });
            }
            kp
        }
        None => derive_k_prime(k)?,
    };
    solver::Solver::new(inst, cfg, k_prime).run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::check_lp_feasibility;
    use crate::gen::{generate, GenKind, GenSpec};

    #[test]
    fn k_prime_examples() {
        assert_eq!(derive_k_prime(16).unwrap(), 4);
        assert_eq!(derive_k_prime(64).unwrap(), 33);
        assert_eq!(derive_k_prime(1024).unwrap(), 728);
        assert_eq!(derive_k_prime(12).unwrap(), 2);
        assert!(derive_k_prime(11).is_err());
    }

    #[test]
    fn single_color_stream_is_covered_feasibly() {
        let inst = Instance::new(12, &vec!["a"; 20]);
        let out = run(&inst, &EngineConfig::default()).unwrap();
        let report = check_lp_feasibility(&out.x, &inst).unwrap();
        assert!(report.feasible, "violations: {:?}", report.violations);
        assert!(out.x.objective() >= 1.0 - 1e-9);
        assert!(out.stats.invariant_failures.is_empty());
    }

    #[test]
    fn random_instances_yield_feasible_primal() {
        for (kind, seed) in [
            (GenKind::Uniform, 1u64),
            (GenKind::RoundRobin, 2),
            (GenKind::Zipf, 3),
            (GenKind::Bursty, 4),
        ] {
            for k in [12usize, 16] {
                let spec = GenSpec::new(kind, 60, 4, seed);
                let inst = generate(&spec, k);
                let out = run(&inst, &EngineConfig::default())
                    .unwrap_or_else(|e| panic!("{kind:?} k={k}: {e}"));
                let report = check_lp_feasibility(&out.x, &inst).unwrap();
                assert!(
                    report.feasible,
                    "{kind:?} k={k}: {:?}",
                    &report.violations[..report.violations.len().min(5)]
                );
                assert!(
                    out.stats.invariant_failures.is_empty(),
                    "{kind:?} k={k}: {:?}",
                    out.stats.invariant_failures
                );
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let spec = GenSpec::new(GenKind::Uniform, 80, 5, 7);
        let inst = generate(&spec, 16);
        let a = run(&inst, &EngineConfig::default()).unwrap();
        let b = run(&inst, &EngineConfig::default()).unwrap();
        assert_eq!(a.trace_jsonl(), b.trace_jsonl());
        assert_eq!(
            serde_json::to_string(&a.x).unwrap(),
            serde_json::to_string(&b.x).unwrap()
        );
    }

    #[test]
    fn scaled_dual_is_feasible_on_a_small_instance() {
        let spec = GenSpec::new(GenKind::Uniform, 40, 3, 11);
        let inst = generate(&spec, 12);
        let out = run(&inst, &EngineConfig::default()).unwrap();
        let scale = compute_scale(&out.duals, &inst, out.k_prime, None).unwrap();
        assert!(scale >= 1.0);
        let scaled = out.duals.unscaled_dual(out.k_prime).scaled(scale);
        let check = crate::core::dual_max_violation(&scaled, &inst, None).unwrap();
        assert!(check.max_lhs <= 1.0 + 1e-9, "max lhs {}", check.max_lhs);
    }
}
