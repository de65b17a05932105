use std::collections::HashSet;

use serde::Serialize;

use super::{
    CandidateMode, EngineConfig, EngineDuals, EngineError, EngineOutput, EngineStats, TraceEvent,
};
use crate::core::{availability, Batch, ColorId, FractionalSolution, Instance};

/// Case-1/2 trigger tolerance (matches the feasibility checker).
const EV_TOL: f64 = 1e-9;
/// sigma >= 1 detection tolerance.
const SIGMA_TOL: f64 = 1e-12;
/// Pieces below this weight are dropped from the solution.
const WEIGHT_EPS: f64 = 1e-15;
/// The flush may exceed nominal slot capacity by this much (well under the
/// checker tolerance) to absorb floating-point drift in the exact-fit
/// accounting.
const USAGE_SLACK: f64 = 4e-10;
/// Residual deficits at or below this are treated as covered.
const DONE_DEFICIT: f64 = 1e-10;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum ActState {
    Fractional,
    Integral,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum AppendState {
    Fractional,
    Integral,
    Frozen,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum PieceKind {
    Regular,
    Case3Flush,
    Case5Integral,
    Case6Weight1,
    Resumed,
    FinalFlush,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum PieceStatus {
    Open,
    Ended,
    Interrupted,
    Suspended,
}

#[derive(Debug)]
struct Piece {
    color: ColorId,
    start: usize,
    items: Vec<usize>,
    weight: f64,
    kind: PieceKind,
    status: PieceStatus,
    /// Item state an arrival must be in to append; None = closed to appends.
    append: Option<AppendState>,
    deleted: bool,
}

impl Piece {
    /// Next slot an appended item would occupy.
    fn frontier(&self) -> usize {
        self.start + self.items.len()
    }
}

/// Per-color block bookkeeping over occurrence ranks (indexes into
/// `inst.occurrences(c)`). B_c^act = ranks [act_start, act_start+act_len),
/// B_c^frz = [frz_start, frz_start+frz_len); the frozen block always ends at
/// the arrival frontier. A covered gap may separate the two blocks (Case 6).
#[derive(Debug)]
struct ColorState {
    arrived: usize,
    act_start: usize,
    act_len: usize,
    frz_start: usize,
    frz_len: usize,
    act_state: ActState,
    acc6: f64,
}

impl ColorState {
    fn block_len(&self) -> usize {
        self.act_len + self.frz_len
    }
    /// Rank of the earliest uncovered item (s_c), or MAX if none.
    fn s_rank(&self) -> usize {
        if self.act_len > 0 {
            self.act_start
        } else if self.frz_len > 0 {
            self.frz_start
        } else {
            usize::MAX
        }
    }
}

/// A candidate batch (anchor occurrence rank, start slot j); I extends from
/// the anchor through arrived occurrences while slot-valid. sigma is linear
/// between events: sigma(mu) = sigma0 + rate * (mu - mu0).
#[derive(Debug)]
struct Cand {
    color: ColorId,
    anchor: usize,
    j: usize,
    extent: usize,
    blocked: bool,
    sigma0: f64,
    mu0: f64,
    rate: f64,
    f_rank: Option<usize>,
    reset_done: bool,
}

impl Cand {
    fn sigma(&self, mu: f64) -> f64 {
        self.sigma0 + self.rate * (mu - self.mu0)
    }
}

/// Cached per-color rate summary, valid until the next rate change or until
/// mu passes `next_cross`.
#[derive(Debug, Clone)]
struct Summary {
    /// Fastest rate among sigma < 1 candidates.
    best_lin_rate: f64,
    /// Earliest absolute mu at which some positive-rate candidate's sigma
    /// crosses 1.
    next_cross: f64,
    /// Candidates with sigma >= 1 and positive rate.
    exp_cands: Vec<usize>,
    max_exp_rate: f64,
    /// Some candidate (any rate) has sigma >= 1 (Case-5 trigger for
    /// integral blocks).
    has_sigma_ge1: bool,
}

/// Weight-growth law of a color over one integration step.
#[derive(Clone, Copy, Debug)]
enum Law {
    /// G(d) = slope * d.
    Lin { slope: f64 },
    /// G(d) = x0 * (e^(rate*d) - 1).
    Exp { x0: f64, rate: f64 },
}

impl Law {
    fn growth(&self, d: f64) -> f64 {
        match *self {
            Law::Lin { slope } => slope * d,
            Law::Exp { x0, rate } => x0 * ((rate * d).exp() - 1.0),
        }
    }
    /// Smallest d with G(d) = target (target >= 0).
    fn invert(&self, target: f64) -> f64 {
        match *self {
            Law::Lin { slope } => {
                if slope <= 0.0 {
                    f64::INFINITY
                } else {
                    target / slope
                }
            }
            Law::Exp { x0, rate } => (target / x0 + 1.0).ln() / rate,
        }
    }
}

pub(super) struct Solver<'a> {
    inst: &'a Instance,
    cfg: &'a EngineConfig,
    k: usize,
    kp: usize,
    n: usize,
    ln_k: f64,
    exhaustive: bool,
    mu: f64,
    t: usize,
    done: bool,
    cov: Vec<f64>,
    /// Usage of slot j at offset j - k - 1.
    usage: Vec<f64>,
    y_hat: Vec<f64>,
    y_bar: Vec<f64>,
    z_hat: Vec<f64>,
    /// Covered-but-unstamped occurrence ranks per color.
    pending_stamp: Vec<Vec<usize>>,
    colors: Vec<ColorState>,
    pieces: Vec<Piece>,
    open_by_color: Vec<Vec<usize>>,
    growing: Vec<Option<usize>>,
    cands: Vec<Cand>,
    by_color: Vec<Vec<usize>>,
    cand_keys: HashSet<(ColorId, usize, usize)>,
    summaries: Vec<Option<Summary>>,
    /// Color whose Case 3 is in progress (suppresses its piece openings).
    in_case3: Option<ColorId>,
    trace: Vec<TraceEvent>,
    stats: EngineStats,
}

impl<'a> Solver<'a> {
    pub(super) fn new(inst: &'a Instance, cfg: &'a EngineConfig, kp: usize) -> Self {
        let k = inst.k();
        let n = inst.n();
        let m = inst.num_colors();
        let exhaustive = match cfg.candidate_mode {
            CandidateMode::Exhaustive => true,
            CandidateMode::Pruned => false,
            CandidateMode::Auto => n <= 200,
        };
        Solver {
            inst,
            cfg,
            k,
            kp,
            n,
            ln_k: (k as f64).ln(),
            exhaustive,
            mu: 0.0,
            t: k + 1,
            done: false,
            cov: vec![0.0; n + 1],
            usage: vec![0.0; n],
            y_hat: vec![f64::NAN; n + 1],
            y_bar: vec![0.0; n + 1],
            z_hat: vec![f64::NAN; n],
            pending_stamp: vec![Vec::new(); m],
            colors: (0..m)
                .map(|_| ColorState {
                    arrived: 0,
                    act_start: 0,
                    act_len: 0,
                    frz_start: 0,
                    frz_len: 0,
                    act_state: ActState::Fractional,
                    acc6: 0.0,
                })
                .collect(),
            pieces: Vec::new(),
            open_by_color: vec![Vec::new(); m],
            growing: vec![None; m],
            cands: Vec::new(),
            by_color: vec![Vec::new(); m],
            cand_keys: HashSet::new(),
            summaries: vec![None; m],
            in_case3: None,
            trace: Vec::new(),
            stats: EngineStats::default(),
        }
    }

    fn occ(&self, c: ColorId, rank: usize) -> usize {
        self.inst.occurrences(c)[rank]
    }

    fn slot_usage(&self, slot: usize) -> f64 {
        self.usage[slot - self.k - 1]
    }

    fn add_usage(&mut self, slot: usize, w: f64) {
        self.usage[slot - self.k - 1] += w;
    }

    fn x_hat(&self, sigma: f64) -> f64 {
        if sigma < 1.0 {
            sigma / self.ln_k
        } else {
            (sigma - 1.0).exp() / self.ln_k
        }
    }

    fn trace_ev(&mut self, ev: TraceEvent) {
        self.trace.push(ev);
    }

    fn thr_frz(&self) -> f64 {
        self.k as f64 / (self.cfg.c_frz * self.ln_k)
    }

    fn thr_act(&self) -> f64 {
        self.k as f64 / (self.cfg.c_act * self.ln_k)
    }

    // ---- candidates -----------------------------------------------------

    /// Walks occurrence ranks from `anchor` while batch-valid at start slot
    /// `j`; returns (extent, blocked).
    fn walk_extent(&self, c: ColorId, anchor: usize, j: usize) -> (usize, bool) {
        let cs = &self.colors[c];
        let mut r = anchor;
        let mut blocked = false;
        while r < cs.arrived {
            let slot = j + (r - anchor);
            let item = self.occ(c, r);
            if slot > self.k + self.n || slot < availability(item, self.k) {
                blocked = true;
                break;
            }
            r += 1;
        }
        (r - anchor, blocked)
    }

    fn rate_of(&self, cand: &Cand) -> f64 {
        if cand.j > self.t {
            return 0.0;
        }
        let cs = &self.colors[cand.color];
        if cs.act_len == 0 {
            return 0.0;
        }
        let lo = cs.act_start.max(cand.anchor);
        let hi = (cs.act_start + cs.act_len)
            .min(cand.anchor + cand.extent)
            .min(cand.anchor + (self.t - cand.j) + 1);
        if hi > lo {
            (hi - lo) as f64
        } else {
            0.0
        }
    }

    fn add_candidate(&mut self, c: ColorId, anchor: usize, j: usize) {
        if !self.cand_keys.insert((c, anchor, j)) {
            return;
        }
        let (extent, blocked) = self.walk_extent(c, anchor, j);
        if extent == 0 {
            return; // anchor itself can never sit at this start slot
        }
        let mut cand = Cand {
            color: c,
            anchor,
            j,
            extent,
            blocked,
            sigma0: 0.0,
            mu0: self.mu,
            rate: 0.0,
            f_rank: None,
            reset_done: false,
        };
        cand.rate = self.rate_of(&cand);
        self.by_color[c].push(self.cands.len());
        self.cands.push(cand);
        self.stats.candidates += 1;
        self.summaries[c] = None;
    }

    /// Re-anchors every candidate's linear sigma segment at the current mu
    /// and recomputes its rate. Call whenever t or the color's block
    /// structure changes.
    fn resync_color(&mut self, c: ColorId) {
        for ci in 0..self.by_color[c].len() {
            let idx = self.by_color[c][ci];
            let s = self.cands[idx].sigma(self.mu);
            let cand = &mut self.cands[idx];
            cand.sigma0 = s;
            cand.mu0 = self.mu;
            let rate = self.rate_of(&self.cands[idx]);
            self.cands[idx].rate = rate;
        }
        self.summaries[c] = None;
    }

    fn resync_all(&mut self) {
        for c in 0..self.colors.len() {
            self.resync_color(c);
        }
    }

    fn reset_sigma_color(&mut self, c: ColorId) {
        for ci in 0..self.by_color[c].len() {
            let idx = self.by_color[c][ci];
            self.cands[idx].sigma0 = 0.0;
            self.cands[idx].mu0 = self.mu;
        }
        self.summaries[c] = None;
    }

    fn summary(&mut self, c: ColorId) -> Summary {
        if let Some(s) = &self.summaries[c] {
            return s.clone();
        }
        let mut s = Summary {
            best_lin_rate: 0.0,
            next_cross: f64::INFINITY,
            exp_cands: Vec::new(),
            max_exp_rate: 0.0,
            has_sigma_ge1: false,
        };
        let mut max_xh = 0.0f64;
        for &idx in &self.by_color[c] {
            let cand = &self.cands[idx];
            let sig = cand.sigma(self.mu);
            if sig >= 1.0 - SIGMA_TOL {
                s.has_sigma_ge1 = true;
            }
            max_xh = max_xh.max(self.x_hat(sig));
            if cand.rate <= 0.0 {
                continue;
            }
            if sig < 1.0 - SIGMA_TOL {
                s.best_lin_rate = s.best_lin_rate.max(cand.rate);
                s.next_cross = s.next_cross.min(self.mu + (1.0 - sig) / cand.rate);
            } else {
                s.exp_cands.push(idx);
                s.max_exp_rate = s.max_exp_rate.max(cand.rate);
            }
        }
        self.stats.max_x_hat = self.stats.max_x_hat.max(max_xh);
        self.summaries[c] = Some(s.clone());
        s
    }

    /// Growth law of color c's open piece at the current mu (argmax over
    /// candidates of dx-hat/dmu).
    fn law_of(&mut self, c: ColorId) -> Law {
        let s = self.summary(c);
        let lin_slope = s.best_lin_rate / self.ln_k;
        let mut best_exp: Option<(f64, f64)> = None; // (dx, (x0, rate))
        let mut best_exp_rate = 0.0;
        let mut best_x0 = 0.0;
        for &idx in &s.exp_cands {
            let cand = &self.cands[idx];
            let x0 = self.x_hat(cand.sigma(self.mu));
            let dx = cand.rate * x0;
            if best_exp.map_or(true, |(bdx, _)| dx > bdx) {
                best_exp = Some((dx, x0));
                best_exp_rate = cand.rate;
                best_x0 = x0;
            }
        }
        match best_exp {
            Some((dx, _)) if dx >= lin_slope => Law::Exp {
                x0: best_x0,
                rate: best_exp_rate,
            },
            _ => Law::Lin { slope: lin_slope },
        }
    }

    // ---- y-hat stamping --------------------------------------------------

    /// Stamps pending covered items once every earlier same-color item is
    /// covered (s_c passed them).
    fn stamp_pending(&mut self, c: ColorId) {
        let s_rank = self.colors[c].s_rank();
        let mu = self.mu;
        let mut keep = Vec::new();
        let pend = std::mem::take(&mut self.pending_stamp[c]);
        for rank in pend {
            if rank < s_rank {
                let item = self.occ(c, rank);
                if self.y_hat[item].is_nan() {
                    self.y_hat[item] = mu;
                }
            } else {
                keep.push(rank);
            }
        }
        self.pending_stamp[c] = keep;
    }

    // ---- pieces ----------------------------------------------------------

    fn add_piece(
        &mut self,
        c: ColorId,
        start: usize,
        items: Vec<usize>,
        weight: f64,
        kind: PieceKind,
        append: Option<AppendState>,
    ) -> usize {
        debug_assert!(!items.is_empty());
        for (r, &i) in items.iter().enumerate() {
            self.cov[i] += weight;
            self.add_usage(start + r, weight);
        }
        let id = self.pieces.len();
        self.pieces.push(Piece {
            color: c,
            start,
            items,
            weight,
            kind,
            status: PieceStatus::Open,
            append,
            deleted: false,
        });
        self.open_by_color[c].push(id);
        self.stats.pieces += 1;
        id
    }

    fn delete_piece(&mut self, pid: usize) {
        // only legal for (near) zero-weight or fully-unwound pieces
        let p = &mut self.pieces[pid];
        p.deleted = true;
        p.status = PieceStatus::Ended;
        let c = p.color;
        self.open_by_color[c].retain(|&q| q != pid);
        if self.growing[c] == Some(pid) {
            self.growing[c] = None;
        }
    }

    /// Opens a fresh growing piece seeded with the current active block.
    fn open_growing(&mut self, c: ColorId) {
        if self.growing[c].is_some()
            || self.in_case3 == Some(c)
            || self.colors[c].act_len == 0
            || self.colors[c].act_state != ActState::Fractional
        {
            return;
        }
        let cs = &self.colors[c];
        let items: Vec<usize> = (cs.act_start..cs.act_start + cs.act_len)
            .map(|r| self.occ(c, r))
            .collect();
        let start = self.t;
        // the piece must fit the slot axis; trim if the tail would overflow
        let max_len = self.k + self.n + 1 - start;
        let items = if items.len() > max_len {
            items[..max_len].to_vec()
        } else {
            items
        };
        if items.is_empty() {
            return;
        }
        let pid = self.add_piece(c, start, items, 0.0, PieceKind::Regular, Some(AppendState::Fractional));
        self.growing[c] = Some(pid);
        let mut ev = TraceEvent::new(self.mu, "open");
        ev.color = Some(c);
        ev.slot = Some(start);
        self.trace_ev(ev);
    }

    /// Appends `item` to piece `pid` at its frontier.
    fn append_to_piece(&mut self, pid: usize, item: usize) {
        let w = self.pieces[pid].weight;
        let slot = self.pieces[pid].frontier();
        debug_assert!(slot >= self.t && slot <= self.k + self.n);
        self.pieces[pid].items.push(item);
        self.cov[item] += w;
        self.add_usage(slot, w);
    }

    fn appendable(&self, pid: usize, state: AppendState) -> bool {
        let p = &self.pieces[pid];
        !p.deleted
            && p.status == PieceStatus::Open
            && p.append == Some(state)
            && p.frontier() >= self.t
            && p.frontier() <= self.k + self.n
    }

    /// Closes pieces whose frontier fell behind t; detects interruptions
    /// and feeds the Case-6 accumulator.
    fn close_passed_pieces(&mut self) {
        for c in 0..self.colors.len() {
            let t = self.t;
            let list = self.open_by_color[c].clone();
            let mut still_open = Vec::with_capacity(list.len());
            for pid in list {
                if self.pieces[pid].frontier() >= t {
                    still_open.push(pid);
                    continue;
                }
                if self.growing[c] == Some(pid) {
                    self.growing[c] = None;
                }
                if self.pieces[pid].weight < WEIGHT_EPS {
                    self.pieces[pid].deleted = true;
                    self.pieces[pid].status = PieceStatus::Ended;
                    continue;
                }
                // interruption: the next same-color occurrence is sitting
                // frozen when the piece wanted it
                let mut interrupted = false;
                if self.pieces[pid].append == Some(AppendState::Fractional) {
                    let last = *self.pieces[pid].items.last().unwrap();
                    let occ = self.inst.occurrences(c);
                    let g_rank = match occ.binary_search(&last) {
                        Ok(r) => r + 1,
                        Err(r) => r,
                    };
                    let cs = &self.colors[c];
                    if g_rank >= cs.frz_start && g_rank < cs.frz_start + cs.frz_len {
                        interrupted = true;
                        for ci in 0..self.by_color[c].len() {
                            let idx = self.by_color[c][ci];
                            let cand = &mut self.cands[idx];
                            if cand.f_rank.is_none() && cand.anchor <= g_rank {
                                cand.f_rank = Some(g_rank);
                            }
                        }
                    }
                }
                let p = &mut self.pieces[pid];
                p.status = if interrupted {
                    PieceStatus::Interrupted
                } else {
                    PieceStatus::Ended
                };
                let counts = matches!(p.kind, PieceKind::Regular | PieceKind::Resumed)
                    && (!self.cfg.case6_interrupted_only || interrupted);
                let w = p.weight;
                let kindless = p.kind;
                if counts {
                    self.colors[c].acc6 += w;
                }
                let mut ev = TraceEvent::new(self.mu, if interrupted { "interrupt" } else { "end" });
                ev.color = Some(c);
                ev.value = Some(w);
                ev.slot = Some(self.pieces[pid].start);
                let _ = kindless;
                self.trace_ev(ev);
            }
            self.open_by_color[c] = still_open;
        }
    }

    // ---- regular reset ---------------------------------------------------

    fn regular_reset_scan(&mut self, c: ColorId) {
        let cs = &self.colors[c];
        let b = cs.block_len();
        let act_lo = cs.act_start;
        let act_hi = cs.act_start + cs.act_len;
        let frz_lo = cs.frz_start;
        let frz_hi = cs.frz_start + cs.frz_len;
        let mu = self.mu;
        let mut any = false;
        for ci in 0..self.by_color[c].len() {
            let idx = self.by_color[c][ci];
            let cand = &self.cands[idx];
            let Some(fr) = cand.f_rank else { continue };
            if cand.reset_done {
                continue;
            }
            let before = fr.clamp(act_lo, act_hi) - act_lo + fr.clamp(frz_lo, frz_hi) - frz_lo;
            if 2 * before < b {
                let cand = &mut self.cands[idx];
                cand.sigma0 = 0.0;
                cand.mu0 = mu;
                cand.reset_done = true;
                any = true;
                self.stats.resets += 1;
                let mut ev = TraceEvent::new(mu, "reset");
                ev.color = Some(c);
                ev.slot = Some(self.cands[idx].j);
                ev.item = Some(self.occ(c, self.cands[idx].anchor));
                self.trace_ev(ev);
            }
        }
        if any {
            self.summaries[c] = None;
        }
    }

    // ---- arrivals ----------------------------------------------------------

    /// Admits item `i` (index t-1 after a Case-2 increment, or one of the
    /// initial k items).
    fn arrival(&mut self, i: usize) {
        let c = self.inst.color(i);
        let rank = self.colors[c].arrived;
        debug_assert_eq!(self.occ(c, rank), i);
        self.colors[c].arrived += 1;

        // extend candidates ending exactly at this rank
        for ci in 0..self.by_color[c].len() {
            let idx = self.by_color[c][ci];
            let cand = &self.cands[idx];
            if cand.blocked || cand.anchor + cand.extent != rank {
                continue;
            }
            let slot = cand.j + (rank - cand.anchor);
            let ok = slot <= self.k + self.n && slot >= availability(i, self.k);
            let cand = &mut self.cands[idx];
            if ok {
                cand.extent += 1;
            } else {
                cand.blocked = true;
            }
        }
        // fresh anchor: only (rank, t) can be valid today; other start slots
        // are added as t sweeps forward
        self.add_candidate(c, rank, self.t);

        // state on arrival: integral if same-color integral items exist,
        // else frozen; appendable weight-1 pieces absorb it immediately
        if let Some(pid) = self.find_append(c, AppendState::Integral) {
            self.append_to_piece(pid, i);
            self.pending_stamp[c].push(rank);
            self.stamp_pending(c);
        } else if self.colors[c].act_len > 0 && self.colors[c].act_state == ActState::Integral {
            debug_assert_eq!(self.colors[c].act_start + self.colors[c].act_len, rank);
            self.colors[c].act_len += 1;
        } else if let Some(pid) = self.find_append(c, AppendState::Frozen) {
            self.append_to_piece(pid, i);
            self.pending_stamp[c].push(rank);
            self.stamp_pending(c);
        } else {
            let cs = &mut self.colors[c];
            if cs.frz_len == 0 {
                cs.frz_start = rank;
            }
            cs.frz_len += 1;
            debug_assert_eq!(cs.frz_start + cs.frz_len, cs.arrived);
        }
        self.resync_color(c);
        self.regular_reset_scan(c);
    }

    fn find_append(&self, c: ColorId, state: AppendState) -> Option<usize> {
        self.open_by_color[c]
            .iter()
            .copied()
            .find(|&pid| self.appendable(pid, state))
    }

    // ---- cases -------------------------------------------------------------

    fn find_case1(&self) -> Option<ColorId> {
        for (c, cs) in self.colors.iter().enumerate() {
            if cs.act_len > 0 && cs.act_state == ActState::Fractional {
                let front = self.occ(c, cs.act_start);
                if self.cov[front] >= 1.0 - EV_TOL {
                    return Some(c);
                }
            }
        }
        None
    }

    fn apply_case1(&mut self, c: ColorId) {
        self.stats.case_counts[0] += 1;
        let cs = &mut self.colors[c];
        let rank = cs.act_start;
        cs.act_start += 1;
        cs.act_len -= 1;
        let item = self.occ(c, rank);
        self.pending_stamp[c].push(rank);
        self.stamp_pending(c);
        // the open piece stops growing; a fresh one tracks the shrunken block
        if let Some(pid) = self.growing[c].take() {
            if self.pieces[pid].weight < WEIGHT_EPS {
                self.delete_piece(pid);
            }
        }
        self.open_growing(c);
        self.resync_color(c);
        self.regular_reset_scan(c);
        let mut ev = TraceEvent::new(self.mu, "case1");
        ev.color = Some(c);
        ev.item = Some(item);
        self.trace_ev(ev);
    }

    fn apply_case2(&mut self) {
        self.stats.case_counts[1] += 1;
        let t_old = self.t;
        self.z_hat[t_old - self.k - 1] = self.mu;
        let mut ev = TraceEvent::new(self.mu, "slot");
        ev.slot = Some(t_old);
        self.trace_ev(ev);
        self.t += 1;
        if self.t > self.kp + self.n {
            self.done = true;
            return;
        }
        self.close_passed_pieces();
        // every growing piece freezes at a t increment (its slots would
        // otherwise keep absorbing weight below the new frontier)
        for c in 0..self.colors.len() {
            if let Some(pid) = self.growing[c].take() {
                if self.pieces[pid].weight < WEIGHT_EPS {
                    self.delete_piece(pid);
                }
            }
        }
        if t_old <= self.n {
            self.arrival(t_old);
        }
        // candidate sweep for the new t
        if self.exhaustive {
            for c in 0..self.colors.len() {
                for a in 0..self.colors[c].arrived {
                    self.add_candidate(c, a, self.t);
                }
            }
        } else {
            for c in 0..self.colors.len() {
                if self.colors[c].act_len > 0 {
                    self.add_candidate(c, self.colors[c].act_start, self.t);
                }
            }
        }
        self.resync_all();
        for c in 0..self.colors.len() {
            self.open_growing(c);
        }
    }

    fn find_case3(&self) -> Option<ColorId> {
        let thr = self.thr_frz();
        self.colors
            .iter()
            .position(|cs| cs.frz_len as f64 > thr)
    }

    fn apply_case3(&mut self, c: ColorId) -> Result<(), EngineError> {
        self.stats.case_counts[2] += 1;
        debug_assert!(self.colors[c].act_len == 0 || self.colors[c].act_state == ActState::Fractional);
        let mut ev = TraceEvent::new(self.mu, "case3");
        ev.color = Some(c);
        ev.value = Some(self.colors[c].frz_len as f64);
        self.trace_ev(ev);
        self.in_case3 = Some(c);
        if let Some(pid) = self.growing[c].take() {
            if self.pieces[pid].weight < WEIGHT_EPS {
                self.delete_piece(pid);
            }
        }
        // schedule the active block's remaining volume into slots from t on
        loop {
            let cs = &self.colors[c];
            let act_hi = cs.act_start + cs.act_len;
            let Some(r0) = (cs.act_start..act_hi)
                .find(|&r| 1.0 - self.cov[self.occ(c, r)] > DONE_DEFICIT)
            else {
                break;
            };
            let cap = 1.0 - self.slot_usage(self.t);
            if cap <= EV_TOL {
                self.apply_case2();
                if self.done {
                    break;
                }
                continue;
            }
            let rem0 = 1.0 - self.cov[self.occ(c, r0)];
            let w = cap.min(rem0);
            // deficits are nondecreasing along the block; take the maximal
            // prefix that can absorb w without overcoverage
            let mut end = r0;
            while end < act_hi && 1.0 - self.cov[self.occ(c, end)] >= w - 1e-12 {
                end += 1;
            }
            let items: Vec<usize> = (r0..end).map(|r| self.occ(c, r)).collect();
            if self.t + items.len() - 1 > self.k + self.n {
                return Err(EngineError::Invariant {
                    mu: self.mu,
                    detail: format!(
                        "case-3 batch of color {c} would overflow slot {} (t = {})",
                        self.k + self.n,
                        self.t
                    ),
                });
            }
            self.add_piece(c, self.t, items, w, PieceKind::Case3Flush, None);
        }
        self.in_case3 = None;
        // the block is covered; the frozen block becomes the integral
        // active block
        let cs = &mut self.colors[c];
        let (lo, len) = (cs.act_start, cs.act_len);
        cs.act_start += cs.act_len;
        cs.act_len = 0;
        for r in lo..lo + len {
            self.pending_stamp[c].push(r);
        }
        let cs = &mut self.colors[c];
        cs.act_start = cs.frz_start;
        cs.act_len = cs.frz_len;
        cs.frz_start += cs.frz_len;
        cs.frz_len = 0;
        cs.act_state = ActState::Integral;
        self.stamp_pending(c);
        self.reset_sigma_color(c);
        self.resync_color(c);
        self.regular_reset_scan(c);
        Ok(())
    }

    fn find_case4(&self) -> Option<ColorId> {
        let thr = self.thr_act();
        self.colors.iter().position(|cs| {
            cs.frz_len > 0
                && (cs.act_len == 0 || cs.act_state == ActState::Fractional)
                && (cs.act_len as f64) < thr
                && (cs.act_len == 0 || cs.frz_start == cs.act_start + cs.act_len)
        })
    }

    fn apply_case4(&mut self, c: ColorId) {
        self.stats.case_counts[3] += 1;
        let cs = &mut self.colors[c];
        let defrost_lo = cs.frz_start;
        let defrost_hi = cs.frz_start + cs.frz_len;
        if cs.act_len == 0 {
            cs.act_start = cs.frz_start;
        }
        cs.act_len += cs.frz_len;
        cs.frz_start += cs.frz_len;
        cs.frz_len = 0;
        cs.act_state = ActState::Fractional;
        let mut ev = TraceEvent::new(self.mu, "case4");
        ev.color = Some(c);
        ev.value = Some((defrost_hi - defrost_lo) as f64);
        self.trace_ev(ev);
        // defrosted items join open fractional pieces whose run reaches them
        let list = self.open_by_color[c].clone();
        for pid in list {
            if !self.appendable(pid, AppendState::Fractional) {
                continue;
            }
            loop {
                let last = *self.pieces[pid].items.last().unwrap();
                let occs = self.inst.occurrences(c);
                let next_rank = match occs.binary_search(&last) {
                    Ok(r) => r + 1,
                    Err(r) => r,
                };
                if next_rank < defrost_lo || next_rank >= defrost_hi {
                    break;
                }
                let frontier = self.pieces[pid].frontier();
                if frontier < self.t || frontier > self.k + self.n {
                    break;
                }
                self.append_to_piece(pid, occs[next_rank]);
            }
        }
        self.open_growing(c);
        self.resync_color(c);
    }

    fn find_case5(&mut self) -> Option<ColorId> {
        for c in 0..self.colors.len() {
            if self.colors[c].act_len > 0 && self.colors[c].act_state == ActState::Integral {
                let s = self.summary(c);
                if s.has_sigma_ge1 {
                    return Some(c);
                }
            }
        }
        None
    }

    fn find_case6(&self) -> Option<ColorId> {
        self.colors
            .iter()
            .position(|cs| cs.frz_len > 0 && cs.acc6 >= self.cfg.case6_quota)
    }

    /// Suspends every fractional piece that crosses slot t; returns
    /// (color, tail items, weight) remainders to resume after the cascade.
    fn suspend_crossing(&mut self) -> Vec<(ColorId, Vec<usize>, f64)> {
        let mut tails = Vec::new();
        for c in 0..self.colors.len() {
            let t = self.t;
            let list = self.open_by_color[c].clone();
            let mut keep = Vec::new();
            for pid in list {
                let p = &self.pieces[pid];
                let end = p.start + p.items.len() - 1;
                let fractional = matches!(
                    p.kind,
                    PieceKind::Regular | PieceKind::Resumed | PieceKind::Case3Flush
                );
                if !fractional {
                    debug_assert!(
                        end < t,
                        "weight-1 piece crossing slot t would have fired Case 2"
                    );
                    keep.push(pid);
                    continue;
                }
                if end < t {
                    keep.push(pid);
                    continue;
                }
                let w = p.weight;
                let keep_len = t - p.start;
                let tail: Vec<usize> = p.items[keep_len..].to_vec();
                for (r, &i) in tail.iter().enumerate() {
                    self.cov[i] -= w;
                    self.add_usage(t + r, -w);
                }
                let p = &mut self.pieces[pid];
                p.items.truncate(keep_len);
                p.status = PieceStatus::Suspended;
                p.append = None;
                if self.growing[c] == Some(pid) {
                    self.growing[c] = None;
                }
                if keep_len == 0 || self.pieces[pid].weight < WEIGHT_EPS {
                    self.pieces[pid].deleted = true;
                }
                if w >= WEIGHT_EPS && !tail.is_empty() {
                    tails.push((c, tail, w));
                }
                let mut ev = TraceEvent::new(self.mu, "suspend");
                ev.color = Some(c);
                ev.value = Some(w);
                self.trace_ev(ev);
            }
            self.open_by_color[c] = keep;
        }
        tails
    }

    /// Shared body of Cases 5 and 6: schedule `block` (occurrence ranks) as
    /// a weight-1 piece at t with appending, cascading Case 2 through it,
    /// then resume suspended remainders at the new t.
    fn weight1_procedure(
        &mut self,
        c: ColorId,
        block_lo: usize,
        block_len: usize,
        kind: PieceKind,
        append: AppendState,
    ) -> Result<(), EngineError> {
        let tails = self.suspend_crossing();
        let items: Vec<usize> = (block_lo..block_lo + block_len)
            .map(|r| self.occ(c, r))
            .collect();
        if self.t + items.len() - 1 > self.k + self.n {
            return Err(EngineError::Invariant {
                mu: self.mu,
                detail: format!(
                    "weight-1 batch of color {c} would overflow slot {} (t = {})",
                    self.k + self.n,
                    self.t
                ),
            });
        }
        debug_assert!(self.slot_usage(self.t) < EV_TOL * 16.0);
        self.add_piece(c, self.t, items, 1.0, kind, Some(append));
        for r in block_lo..block_lo + block_len {
            self.pending_stamp[c].push(r);
        }
        self.stamp_pending(c);
        self.reset_sigma_color(c);
        self.resync_color(c);
        self.regular_reset_scan(c);
        // cascade: the weight-1 piece keeps slot t tight until it ends
        while !self.done && self.slot_usage(self.t) >= 1.0 - EV_TOL {
            self.apply_case2();
        }
        if !self.done {
            for (rc, tail, w) in tails {
                let tail: Vec<usize> = tail
                    .into_iter()
                    .filter(|&i| self.cov[i] < 1.0 - EV_TOL)
                    .collect();
                if tail.is_empty() {
                    continue;
                }
                let max_len = self.k + self.n + 1 - self.t;
                let tail = if tail.len() > max_len {
                    tail[..max_len].to_vec()
                } else {
                    tail
                };
                self.add_piece(rc, self.t, tail, w, PieceKind::Resumed, Some(AppendState::Fractional));
                let mut ev = TraceEvent::new(self.mu, "open");
                ev.color = Some(rc);
                ev.slot = Some(self.t);
                ev.value = Some(w);
                self.trace_ev(ev);
            }
            debug_assert!(self.slot_usage(self.t) <= 1.0 + EV_TOL);
            for cc in 0..self.colors.len() {
                self.open_growing(cc);
            }
        }
        Ok(())
    }

    fn apply_case5(&mut self, c: ColorId) -> Result<(), EngineError> {
        self.stats.case_counts[4] += 1;
        let cs = &self.colors[c];
        debug_assert!(cs.act_state == ActState::Integral && cs.frz_len == 0);
        let (lo, len) = (cs.act_start, cs.act_len);
        let mut ev = TraceEvent::new(self.mu, "case5");
        ev.color = Some(c);
        ev.value = Some(len as f64);
        self.trace_ev(ev);
        let yb = 1.0 / (2.0 * len as f64);
        for r in lo..lo + len {
            let item = self.occ(c, r);
            self.y_bar[item] = yb;
        }
        let cs = &mut self.colors[c];
        cs.act_start += cs.act_len;
        cs.act_len = 0;
        self.weight1_procedure(c, lo, len, PieceKind::Case5Integral, AppendState::Integral)
    }

    fn apply_case6(&mut self, c: ColorId) -> Result<(), EngineError> {
        self.stats.case_counts[5] += 1;
        let cs = &self.colors[c];
        let (lo, len) = (cs.frz_start, cs.frz_len);
        let mut ev = TraceEvent::new(self.mu, "case6");
        ev.color = Some(c);
        ev.value = Some(len as f64);
        self.trace_ev(ev);
        let cs = &mut self.colors[c];
        cs.frz_start += cs.frz_len;
        cs.frz_len = 0;
        cs.acc6 = 0.0;
        self.weight1_procedure(c, lo, len, PieceKind::Case6Weight1, AppendState::Frozen)
    }

    fn scan_cases(&mut self) -> Result<(), EngineError> {
        loop {
            if self.done {
                return Ok(());
            }
            if self.t > self.kp + self.n {
                self.done = true;
                return Ok(());
            }
            if let Some(c) = self.find_case1() {
                self.apply_case1(c);
                continue;
            }
            if self.slot_usage(self.t) >= 1.0 - EV_TOL {
                self.apply_case2();
                continue;
            }
            if let Some(c) = self.find_case3() {
                self.apply_case3(c)?;
                continue;
            }
            if let Some(c) = self.find_case4() {
                self.apply_case4(c);
                continue;
            }
            if let Some(c) = self.find_case5() {
                self.apply_case5(c)?;
                continue;
            }
            if let Some(c) = self.find_case6() {
                self.apply_case6(c)?;
                continue;
            }
            return Ok(());
        }
    }

    // ---- continuous advance ----------------------------------------------

    fn check_block_invariants(&mut self) {
        let thr = self.k as f64 / (100.0 * self.ln_k);
        if thr < 1.0 {
            return;
        }
        for (c, cs) in self.colors.iter().enumerate() {
            if cs.act_len > 0 && cs.act_state == ActState::Fractional {
                self.stats.max_act_fractional = self.stats.max_act_fractional.max(cs.act_len);
                self.stats.max_block_fractional =
                    self.stats.max_block_fractional.max(cs.block_len());
                if (cs.act_len as f64) >= 11.0 * self.k as f64 / (100.0 * self.ln_k) {
                    self.stats.invariant_failures.push(format!(
                        "fractional |B_{c}^act| = {} >= 11k/(100 ln k) at mu = {}",
                        cs.act_len, self.mu
                    ));
                }
                if (cs.block_len() as f64) >= 12.0 * self.k as f64 / (100.0 * self.ln_k) {
                    self.stats.invariant_failures.push(format!(
                        "fractional |B_{c}| = {} >= 12k/(100 ln k) at mu = {}",
                        cs.block_len(),
                        self.mu
                    ));
                }
            }
        }
        let arrived_total: usize = self.colors.iter().map(|cs| cs.arrived).sum();
        if self.k >= 64 && arrived_total < self.n {
            // scheduled volume of buffered items < |B| - k' (full buffer)
            let mut vol = 0.0;
            let mut b = 0usize;
            for (c, cs) in self.colors.iter().enumerate() {
                for r in cs.act_start..cs.act_start + cs.act_len {
                    vol += self.cov[self.occ(c, r)];
                }
                b += cs.block_len();
            }
            if b > 0 && vol >= (b as f64 - self.kp as f64) {
                self.stats.invariant_failures.push(format!(
                    "scheduled volume {vol:.6} of |B| = {b} items >= |B| - k' at mu = {}",
                    self.mu
                ));
            }
        }
    }

    /// Integrates the continuous process to the next event.
    fn advance(&mut self) -> Result<(), EngineError> {
        self.stats.advances += 1;
        self.check_block_invariants();

        let growing_colors: Vec<ColorId> =
            (0..self.colors.len()).filter(|&c| self.growing[c].is_some()).collect();

        // period boundary: earliest sigma = 1 crossing anywhere
        let mut next_cross = f64::INFINITY;
        let mut max_exp_rate = 0.0f64;
        for c in 0..self.colors.len() {
            if self.colors[c].act_len == 0 {
                continue;
            }
            let s = self.summary(c);
            next_cross = next_cross.min(s.next_cross);
            if self.growing[c].is_some() {
                max_exp_rate = max_exp_rate.max(s.max_exp_rate);
            }
        }
        let mut delta = next_cross - self.mu;
        // step cap in the exponential regime
        if max_exp_rate > 0.0 {
            delta = delta.min((1.0 + self.cfg.max_step_growth).ln() / max_exp_rate);
        }

        // coverage / usage events from piece growth
        let mut laws: Vec<(ColorId, Law)> = Vec::with_capacity(growing_colors.len());
        for &c in &growing_colors {
            let law = self.law_of(c);
            let front = self.occ(c, self.colors[c].act_start);
            let target = 1.0 - self.cov[front];
            if target <= 0.0 {
                // scan should have fired Case 1 already
                return Ok(());
            }
            delta = delta.min(law.invert(target));
            laws.push((c, law));
        }
        if !laws.is_empty() {
            let target_u = 1.0 - self.slot_usage(self.t);
            debug_assert!(target_u > 0.0);
            let total = |d: f64| -> f64 { laws.iter().map(|(_, law)| law.growth(d)).sum() };
            if delta.is_finite() && total(delta) >= target_u {
                // bisect the usage crossing, keeping the undershooting side
                let (mut lo, mut hi) = (0.0f64, delta);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if total(mid) >= target_u {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= self.cfg.root_tol * hi.max(1e-30) && total(lo) >= target_u - 1e-13
                    {
                        break;
                    }
                }
                delta = lo;
            } else if !delta.is_finite() {
                // usage is the only finite event
                let mut hi = 1.0;
                while total(hi) < target_u && hi < 1e18 {
                    hi *= 2.0;
                }
                if total(hi) < target_u {
                    delta = f64::INFINITY;
                } else {
                    let mut lo = 0.0;
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if total(mid) >= target_u {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                        if hi - lo <= self.cfg.root_tol * hi.max(1e-30)
                            && total(lo) >= target_u - 1e-13
                        {
                            break;
                        }
                    }
                    delta = lo;
                }
            }
        }

        if !delta.is_finite() {
            // nothing rises: graceful end if the buffer is clear and input
            // exhausted, otherwise a genuine stall
            let b_total: usize = self.colors.iter().map(|cs| cs.block_len()).sum();
            let arrived: usize = self.colors.iter().map(|cs| cs.arrived).sum();
            if b_total == 0 && arrived == self.n {
                self.fast_forward();
                return Ok(());
            }
            return Err(EngineError::Stall {
                mu: self.mu,
                t: self.t,
                detail: format!(
                    "|B| = {b_total}, arrived = {arrived}/{}, growing colors = {:?}",
                    self.n, growing_colors
                ),
            });
        }
        if delta <= 0.0 {
            return Err(EngineError::Invariant {
                mu: self.mu,
                detail: "non-positive integration step".into(),
            });
        }

        // commit
        self.mu += delta;
        for (c, law) in laws {
            let g = law.growth(delta);
            if g <= 0.0 {
                continue;
            }
            let pid = self.growing[c].unwrap();
            let (start, len, w_items) = {
                let p = &mut self.pieces[pid];
                p.weight += g;
                (p.start, p.items.len(), p.items.clone())
            };
            for &i in &w_items {
                self.cov[i] += g;
            }
            for r in 0..len {
                self.add_usage(start + r, g);
            }
            if let Law::Exp { x0, rate } = law {
                let xh = x0 * (rate * delta).exp();
                self.stats.max_x_hat = self.stats.max_x_hat.max(xh);
                if xh > 1.1 + 1e-9 {
                    return Err(EngineError::Invariant {
                        mu: self.mu,
                        detail: format!("x-hat = {xh} exceeds 11/10 for color {c}"),
                    });
                }
            }
        }
        // summaries whose crossing we reached are stale
        let mu = self.mu;
        for c in 0..self.colors.len() {
            if let Some(s) = &self.summaries[c] {
                if s.next_cross <= mu + 1e-18 {
                    self.summaries[c] = None;
                }
            }
        }
        Ok(())
    }

    /// Terminates early when everything arrived and got covered before t
    /// reached k' + n: the remaining slots pass at the current mu.
    fn fast_forward(&mut self) {
        let mu = self.mu;
        for j in self.t..=self.kp + self.n {
            self.z_hat[j - self.k - 1] = mu;
            let mut ev = TraceEvent::new(mu, "slot");
            ev.slot = Some(j);
            self.trace_ev(ev);
        }
        self.t = self.kp + self.n + 1;
        self.done = true;
    }

    // ---- final flush -------------------------------------------------------

    /// Covers all remaining deficits with suffix batches waterfilled into
    /// the leftover slot capacity. Remaining deficits exactly equal the
    /// leftover capacity up to slot k+n, and per-segment deficits are
    /// nondecreasing, so the fill is exact.
    fn finalize_flush(&mut self) -> Result<(), EngineError> {
        debug_assert!(self.t > self.kp + self.n);
        // contiguous uncovered segments (active block and frozen block per
        // color; a covered gap may separate them)
        struct Seg {
            color: ColorId,
            items: Vec<usize>,
            vrem: Vec<f64>,
            front: usize,
        }
        let mut segs: Vec<Seg> = Vec::new();
        for (c, cs) in self.colors.iter().enumerate() {
            for (lo, len) in [(cs.act_start, cs.act_len), (cs.frz_start, cs.frz_len)] {
                if len == 0 {
                    continue;
                }
                let items: Vec<usize> = (lo..lo + len).map(|r| self.occ(c, r)).collect();
                let vrem: Vec<f64> = items.iter().map(|&i| 1.0 - self.cov[i]).collect();
                if vrem.iter().all(|&v| v <= DONE_DEFICIT) {
                    continue;
                }
                segs.push(Seg {
                    color: c,
                    items,
                    vrem,
                    front: 0,
                });
            }
        }

        struct FB {
            seg: usize,
            pos: usize,
            weight: f64,
            start: usize,
            covered: Vec<usize>,
        }
        let mut open: Vec<FB> = Vec::new();
        let mut made: Vec<(ColorId, usize, f64, Vec<usize>)> = Vec::new();
        let mut j = self.t;
        loop {
            for s in segs.iter_mut() {
                while s.front < s.vrem.len() && s.vrem[s.front] <= DONE_DEFICIT {
                    s.front += 1;
                }
            }
            let deficits_left = segs.iter().any(|s| s.front < s.vrem.len());
            if !deficits_left && open.is_empty() {
                break;
            }
            if j > self.k + self.n {
                let rem: f64 = segs
                    .iter()
                    .map(|s| s.vrem[s.front..].iter().filter(|&&v| v > 0.0).sum::<f64>())
                    .sum();
                return Err(EngineError::FlushOverflow {
                    max_slot: self.k + self.n,
                    detail: format!("uncovered volume {rem:.3e} left past the last slot"),
                });
            }
            // top up to this slot's capacity with fresh suffix batches
            let cap = 1.0 + USAGE_SLACK - self.slot_usage(j);
            let mut w_open: f64 = open.iter().map(|b| b.weight).sum();
            while w_open < cap - 1e-12 {
                let pick = segs
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.front < s.vrem.len() && s.vrem[s.front] > DONE_DEFICIT)
                    .max_by(|(ia, a), (ib, b)| {
                        a.vrem[a.front]
                            .partial_cmp(&b.vrem[b.front])
                            .unwrap()
                            .then(ib.cmp(ia))
                    })
                    .map(|(i, _)| i);
                let Some(si) = pick else { break };
                let w = (cap - w_open).min(segs[si].vrem[segs[si].front]);
                let front = segs[si].front;
                for v in segs[si].vrem[front..].iter_mut() {
                    *v -= w;
                }
                open.push(FB {
                    seg: si,
                    pos: front,
                    weight: w,
                    start: j,
                    covered: Vec::new(),
                });
                w_open += w;
            }
            // advance every open batch one slot
            for b in open.iter_mut() {
                let item = segs[b.seg].items[b.pos];
                self.cov[item] += b.weight;
                self.add_usage(j, b.weight);
                b.covered.push(item);
                b.pos += 1;
            }
            let seg_lens: Vec<usize> = segs.iter().map(|s| s.items.len()).collect();
            open.retain_mut(|b| {
                if b.pos >= seg_lens[b.seg] {
                    made.push((
                        segs[b.seg].color,
                        b.start,
                        b.weight,
                        std::mem::take(&mut b.covered),
                    ));
                    false
                } else {
                    true
                }
            });
            j += 1;
        }
        for (c, start, w, items) in made {
            // record directly: these pieces are closed by construction
            let id = self.pieces.len();
            self.pieces.push(Piece {
                color: c,
                start,
                items,
                weight: w,
                kind: PieceKind::FinalFlush,
                status: PieceStatus::Ended,
                append: None,
                deleted: false,
            });
            self.stats.pieces += 1;
            let mut ev = TraceEvent::new(self.mu, "flush");
            ev.color = Some(c);
            ev.slot = Some(self.pieces[id].start);
            ev.value = Some(w);
            self.trace_ev(ev);
        }
        Ok(())
    }

    // ---- main loop ---------------------------------------------------------

    pub(super) fn run(mut self) -> Result<EngineOutput, EngineError> {
        // the first k items are in the buffer when the process starts
        let initial = self.k.min(self.n);
        for i in 1..=initial {
            self.arrival(i);
        }
        self.scan_cases()?;
        for c in 0..self.colors.len() {
            self.open_growing(c);
        }
        while !self.done {
            self.advance()?;
            self.scan_cases()?;
        }
        self.finalize_flush()?;

        let mu_final = self.mu;
        self.y_hat[0] = 0.0;
        for i in 1..=self.n {
            if self.y_hat[i].is_nan() {
                self.y_hat[i] = mu_final;
            }
        }
        for z in self.z_hat.iter_mut() {
            if z.is_nan() {
                *z = mu_final;
            }
        }
        let batches: Vec<Batch> = self
            .pieces
            .iter()
            .filter(|p| !p.deleted && p.weight >= WEIGHT_EPS && !p.items.is_empty())
            .map(|p| Batch::from_items(p.color, p.items.clone(), p.start, p.weight))
            .collect();
        let duals = EngineDuals {
            format_version: crate::core::SOLUTION_FORMAT_VERSION,
            k: self.k,
            k_prime: self.kp,
            mu_final,
            y_hat: self.y_hat,
            y_bar: self.y_bar,
            z_hat: self.z_hat,
            scale: 1.0,
        };
        Ok(EngineOutput {
            k: self.k,
            k_prime: self.kp,
            x: FractionalSolution::new(batches),
            duals,
            trace: self.trace,
            stats: self.stats,
        })
    }
}
