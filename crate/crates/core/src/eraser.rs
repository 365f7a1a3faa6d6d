//! Monte Carlo quantum-eraser experiments on entangled kaon pairs.
//!
//! Four arrangements share one antisymmetric source and differ only in how
//! strangeness and width information is read out on each side:
//!
//! * `A`: both sides intervened on. Left strangeness at `t_l`; on the right
//!   a coin decides between a strangeness readout at `t_r0` (erasure) and a
//!   free decay observed from `t_r0` on, classified short/long by a time cut
//!   (marking).
//! * `B`: left strangeness at `t_l`; right side flies toward an absorber at
//!   `t_r0`. Kaons reaching it get a strangeness readout, kaons decaying
//!   first mark their width by decay time.
//! * `C`: left strangeness at `t_l`; right side is never intervened on. Its
//!   decay mode sorts each event: semileptonic modes reveal strangeness,
//!   pionic modes reveal the width.
//! * `D`: both sides fly free; decay modes and times are recorded on both.
//!
//! CP violation is switched off here. The samplers below rely on orthogonal
//! mass eigenstates to split each event into a short/long skeleton plus, when
//! strangeness is read out on both sides, an interference-bearing joint draw.
//! Every branch is drawn from its exact conditional law, so the tallies can
//! be compared against closed-form references without burn-in or weighting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KaonError, Result};
use crate::evolution::normalized_survivor;
use crate::pair::strangeness_cells;
use crate::states::{mass_eigenstates, KaonState, PhysParams};
use crate::stats::{chi_square_homogeneity, ChiSquareResult};

/// Default time cut separating "decayed early" from "decayed late" when a
/// width label is assigned by decay time alone. Chosen so both
/// misidentification rates sit a little under one percent.
pub const DEFAULT_LIFETIME_CUT: f64 = 4.8;

/// p-value floor under which the cross-setup comparison is flagged.
pub const EQUIVALENCE_P_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setup {
    A,
    B,
    C,
    D,
}

impl Setup {
    pub const ALL: [Setup; 4] = [Setup::A, Setup::B, Setup::C, Setup::D];
}

impl std::fmt::Display for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Setup::A => "a",
            Setup::B => "b",
            Setup::C => "c",
            Setup::D => "d",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Setup {
    type Err = KaonError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Setup::A),
            "b" => Ok(Setup::B),
            "c" => Ok(Setup::C),
            "d" => Ok(Setup::D),
            other => Err(KaonError::InvalidArgument(format!(
                "unknown setup {other:?}, expected one of a, b, c, d"
            ))),
        }
    }
}

/// Which side's outcome is drawn from its marginal first when a joint
/// strangeness table is sampled. Predictions must not depend on this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CollapseOrdering {
    LeftFirst,
    RightFirst,
}

/// How one side of a pair was measured.
///
/// `ActiveLifetime.t_obs` is the decay moment actually observed; `cut` is the
/// time threshold that turned it into a short/long label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MeasurementKind {
    ActiveStrangeness { t_insert: f64 },
    ActiveLifetime { t_obs: f64, cut: f64 },
    PassiveStrangeness,
    PassiveLifetime,
}

impl MeasurementKind {
    pub fn is_strangeness(&self) -> bool {
        matches!(
            self,
            MeasurementKind::ActiveStrangeness { .. } | MeasurementKind::PassiveStrangeness
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeLabel {
    #[serde(rename = "K0")]
    K0,
    #[serde(rename = "K0bar")]
    K0Bar,
    #[serde(rename = "KS")]
    KShort,
    #[serde(rename = "KL")]
    KLong,
}

impl OutcomeLabel {
    pub fn is_strangeness(self) -> bool {
        matches!(self, OutcomeLabel::K0 | OutcomeLabel::K0Bar)
    }

    fn bit(self) -> usize {
        match self {
            OutcomeLabel::K0 | OutcomeLabel::KShort => 0,
            OutcomeLabel::K0Bar | OutcomeLabel::KLong => 1,
        }
    }
}

impl std::fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OutcomeLabel::K0 => "K0",
            OutcomeLabel::K0Bar => "K0bar",
            OutcomeLabel::KShort => "KS",
            OutcomeLabel::KLong => "KL",
        };
        f.write_str(s)
    }
}

/// One simulated pair event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub left_kind: MeasurementKind,
    pub right_kind: MeasurementKind,
    pub left_outcome: OutcomeLabel,
    pub right_outcome: OutcomeLabel,
    pub left_time: f64,
    pub right_time: f64,
}

impl EventRecord {
    /// Strangeness readouts carry K0/K0bar labels, width readouts KS/KL.
    pub fn is_consistent(&self) -> bool {
        self.left_kind.is_strangeness() == self.left_outcome.is_strangeness()
            && self.right_kind.is_strangeness() == self.right_outcome.is_strangeness()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EraserConfig {
    pub setup: Setup,
    /// Left strangeness readout time (setups a, b, c).
    pub t_l: f64,
    /// Right absorber position in proper time (setups a, b).
    pub t_r0: f64,
    /// Fraction of decays whose mode reveals strangeness (setups c, d).
    pub branching_semileptonic: f64,
    /// Short/long threshold for time-classified decays.
    pub lifetime_cut: f64,
    /// Setup a only: probability the right absorber is withdrawn.
    pub mark_fraction: f64,
    /// Half width of the time-separation window used to collect joint
    /// strangeness events comparable across setups. Wider windows gather
    /// more events but smear the free-separation setups away from the fixed
    /// ones: the smearing bias grows like the fifth power of the width in a
    /// homogeneity statistic, and 0.25 is already detectable at 10^6 events.
    pub dt_window: f64,
    pub ordering: CollapseOrdering,
    pub n_events: u64,
    pub seed: u64,
}

impl EraserConfig {
    pub fn new(setup: Setup) -> Self {
        EraserConfig {
            setup,
            t_l: 1.0,
            t_r0: 1.0,
            branching_semileptonic: 0.5,
            lifetime_cut: DEFAULT_LIFETIME_CUT,
            mark_fraction: 0.5,
            dt_window: 0.15,
            ordering: CollapseOrdering::LeftFirst,
            n_events: 100_000,
            seed: 7,
        }
    }

    /// Time separation the joint strangeness comparison is centered on.
    pub fn dt_target(&self) -> f64 {
        self.t_l - self.t_r0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v, positive) in [
            ("t_l", self.t_l, true),
            ("t_r0", self.t_r0, true),
            ("lifetime_cut", self.lifetime_cut, true),
            ("dt_window", self.dt_window, false),
        ] {
            if !v.is_finite() || v < 0.0 || (positive && v == 0.0) {
                return Err(KaonError::Config(format!("{name} must be a positive time, got {v}")));
            }
        }
        for (name, v) in [
            ("branching_semileptonic", self.branching_semileptonic),
            ("mark_fraction", self.mark_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(KaonError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.n_events == 0 {
            return Err(KaonError::Config("n_events must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for EraserConfig {
    fn default() -> Self {
        EraserConfig::new(Setup::A)
    }
}

/// The samplers and references assume CP-symmetric mixing (orthogonal width
/// eigenstates) and two distinct positive widths; anything else has no
/// short/long skeleton to draw from.
fn check_params(params: &PhysParams) -> Result<()> {
    params.validate()?;
    if params.epsilon.norm_sqr() != 0.0 {
        return Err(KaonError::Config(
            "eraser sampling assumes orthogonal mass eigenstates; set epsilon = 0".into(),
        ));
    }
    if !(params.gamma_l > 0.0 && params.gamma_s > params.gamma_l) {
        return Err(KaonError::Config(
            "width marking needs two distinct positive widths".into(),
        ));
    }
    Ok(())
}

/// 2x2 joint tally over one pair of binary outcomes, indexed
/// 2*left_bit + right_bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassTable {
    pub counts: [u64; 4],
}

impl ClassTable {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn frequencies(&self) -> [f64; 4] {
        let n = self.total();
        if n == 0 {
            return [0.0; 4];
        }
        self.counts.map(|c| c as f64 / n as f64)
    }

    pub fn standard_errors(&self) -> [f64; 4] {
        let n = self.total();
        if n == 0 {
            return [0.0; 4];
        }
        self.frequencies().map(|f| (f * (1.0 - f) / n as f64).sqrt())
    }

    fn record(&mut self, left_bit: usize, right_bit: usize) {
        self.counts[2 * left_bit + right_bit] += 1;
    }

    fn merge(&mut self, other: &ClassTable) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }
}

/// Outcome labels of the four cells of a class table, left label first.
pub fn cell_labels(class: &str) -> [(&'static str, &'static str); 4] {
    let (l, r) = match class {
        "ss" | "ss_matched" => (true, true),
        "st" => (true, false),
        "ts" => (false, true),
        "tt" => (false, false),
        other => panic!("unknown class {other:?}"),
    };
    let left = if l { ["K0", "K0", "K0bar", "K0bar"] } else { ["KS", "KS", "KL", "KL"] };
    let right = if r { ["K0", "K0bar", "K0", "K0bar"] } else { ["KS", "KL", "KS", "KL"] };
    [
        (left[0], right[0]),
        (left[1], right[1]),
        (left[2], right[2]),
        (left[3], right[3]),
    ]
}

/// Event tallies sorted by which kind of information each side produced:
/// `ss` holds strangeness-strangeness events, `st` strangeness-width, and so
/// on. `ss_matched` is the subset of `ss` whose measured time separation
/// falls within `dt_window` of the target separation; it is the table
/// comparable across setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortedFrequencies {
    pub setup: Setup,
    pub n_events: u64,
    pub ss: ClassTable,
    pub st: ClassTable,
    pub ts: ClassTable,
    pub tt: ClassTable,
    pub ss_matched: ClassTable,
}

impl SortedFrequencies {
    fn empty(setup: Setup) -> Self {
        SortedFrequencies {
            setup,
            n_events: 0,
            ss: ClassTable::default(),
            st: ClassTable::default(),
            ts: ClassTable::default(),
            tt: ClassTable::default(),
            ss_matched: ClassTable::default(),
        }
    }

    pub fn class_tables(&self) -> [(&'static str, &ClassTable); 5] {
        [
            ("ss", &self.ss),
            ("st", &self.st),
            ("ts", &self.ts),
            ("tt", &self.tt),
            ("ss_matched", &self.ss_matched),
        ]
    }

    fn record(&mut self, ev: &EventRecord, dt_target: f64, dt_window: f64) {
        self.n_events += 1;
        let (lb, rb) = (ev.left_outcome.bit(), ev.right_outcome.bit());
        match (ev.left_outcome.is_strangeness(), ev.right_outcome.is_strangeness()) {
            (true, true) => {
                self.ss.record(lb, rb);
                if ((ev.left_time - ev.right_time) - dt_target).abs() <= dt_window {
                    self.ss_matched.record(lb, rb);
                }
            }
            (true, false) => self.st.record(lb, rb),
            (false, true) => self.ts.record(lb, rb),
            (false, false) => self.tt.record(lb, rb),
        }
    }

    fn merge(&mut self, other: &SortedFrequencies) {
        self.n_events += other.n_events;
        self.ss.merge(&other.ss);
        self.st.merge(&other.st);
        self.ts.merge(&other.ts);
        self.tt.merge(&other.tt);
        self.ss_matched.merge(&other.ss_matched);
    }
}

/// Inverse-CDF exponential variate; infinite when the width vanishes.
fn exponential_time(gamma: f64, u: f64) -> f64 {
    if gamma <= 0.0 {
        return f64::INFINITY;
    }
    -(1.0 - u).ln() / gamma
}

/// Exponential decay time of one width component, KS or KL.
pub fn sample_decay_time<R: Rng + ?Sized>(
    component: OutcomeLabel,
    params: &PhysParams,
    rng: &mut R,
) -> Result<f64> {
    let gamma = match component {
        OutcomeLabel::KShort => params.gamma_s,
        OutcomeLabel::KLong => params.gamma_l,
        other => {
            return Err(KaonError::InvalidArgument(format!(
                "decay times attach to width components, got {other}"
            )))
        }
    };
    Ok(exponential_time(gamma, rng.random::<f64>()))
}

fn require_unit_norm(state: &KaonState) -> Result<()> {
    if !state.is_normalized() {
        return Err(KaonError::InvalidArgument(format!(
            "measurement expects a unit-norm state, got norm^2 = {}",
            state.norm_sqr()
        )));
    }
    Ok(())
}

/// Weights of a state on the two width components. Exact Born weights when
/// the eigenstates are orthogonal; renormalized projection weights otherwise.
fn width_component_weight(state: &KaonState, params: &PhysParams) -> Result<f64> {
    let w = params.weights();
    w.require_nondegenerate()?;
    let (ks, kl) = mass_eigenstates(&w);
    let det = ks.amp_k0() * kl.amp_k0bar() - kl.amp_k0() * ks.amp_k0bar();
    let a = (state.amp_k0() * kl.amp_k0bar() - kl.amp_k0() * state.amp_k0bar()) / det;
    let b = (ks.amp_k0() * state.amp_k0bar() - state.amp_k0() * ks.amp_k0bar()) / det;
    let (ws, wl) = (a.norm_sqr(), b.norm_sqr());
    Ok(ws / (ws + wl))
}

/// Strangeness readout forced by a matter piece: Born rule in the
/// strangeness basis.
pub fn measure_active_strangeness<R: Rng + ?Sized>(
    state: &KaonState,
    rng: &mut R,
) -> Result<OutcomeLabel> {
    require_unit_norm(state)?;
    let p_k0 = state.amp_k0().norm_sqr();
    Ok(strangeness_label((rng.random::<f64>() >= p_k0) as usize))
}

/// Width readout by observed decay time: the width component is drawn by
/// Born rule, its decay time sampled, and the label assigned by whether the
/// decay falls before `cut`. Misidentification is a tail mass, not a knob.
pub fn measure_active_lifetime<R: Rng + ?Sized>(
    state: &KaonState,
    params: &PhysParams,
    cut: f64,
    rng: &mut R,
) -> Result<OutcomeLabel> {
    require_unit_norm(state)?;
    if cut.is_nan() || cut <= 0.0 {
        return Err(KaonError::InvalidArgument(format!("cut must be > 0, got {cut}")));
    }
    let short = rng.random::<f64>() < width_component_weight(state, params)?;
    let gamma = if short { params.gamma_s } else { params.gamma_l };
    let tau = exponential_time(gamma, rng.random::<f64>());
    Ok(lifetime_label(tau < cut))
}

/// Free-decay readout: the decay mode decides what the event reveals.
/// Semileptonic modes read strangeness at the decay moment, pionic modes
/// read the width component. The decay clock follows the survival-norm loss
/// of the state, realized as a width draw plus one exponential.
pub fn measure_passive<R: Rng + ?Sized>(
    state: &KaonState,
    params: &PhysParams,
    branching_semileptonic: f64,
    rng: &mut R,
) -> Result<(MeasurementKind, OutcomeLabel)> {
    require_unit_norm(state)?;
    if !(0.0..=1.0).contains(&branching_semileptonic) {
        return Err(KaonError::InvalidArgument(format!(
            "branching_semileptonic must lie in [0, 1], got {branching_semileptonic}"
        )));
    }
    let short = rng.random::<f64>() < width_component_weight(state, params)?;
    let gamma = if short { params.gamma_s } else { params.gamma_l };
    let tau = exponential_time(gamma, rng.random::<f64>());
    if rng.random::<f64>() < branching_semileptonic {
        // the lepton charge reads strangeness at the decay moment; the width
        // draw above only set the clock and drops out of the record
        let survivor = normalized_survivor(state, params, tau)?;
        let p_k0 = survivor.amp_k0().norm_sqr();
        let outcome = strangeness_label((rng.random::<f64>() >= p_k0) as usize);
        Ok((MeasurementKind::PassiveStrangeness, outcome))
    } else {
        Ok((MeasurementKind::PassiveLifetime, lifetime_label(short)))
    }
}

/// P(the right member carries the short width | both alive and separated by
/// dt = t_left - t_right). Also the skeleton weight conditioned on one side
/// surviving alone for dt.
pub fn right_short_weight(params: &PhysParams, dt: f64) -> f64 {
    1.0 / (1.0 + (params.delta_gamma() * dt).exp())
}

fn strangeness_label(bit: usize) -> OutcomeLabel {
    if bit == 0 { OutcomeLabel::K0 } else { OutcomeLabel::K0Bar }
}

fn lifetime_label(short: bool) -> OutcomeLabel {
    if short { OutcomeLabel::KShort } else { OutcomeLabel::KLong }
}

fn pair_through(m: f64, a: f64, b: f64) -> (f64, f64) {
    if m == 0.0 {
        (0.0, 0.0)
    } else {
        (m * (a / m), m * (b / m))
    }
}

/// Reassemble a joint table through one side's marginal and the other side's
/// collapsed conditional. Mathematically the identity; kept explicit so the
/// independence of predictions from collapse order is an observed result of
/// the simulation rather than a shortcut taken inside it.
fn factorized(cells: &[f64; 4], ordering: CollapseOrdering) -> [f64; 4] {
    match ordering {
        CollapseOrdering::LeftFirst => {
            let (c0, c1) = pair_through(cells[0] + cells[1], cells[0], cells[1]);
            let (c2, c3) = pair_through(cells[2] + cells[3], cells[2], cells[3]);
            [c0, c1, c2, c3]
        }
        CollapseOrdering::RightFirst => {
            let (c0, c2) = pair_through(cells[0] + cells[2], cells[0], cells[2]);
            let (c1, c3) = pair_through(cells[1] + cells[3], cells[1], cells[3]);
            [c0, c1, c2, c3]
        }
    }
}

fn draw_cell(u: f64, cells: &[f64; 4]) -> usize {
    let mut acc = 0.0;
    for (i, c) in cells.iter().enumerate().take(3) {
        acc += c;
        if u < acc {
            return i;
        }
    }
    3
}

fn event_rng(seed: u64, event_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(event_index);
    rng
}

/// Draw event number `event_index` for this configuration. Depends only on
/// `(config, params, event_index)`, never on how many other events exist,
/// which is what makes sharded runs reproduce single-threaded ones exactly.
///
/// The caller is responsible for validated inputs.
pub fn sample_event(cfg: &EraserConfig, params: &PhysParams, event_index: u64) -> EventRecord {
    let mut rng = event_rng(cfg.seed, event_index);
    match cfg.setup {
        Setup::A => sample_a(cfg, params, &mut rng),
        Setup::B => sample_b(cfg, params, &mut rng),
        Setup::C => sample_c(cfg, params, &mut rng),
        Setup::D => sample_d(cfg, params, &mut rng),
    }
}

/// Both sides conditioned on reaching their stations. Uniform order:
/// apparatus coin, joint cell, then the decay clock if the coin chose
/// marking.
fn sample_a(cfg: &EraserConfig, p: &PhysParams, rng: &mut ChaCha8Rng) -> EventRecord {
    let dt = cfg.dt_target();
    let u_apparatus = rng.random::<f64>();
    let u_cell = rng.random::<f64>();
    let left_kind = MeasurementKind::ActiveStrangeness { t_insert: cfg.t_l };

    if u_apparatus < cfg.mark_fraction {
        // absorber withdrawn: strangeness against width component, a product
        // law because fixing the partner's width leaves strangeness even
        let w_short = right_short_weight(p, dt);
        let cells = [
            0.5 * w_short,
            0.5 * (1.0 - w_short),
            0.5 * w_short,
            0.5 * (1.0 - w_short),
        ];
        let idx = draw_cell(u_cell, &factorized(&cells, cfg.ordering));
        let short = idx & 1 == 0;
        let gamma = if short { p.gamma_s } else { p.gamma_l };
        let tau = exponential_time(gamma, rng.random::<f64>());
        let decay_at = cfg.t_r0 + tau;
        EventRecord {
            left_kind,
            right_kind: MeasurementKind::ActiveLifetime { t_obs: decay_at, cut: cfg.lifetime_cut },
            left_outcome: strangeness_label(idx >> 1),
            right_outcome: lifetime_label(tau < cfg.lifetime_cut),
            left_time: cfg.t_l,
            right_time: decay_at,
        }
    } else {
        let cells = strangeness_cells(p, dt);
        let idx = draw_cell(u_cell, &factorized(&cells, cfg.ordering));
        EventRecord {
            left_kind,
            right_kind: MeasurementKind::ActiveStrangeness { t_insert: cfg.t_r0 },
            left_outcome: strangeness_label(idx >> 1),
            right_outcome: strangeness_label(idx & 1),
            left_time: cfg.t_l,
            right_time: cfg.t_r0,
        }
    }
}

/// Left side conditioned on reaching `t_l`; the right side either reaches
/// the absorber or decays on the way. Uniform order: skeleton, clock,
/// outcome.
fn sample_b(cfg: &EraserConfig, p: &PhysParams, rng: &mut ChaCha8Rng) -> EventRecord {
    // Conditioning on the left survival tilts the skeleton: the surviving
    // side prefers the long width, so the right side prefers the short one.
    let right_short = rng.random::<f64>() < right_short_weight(p, cfg.t_l);
    let gamma = if right_short { p.gamma_s } else { p.gamma_l };
    let tau = exponential_time(gamma, rng.random::<f64>());
    let u_outcome = rng.random::<f64>();
    let left_kind = MeasurementKind::ActiveStrangeness { t_insert: cfg.t_l };

    if tau < cfg.t_r0 {
        // decayed before the absorber: the decay time is the width label,
        // and against a fixed width the left strangeness is even
        EventRecord {
            left_kind,
            right_kind: MeasurementKind::ActiveLifetime { t_obs: tau, cut: cfg.lifetime_cut },
            left_outcome: strangeness_label((u_outcome >= 0.5) as usize),
            right_outcome: lifetime_label(tau < cfg.lifetime_cut),
            left_time: cfg.t_l,
            right_time: tau,
        }
    } else {
        // reached the absorber: the width bookkeeping is discarded and the
        // joint strangeness law carries the full interference term
        let cells = strangeness_cells(p, cfg.dt_target());
        let idx = draw_cell(u_outcome, &factorized(&cells, cfg.ordering));
        EventRecord {
            left_kind,
            right_kind: MeasurementKind::ActiveStrangeness { t_insert: cfg.t_r0 },
            left_outcome: strangeness_label(idx >> 1),
            right_outcome: strangeness_label(idx & 1),
            left_time: cfg.t_l,
            right_time: cfg.t_r0,
        }
    }
}

/// Left side conditioned on reaching `t_l`; the right side decays freely and
/// its mode decides which information the event yields. Uniform order:
/// skeleton, clock, mode, outcome.
fn sample_c(cfg: &EraserConfig, p: &PhysParams, rng: &mut ChaCha8Rng) -> EventRecord {
    let right_short = rng.random::<f64>() < right_short_weight(p, cfg.t_l);
    let gamma = if right_short { p.gamma_s } else { p.gamma_l };
    let tau = exponential_time(gamma, rng.random::<f64>());
    let semileptonic = rng.random::<f64>() < cfg.branching_semileptonic;
    let u_outcome = rng.random::<f64>();
    let left_kind = MeasurementKind::ActiveStrangeness { t_insert: cfg.t_l };

    if semileptonic {
        // the lepton charge reads strangeness at the decay moment; the
        // width skeleton drops out of the record
        let cells = strangeness_cells(p, cfg.t_l - tau);
        let idx = draw_cell(u_outcome, &factorized(&cells, cfg.ordering));
        EventRecord {
            left_kind,
            right_kind: MeasurementKind::PassiveStrangeness,
            left_outcome: strangeness_label(idx >> 1),
            right_outcome: strangeness_label(idx & 1),
            left_time: cfg.t_l,
            right_time: tau,
        }
    } else {
        // the pionic final state tags the width exactly
        EventRecord {
            left_kind,
            right_kind: MeasurementKind::PassiveLifetime,
            left_outcome: strangeness_label((u_outcome >= 0.5) as usize),
            right_outcome: lifetime_label(right_short),
            left_time: cfg.t_l,
            right_time: tau,
        }
    }
}

/// Nothing is conditioned on: both sides decay. Uniform order: skeleton,
/// both clocks, both modes, then one outcome draw if any strangeness is
/// read out.
fn sample_d(cfg: &EraserConfig, p: &PhysParams, rng: &mut ChaCha8Rng) -> EventRecord {
    let left_short = rng.random::<f64>() < 0.5;
    let (gamma_l_side, gamma_r_side) =
        if left_short { (p.gamma_s, p.gamma_l) } else { (p.gamma_l, p.gamma_s) };
    let tau_l = exponential_time(gamma_l_side, rng.random::<f64>());
    let tau_r = exponential_time(gamma_r_side, rng.random::<f64>());
    let semi_l = rng.random::<f64>() < cfg.branching_semileptonic;
    let semi_r = rng.random::<f64>() < cfg.branching_semileptonic;

    let (left_kind, right_kind) = (
        if semi_l { MeasurementKind::PassiveStrangeness } else { MeasurementKind::PassiveLifetime },
        if semi_r { MeasurementKind::PassiveStrangeness } else { MeasurementKind::PassiveLifetime },
    );
    let (left_outcome, right_outcome) = match (semi_l, semi_r) {
        (true, true) => {
            let cells = strangeness_cells(p, tau_l - tau_r);
            let idx = draw_cell(rng.random::<f64>(), &factorized(&cells, cfg.ordering));
            (strangeness_label(idx >> 1), strangeness_label(idx & 1))
        }
        (true, false) => {
            let u = rng.random::<f64>();
            (strangeness_label((u >= 0.5) as usize), lifetime_label(!left_short))
        }
        (false, true) => {
            let u = rng.random::<f64>();
            (lifetime_label(left_short), strangeness_label((u >= 0.5) as usize))
        }
        (false, false) => (lifetime_label(left_short), lifetime_label(!left_short)),
    };
    EventRecord {
        left_kind,
        right_kind,
        left_outcome,
        right_outcome,
        left_time: tau_l,
        right_time: tau_r,
    }
}

pub fn run_setup(cfg: &EraserConfig, params: &PhysParams) -> Result<SortedFrequencies> {
    run_setup_sharded(cfg, params, 1)
}

/// Tally `cfg.n_events` events over `shards` worker threads. Events are
/// split into contiguous index ranges and merged with integer adds, so every
/// shard count yields bit-identical tallies.
pub fn run_setup_sharded(
    cfg: &EraserConfig,
    params: &PhysParams,
    shards: usize,
) -> Result<SortedFrequencies> {
    cfg.validate()?;
    check_params(params)?;
    if shards == 0 {
        return Err(KaonError::InvalidArgument("shards must be at least 1".into()));
    }
    let cfg = *cfg;
    let params = *params;
    let shards = (shards as u64).min(cfg.n_events).max(1);

    let mut out = SortedFrequencies::empty(cfg.setup);
    if shards == 1 {
        tally_range(&cfg, &params, 0, cfg.n_events, &mut out);
        return Ok(out);
    }

    let mut parts: Vec<SortedFrequencies> = Vec::with_capacity(shards as usize);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..shards)
            .map(|s| {
                let lo = (cfg.n_events as u128 * s as u128 / shards as u128) as u64;
                let hi = (cfg.n_events as u128 * (s + 1) as u128 / shards as u128) as u64;
                scope.spawn(move || {
                    let mut acc = SortedFrequencies::empty(cfg.setup);
                    tally_range(&cfg, &params, lo, hi, &mut acc);
                    acc
                })
            })
            .collect();
        for h in handles {
            parts.push(h.join().expect("tally worker panicked"));
        }
    });
    for p in &parts {
        out.merge(p);
    }
    Ok(out)
}

fn tally_range(cfg: &EraserConfig, params: &PhysParams, lo: u64, hi: u64, acc: &mut SortedFrequencies) {
    let dt_target = cfg.dt_target();
    for i in lo..hi {
        let ev = sample_event(cfg, params, i);
        acc.record(&ev, dt_target, cfg.dt_window);
    }
}

/// Expected landing probabilities of the four event classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub ss: f64,
    pub st: f64,
    pub ts: f64,
    pub tt: f64,
}

/// Closed-form (or quadrature, for decay-time mixtures) expectations for one
/// configuration: per-class conditional cell probabilities plus the class
/// weights themselves. Classes a setup can never populate are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupReference {
    pub setup: Setup,
    pub class_weights: ClassWeights,
    pub ss: Option<[f64; 4]>,
    pub st: Option<[f64; 4]>,
    pub ts: Option<[f64; 4]>,
    pub tt: Option<[f64; 4]>,
    pub ss_matched: Option<[f64; 4]>,
    /// Probability of an event landing in the matched joint table.
    pub ss_matched_weight: f64,
}

/// Composite Simpson rule; the interval count is rounded up to even.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    if a >= b {
        return 0.0;
    }
    let n = (n.max(2) + 1) & !1usize;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * k as f64);
    }
    acc * h / 3.0
}

fn quad_intervals(span: f64) -> usize {
    ((span / 0.005).ceil() as usize).clamp(64, 262_144)
}

/// Joint strangeness table of setup c events, mixed over the right decay
/// time. `window` restricts the decay time; `None` integrates everything,
/// closing the far tail with its flat-cell limit. Returns the window mass
/// and the conditional cells.
fn right_decay_mixture(params: &PhysParams, t_l: f64, window: Option<(f64, f64)>) -> (f64, [f64; 4]) {
    let (gs, gl) = (params.gamma_s, params.gamma_l);
    let w = right_short_weight(params, t_l);
    let dens = move |tau: f64| w * gs * (-gs * tau).exp() + (1.0 - w) * gl * (-gl * tau).exp();
    let cell = move |tau: f64, i: usize| strangeness_cells(params, t_l - tau)[i];

    let (lo, hi, tail) = match window {
        Some((lo, hi)) => (lo.max(0.0), hi, 0.0),
        None => {
            // beyond hi the interference term is below double precision and
            // every cell sits at 1/4
            let hi = t_l + 80.0 / params.delta_gamma().abs();
            let tail = w * (-gs * hi).exp() + (1.0 - w) * (-gl * hi).exp();
            (0.0, hi, tail)
        }
    };
    if hi <= lo {
        return (0.0, [0.25; 4]);
    }
    let n = quad_intervals(hi - lo);
    let mass_exact = w * ((-gs * lo).exp() - (-gs * hi).exp())
        + (1.0 - w) * ((-gl * lo).exp() - (-gl * hi).exp());
    let mass_quad = simpson(&dens, lo, hi, n);
    let mut cells = [0.0; 4];
    for (i, c) in cells.iter_mut().enumerate() {
        let num = simpson(&move |tau| dens(tau) * cell(tau, i), lo, hi, n);
        *c = match window {
            // conditional on the window: normalize with the quadrature mass
            // so the four cells sum to exactly one
            Some(_) => num / mass_quad,
            None => num + 0.25 * tail,
        };
    }
    (mass_exact + tail, cells)
}

/// Joint strangeness table of setup d events, mixed over the distribution of
/// the decay-time difference u = tau_left - tau_right. The density has a
/// kink at u = 0, so integration splits there.
fn pair_decay_mixture(params: &PhysParams, window: Option<(f64, f64)>) -> (f64, [f64; 4]) {
    let (gs, gl) = (params.gamma_s, params.gamma_l);
    let sg = gs + gl;
    let half = move |u: f64| {
        gs * gl / sg * if u >= 0.0 { (-gs * u).exp() } else { (gl * u).exp() }
    };
    let dens = move |u: f64| 0.5 * (half(u) + half(-u));
    // upper tail mass of |U| beyond u >= 0, per side
    let upper = move |u: f64| (gl * (-gs * u).exp() + gs * (-gl * u).exp()) / (2.0 * sg);
    let cdf = move |u: f64| if u >= 0.0 { 1.0 - upper(u) } else { upper(-u) };
    let cell = move |u: f64, i: usize| strangeness_cells(params, u)[i];

    let (lo, hi, tail) = match window {
        Some((lo, hi)) => (lo, hi, 0.0),
        None => {
            let b = 80.0 / params.delta_gamma().abs();
            (-b, b, 1.0 - (cdf(b) - cdf(-b)))
        }
    };
    if hi <= lo {
        return (0.0, [0.25; 4]);
    }

    let pieces: Vec<(f64, f64)> = if lo < 0.0 && hi > 0.0 {
        vec![(lo, 0.0), (0.0, hi)]
    } else {
        vec![(lo, hi)]
    };
    let mass_exact = cdf(hi) - cdf(lo);
    let mut mass_quad = 0.0;
    let mut nums = [0.0; 4];
    for &(a, b) in &pieces {
        let n = quad_intervals(b - a);
        mass_quad += simpson(&dens, a, b, n);
        for (i, acc) in nums.iter_mut().enumerate() {
            *acc += simpson(&move |u| dens(u) * cell(u, i), a, b, n);
        }
    }
    let cells = match window {
        Some(_) => nums.map(|v| v / mass_quad),
        None => nums.map(|v| v + 0.25 * tail),
    };
    (mass_exact + tail, cells)
}

pub fn analytic_reference(cfg: &EraserConfig, params: &PhysParams) -> Result<SetupReference> {
    cfg.validate()?;
    check_params(params)?;
    let p = params;
    let (gs, gl) = (p.gamma_s, p.gamma_l);
    let dt = cfg.dt_target();
    let window = (dt - cfg.dt_window, dt + cfg.dt_window);

    let reference = match cfg.setup {
        Setup::A => {
            let w = right_short_weight(p, dt);
            let p_short = w * (1.0 - (-gs * cfg.lifetime_cut).exp())
                + (1.0 - w) * (1.0 - (-gl * cfg.lifetime_cut).exp());
            let ss = strangeness_cells(p, dt);
            SetupReference {
                setup: cfg.setup,
                class_weights: ClassWeights {
                    ss: 1.0 - cfg.mark_fraction,
                    st: cfg.mark_fraction,
                    ts: 0.0,
                    tt: 0.0,
                },
                ss: Some(ss),
                st: Some(product_table(0.5, p_short)),
                ts: None,
                tt: None,
                ss_matched: Some(ss),
                ss_matched_weight: 1.0 - cfg.mark_fraction,
            }
        }
        Setup::B => {
            let w = right_short_weight(p, cfg.t_l);
            let p_ss = w * (-gs * cfg.t_r0).exp() + (1.0 - w) * (-gl * cfg.t_r0).exp();
            let m = cfg.lifetime_cut.min(cfg.t_r0);
            let early = 1.0 - p_ss;
            // the ratio is exactly 1 when the cut reaches past the absorber;
            // keep rounding from pushing it above
            let p_short = if early > 0.0 {
                ((w * (1.0 - (-gs * m).exp()) + (1.0 - w) * (1.0 - (-gl * m).exp())) / early)
                    .clamp(0.0, 1.0)
            } else {
                0.5
            };
            let ss = strangeness_cells(p, dt);
            SetupReference {
                setup: cfg.setup,
                class_weights: ClassWeights { ss: p_ss, st: early, ts: 0.0, tt: 0.0 },
                ss: Some(ss),
                st: Some(product_table(0.5, p_short)),
                ts: None,
                tt: None,
                ss_matched: Some(ss),
                ss_matched_weight: p_ss,
            }
        }
        Setup::C => {
            let b = cfg.branching_semileptonic;
            let w = right_short_weight(p, cfg.t_l);
            let (_, ss) = right_decay_mixture(p, cfg.t_l, None);
            // the window on dt = t_l - tau maps to a reversed window on tau
            let (mass, matched) =
                right_decay_mixture(p, cfg.t_l, Some((cfg.t_l - window.1, cfg.t_l - window.0)));
            SetupReference {
                setup: cfg.setup,
                class_weights: ClassWeights { ss: b, st: 1.0 - b, ts: 0.0, tt: 0.0 },
                ss: Some(ss),
                st: Some(product_table(0.5, w)),
                ts: None,
                tt: None,
                ss_matched: Some(matched),
                ss_matched_weight: b * mass,
            }
        }
        Setup::D => {
            let b = cfg.branching_semileptonic;
            let (_, ss) = pair_decay_mixture(p, None);
            let (mass, matched) = pair_decay_mixture(p, Some(window));
            SetupReference {
                setup: cfg.setup,
                class_weights: ClassWeights {
                    ss: b * b,
                    st: b * (1.0 - b),
                    ts: (1.0 - b) * b,
                    tt: (1.0 - b) * (1.0 - b),
                },
                ss: Some(ss),
                st: Some([0.25; 4]),
                ts: Some([0.25; 4]),
                tt: Some([0.0, 0.5, 0.5, 0.0]),
                ss_matched: Some(matched),
                ss_matched_weight: b * b * mass,
            }
        }
    };
    Ok(reference)
}

/// Product of an even left marginal with a right marginal
/// (p_right_first_label, 1 - p_right_first_label).
fn product_table(p_left_first: f64, p_right_first: f64) -> [f64; 4] {
    [
        p_left_first * p_right_first,
        p_left_first * (1.0 - p_right_first),
        (1.0 - p_left_first) * p_right_first,
        (1.0 - p_left_first) * (1.0 - p_right_first),
    ]
}

/// One tallied cell against its expected probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComparison {
    pub class: String,
    pub cell: usize,
    pub count: u64,
    pub class_total: u64,
    pub observed: f64,
    pub expected: f64,
    pub z: f64,
}

/// Per-cell z-scores of a tally against its reference. Classes with no
/// events or no reference are skipped.
pub fn compare_with_reference(
    freq: &SortedFrequencies,
    reference: &SetupReference,
) -> Vec<CellComparison> {
    let classes: [(&str, &ClassTable, &Option<[f64; 4]>); 5] = [
        ("ss", &freq.ss, &reference.ss),
        ("st", &freq.st, &reference.st),
        ("ts", &freq.ts, &reference.ts),
        ("tt", &freq.tt, &reference.tt),
        ("ss_matched", &freq.ss_matched, &reference.ss_matched),
    ];
    let mut out = Vec::new();
    for (name, table, expected) in classes {
        let Some(expected) = expected else { continue };
        let total = table.total();
        if total == 0 {
            continue;
        }
        let observed = table.frequencies();
        for i in 0..4 {
            out.push(CellComparison {
                class: name.to_string(),
                cell: i,
                count: table.counts[i],
                class_total: total,
                observed: observed[i],
                expected: expected[i],
                z: crate::stats::binomial_z(table.counts[i], total, expected[i]),
            });
        }
    }
    out
}

/// Matched joint strangeness tables of all four setups run against one
/// another with a homogeneity test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub runs: Vec<SortedFrequencies>,
    pub chi_square: ChiSquareResult,
    pub homogeneous: bool,
}

/// Run every setup with the shared knobs of `base` and test whether the
/// matched joint strangeness tables look like draws from one distribution.
pub fn setup_equivalence(
    base: &EraserConfig,
    params: &PhysParams,
    shards: usize,
) -> Result<EquivalenceReport> {
    let mut runs = Vec::with_capacity(4);
    for setup in Setup::ALL {
        let cfg = EraserConfig { setup, ..*base };
        runs.push(run_setup_sharded(&cfg, params, shards)?);
    }
    let rows: Vec<Vec<u64>> = runs.iter().map(|r| r.ss_matched.counts.to_vec()).collect();
    let chi_square = chi_square_homogeneity(&rows)?;
    Ok(EquivalenceReport {
        homogeneous: chi_square.p_value > EQUIVALENCE_P_THRESHOLD,
        chi_square,
        runs,
    })
}

/// The same run executed under both collapse orderings, with the analytic
/// factorization gap alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayedChoiceReport {
    pub left_first: SortedFrequencies,
    pub right_first: SortedFrequencies,
    /// Largest count difference over all cells of all tables.
    pub max_count_diff: u64,
    /// Largest absolute difference between the two factorizations of the
    /// joint tables this configuration can draw from.
    pub factorization_gap: f64,
    pub consistent: bool,
}

/// Factorization-order independence, checked two ways: the identical event
/// stream is tallied under both collapse orderings, and the two analytic
/// factorizations of the joint tables are compared directly.
pub fn delayed_choice_check(cfg: &EraserConfig, params: &PhysParams) -> Result<DelayedChoiceReport> {
    let left_first =
        run_setup(&EraserConfig { ordering: CollapseOrdering::LeftFirst, ..*cfg }, params)?;
    let right_first =
        run_setup(&EraserConfig { ordering: CollapseOrdering::RightFirst, ..*cfg }, params)?;

    let mut max_count_diff = 0u64;
    for ((_, a), (_, b)) in left_first.class_tables().iter().zip(right_first.class_tables()) {
        for (x, y) in a.counts.iter().zip(b.counts) {
            max_count_diff = max_count_diff.max(x.abs_diff(y));
        }
    }

    let mut gap = 0.0f64;
    let mut probe = |cells: [f64; 4]| {
        let lf = factorized(&cells, CollapseOrdering::LeftFirst);
        let rf = factorized(&cells, CollapseOrdering::RightFirst);
        for (a, b) in lf.iter().zip(rf) {
            gap = gap.max((a - b).abs());
        }
    };
    let dt = cfg.dt_target();
    for sep in [dt, dt - cfg.dt_window, dt + cfg.dt_window, 0.0, 0.5, -0.5, 1.0, -1.0, 3.0, -3.0] {
        probe(strangeness_cells(params, sep));
    }
    let w = right_short_weight(params, dt);
    probe([0.5 * w, 0.5 * (1.0 - w), 0.5 * w, 0.5 * (1.0 - w)]);

    Ok(DelayedChoiceReport {
        consistent: max_count_diff == 0 && gap <= 1e-12,
        left_first,
        right_first,
        max_count_diff,
        factorization_gap: gap,
    })
}
