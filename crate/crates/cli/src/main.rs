//! Command line front end.
//!
//! Every invocation prints exactly one document: CSV for curve-shaped
//! output, JSON for verdict-shaped output. A metadata block (comment lines
//! in CSV, a `metadata` object in JSON) echoes the tool version, the
//! subcommand, every parameter after defaulting, the seed where one exists,
//! and a unix timestamp. The timestamp is the only byte of output that is
//! allowed to differ between two runs with identical flags.
//!
//! Exit codes: 0 success, 2 bad usage or invalid parameters, 3 numeric
//! failure (survival underflow).

use std::fmt::Write as _;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use kaonsim::eraser::{
    analytic_reference, compare_with_reference, run_setup_sharded, CellComparison,
    CollapseOrdering, EraserConfig, Setup, SetupReference, SortedFrequencies,
    EQUIVALENCE_P_THRESHOLD,
};
use kaonsim::states::{
    PhysParams, DEFAULT_DELTA_M, DEFAULT_GAMMA_L, DELTA_M_EV, HBAR_EV_S, TAU_L_SECONDS,
    TAU_S_SECONDS,
};
use kaonsim::stats::{chi_square_homogeneity, ChiSquareResult};
use kaonsim::{
    bell_check, duality_check_mixed, epsilon_from_delta, evolve, joint_probability,
    make_entangled_pair, strangeness_probabilities, CPWeights, KaonError, KaonState,
};

#[derive(Parser)]
#[command(
    name = "kaonsim",
    version,
    about = "Neutral-kaon oscillation, entangled pairs, and quantum-eraser Monte Carlo"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the built-in constants in simulation and laboratory units.
    Constants,
    /// Strangeness oscillation and survival curves (CSV).
    Oscillate(OscillateArgs),
    /// Joint strangeness probabilities of an entangled pair (JSON).
    Pair(PairArgs),
    /// Inequality test tied to the leptonic charge asymmetry (JSON).
    Bell(BellArgs),
    /// Which-width predictability vs fringe visibility curves (CSV).
    Complementarity(ComplementarityArgs),
    /// Monte Carlo quantum marking and erasing runs (JSON).
    Eraser(EraserArgs),
}

/// Physics knobs shared by the evolution-based subcommands. Gamma_S is the
/// unit of rate and stays fixed at 1.
#[derive(Args)]
struct PhysArgs {
    /// Oscillation frequency delta_m in Gamma_S units.
    #[arg(long, default_value_t = DEFAULT_DELTA_M)]
    delta_m: f64,
    /// Long-lived width Gamma_L in Gamma_S units.
    #[arg(long, default_value_t = DEFAULT_GAMMA_L)]
    gamma_l: f64,
    /// CP impurity, real part. Mutually exclusive with --delta.
    #[arg(long, conflicts_with = "delta", allow_negative_numbers = true)]
    epsilon_re: Option<f64>,
    /// CP impurity, imaginary part. Mutually exclusive with --delta.
    #[arg(long, conflicts_with = "delta", allow_negative_numbers = true)]
    epsilon_im: Option<f64>,
    /// Leptonic charge asymmetry; sets a real CP impurity.
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
}

impl PhysArgs {
    fn params(&self) -> Result<PhysParams, KaonError> {
        let epsilon = resolve_epsilon(self.epsilon_re, self.epsilon_im, self.delta)?;
        let params = PhysParams {
            delta_m: self.delta_m,
            gamma_s: 1.0,
            gamma_l: self.gamma_l,
            epsilon,
        };
        params.validate()?;
        Ok(params)
    }

    fn echo(&self, params: &PhysParams, meta: &mut Vec<(&'static str, Value)>) {
        meta.push(("delta_m", json!(params.delta_m)));
        meta.push(("gamma_l", json!(params.gamma_l)));
        meta.push(("epsilon_re", json!(params.epsilon.re)));
        meta.push(("epsilon_im", json!(params.epsilon.im)));
        if let Some(d) = self.delta {
            meta.push(("delta", json!(d)));
        }
    }
}

fn resolve_epsilon(
    re: Option<f64>,
    im: Option<f64>,
    delta: Option<f64>,
) -> Result<Complex64, KaonError> {
    match delta {
        Some(d) => epsilon_from_delta(d),
        None => Ok(Complex64::new(re.unwrap_or(0.0), im.unwrap_or(0.0))),
    }
}

#[derive(Args)]
struct OscillateArgs {
    #[command(flatten)]
    phys: PhysArgs,
    /// Largest time on the grid, in tau_S units.
    #[arg(long)]
    tmax: f64,
    /// Number of rows; the grid spans [0, tmax] inclusive.
    #[arg(long)]
    steps: usize,
}

#[derive(Args)]
struct PairArgs {
    #[command(flatten)]
    phys: PhysArgs,
    /// Left strangeness measurement time.
    #[arg(long)]
    tl: f64,
    /// Right strangeness measurement time.
    #[arg(long)]
    tr: f64,
}

#[derive(Args)]
struct BellArgs {
    /// CP impurity, real part. Mutually exclusive with --delta.
    #[arg(long, conflicts_with = "delta", allow_negative_numbers = true)]
    epsilon_re: Option<f64>,
    /// CP impurity, imaginary part. Mutually exclusive with --delta.
    #[arg(long, conflicts_with = "delta", allow_negative_numbers = true)]
    epsilon_im: Option<f64>,
    /// Leptonic charge asymmetry; sets a real CP impurity.
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Verdict tolerance on probability comparisons.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(Args)]
struct ComplementarityArgs {
    #[command(flatten)]
    phys: PhysArgs,
    /// Largest time on the grid, in tau_S units.
    #[arg(long)]
    tmax: f64,
    /// Number of rows; the grid spans [0, tmax] inclusive.
    #[arg(long)]
    steps: usize,
    /// Purity weight of the initial state, in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    mixing: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderingArg {
    LeftFirst,
    RightFirst,
}

impl From<OrderingArg> for CollapseOrdering {
    fn from(o: OrderingArg) -> CollapseOrdering {
        match o {
            OrderingArg::LeftFirst => CollapseOrdering::LeftFirst,
            OrderingArg::RightFirst => CollapseOrdering::RightFirst,
        }
    }
}

#[derive(Args)]
struct EraserArgs {
    /// Arrangement to run: a, b, c or d.
    #[arg(long, required_unless_present = "compare", conflicts_with = "compare")]
    setup: Option<Setup>,
    /// Run several arrangements and test their matched joint tables for
    /// homogeneity (comma separated, at least two).
    #[arg(long, value_delimiter = ',')]
    compare: Option<Vec<Setup>>,
    /// Number of pair events per run.
    #[arg(long, default_value_t = 100_000)]
    events: u64,
    /// Master seed; per-event substreams derive from it.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Left strangeness readout time.
    #[arg(long, default_value_t = 1.0)]
    tl: f64,
    /// Right absorber time.
    #[arg(long, default_value_t = 1.0)]
    tr0: f64,
    /// Fraction of passive decays whose mode reveals strangeness.
    #[arg(long, default_value_t = 0.5)]
    branching: f64,
    /// Short/long classification threshold for time-classified decays.
    #[arg(long, default_value_t = 4.8)]
    cut: f64,
    /// Probability the right absorber is withdrawn (setup a only).
    #[arg(long, default_value_t = 0.5)]
    mark_fraction: f64,
    /// Half width of the matched time-separation window.
    #[arg(long, default_value_t = 0.15)]
    window: f64,
    /// Worker shards. Tallies are identical for every shard count.
    #[arg(long, default_value_t = 1)]
    shards: usize,
    /// Collapse ordering; a verification knob, results must not depend on it.
    #[arg(long, value_enum, default_value_t = OrderingArg::LeftFirst)]
    ordering: OrderingArg,
    /// Oscillation frequency delta_m in Gamma_S units.
    #[arg(long, default_value_t = DEFAULT_DELTA_M)]
    delta_m: f64,
    /// Long-lived width Gamma_L in Gamma_S units.
    #[arg(long, default_value_t = DEFAULT_GAMMA_L)]
    gamma_l: f64,
}

#[derive(Serialize)]
struct Metadata {
    tool_version: &'static str,
    subcommand: &'static str,
    parameters: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    timestamp: u64,
}

impl Metadata {
    fn new(subcommand: &'static str, params: Vec<(&'static str, Value)>, seed: Option<u64>) -> Self {
        let parameters = Value::Object(
            params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        );
        Metadata {
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand,
            parameters,
            seed,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// `# key = value` comment lines for the CSV documents. Floats are
    /// printed with 17 significant digits so they parse back bit-identically.
    fn csv_comments(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# tool_version = {}", self.tool_version);
        let _ = writeln!(out, "# subcommand = {}", self.subcommand);
        if let Value::Object(map) = &self.parameters {
            for (k, v) in map {
                let _ = writeln!(out, "# {k} = {}", csv_value(v));
            }
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "# seed = {seed}");
        }
        let _ = writeln!(out, "# timestamp = {}", self.timestamp);
        out
    }
}

fn csv_value(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => num(n.as_f64().unwrap()),
        other => other.to_string().trim_matches('"').to_string(),
    }
}

/// Lossless decimal form of a double: 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize)]
struct Envelope<T: Serialize> {
    metadata: Metadata,
    result: T,
}

fn json_doc<T: Serialize>(metadata: Metadata, result: T) -> Result<String, KaonError> {
    let envelope = Envelope { metadata, result };
    let body = serde_json::to_string_pretty(&envelope)
        .map_err(|e| KaonError::InvalidArgument(format!("serialization failed: {e}")))?;
    Ok(body + "\n")
}

fn time_grid(tmax: f64, steps: usize) -> Result<Vec<f64>, KaonError> {
    if !tmax.is_finite() || tmax <= 0.0 {
        return Err(KaonError::InvalidArgument(format!(
            "--tmax must be a positive finite time, got {tmax}"
        )));
    }
    if steps < 2 {
        return Err(KaonError::InvalidArgument(format!(
            "--steps must be at least 2, got {steps}"
        )));
    }
    Ok((0..steps)
        .map(|i| tmax * i as f64 / (steps - 1) as f64)
        .collect())
}

fn cmd_constants() -> Result<String, KaonError> {
    let p = PhysParams::default();
    let metadata = Metadata::new("constants", Vec::new(), None);
    let result = json!({
        "simulation_units": {
            "tau_s": 1.0,
            "gamma_s": p.gamma_s,
            "gamma_l": p.gamma_l,
            "tau_l": 1.0 / p.gamma_l,
            "tau_l_over_tau_s": 1.0 / p.gamma_l,
            "delta_m": p.delta_m,
            "delta_gamma": p.delta_gamma(),
            "epsilon_re": p.epsilon.re,
            "epsilon_im": p.epsilon.im,
        },
        "laboratory_units": {
            "tau_s_seconds": TAU_S_SECONDS,
            "tau_l_seconds": TAU_L_SECONDS,
            "delta_m_ev": DELTA_M_EV,
            "hbar_ev_seconds": HBAR_EV_S,
        },
        "conversions": {
            "time_unit_seconds": TAU_S_SECONDS,
            "rate_unit_per_second": 1.0 / TAU_S_SECONDS,
            "delta_m_from_ev": DELTA_M_EV * TAU_S_SECONDS / HBAR_EV_S,
        },
    });
    json_doc(metadata, result)
}

fn cmd_oscillate(args: &OscillateArgs) -> Result<String, KaonError> {
    let params = args.phys.params()?;
    let grid = time_grid(args.tmax, args.steps)?;

    let mut meta = Vec::new();
    args.phys.echo(&params, &mut meta);
    meta.push(("tmax", json!(args.tmax)));
    meta.push(("steps", json!(args.steps)));
    let metadata = Metadata::new("oscillate", meta, None);

    let mut out = metadata.csv_comments();
    out.push_str("t,p_k0,p_k0bar,survival,p_k0_conditional,p_k0bar_conditional\n");
    for t in grid {
        let (p_k0, p_k0bar) = strangeness_probabilities(&params, t)?;
        let survival = evolve(&KaonState::k0(), &params, t)?.norm_sqr();
        if survival < 1e-300 {
            return Err(KaonError::Underflow(format!(
                "survival probability underflowed at t = {t}; shrink --tmax"
            )));
        }
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            num(t),
            num(p_k0),
            num(p_k0bar),
            num(survival),
            num(p_k0 / survival),
            num(p_k0bar / survival),
        );
    }
    Ok(out)
}

fn cmd_pair(args: &PairArgs) -> Result<String, KaonError> {
    let params = args.phys.params()?;
    for (name, t) in [("--tl", args.tl), ("--tr", args.tr)] {
        if !t.is_finite() || t < 0.0 {
            return Err(KaonError::InvalidArgument(format!(
                "{name} must be a finite time >= 0, got {t}"
            )));
        }
    }

    let pair = make_entangled_pair(&params.weights())?;
    let outcomes = [KaonState::k0(), KaonState::k0bar()];
    let mut joint = [0.0; 4];
    for l in 0..2 {
        for r in 0..2 {
            joint[2 * l + r] =
                joint_probability(&pair, &outcomes[l], &outcomes[r], &params, args.tl, args.tr)?;
        }
    }
    let both_survive: f64 = joint.iter().sum();
    if both_survive < 1e-300 {
        return Err(KaonError::Underflow(
            "both-survive probability underflowed; shrink --tl/--tr".into(),
        ));
    }
    let conditional = joint.map(|p| p / both_survive);

    let mut meta = Vec::new();
    args.phys.echo(&params, &mut meta);
    meta.push(("tl", json!(args.tl)));
    meta.push(("tr", json!(args.tr)));
    let metadata = Metadata::new("pair", meta, None);

    let cell_map = |cells: &[f64; 4]| {
        json!({
            "k0_k0": cells[0],
            "k0_k0bar": cells[1],
            "k0bar_k0": cells[2],
            "k0bar_k0bar": cells[3],
        })
    };
    let result = json!({
        "t_left": args.tl,
        "t_right": args.tr,
        "separation": args.tl - args.tr,
        "joint_strangeness": cell_map(&joint),
        "both_survive": both_survive,
        "conditional_on_survival": cell_map(&conditional),
    });
    json_doc(metadata, result)
}

fn cmd_bell(args: &BellArgs) -> Result<String, KaonError> {
    let epsilon = resolve_epsilon(args.epsilon_re, args.epsilon_im, args.delta)?;
    let report = bell_check(&CPWeights::from_epsilon(epsilon), args.tol)?;

    let mut meta = vec![
        ("epsilon_re", json!(epsilon.re)),
        ("epsilon_im", json!(epsilon.im)),
    ];
    if let Some(d) = args.delta {
        meta.push(("delta", json!(d)));
    }
    meta.push(("tol", json!(args.tol)));
    let metadata = Metadata::new("bell", meta, None);
    json_doc(metadata, report)
}

fn cmd_complementarity(args: &ComplementarityArgs) -> Result<String, KaonError> {
    let params = args.phys.params()?;
    let grid = time_grid(args.tmax, args.steps)?;
    let points = duality_check_mixed(&params, &grid, args.mixing)?;

    let mut meta = Vec::new();
    args.phys.echo(&params, &mut meta);
    meta.push(("tmax", json!(args.tmax)));
    meta.push(("steps", json!(args.steps)));
    meta.push(("mixing", json!(args.mixing)));
    let metadata = Metadata::new("complementarity", meta, None);

    let mut out = metadata.csv_comments();
    out.push_str("t,visibility,predictability,phase\n");
    for pt in points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            num(pt.t),
            num(pt.visibility),
            num(pt.predictability),
            num(pt.phase),
        );
    }
    Ok(out)
}

/// One arrangement's run: tallies, closed-form reference, per-cell scores.
#[derive(Serialize)]
struct EraserRun {
    frequencies: SortedFrequencies,
    reference: SetupReference,
    cells: Vec<CellComparison>,
}

#[derive(Serialize)]
struct Equivalence {
    chi_square: ChiSquareResult,
    p_threshold: f64,
    homogeneous: bool,
}

fn eraser_config(args: &EraserArgs, setup: Setup) -> EraserConfig {
    let mut cfg = EraserConfig::new(setup);
    cfg.t_l = args.tl;
    cfg.t_r0 = args.tr0;
    cfg.branching_semileptonic = args.branching;
    cfg.lifetime_cut = args.cut;
    cfg.mark_fraction = args.mark_fraction;
    cfg.dt_window = args.window;
    cfg.ordering = args.ordering.into();
    cfg.n_events = args.events;
    cfg.seed = args.seed;
    cfg
}

fn eraser_run(args: &EraserArgs, params: &PhysParams, setup: Setup) -> Result<EraserRun, KaonError> {
    let cfg = eraser_config(args, setup);
    let frequencies = run_setup_sharded(&cfg, params, args.shards)?;
    let reference = analytic_reference(&cfg, params)?;
    let cells = compare_with_reference(&frequencies, &reference);
    Ok(EraserRun { frequencies, reference, cells })
}

fn cmd_eraser(args: &EraserArgs) -> Result<String, KaonError> {
    let params = PhysParams {
        delta_m: args.delta_m,
        gamma_s: 1.0,
        gamma_l: args.gamma_l,
        epsilon: Complex64::new(0.0, 0.0),
    };
    if args.shards == 0 {
        return Err(KaonError::InvalidArgument("--shards must be at least 1".into()));
    }

    let mut meta = vec![
        ("events", json!(args.events)),
        ("tl", json!(args.tl)),
        ("tr0", json!(args.tr0)),
        ("branching", json!(args.branching)),
        ("cut", json!(args.cut)),
        ("mark_fraction", json!(args.mark_fraction)),
        ("window", json!(args.window)),
        ("shards", json!(args.shards)),
        ("ordering", json!(match args.ordering {
            OrderingArg::LeftFirst => "left-first",
            OrderingArg::RightFirst => "right-first",
        })),
        ("delta_m", json!(args.delta_m)),
        ("gamma_l", json!(args.gamma_l)),
    ];

    match (&args.compare, args.setup) {
        (Some(setups), _) => {
            if setups.len() < 2 {
                return Err(KaonError::InvalidArgument(
                    "--compare needs at least two setups".into(),
                ));
            }
            meta.push((
                "compare",
                json!(setups.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")),
            ));
            let metadata = Metadata::new("eraser", meta, Some(args.seed));

            let runs = setups
                .iter()
                .map(|&setup| eraser_run(args, &params, setup))
                .collect::<Result<Vec<_>, _>>()?;
            let rows: Vec<Vec<u64>> = runs
                .iter()
                .map(|r| r.frequencies.ss_matched.counts.to_vec())
                .collect();
            let chi_square = chi_square_homogeneity(&rows)?;
            let equivalence = Equivalence {
                homogeneous: chi_square.p_value > EQUIVALENCE_P_THRESHOLD,
                p_threshold: EQUIVALENCE_P_THRESHOLD,
                chi_square,
            };
            json_doc(metadata, json!({ "runs": runs, "equivalence": equivalence }))
        }
        (None, Some(setup)) => {
            meta.push(("setup", json!(setup.to_string())));
            let metadata = Metadata::new("eraser", meta, Some(args.seed));
            let run = eraser_run(args, &params, setup)?;
            json_doc(metadata, run)
        }
        (None, None) => unreachable!("clap enforces --setup unless --compare is present"),
    }
}

fn run(command: &Command) -> Result<String, KaonError> {
    match command {
        Command::Constants => cmd_constants(),
        Command::Oscillate(args) => cmd_oscillate(args),
        Command::Pair(args) => cmd_pair(args),
        Command::Bell(args) => cmd_bell(args),
        Command::Complementarity(args) => cmd_complementarity(args),
        Command::Eraser(args) => cmd_eraser(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(doc) => {
            print!("{doc}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                KaonError::Underflow(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
