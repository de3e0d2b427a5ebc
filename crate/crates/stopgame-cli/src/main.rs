use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use stopgame::conjugate::grid_convex_conjugate_q;
use stopgame::examples::*;
use stopgame::io::{dual_csv, read_grid, read_text, table_csv, write_grid, write_text, zpath_csv};
use stopgame::model::{GameSpec, SimplexPoint};
use stopgame::montecarlo::{estimate_payoff, exploit_gap, replication_rng, PureResponseFamily};
use stopgame::pdmp::{default_horizon, simulate_z, Characteristics};
use stopgame::residual::residual_check;
use stopgame::solver::solve;
use stopgame::strategy::{MixedStoppingStrategy, StrategyDescriptor, StrategySource};
use stopgame::Error;

#[derive(Parser)]
#[command(
    name = "stopgame",
    version,
    about = "Stopping games with asymmetric information on finite Markov chains"
)]
struct Cli {
    /// Worker threads (falls back to STOPGAME_THREADS, then the machine's parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the value function on a grid; writes CSV plus a JSON sidecar
    Solve {
        #[arg(long)]
        game: PathBuf,
        /// Points per simplex edge, e.g. 201x201
        #[arg(long, default_value = "101x101")]
        grid: String,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convex conjugate in q of a solved 2x2 grid: CSV p,y,value,zone
    Dual {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        y_min: f64,
        #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
        y_max: f64,
        #[arg(long, default_value_t = 81)]
        y_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-form surfaces and curves of the two worked examples
    #[command(subcommand)]
    Example(ExampleCmd),
    /// Write a strategy descriptor (JSON)
    #[command(subcommand)]
    Strategy(StrategyCmd),
    /// Estimate the payoff of a strategy pair
    Simulate {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        strategy: PathBuf,
        /// Strategy of the uninformed player (default: never stop)
        #[arg(long)]
        opponent: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write one sampled Z path (example strategies only)
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    #[command(subcommand)]
    Verify(VerifyCmd),
}

#[derive(Args)]
struct E2Flags {
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 0.1)]
    r: f64,
    /// h(0),h(1)
    #[arg(long, default_value = "0.5,2")]
    h: String,
    /// f(0),f(1)
    #[arg(long, default_value = "1,3")]
    f: String,
}

impl E2Flags {
    fn params(&self) -> Result<Example2Params, Error> {
        Example2Params::new(self.a, self.b, self.r, pair(&self.h, "h")?, pair(&self.f, "f")?)
    }
}

#[derive(Subcommand)]
enum ExampleCmd {
    /// Value surface p,q,value of the first example
    E1 {
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the game JSON at this prior
        #[arg(long)]
        game_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 0.5)]
        q: f64,
    },
    /// Dual surface p,y,value,zone of the first example
    E1Dual {
        #[arg(long, default_value_t = 101)]
        p_points: usize,
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        y_min: f64,
        #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
        y_max: f64,
        #[arg(long, default_value_t = 81)]
        y_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Value curve p,value of the second example
    E2 {
        #[command(flatten)]
        params: E2Flags,
        #[arg(long, default_value_t = 401)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        game_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
    },
    /// Value curve of the second example when nobody observes the chain
    E2Blind {
        #[command(flatten)]
        params: E2Flags,
        #[arg(long, default_value_t = 401)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum StrategyCmd {
    /// Optimal strategy of the informed player in the first example
    E1 {
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimal strategy of the informed player in the second example
    E2 {
        #[command(flatten)]
        params: E2Flags,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stop at time 0
    StopNow {
        #[arg(long)]
        out: PathBuf,
    },
    Never {
        #[arg(long)]
        out: PathBuf,
    },
    /// Deterministic time per initial state ("inf" = never)
    Times {
        #[arg(long, value_delimiter = ',')]
        times: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Best response of the uninformed player against a strategy; exit 2 if significantly exploited
    Optimality {
        #[arg(long)]
        game: PathBuf,
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Log-spaced response times per initial state
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Value to compare with (default: the descriptor's claim)
        #[arg(long, allow_hyphen_values = true)]
        claim: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sub/supersolution residuals of a grid at its extreme points
    Residual {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        /// Exit 2 when the worst violation exceeds this
        #[arg(long)]
        max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_input() { 1 } else { 2 },
            msg: e.to_string(),
        }
    }
}

fn input(msg: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        msg: msg.into(),
    }
}

type Res<T> = Result<T, Failure>;

fn pair(s: &str, name: &str) -> Result<(f64, f64), Error> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || Error::input(format!("{name}: expected two comma-separated numbers, got {s:?}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let a = parts[0].trim().parse().map_err(|_| bad())?;
    let b = parts[1].trim().parse().map_err(|_| bad())?;
    Ok((a, b))
}

/// `AxB` points per edge → resolutions `(A−1, B−1)`.
fn parse_grid(s: &str) -> Res<(usize, usize)> {
    let bad = || input(format!("grid: expected AxB with A, B ≥ 2, got {s:?}"));
    let (a, b) = s.split_once('x').ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a < 2 || b < 2 {
        return Err(bad());
    }
    Ok((a - 1, b - 1))
}

fn need_file(path: &Path, what: &str) -> Res<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(input(format!("{what}: no such file {}", path.display())))
    }
}

fn need_out(path: &Path) -> Res<()> {
    let parent = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    if parent.is_dir() {
        Ok(())
    } else {
        Err(input(format!("output directory {} does not exist", parent.display())))
    }
}

fn lattice(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn emit(text: &str, out: Option<&Path>) -> Res<()> {
    match out {
        Some(p) => Ok(write_text(p, text)?),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load_game(path: &Path) -> Res<GameSpec> {
    Ok(GameSpec::from_json(&read_text(path)?)?)
}

fn load_strategy(path: &Path) -> Res<(StrategyDescriptor, MixedStoppingStrategy)> {
    let d = StrategyDescriptor::from_json(&read_text(path)?)?;
    let s = d.build()?;
    Ok((d, s))
}

/// The prior a strategy was built for must be the game's prior.
fn check_prior(d: &StrategyDescriptor, spec: &GameSpec) -> Res<()> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let p = spec.p0.weights()[0];
    match &d.source {
        StrategySource::Example1 { p: sp, q: sq, r } => {
            if spec.k_size() != 2 || spec.l_size() != 2 {
                return Err(input("strategy: built for a 2x2 game"));
            }
            if !close(*sp, p) || !close(*sq, spec.q0.weights()[0]) || !close(*r, spec.r) {
                return Err(input(format!(
                    "strategy: built for p={sp}, q={sq}, r={r}, which differs from the game"
                )));
            }
        }
        StrategySource::Example2 { params, p: sp } => {
            if spec.k_size() != 2 || spec.l_size() != 1 {
                return Err(input("strategy: built for a game with K=2, L=1"));
            }
            if !close(*sp, p) || !close(params.r, spec.r) {
                return Err(input(format!(
                    "strategy: built for p={sp}, r={}, which differs from the game",
                    params.r
                )));
            }
        }
        StrategySource::Times { times } if times.len() != spec.k_size() => {
            return Err(input(format!(
                "strategy: {} times for {} states",
                times.len(),
                spec.k_size()
            )));
        }
        _ => {}
    }
    Ok(())
}

fn run(cli: Cli) -> Res<()> {
    match cli.command {
        Command::Solve {
            game,
            grid,
            tol,
            max_iter,
            out,
        } => {
            need_file(&game, "game")?;
            need_out(&out)?;
            let (n_p, n_q) = parse_grid(&grid)?;
            let spec = load_game(&game)?;
            let g = solve(&spec, n_p, n_q, tol, max_iter)?;
            write_grid(&g, &out)?;
            eprintln!(
                "converged after {} iterations (change {:.3e})",
                g.meta.iterations, g.meta.residual
            );
        }
        Command::Dual {
            grid,
            y_min,
            y_max,
            y_points,
            out,
        } => {
            need_file(&grid, "grid")?;
            need_out(&out)?;
            let g = read_grid(&grid)?;
            if g.spec.k_size() != 2 || g.spec.l_size() != 2 {
                return Err(input("grid: the dual surface export needs a 2x2 game"));
            }
            let mut rows = Vec::new();
            for i in 0..g.p_grid.len() {
                let p = g.p_grid.point(i);
                let sp = SimplexPoint::new(p.clone())?;
                for y in lattice(y_min, y_max, y_points) {
                    rows.push((p[0], y, grid_convex_conjugate_q(&g, &sp, &[y, 0.0])?, None));
                }
            }
            write_text(&out, &dual_csv(&rows))?;
        }
        Command::Example(cmd) => example(cmd)?,
        Command::Strategy(cmd) => strategy(cmd)?,
        Command::Simulate {
            game,
            strategy,
            opponent,
            n,
            seed,
            trace,
            out,
        } => {
            need_file(&game, "game")?;
            need_file(&strategy, "strategy")?;
            if let Some(o) = &opponent {
                need_file(o, "opponent")?;
            }
            for p in trace.iter().chain(out.iter()) {
                need_out(p)?;
            }
            let spec = load_game(&game)?;
            let (d, s1) = load_strategy(&strategy)?;
            check_prior(&d, &spec)?;
            let s2 = match &opponent {
                Some(o) => load_strategy(o)?.1,
                None => MixedStoppingStrategy::never(),
            };
            let est = estimate_payoff(&spec, &s1, &s2, n, seed)?;
            if let Some(t) = &trace {
                write_text(t, &trace_csv(&d, seed)?)?;
            }
            emit(
                &serde_json::to_string_pretty(&est).expect("estimate serializes"),
                out.as_deref(),
            )?;
        }
        Command::Verify(VerifyCmd::Optimality {
            game,
            strategy,
            n,
            seed,
            points,
            claim,
            out,
        }) => {
            need_file(&game, "game")?;
            need_file(&strategy, "strategy")?;
            if let Some(o) = &out {
                need_out(o)?;
            }
            let spec = load_game(&game)?;
            let (d, s1) = load_strategy(&strategy)?;
            check_prior(&d, &spec)?;
            let claim = claim
                .or(d.value_claim)
                .ok_or_else(|| input("strategy: no value_claim in the descriptor; pass --claim"))?;
            let fam = PureResponseFamily::log_grid(&spec, points);
            let rep = exploit_gap(&spec, &s1, claim, &fam, n, seed)?;
            let mut report = serde_json::to_value(&rep).expect("report serializes");
            if let Some(note) = &d.note {
                report["note"] = json!(note);
            }
            emit(
                &serde_json::to_string_pretty(&report).expect("report serializes"),
                out.as_deref(),
            )?;
            if rep.exploited(0.05) {
                return Err(Failure {
                    code: 2,
                    msg: format!(
                        "strategy is exploited: gap {:.4} with standard error {:.4}",
                        rep.gap, rep.std_error
                    ),
                });
            }
        }
        Command::Verify(VerifyCmd::Residual { grid, eps, max, out }) => {
            need_file(&grid, "grid")?;
            if let Some(o) = &out {
                need_out(o)?;
            }
            let g = read_grid(&grid)?;
            let rep = residual_check(&g, eps)?;
            let node =
                |at: Option<(usize, usize)>| at.map(|(i, j)| json!({ "p": g.p_grid.point(i), "q": g.q_grid.point(j) }));
            let report = json!({
                "eps_extreme": rep.eps_extreme,
                "worst_sub_violation": rep.worst_sub_violation,
                "worst_sub_at": node(rep.worst_sub_at),
                "worst_super_violation": rep.worst_super_violation,
                "worst_super_at": node(rep.worst_super_at),
                "p_extreme_nodes": rep.records.iter().filter(|r| r.is_p_extreme).count(),
                "q_extreme_nodes": rep.records.iter().filter(|r| r.is_q_extreme).count(),
            });
            emit(
                &serde_json::to_string_pretty(&report).expect("report serializes"),
                out.as_deref(),
            )?;
            if let Some(m) = max {
                if rep.worst_violation() > m {
                    return Err(Failure {
                        code: 2,
                        msg: format!("worst violation {:.3e} exceeds {m}", rep.worst_violation()),
                    });
                }
            }
        }
    }
    Ok(())
}

fn example(cmd: ExampleCmd) -> Res<()> {
    match cmd {
        ExampleCmd::E1 {
            r,
            points,
            out,
            game_out,
            p,
            q,
        } => {
            need_out(&out)?;
            if let Some(g) = &game_out {
                need_out(g)?;
            }
            let spec = Example1Params::new(r)?.spec(p, q)?;
            let rows: Vec<Vec<f64>> = lattice(0.0, 1.0, points)
                .iter()
                .flat_map(|&p| {
                    lattice(0.0, 1.0, points)
                        .into_iter()
                        .map(move |q| vec![p, q, e1_value(p, q)])
                })
                .collect();
            write_text(&out, &table_csv(&["p", "q", "value"], &rows))?;
            if let Some(g) = &game_out {
                write_text(g, &spec.to_json())?;
            }
        }
        ExampleCmd::E1Dual {
            p_points,
            y_min,
            y_max,
            y_points,
            out,
        } => {
            need_out(&out)?;
            let mut rows = Vec::new();
            for p in lattice(0.0, 1.0, p_points) {
                for y in lattice(y_min, y_max, y_points) {
                    let (v, zone) = e1_dual(p, y);
                    rows.push((p, y, v, Some(zone.label())));
                }
            }
            write_text(&out, &dual_csv(&rows))?;
        }
        ExampleCmd::E2 {
            params,
            points,
            out,
            game_out,
            p,
        } => {
            need_out(&out)?;
            if let Some(g) = &game_out {
                need_out(g)?;
            }
            let params = params.params()?;
            let v = params.value_fn()?;
            let spec = params.spec(p)?;
            let rows: Vec<Vec<f64>> = lattice(0.0, 1.0, points).into_iter().map(|p| vec![p, v(p)]).collect();
            write_text(&out, &table_csv(&["p", "value"], &rows))?;
            if let Some(g) = &game_out {
                write_text(g, &spec.to_json())?;
            }
            if let Ok(p0) = params.p0() {
                eprintln!("p0 = {p0:.12}");
            }
        }
        ExampleCmd::E2Blind { params, points, out } => {
            need_out(&out)?;
            let b = params.params()?.blind()?;
            let rows: Vec<Vec<f64>> = lattice(0.0, 1.0, points)
                .into_iter()
                .map(|p| vec![p, b.value(p)])
                .collect();
            write_text(&out, &table_csv(&["p", "value"], &rows))?;
            eprintln!("p1 = {:.12}, p2 = {:.12}", b.p1, b.p2);
        }
    }
    Ok(())
}

fn strategy(cmd: StrategyCmd) -> Res<()> {
    let (s, out) = match cmd {
        StrategyCmd::E1 { r, p, q, out } => (e1_optimal_mu(r, p, q)?, out),
        StrategyCmd::E2 { params, p, out } => (e2_optimal_mu(&params.params()?, p)?, out),
        StrategyCmd::StopNow { out } => (MixedStoppingStrategy::stop_now(), out),
        StrategyCmd::Never { out } => (MixedStoppingStrategy::never(), out),
        StrategyCmd::Times { times, out } => {
            let parsed = times
                .iter()
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| input(format!("times: not a number: {t:?}")))
                })
                .collect::<Res<Vec<f64>>>()?;
            (MixedStoppingStrategy::pure_times(parsed)?, out)
        }
    };
    need_out(&out)?;
    write_text(&out, &s.descriptor.to_json())?;
    if let Some(note) = &s.descriptor.note {
        eprintln!("note: {note}");
    }
    Ok(())
}

/// One Z path from the strategy's starting point, sampled on 201 times.
fn trace_csv(d: &StrategyDescriptor, seed: u64) -> Res<String> {
    let z =
        d.z.clone()
            .ok_or_else(|| input("trace: the strategy descriptor has no starting point z"))?;
    let mut rng = replication_rng(seed, u64::MAX);
    fn sample<C: Characteristics>(
        ch: &C,
        z: &[f64],
        prime: Option<&Vec<f64>>,
        r: f64,
        rng: &mut ChaCha8Rng,
    ) -> Res<String> {
        let start = if ch.in_e(z, 1e-9) {
            z.to_vec()
        } else {
            prime.cloned().unwrap_or_else(|| z.to_vec())
        };
        let horizon = default_horizon(r).min(20.0);
        let path = simulate_z(ch, &start, horizon, rng)?;
        let times = lattice(0.0, horizon, 201);
        Ok(zpath_csv(ch, &path, &times))
    }
    match &d.source {
        StrategySource::Example1 { r, .. } => sample(&e1_characteristics(*r)?, &z, d.z_prime.as_ref(), *r, &mut rng),
        StrategySource::Example2 { params, .. } => {
            sample(&e2_characteristics(params)?, &z, d.z_prime.as_ref(), params.r, &mut rng)
        }
        _ => Err(input("trace: only example strategies carry characteristics")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.threads.or_else(|| {
        std::env::var("STOPGAME_THREADS")
            .ok()
            .and_then(|s| s.trim().parse().ok())
    });
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
