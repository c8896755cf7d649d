//! Command-line driver: trajectory generation, single-law optimization,
//! full bilevel search runs, gradient checking, and plot-data export.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use lawseek::config::{apply_overrides, load_config, BackendConfig, RunConfig, API_KEY_ENV};
use lawseek::dsl::{fixtures, generate::random_program, parse_law};
use lawseek::gradcheck::{check_law, CheckOutcome, DEFAULT_RTOL};
use lawseek::mpm::{simulate, ThetaPair};
use lawseek::opt::{optimize, OptConfig};
use lawseek::proposer::{HttpChatBackend, ProposerBackend, ScriptedBackend};
use lawseek::runlog::{emit_plot_data, RunLog};
use lawseek::search::run_search;
use lawseek::sgtr::save_trajectory;
use lawseek::tasks::{generate_ground_truth, make_task, TaskId};

#[derive(Parser)]
#[command(name = "lawseek", about = "Bilevel search for symbolic constitutive laws", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a task's ground-truth law and write the trajectory.
    GenTruth {
        /// Task letter: a, b, c, d, or x.
        task: String,
        /// Output path (default: truth_<task>.sgtr).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one law's parameters against a task's ground truth.
    Optimize {
        /// Task letter: a, b, c, d, or x.
        task: String,
        /// Path to a law program in the DSL.
        law_file: PathBuf,
        /// Adam steps.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Learning rate.
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
    },
    /// Run the full bilevel search described by a config file.
    Search {
        config: PathBuf,
    },
    /// Verify law gradients against central finite differences.
    Gradcheck {
        /// Check the bundled reference laws.
        #[arg(long)]
        fixtures: bool,
        /// Additionally check N randomly generated programs.
        #[arg(long, value_name = "N")]
        random: Option<usize>,
        /// Evaluation dimension (2 or 3).
        #[arg(long, default_value_t = 3)]
        dim: usize,
    },
    /// Re-emit loss-trend and validity CSVs from a finished run directory.
    Plot {
        run_dir: PathBuf,
    },
}

fn task_from_arg(arg: &str) -> Result<TaskId> {
    let mut chars = arg.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => TaskId::from_letter(c).ok_or_else(|| anyhow!("unknown task `{arg}` (expected a, b, c, d, or x)")),
        _ => bail!("unknown task `{arg}` (expected a, b, c, d, or x)"),
    }
}

fn cmd_gen_truth(task_arg: &str, out: Option<PathBuf>) -> Result<()> {
    let id = task_from_arg(task_arg)?;
    let task = make_task(id);
    let trajectory = generate_ground_truth(&task)?;
    let path = out.unwrap_or_else(|| PathBuf::from(format!("truth_{id}.sgtr")));
    save_trajectory(&path, &trajectory)?;
    println!(
        "task {id}: wrote {} frames x {} particles (dim {}) to {}",
        trajectory.n_frames(),
        trajectory.n_particles,
        trajectory.dim,
        path.display()
    );
    Ok(())
}

fn cmd_optimize(task_arg: &str, law_file: &Path, steps: usize, lr: f64) -> Result<()> {
    let id = task_from_arg(task_arg)?;
    let task = make_task(id);
    let source = std::fs::read_to_string(law_file)
        .with_context(|| format!("reading {}", law_file.display()))?;
    let program = parse_law(&source).map_err(|e| anyhow!("{}: {e}", law_file.display()))?;
    let laws = task
        .assemble(program)
        .ok_or_else(|| anyhow!("law kind does not fit task {id} (expected {})", task.kind.keyword()))?;

    let initial = task.initial_state();
    let target = generate_ground_truth(&task)?;
    let opt_cfg = OptConfig { n_steps: steps, learning_rate: lr, ..OptConfig::default() };
    let result = optimize(&laws, task.free_slot(), &task.sim, &opt_cfg, &initial, &target);

    if !result.validity.is_valid() {
        bail!("optimization invalid: the law failed to simulate");
    }
    println!("final_loss = {:.6e} (best step {})", result.final_loss, result.best_step);
    println!("recovery_threshold = {:.6e}", task.recovery_threshold);
    for (p, v) in laws_free_params(&laws, &task).iter().zip(&result.theta_hat) {
        println!("{} = {:.6} (started at {:.6})", p.name, v, p.init);
    }
    println!("loss curve:");
    for (step, loss) in &result.loss_curve {
        println!("  step {step}: {loss:.6e}");
    }
    Ok(())
}

fn laws_free_params<'a>(
    laws: &'a lawseek::mpm::LawPair,
    task: &lawseek::tasks::TaskSpec,
) -> &'a [lawseek::dsl::ParamDecl] {
    match task.free_slot() {
        lawseek::opt::FreeSlot::Elastic => &laws.elastic.params,
        lawseek::opt::FreeSlot::Plastic => &laws.plastic.as_ref().unwrap().params,
    }
}

fn load_scripted_queue(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut queue = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let response: String = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: expected a JSON string per line", path.display(), i + 1))?;
        queue.push(response);
    }
    Ok(queue)
}

fn cmd_search(config_path: &Path) -> Result<()> {
    let cfg: RunConfig = load_config(config_path)?;
    let mut task = make_task(cfg.task);
    task.sim = apply_overrides(task.sim, &cfg.sim);
    task.sim.validate().map_err(|e| anyhow!("sim config: {e}"))?;

    let backend = match &cfg.backend {
        BackendConfig::Scripted { script } => {
            ProposerBackend::Scripted(ScriptedBackend::new(load_scripted_queue(script)?))
        }
        BackendConfig::Http { endpoint, model } => {
            let key = std::env::var(API_KEY_ENV).map_err(|_| anyhow!("{API_KEY_ENV} is not set"))?;
            ProposerBackend::HttpChat(HttpChatBackend::new(endpoint, model, key))
        }
    };

    let outcome = run_search(&task, &cfg.search, &backend, &cfg.opt)?;
    std::fs::create_dir_all(&cfg.outdir)?;
    outcome.log.write_to(&cfg.outdir.join("run.log"))?;
    emit_plot_data(&outcome.log, &cfg.outdir)?;
    std::fs::write(cfg.outdir.join("best_law.dsl"), &outcome.best.program.source_text)?;

    // Persist the target and the best candidate's trajectory.
    let target = generate_ground_truth(&task)?;
    save_trajectory(&cfg.outdir.join("target.sgtr"), &target)?;
    let laws = task.assemble(outcome.best.program.clone()).expect("best candidate fits the task");
    let mut theta = ThetaPair::defaults_of(&laws);
    match task.free_slot() {
        lawseek::opt::FreeSlot::Elastic => theta.elastic = outcome.best.opt.theta_hat.clone(),
        lawseek::opt::FreeSlot::Plastic => theta.plastic = outcome.best.opt.theta_hat.clone(),
    }
    let (best_traj, _, _) = simulate(&task.sim, &laws, &theta, &task.initial_state());
    save_trajectory(&cfg.outdir.join("best_trajectory.sgtr"), &best_traj)?;

    println!(
        "best candidate: id {} (iteration {}, {:?}) loss {:.6e}",
        outcome.best.id,
        outcome.best.iteration,
        outcome.best.group,
        outcome.best.opt.final_loss
    );
    println!("artifacts in {}", cfg.outdir.display());
    Ok(())
}

fn cmd_gradcheck(check_fixtures: bool, random: Option<usize>, dim: usize) -> Result<()> {
    if dim != 2 && dim != 3 {
        bail!("--dim must be 2 or 3");
    }
    // With no selection flags, check everything (fixtures + 20 random).
    let (check_fixtures, n_random) = if !check_fixtures && random.is_none() {
        (true, 20)
    } else {
        (check_fixtures, random.unwrap_or(0))
    };

    let mut failures = 0usize;
    let mut run = |name: String, law: &lawseek::dsl::LawProgram, seed: u64| {
        match check_law(law, dim, 10, seed, DEFAULT_RTOL) {
            CheckOutcome::Pass { max_rel_err, points } => {
                println!("PASS {name}: {points} points, max rel err {max_rel_err:.3e}");
            }
            CheckOutcome::Mismatch { component, ad, fd, rel_err, .. } => {
                println!("FAIL {name}: {component} ad={ad:.6e} fd={fd:.6e} rel={rel_err:.3e}");
                failures += 1;
            }
            CheckOutcome::Unevaluable => {
                println!("SKIP {name}: no evaluable points near identity");
            }
        }
    };

    if check_fixtures {
        for law in fixtures::gradient_fixtures() {
            let name = law.name.clone();
            run(name, &law, 7);
        }
    }
    for i in 0..n_random {
        let law = random_program(i as u64, 14);
        run(format!("random_{i}"), &law, 1000 + i as u64);
    }
    if failures > 0 {
        bail!("{failures} gradient check(s) failed");
    }
    Ok(())
}

fn cmd_plot(run_dir: &Path) -> Result<()> {
    let log = RunLog::read_from(&run_dir.join("run.log"))
        .with_context(|| format!("reading {}/run.log", run_dir.display()))?;
    emit_plot_data(&log, run_dir)?;
    println!("wrote {}/loss_trend.csv and validity_hist.csv", run_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenTruth { task, out } => cmd_gen_truth(&task, out),
        Command::Optimize { task, law_file, steps, lr } => cmd_optimize(&task, &law_file, steps, lr),
        Command::Search { config } => cmd_search(&config),
        Command::Gradcheck { fixtures, random, dim } => cmd_gradcheck(fixtures, random, dim),
        Command::Plot { run_dir } => cmd_plot(&run_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
