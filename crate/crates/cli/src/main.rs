//! Command-line entry point: run missions from scenario bundles, inspect
//! synthesized controllers, and characterize objects against a fully
//! observed map.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use morphbot_core::designlib::Library;
use morphbot_core::envchar::{characterize, debug_map, CharacterizationParams};
use morphbot_core::executor::{run_mission, MissionResult, MissionSetupError};
use morphbot_core::mapping::OccupancyGrid;
use morphbot_core::reconfig::PlanSet;
use morphbot_core::scenario::Scenario;
use morphbot_core::synth::{parse_spec, synthesize, CounterTrace, MissionSpec, SynthesisOutcome};

const EXIT_PARSE: u8 = 2;
const EXIT_UNREALIZABLE: u8 = 3;
const EXIT_MISSION_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "morphbot", about = "Modular robot mission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mission to completion and write its artifacts.
    Run(RunArgs),
    /// Synthesize a controller from a mission spec and print its
    /// transition table.
    Synth(SynthArgs),
    /// Characterize one scenario object against the fully observed map.
    Characterize(CharacterizeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    library: PathBuf,
    #[arg(long)]
    plans: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the scenario's tick budget.
    #[arg(long)]
    ticks: Option<u64>,
    /// Output directory for events.jsonl, map.txt and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fault probability override, `<category>=<p>` with category one of
    /// hardware, navigation, perception, network. Repeatable.
    #[arg(long = "fault", value_name = "CATEGORY=P")]
    faults: Vec<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
}

#[derive(Args)]
struct CharacterizeArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    library: PathBuf,
    /// Object id from the scenario file.
    #[arg(long)]
    object: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Characterize(args) => cmd_characterize(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_spec(path: &Path) -> anyhow::Result<Result<MissionSpec, u8>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    match parse_spec(&text) {
        Ok(s) => Ok(Ok(s)),
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            Ok(Err(EXIT_PARSE))
        }
    }
}

fn apply_fault_overrides(scenario: &mut Scenario, overrides: &[String]) -> anyhow::Result<()> {
    for spec in overrides {
        let (cat, p) = spec
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("--fault expects <category>=<p>, got `{spec}`"))?;
        let p: f64 = p.parse().map_err(|_| anyhow::anyhow!("bad probability `{p}`"))?;
        match cat {
            "hardware" => scenario.faults.hardware = p,
            "navigation" => scenario.faults.navigation = p,
            "perception" => scenario.faults.perception = p,
            "network" => scenario.faults.network = p,
            other => anyhow::bail!("unknown fault category `{other}`"),
        }
    }
    scenario.faults.validate()?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut scenario = match Scenario::load(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", args.scenario.display());
            return Ok(ExitCode::from(EXIT_PARSE));
        }
    };
    if let Some(t) = args.ticks {
        scenario.ticks = t;
    }
    apply_fault_overrides(&mut scenario, &args.faults)?;
    let spec = match load_spec(&args.spec)? {
        Ok(s) => s,
        Err(code) => return Ok(ExitCode::from(code)),
    };
    let (lib, plans) = match load_assets(&args.library, &args.plans) {
        Ok(v) => v,
        Err(code) => return Ok(ExitCode::from(code)),
    };
    let ms = match run_mission(&scenario, &spec, &lib, &plans, args.seed) {
        Ok(ms) => ms,
        Err(MissionSetupError::Unrealizable(trace)) => {
            eprintln!("error: specification is unrealizable");
            eprint!("{}", format_counter_trace(&spec, &trace));
            return Ok(ExitCode::from(EXIT_UNREALIZABLE));
        }
        Err(MissionSetupError::Scenario(e)) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_PARSE));
        }
        Err(MissionSetupError::Synth(e)) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_PARSE));
        }
    };
    let summary = serde_json::json!({
        "result": match &ms.result {
            MissionResult::Complete => "complete".to_string(),
            MissionResult::Failed { cause } => format!("failed: {cause}"),
        },
        "ticks": ms.ticks,
        "reconfigurations": ms.reconfigurations,
        "distance_traveled": ms.distance_traveled,
        "final_configuration": ms.final_configuration,
    });
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("events.jsonl"), ms.events_jsonl())?;
        std::fs::write(dir.join("map.txt"), ms.grid.export_text())?;
        std::fs::write(dir.join("summary.json"), format!("{summary:#}\n"))?;
    }
    println!("{summary:#}");
    match ms.result {
        MissionResult::Complete => Ok(ExitCode::SUCCESS),
        MissionResult::Failed { .. } => Ok(ExitCode::from(EXIT_MISSION_FAILED)),
    }
}

fn load_assets(library: &Path, plans: &Path) -> Result<(Library, PlanSet), u8> {
    let lib = Library::load(library).map_err(|e| {
        eprintln!("error: {}: {e}", library.display());
        EXIT_PARSE
    })?;
    let plans = PlanSet::load(plans).map_err(|e| {
        eprintln!("error: {}: {e}", plans.display());
        EXIT_PARSE
    })?;
    Ok((lib, plans))
}

fn format_counter_trace(spec: &MissionSpec, trace: &CounterTrace) -> String {
    let mut out = String::from("environment counter-trace:\n");
    for (i, val) in trace.env_vals.iter().enumerate() {
        let names: Vec<&str> = spec
            .env_props
            .iter()
            .enumerate()
            .filter(|(b, _)| val >> b & 1 == 1)
            .map(|(_, p)| p.name.as_str())
            .collect();
        out.push_str(&format!("  step {i}: [{}]\n", names.join(", ")));
    }
    out
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<ExitCode> {
    let spec = match load_spec(&args.spec)? {
        Ok(s) => s,
        Err(code) => return Ok(ExitCode::from(code)),
    };
    match synthesize(&spec)? {
        SynthesisOutcome::Realizable(aut) => {
            print!("{}", aut.export_table());
            Ok(ExitCode::SUCCESS)
        }
        SynthesisOutcome::Unrealizable(trace) => {
            eprintln!("error: specification is unrealizable");
            eprint!("{}", format_counter_trace(&spec, &trace));
            Ok(ExitCode::from(EXIT_UNREALIZABLE))
        }
    }
}

fn cmd_characterize(args: CharacterizeArgs) -> anyhow::Result<ExitCode> {
    let lib = match Library::load(&args.library) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {}: {e}", args.library.display());
            return Ok(ExitCode::from(EXIT_PARSE));
        }
    };
    let scenario = match Scenario::load(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", args.scenario.display());
            return Ok(ExitCode::from(EXIT_PARSE));
        }
    };
    let world = scenario.build(&lib, None)?;
    let object = world
        .object(&args.object)
        .ok_or_else(|| anyhow::anyhow!("unknown object `{}`", args.object))?
        .clone();
    let grid = OccupancyGrid::from_world(&world);
    let det = grid
        .detect_objects()
        .into_iter()
        .filter(|d| d.color == object.color)
        .min_by(|a, b| {
            let da = a.centroid.xy().dist(object.position.xy());
            let db = b.centroid.xy().dist(object.position.xy());
            da.total_cmp(&db)
        })
        .ok_or_else(|| anyhow::anyhow!("object `{}` not visible in the map", args.object))?;
    let params = CharacterizationParams::default();
    let robot = world.cluster_pose().pos();
    let c = characterize(&grid, robot, &det, &params)?;
    println!("object: {} ({})", args.object, object.color);
    println!("environment: {}", c.env);
    println!("distance: {:.3}", c.distance);
    println!("object height: {:.3}", c.object_height);
    println!(
        "approach point: ({:.3}, {:.3}) heading {:.3}",
        c.approach_point.x, c.approach_point.y, c.approach_heading
    );
    println!("{}", debug_map(&grid, robot, &det, Some(&c), &params));
    Ok(ExitCode::SUCCESS)
}
