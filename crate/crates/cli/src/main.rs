use std::io::{BufReader, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ins_cli::{
    cmd_compare, cmd_oracle, cmd_simulate, cmd_validate, play_session, CliConfig, ReportFormat,
    EXIT_USAGE,
};

#[derive(Parser)]
#[command(
    name = "ins",
    version,
    about = "Simulate and analyze interactive narrative systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct SimArgs {
    /// Story file path, or builtin:<name> (builtin:lrrh is shipped)
    #[arg(long)]
    story: String,
    /// Number of seeded runs
    #[arg(long, default_value_t = 100)]
    runs: u64,
    /// Master seed; run i derives its own seed from it
    #[arg(long, env = "INS_SIM_SEED", default_value_t = 42)]
    seed: u64,
    /// Hard cap on steps per run
    #[arg(long, default_value_t = 1000)]
    max_steps: usize,
    /// Directory for trace and report files
    #[arg(long)]
    out: Option<PathBuf>,
    /// Elide per-step probability snapshots from trace files
    #[arg(long)]
    no_snapshots: bool,
    /// Summary format on standard output
    #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
    format: ReportFormat,
}

impl SimArgs {
    fn into_config(self, manager_name: String) -> CliConfig {
        CliConfig {
            story_path: self.story,
            manager_name,
            n_runs: self.runs,
            master_seed: self.seed,
            max_steps: self.max_steps,
            output_dir: self.out,
            snapshots: !self.no_snapshots,
            report_format: self.format,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a story against the structural requirements
    Validate {
        /// Story file path, or builtin:<name>
        #[arg(long)]
        story: String,
    },
    /// Run seeded simulations for one manager
    Simulate {
        #[command(flatten)]
        args: SimArgs,
        /// Experience manager: vanilla, fairy, or mimesis
        #[arg(long)]
        manager: String,
    },
    /// Run several managers and print the comparison table
    Compare {
        #[command(flatten)]
        args: SimArgs,
        /// At least two of: vanilla, fairy, mimesis (comma or space separated)
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        managers: Vec<String>,
    },
    /// Step through a story interactively
    Play {
        /// Story file path, or builtin:<name>
        #[arg(long)]
        story: String,
        /// Experience manager: vanilla, fairy, or mimesis
        #[arg(long)]
        manager: String,
        /// Seed for event draws while the player waits
        #[arg(long, env = "INS_SIM_SEED", default_value_t = 42)]
        seed: u64,
    },
    /// Exact goal-absorption probabilities for the static system
    Oracle {
        /// Story file path, or builtin:<name>
        #[arg(long)]
        story: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let code = match cli.command {
        Cmd::Validate { story } => cmd_validate(&story, &mut out),
        Cmd::Simulate { args, manager } => cmd_simulate(&args.into_config(manager), &mut out),
        Cmd::Compare { args, managers } => {
            cmd_compare(&args.into_config(String::new()), &managers, &mut out)
        }
        Cmd::Play {
            story,
            manager,
            seed,
        } => {
            let stdin = std::io::stdin();
            if !stdin.is_terminal() {
                let _ = writeln!(out, "error: play needs an interactive terminal");
                EXIT_USAGE
            } else {
                let mut input = BufReader::new(stdin.lock());
                play_session(&story, &manager, seed, &mut input, &mut out)
            }
        }
        Cmd::Oracle { story } => cmd_oracle(&story, &mut out),
    };
    ExitCode::from(code as u8)
}
