use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "boa", version, about = "Build, install and check software domains")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOptions,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOptions {
    /// Store directory
    #[arg(long, global = true, env = "BOA_STORE", default_value = "./boa-store")]
    pub store: PathBuf,
    /// Print more log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count, conflicts_with = "quiet")]
    pub verbose: u8,
    /// Only print errors
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[arg(long, global = true, value_enum, default_value_t = ColorChoice::Auto)]
    pub color: ColorChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ColorChoice {
    Auto,
    Always,
    Never,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create, list and inspect domains
    #[command(subcommand)]
    Domain(DomainCommand),
    /// Manage projects of a domain
    #[command(subcommand)]
    Project(ProjectCommand),
    /// Manage versions of a project
    #[command(subcommand)]
    Version(VersionCommand),
    /// Install a project version and its dependencies
    Install(InstallArgs),
    /// Rebuild a project version even if it is installed
    Build(InstallArgs),
    /// Classify a build log into errors and warnings
    Analyze(AnalyzeArgs),
    /// Compare two analysis reports
    Diff(DiffArgs),
    /// Run a golden-output expectation
    Validate(ValidateArgs),
    /// Run a scenario file without manual intervention
    Run(RunArgs),
    /// Interactive shell over one live session
    Shell(ShellArgs),
}

#[derive(Debug, Subcommand)]
pub enum DomainCommand {
    /// Create a new domain
    Init {
        name: String,
        /// Absolute install root
        #[arg(long)]
        root: String,
        /// Supported platform, e.g. linux-2.4/gcc-3.2 (repeatable)
        #[arg(long = "platform", required = true)]
        platforms: Vec<String>,
    },
    /// List domains in the store
    List,
    /// Show one domain
    Show {
        name: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum ProjectCommand {
    /// Add a project to a domain
    Add {
        domain: String,
        name: String,
        #[arg(long, value_parser = ["source-built", "package-cache"])]
        kind: String,
        /// Repository or package cache location
        #[arg(long)]
        origin: String,
        /// Dependency such as `geant4` or `clhep>=1.8` (repeatable)
        #[arg(long = "dep")]
        deps: Vec<String>,
        /// Required tool (repeatable)
        #[arg(long = "tool")]
        tools: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum VersionCommand {
    /// Add a version to a project
    Add {
        domain: String,
        project: String,
        label: String,
        /// Configuration entry key=value (repeatable)
        #[arg(long = "set")]
        settings: Vec<String>,
    },
}

#[derive(Debug, Args)]
pub struct InstallArgs {
    pub domain: String,
    pub project: String,
    pub version: String,
    #[arg(long)]
    pub platform: String,
    /// Adapter template file (TOML)
    #[arg(long)]
    pub adapters: Option<PathBuf>,
    /// Per-step timeout in seconds
    #[arg(long)]
    pub timeout: Option<u64>,
    /// Install only the named project
    #[arg(long)]
    pub no_deps: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Log file, or `-` for standard input
    #[arg(default_value = "-")]
    pub log: String,
    /// `gcc-classic` or a rule file
    #[arg(long, default_value = "gcc-classic")]
    pub rules: String,
    #[arg(long)]
    pub max_errors: Option<u64>,
    #[arg(long)]
    pub max_warnings: Option<u64>,
    /// Print the report as JSON
    #[arg(long)]
    pub json: bool,
    /// Also write an HTML page
    #[arg(long)]
    pub html: Option<PathBuf>,
    /// Also write the JSON report
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub build_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    pub old: PathBuf,
    pub new: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub expectation: PathBuf,
    /// Print every divergence, not just the first
    #[arg(long)]
    pub full_diff: bool,
    #[arg(long)]
    pub timeout: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    #[arg(long)]
    pub adapters: Option<PathBuf>,
    /// Parent of the runs/ directory (defaults to the store)
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
    #[arg(long)]
    pub timeout: Option<u64>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ShellArgs {
    pub domain: String,
    #[arg(long)]
    pub adapters: Option<PathBuf>,
}
