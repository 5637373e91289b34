//! Command-line front end of the `nisp` binary.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use config::{MethodChoice, ProblemKind, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nisp", version, about = "Standard and reduced NISP for two-module coupled problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate uncertainty for one configuration.
    Run(CommonArgs),
    /// Manufactured-solution convergence study of the deterministic solver.
    Verify(CommonArgs),
    /// Sweep over `s` and `p` with both methods.
    Bench(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub problem: Option<ProblemKind>,
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
    /// Expansion order; a comma list for `bench`.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<usize>,
    /// Quadrature level.
    #[arg(long)]
    pub q: Option<usize>,
    /// Parameters per module; a comma list for `bench`.
    #[arg(long, value_delimiter = ',')]
    pub s: Vec<usize>,
    #[arg(long)]
    pub s1: Option<usize>,
    #[arg(long)]
    pub s2: Option<usize>,
    /// Mesh size; a comma list for `verify`.
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<usize>,
    #[arg(long)]
    pub eps_dim1: Option<f64>,
    #[arg(long)]
    pub eps_dim2: Option<f64>,
    #[arg(long)]
    pub eps_ord1: Option<f64>,
    #[arg(long)]
    pub eps_ord2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip the reference solve and the error columns.
    #[arg(long)]
    pub no_reference: bool,
    /// Print the resolved configuration and quadrature sizes, then exit.
    #[arg(long)]
    pub dry_run: bool,
}

fn single(name: &str, v: &[usize]) -> Result<Option<usize>> {
    match v {
        [] => Ok(None),
        [x] => Ok(Some(*x)),
        _ => Err(Error::InvalidArgument(format!("--{name} takes a single value here"))),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Run,
    Verify,
    Bench,
}

impl CommonArgs {
    /// Loads the config file, if any, and applies the flag overrides.
    fn resolve(&self, mode: Mode) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.problem {
            cfg.problem = v;
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if mode == Mode::Bench {
            if !self.p.is_empty() {
                cfg.bench.p = self.p.clone();
            }
            if !self.s.is_empty() {
                cfg.bench.s = self.s.clone();
            }
        } else {
            if let Some(p) = single("p", &self.p)? {
                cfg.p = p;
            }
            if let Some(s) = single("s", &self.s)? {
                cfg.s1 = s;
                cfg.s2 = s;
            }
        }
        if self.q.is_some() {
            cfg.q = self.q;
        }
        if let Some(v) = self.s1 {
            cfg.s1 = v;
        }
        if let Some(v) = self.s2 {
            cfg.s2 = v;
        }
        if mode == Mode::Verify {
            if !self.m.is_empty() {
                cfg.verify.meshes = Some(self.m.clone());
            }
        } else if let Some(m) = single("m", &self.m)? {
            cfg.m = Some(m);
        }
        let r = &mut cfg.reduction;
        for (i, v) in [self.eps_dim1, self.eps_dim2].into_iter().enumerate() {
            if let Some(v) = v {
                r.eps_dim[i] = v;
            }
        }
        for (i, v) in [self.eps_ord1, self.eps_ord2].into_iter().enumerate() {
            if let Some(v) = v {
                r.eps_ord[i] = v;
            }
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if self.no_reference {
            cfg.reference = false;
        }
        Ok(cfg)
    }
}

/// Exit code of a failed command.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_usage() {
        EXIT_USAGE
    } else if e.is_io() {
        EXIT_IO
    } else {
        EXIT_NUMERICAL
    }
}

fn init_threads(n: usize) {
    if n > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let (args, mode) = match &cli.command {
        Command::Run(a) => (a, Mode::Run),
        Command::Verify(a) => (a, Mode::Verify),
        Command::Bench(a) => (a, Mode::Bench),
    };
    let result = args.resolve(mode).and_then(|cfg| {
        init_threads(cfg.threads);
        match mode {
            Mode::Run => commands::run(&cfg, args.dry_run, out),
            Mode::Verify => commands::verify(&cfg, args.dry_run, out),
            Mode::Bench => commands::bench(&cfg, args.dry_run, out),
        }
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
