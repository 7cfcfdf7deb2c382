mod args;
mod commands;
mod context;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use context::{CliError, Context};

fn run(cli: &Cli) -> Result<String, CliError> {
    if let Some(threads) = cli.global.threads {
        if threads == 0 {
            return Err(context::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| context::usage(e.to_string()))?;
    }
    let mut ctx = Context::new(cli.command.name(), cli);
    let g = &cli.global;
    let results = match &cli.command {
        Command::GenGraph(a) => commands::gen_graph(g, a, &mut ctx),
        Command::Partition(a) => commands::partition_cmd(g, a, &mut ctx),
        Command::Assign(a) => commands::assign(g, a, &mut ctx),
        Command::DslRun(a) => commands::dsl_run(g, a, &mut ctx),
        Command::Expose(a) => commands::expose(g, a, &mut ctx),
        Command::Test(a) => commands::test(g, a, &mut ctx),
        Command::Region(a) => commands::region(g, a, &mut ctx),
        Command::Simulate(a) => commands::simulate(g, a, &mut ctx),
        Command::Calibrate(a) => commands::calibrate(g, a, &mut ctx),
    }?;
    Ok(ctx.envelope(results))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(envelope) => {
            // a closed pipe (e.g. `| head`) is not an error worth a panic
            let _ = writeln!(std::io::stdout().lock(), "{envelope}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("spillover: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
