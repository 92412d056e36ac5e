use std::process::ExitCode;

fn main() -> ExitCode {
    match latentreg_cli::run(std::env::args_os()) {
        Ok(summary) => {
            println!("{}: wrote {}", summary.command, summary.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
