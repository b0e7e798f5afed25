use clap::Parser;
use privdist_harness::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Some((report, path))) => {
            for (key, value) in &report.global {
                println!("{key} = {value}");
            }
            if let Some(pass) = report.pass {
                println!("result = {}", if pass { "pass" } else { "fail" });
            }
            println!("report written to {}", path.display());
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("privdist: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
