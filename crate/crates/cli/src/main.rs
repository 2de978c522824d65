use clap::Parser;

fn main() {
    let cli = hermproj::Cli::parse();
    let code = match hermproj::execute(cli) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("hermproj: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
