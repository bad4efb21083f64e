use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = ppbell_cli::Cli::parse();
    match ppbell_cli::execute(&cli) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            println!("wrote {} and {}", report.csv.display(), report.manifest.display());
        }
        Err(e) => {
            eprintln!("ppbell: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
