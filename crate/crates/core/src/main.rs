use clap::Parser;

fn main() {
    if let Ok(v) = std::env::var("DHOA_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .expect("thread pool is configured once");
            }
            _ => {
                eprintln!("dhoa: configuration error: DHOA_THREADS must be a positive integer");
                std::process::exit(2);
            }
        }
    }
    let cli = dhoa::cli::Cli::parse();
    std::process::exit(dhoa::cli::run(cli));
}
