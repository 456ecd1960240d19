use r2g::harness::cli::cli_run;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(cli_run(&args));
}
