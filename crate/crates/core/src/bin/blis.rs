fn main() {
    let mut stdout = std::io::stdout();
    if let Err(e) = blis_sim::cli::run_cli(std::env::args_os(), &mut stdout) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
