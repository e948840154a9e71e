fn main() {
    if let Err(e) = iggy_cli::run(std::env::args_os().collect()) {
        eprintln!("error: {e:#}");
        std::process::exit(iggy_cli::exit_code(&e));
    }
}
