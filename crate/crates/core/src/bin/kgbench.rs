fn main() {
    env_logger::init();
    kgbench::cli::configure_threads();
    let code = kgbench::cli::run_from_args(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
