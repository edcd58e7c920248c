fn main() {
    env_logger::init();
    std::process::exit(fair_targeting::cli::main_with_args(std::env::args_os()));
}
