fn main() {
    std::process::exit(stewardsim::cli::main_with_args(std::env::args_os()));
}
