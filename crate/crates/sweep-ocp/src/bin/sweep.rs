fn main() {
    std::process::exit(sweep_ocp::cli::main_with_args(std::env::args_os()));
}
