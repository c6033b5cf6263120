fn main() {
    std::process::exit(qpvp::cli::main_with_args(std::env::args_os()));
}
