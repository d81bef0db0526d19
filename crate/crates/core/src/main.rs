fn main() {
    std::process::exit(sptlab::cli::main_with_args(std::env::args_os()));
}
