fn main() {
    std::process::exit(ealab::cli::main_with_args(std::env::args_os()));
}
