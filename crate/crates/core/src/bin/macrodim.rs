fn main() {
    std::process::exit(macrodim::cli::main_with_args(std::env::args_os()));
}
