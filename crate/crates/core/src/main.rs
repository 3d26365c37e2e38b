fn main() {
    std::process::exit(gaugetrace::cli::main_with_args(std::env::args_os()));
}
