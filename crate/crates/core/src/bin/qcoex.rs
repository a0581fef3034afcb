fn main() {
    std::process::exit(qcoex::cli::main_with_args(std::env::args_os()));
}
