fn main() {
    std::process::exit(agebranch_cli::main_with_args(std::env::args_os()));
}
