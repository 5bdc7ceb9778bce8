fn main() {
    std::process::exit(mixgap_cli::main_with_args(std::env::args_os()));
}
