fn main() {
    std::process::exit(shearkin_cli::main_with_args(std::env::args_os()));
}
