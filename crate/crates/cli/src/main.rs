fn main() {
    std::process::exit(cellinfect_cli::main_with_args(std::env::args_os()));
}
