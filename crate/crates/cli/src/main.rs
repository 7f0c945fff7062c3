fn main() {
    std::process::exit(lieicp_cli::main_with_args(std::env::args_os()));
}
