fn main() {
    std::process::exit(abc_smc2_cli::cli::main_with_args(std::env::args_os()));
}
