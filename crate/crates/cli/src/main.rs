fn main() {
    std::process::exit(homsim_cli::main_with_args(std::env::args_os()));
}
