fn main() {
    std::process::exit(harnack_cli::main_with_args(std::env::args_os()));
}
