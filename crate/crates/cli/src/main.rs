fn main() {
    std::process::exit(avid_cli::main_with_args(std::env::args_os()));
}
