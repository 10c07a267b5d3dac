fn main() {
    std::process::exit(herglotz_cli::main_with_args(std::env::args_os()));
}
