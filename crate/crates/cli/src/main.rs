fn main() {
    std::process::exit(fsmt_cli::commands::main_with_args(std::env::args_os()));
}
