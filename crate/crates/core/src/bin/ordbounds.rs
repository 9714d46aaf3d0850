fn main() {
    std::process::exit(ordbounds::cli::main_with_args(std::env::args_os()));
}
