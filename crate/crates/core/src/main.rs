fn main() {
    std::process::exit(tierlang::cli::main_with_args(std::env::args_os()));
}
