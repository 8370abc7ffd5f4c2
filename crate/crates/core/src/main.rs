fn main() {
    std::process::exit(fairsel::cli::main_with_args(std::env::args_os()));
}
