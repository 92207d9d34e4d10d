fn main() {
    std::process::exit(cgrc::cli::main_with_args(std::env::args_os()));
}
