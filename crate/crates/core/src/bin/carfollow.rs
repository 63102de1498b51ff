fn main() {
    std::process::exit(carfollow::cli::main_with_args(std::env::args_os()));
}
