fn main() {
    std::process::exit(spadqrng::cli::main_with_args(std::env::args_os()));
}
