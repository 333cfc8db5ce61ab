fn main() {
    std::process::exit(smallgain::cli::main_with_args(std::env::args_os()));
}
