fn main() {
    std::process::exit(randsum_core::cli::run(std::env::args_os()));
}
