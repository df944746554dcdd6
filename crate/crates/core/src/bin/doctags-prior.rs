fn main() {
    std::process::exit(doctags_prior::cli::run(std::env::args_os()));
}
