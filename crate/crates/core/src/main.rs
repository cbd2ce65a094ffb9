fn main() {
    std::process::exit(eyelab::cli::run(std::env::args_os()));
}
