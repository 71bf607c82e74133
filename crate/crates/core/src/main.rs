fn main() {
    std::process::exit(microstates::cli::run(std::env::args_os()));
}
