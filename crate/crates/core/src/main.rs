fn main() {
    std::process::exit(irsatsim::cli::run(std::env::args_os()));
}
