fn main() {
    std::process::exit(elliptic_rigidity::cli::run(std::env::args_os()));
}
