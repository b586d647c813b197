fn main() {
    std::process::exit(vorx::cli::run_from_args(std::env::args_os().skip(1)));
}
