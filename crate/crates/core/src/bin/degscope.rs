fn main() {
    std::process::exit(degscope::cli::run_from_args(std::env::args_os()));
}
