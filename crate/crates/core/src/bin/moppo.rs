fn main() {
    std::process::exit(moppo::cli::run_cli(std::env::args_os()));
}
