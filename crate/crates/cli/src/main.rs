fn main() {
    std::process::exit(swe_cli::run(std::env::args_os()));
}
