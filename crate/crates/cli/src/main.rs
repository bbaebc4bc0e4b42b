fn main() {
    std::process::exit(credal_cli::run(std::env::args_os()));
}
