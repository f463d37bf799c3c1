fn main() {
    std::process::exit(qbmor_cli::run(std::env::args_os()));
}
