fn main() {
    std::process::exit(vqt_cli::run(std::env::args_os()));
}
