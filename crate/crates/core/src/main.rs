fn main() {
    std::process::exit(contractforge::cli::run(std::env::args_os()));
}
