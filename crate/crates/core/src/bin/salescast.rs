fn main() {
    std::process::exit(salescast::cli::run(std::env::args_os()));
}
