fn main() {
    std::process::exit(heidih::cli::run(std::env::args_os()));
}
