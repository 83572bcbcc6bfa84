fn main() {
    std::process::exit(upen2d::cli::run(std::env::args_os()));
}
