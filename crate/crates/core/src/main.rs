fn main() {
    std::process::exit(pilkit::cli::run(std::env::args_os()));
}
