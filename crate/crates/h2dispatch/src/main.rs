fn main() {
    std::process::exit(h2dispatch::cli::run(std::env::args_os()));
}
