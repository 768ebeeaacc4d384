fn main() {
    std::process::exit(hde::cli::run(std::env::args_os()));
}
