fn main() {
    std::process::exit(ssread::cli::run(std::env::args_os()));
}
