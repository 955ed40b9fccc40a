fn main() {
    std::process::exit(kinvlap::cli::run(std::env::args_os()));
}
