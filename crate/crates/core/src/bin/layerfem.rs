fn main() {
    std::process::exit(layerfem::cli::run(std::env::args_os()));
}
