fn main() {
    std::process::exit(detbench::cli::run(std::env::args_os()));
}
