fn main() {
    std::process::exit(colora::harness::cli::run(std::env::args_os()));
}
