fn main() {
    std::process::exit(phdim::cli::run_main(std::env::args_os()));
}
