fn main() {
    std::process::exit(zinb_core::cli::run(std::env::args_os()));
}
