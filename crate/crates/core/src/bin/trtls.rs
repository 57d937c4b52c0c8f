fn main() {
    std::process::exit(trtls::cli::run(std::env::args_os()));
}
