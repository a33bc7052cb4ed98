fn main() {
    std::process::exit(mpemba_wsd::cli::run(std::env::args_os()));
}
