fn main() {
    std::process::exit(turbsynth::cli::run(std::env::args_os()));
}
