fn main() {
    std::process::exit(heightformer_cli::run(std::env::args_os()));
}
