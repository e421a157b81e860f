fn main() {
    std::process::exit(spectensor_cli::run(std::env::args_os()));
}
