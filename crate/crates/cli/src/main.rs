fn main() {
    std::process::exit(rmtlab_cli::run(std::env::args_os()));
}
