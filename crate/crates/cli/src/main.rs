fn main() {
    std::process::exit(posfeed_cli::run(std::env::args_os()));
}
