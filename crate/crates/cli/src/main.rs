fn main() {
    std::process::exit(microswim::run_cli(std::env::args_os()));
}
