fn main() {
    std::process::exit(flowfit::io::run_cli(std::env::args_os()));
}
