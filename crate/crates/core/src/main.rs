fn main() {
    std::process::exit(loopoid_lab::cli_io::run_command(std::env::args_os()));
}
