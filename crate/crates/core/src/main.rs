fn main() {
    std::process::exit(gibbsline::cli_io::run_command(std::env::args_os()));
}
