fn main() {
    std::process::exit(egur_cli::run_command(std::env::args_os()));
}
