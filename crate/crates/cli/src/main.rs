fn main() {
    std::process::exit(fwlstm_cli::run_cli(std::env::args_os()));
}
