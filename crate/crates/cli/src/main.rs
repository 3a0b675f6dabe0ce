fn main() {
    std::process::exit(netinf_cli::run(std::env::args_os()));
}
