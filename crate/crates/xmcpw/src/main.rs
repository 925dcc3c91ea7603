fn main() {
    std::process::exit(xmcpw::cli::run(std::env::args_os()));
}
