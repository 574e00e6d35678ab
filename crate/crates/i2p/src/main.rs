fn main() {
    std::process::exit(i2p::cli::run(std::env::args_os()));
}
