fn main() {
    std::process::exit(ldrnet::cli::run(std::env::args_os()));
}
