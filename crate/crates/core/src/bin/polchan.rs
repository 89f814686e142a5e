fn main() {
    env_logger::init();
    std::process::exit(polchan::cli::run(std::env::args_os()));
}
