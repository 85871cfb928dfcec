fn main() {
    std::process::exit(subteam::cli::run(std::env::args_os()));
}
