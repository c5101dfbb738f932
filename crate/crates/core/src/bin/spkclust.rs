fn main() {
    std::process::exit(spkclust::cli::run(std::env::args_os()));
}
