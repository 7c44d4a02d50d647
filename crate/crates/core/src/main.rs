fn main() {
    std::process::exit(mkv_neuro::cli::run(std::env::args_os()));
}
