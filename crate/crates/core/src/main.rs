fn main() {
    std::process::exit(meta_bbo::cli::run(std::env::args_os()));
}
