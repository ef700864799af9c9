fn main() {
    std::process::exit(noma_ee::cli::parse_and_dispatch(std::env::args_os()));
}
