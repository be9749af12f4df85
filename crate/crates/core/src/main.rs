fn main() {
    std::process::exit(elacnn::cli::run());
}
