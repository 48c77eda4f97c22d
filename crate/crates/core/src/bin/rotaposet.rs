fn main() {
    std::process::exit(rotaposet::cli::main_with_std_streams());
}
