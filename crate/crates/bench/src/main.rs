fn main() {
    std::process::exit(okl_bench::cli::main(std::env::args_os()));
}
