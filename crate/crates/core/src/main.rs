fn main() { std::process::exit(witsbench::cli::main()) }
