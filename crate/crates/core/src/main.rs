fn main() { std::process::exit(duallstm::cli::main()); }
