fn main() {
    std::process::exit(deckfuse_gateway::cli::run(std::env::args_os()));
}
