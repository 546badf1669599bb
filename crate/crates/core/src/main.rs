fn main() -> std::process::ExitCode {
    minconsensus::harness::cli::main()
}
