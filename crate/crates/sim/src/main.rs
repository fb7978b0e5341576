fn main() -> std::process::ExitCode {
    swipt_sim::cli::main()
}
