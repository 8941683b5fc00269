fn main() {
    std::process::exit(denoiser_posterior::cli::main_with_args(std::env::args()));
}
