use distill_core::harness::cli_main;

fn main() {
    std::process::exit(cli_main(std::env::args_os()));
}
