fn main() {
    nanskip::cli::main();
}
