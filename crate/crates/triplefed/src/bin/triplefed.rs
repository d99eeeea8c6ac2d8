fn main() {
    triplefed::cli::main();
}
