fn main() {
    bilevel_bo::cli::main()
}
