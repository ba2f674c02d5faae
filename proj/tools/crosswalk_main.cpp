#include "symx/cli.hpp"

int main(int argc, char** argv) { return symx::cli::run(argc, argv); }
