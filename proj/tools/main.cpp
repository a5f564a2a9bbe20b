#include "cli/cli.hpp"

int main(int argc, char** argv) { return commlim::cli::main_entry(argc, argv); }
