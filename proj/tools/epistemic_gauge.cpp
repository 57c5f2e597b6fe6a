#include "eg/cli.hpp"

int main(int argc, char** argv) { return eg::cli::main_entry(argc, argv); }
